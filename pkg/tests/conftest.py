"""Shared fixtures: small images, fast codebooks and a tiny synthetic dataset."""
import numpy as np
import pytest
from scipy import ndimage

from zoomout.descriptors import Codebook, dense_sift
from zoomout.descriptors.texton import sample_responses
from zoomout.imagecore import rgb_to_lab
from zoomout.neuralnet import TrainConfig
from zoomout.pipeline import NetConfig, ZoomoutConfig, read_manifest
from zoomout.superpixel import SlicParams
from zoomout.synthetic import generate_dataset, generate_scene


def scene_labs(n, size=64, seed=0):
    rng = np.random.default_rng(seed)
    return [rgb_to_lab(generate_scene(rng, size)[0]) for _ in range(n)]


def sampled_codebooks(labs, texton_k=64, sift_k=500, seed=0):
    """Codebooks whose centroids are random samples (no k-means, for speed)."""
    rng = np.random.default_rng(seed)
    resp = sample_responses(labs, 500, seed)
    texton = Codebook("texton", resp[rng.choice(len(resp), texton_k, replace=False)])
    desc = np.concatenate([dense_sift(lab).descriptors.reshape(-1, 128) for lab in labs])
    # distinct, non-zero descriptors make better words
    desc = np.unique(desc[np.linalg.norm(desc, axis=1) > 0], axis=0)
    sift = Codebook("visual-word", desc[rng.choice(len(desc), sift_k, replace=False)])
    return texton, sift


def random_image_suite(n, seed=0):
    """``n`` random RGB images (half raw noise, half smoothed) with target counts."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        h, w = rng.integers(48, 161, 2)
        k = int(rng.integers(20, 301))
        img = rng.uniform(0, 255, (h, w, 3))
        if i % 2:
            img = ndimage.gaussian_filter(img, (rng.uniform(1, 4),) * 2 + (0,))
            img = (img - img.min()) / np.ptp(img) * 255
        out.append((np.rint(img).astype(np.uint8), k))
    return out


def small_config(**overrides):
    """A configuration sized for tests that run the whole pipeline."""
    base = dict(
        slic=SlicParams(40, 15.0),
        train=TrainConfig(learning_rate=1e-3, weight_decay=1e-4, batch_size=32, epochs=3),
        hidden=(16,),
        texton_k=8,
        sift_k=16,
        codebook_samples=2000,
        local_net=NetConfig(filters=(4, 4, 4), fc=(8,), epochs=1, max_crops=300),
        distant_net=NetConfig(filters=(4, 4, 4), fc=(6,), epochs=1, max_crops=300, input_size=36),
        global_net=NetConfig(filters=(4, 4, 4), fc=(5,), epochs=2, input_size=36),
    )
    base.update(overrides)
    return ZoomoutConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def labs64():
    return scene_labs(4, 64)


@pytest.fixture(scope="session")
def full_codebooks(labs64):
    return sampled_codebooks(labs64)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    path = generate_dataset(str(root), n_images=12, size=64, seed=3, val_fraction=0.25)
    return read_manifest(path)

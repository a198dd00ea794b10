"""Filter-bank textons.

The bank has 17 filters: Gaussians (sigma 1, 2, 4) on each Lab channel,
x and y derivatives of Gaussians (sigma 2, 4) on L, and Laplacians of
Gaussians (sigma 1, 2, 4, 8) on L.
"""
import numpy as np
from scipy import ndimage

from .codebook import train_codebook
from .color import entropy_rows, normalize_rows

TEXTON_K = 64
N_FILTERS = 17


def filter_responses(lab):
    """``(H, W, 17)`` filter-bank responses of a Lab image."""
    lab = np.asarray(lab, dtype=np.float64)
    L = lab[..., 0]
    out = []
    for c in range(3):
        for s in (1, 2, 4):
            out.append(ndimage.gaussian_filter(lab[..., c], s, mode="reflect"))
    for s in (2, 4):
        out.append(ndimage.gaussian_filter(L, s, order=(0, 1), mode="reflect"))
        out.append(ndimage.gaussian_filter(L, s, order=(1, 0), mode="reflect"))
    for s in (1, 2, 4, 8):
        out.append(ndimage.gaussian_laplace(L, s, mode="reflect"))
    return np.stack(out, axis=-1)


def sample_responses(labs, per_image, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for lab in labs:
        resp = filter_responses(lab).reshape(-1, N_FILTERS)
        take = min(per_image, len(resp))
        rows.append(resp[np.sort(rng.choice(len(resp), take, replace=False))])
    if not rows:
        return np.zeros((0, N_FILTERS))
    return np.concatenate(rows)


def train_texton_codebook(labs, k=TEXTON_K, seed=0, per_image=2000):
    """k-means dictionary over filter responses sampled from ``labs``."""
    return train_codebook(sample_responses(labs, per_image, seed), k, "texton", seed)


def texton_map(lab, cb):
    """Per-pixel nearest-texton index."""
    if cb.kind != "texton":
        raise ValueError(f"expected a texton codebook, got {cb.kind}")
    return cb.assign(filter_responses(lab)).reshape(lab.shape[:2])


def texton_from_counts(counts):
    hist = normalize_rows(counts)
    return np.concatenate([hist, entropy_rows(hist)[:, None]], axis=1)


def texton_features(lab, region, cb):
    """Normalized texton histogram over the region plus its entropy."""
    mask = region.to_mask(lab.shape[:2])
    counts = np.bincount(texton_map(lab, cb)[mask], minlength=cb.k)
    return texton_from_counts(counts[None])[0]


"""Dense SIFT on a regular grid and bag-of-visual-words histograms."""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .codebook import train_codebook
from .color import entropy_rows, normalize_rows

SIFT_STEP = 8
PATCH_SIZES = (8, 18)
SIFT_K = 500
N_ORIENT = 8
N_CELLS = 4
DESC_LEN = N_CELLS * N_CELLS * N_ORIENT


@dataclass(frozen=True)
class DenseSift:
    """Descriptors at every grid site, for each Lab channel and patch size.

    ``positions`` is ``(n, 2)`` integer ``(y, x)`` site centers and
    ``descriptors`` is ``(n, 3, len(PATCH_SIZES), 128)``.
    """
    positions: np.ndarray
    descriptors: np.ndarray
    image_shape: tuple

    @property
    def count(self):
        return len(self.positions)


def _cell_weights(patch):
    """Bilinear cell weights times a Gaussian window, ``(4, 2R+1)``."""
    cell = patch / N_CELLS
    radius = int(np.floor(patch / 2 + cell / 2))
    u = np.arange(-radius, radius + 1, dtype=np.float64)
    centers = -patch / 2 + cell * (np.arange(N_CELLS) + 0.5)
    w = np.maximum(0.0, 1.0 - np.abs(u[None, :] - centers[:, None]) / cell)
    gauss = np.exp(-0.5 * (u / (patch / 2)) ** 2)
    return w * gauss[None, :], radius


def _orientation_energy(channel):
    gy, gx = np.gradient(channel)
    mag = np.hypot(gx, gy)
    o = (np.arctan2(gy, gx) % (2 * np.pi)) / (2 * np.pi) * N_ORIENT
    b0 = np.floor(o).astype(np.int64) % N_ORIENT
    frac = o - np.floor(o)
    energy = np.zeros((N_ORIENT,) + channel.shape)
    for b in range(N_ORIENT):
        energy[b] = np.where(b0 == b, mag * (1 - frac), 0.0)
        energy[b] += np.where((b0 + 1) % N_ORIENT == b, mag * frac, 0.0)
    return energy


def _normalize(desc):
    norm = np.linalg.norm(desc, axis=-1, keepdims=True)
    desc = np.where(norm > 1e-6, desc / np.where(norm > 1e-6, norm, 1.0), 0.0)
    desc = np.minimum(desc, 0.2)
    norm = np.linalg.norm(desc, axis=-1, keepdims=True)
    return np.where(norm > 0, desc / np.where(norm > 0, norm, 1.0), 0.0)


def grid_positions(shape, step=SIFT_STEP):
    ys = np.arange(step // 2, shape[0], step)
    xs = np.arange(step // 2, shape[1], step)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def dense_sift(lab, step=SIFT_STEP, patch_sizes=PATCH_SIZES):
    """SIFT descriptors every ``step`` pixels, separately per Lab channel.

    Each descriptor pools gradient magnitude into 4x4 spatial cells and 8
    orientations, is L2-normalized, clamped at 0.2 and renormalized.
    Patches reaching past the border see edge-replicated pixels.
    """
    lab = np.asarray(lab, dtype=np.float64)
    H, W = lab.shape[:2]
    if min(H, W) < max(patch_sizes):
        raise ValueError(f"image {W}x{H} is smaller than the {max(patch_sizes)}px patch")
    pos = grid_positions((H, W), step)
    weights = [_cell_weights(p) for p in patch_sizes]
    pad = max(r for _, r in weights)
    out = np.empty((len(pos), 3, len(patch_sizes), DESC_LEN))
    for c in range(3):
        chan = np.pad(lab[..., c], pad, mode="edge")
        energy = _orientation_energy(chan)
        for j, (w, r) in enumerate(weights):
            win = sliding_window_view(energy, (2 * r + 1, 2 * r + 1), axis=(1, 2))
            off = pad - r
            patches = win[:, pos[:, 0] + off, pos[:, 1] + off]
            d = np.einsum("iu,onuv,jv->nijo", w, patches, w, optimize=True)
            out[:, c, j] = d.reshape(len(pos), DESC_LEN)
    return DenseSift(pos, _normalize(out).astype(np.float32), (H, W))


def train_sift_codebook(descriptors, k=SIFT_K, seed=0):
    return train_codebook(np.asarray(descriptors).reshape(-1, DESC_LEN), k, "visual-word", seed)


def sift_words(dsift, cb):
    """Visual-word index for every (site, channel, patch size)."""
    if cb.kind != "visual-word":
        raise ValueError(f"expected a visual-word codebook, got {cb.kind}")
    return cb.assign(dsift.descriptors).reshape(dsift.descriptors.shape[:3])


def sift_from_counts(counts):
    """``(n, 3, P, k)`` word counts -> ``(n, 3k + 3P)`` BoW block.

    Patch-size histograms are averaged per channel; the entropies are of
    the individual (pre-average) histograms.
    """
    hist = normalize_rows(counts)
    n = len(hist)
    avg = hist.mean(axis=2).reshape(n, -1)
    ent = entropy_rows(hist).reshape(n, -1)
    return np.concatenate([avg, ent], axis=1)


def word_counts(words, site_groups, n_groups, k):
    """Word counts per group, where ``site_groups[i]`` is the group of site ``i``."""
    n_sites, n_ch, n_p = words.shape
    gid = np.broadcast_to(site_groups[:, None, None], words.shape)
    slot = np.broadcast_to(np.arange(n_ch * n_p).reshape(1, n_ch, n_p), words.shape)
    flat = (gid * (n_ch * n_p) + slot) * k + words
    counts = np.bincount(flat.ravel(), minlength=n_groups * n_ch * n_p * k)
    return counts.reshape(n_groups, n_ch, n_p, k)


def sift_bow_features(dsift, cb, region):
    """1506-dim bag of visual words for grid sites whose center lies in the region."""
    mask = region.to_mask(dsift.image_shape)
    inside = mask[dsift.positions[:, 0], dsift.positions[:, 1]]
    words = sift_words(dsift, cb)[inside]
    counts = word_counts(words, np.zeros(len(words), dtype=np.int64), 1, cb.k)
    return sift_from_counts(counts)[0]

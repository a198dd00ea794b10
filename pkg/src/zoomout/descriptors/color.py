"""Region selection, entropy, and Lab color histograms."""
from dataclasses import dataclass

import numpy as np

CHANNEL_RANGES = ((0.0, 100.0), (-128.0, 127.0), (-128.0, 127.0))
BIN_COUNTS = (32, 8)
COLOR_DIM = 2 * 3 * sum(BIN_COUNTS) + 3


@dataclass(frozen=True)
class Region:
    """A pixel mask or a ``(y0, x0, y1, x1)`` box (exclusive ends) over an image."""
    mask: np.ndarray = None
    box: tuple = None

    def __post_init__(self):
        if (self.mask is None) == (self.box is None):
            raise ValueError("a region is either a mask or a box")

    def to_mask(self, shape):
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != tuple(shape):
                raise ValueError(f"mask shape {mask.shape} != image shape {tuple(shape)}")
        else:
            y0, x0, y1, x1 = (int(v) for v in self.box)
            if not (0 <= y0 < y1 <= shape[0] and 0 <= x0 < x1 <= shape[1]):
                raise ValueError(f"box {self.box} outside image of shape {tuple(shape)}")
            mask = np.zeros(shape, dtype=bool)
            mask[y0:y1, x0:x1] = True
        if not mask.any():
            raise ValueError("empty region")
        return mask


def entropy(hist):
    """Shannon entropy in bits of a normalized histogram (0 log 0 = 0)."""
    p = np.asarray(hist, dtype=np.float64)
    if (p < 0).any():
        raise ValueError("histogram has negative entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"histogram sums to {p.sum()}, not 1")
    return float(entropy_rows(p[None])[0])


def entropy_rows(p):
    """Row-wise entropy in bits; all-zero rows have entropy 0."""
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log2(safe)).sum(axis=-1)


def normalize_rows(counts):
    """L1-normalize along the last axis, leaving all-zero rows at zero."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    return counts / np.where(total > 0, total, 1.0)


def fixed_bins(values, lo, hi, nbins):
    idx = np.floor((values - lo) / (hi - lo) * nbins).astype(np.int64)
    return np.clip(idx, 0, nbins - 1)


def adaptive_edges(channel, nbins):
    """Equal-mass bin edges from the quantiles of a whole image channel."""
    return np.quantile(np.asarray(channel, dtype=np.float64).ravel(),
                       np.arange(1, nbins) / nbins)


def color_bin_maps(lab):
    """Per-pixel bin indices for all color histograms of an image.

    Returns a list of ``(index_map, nbins)`` in feature order: fixed
    (L32, L8, a32, a8, b32, b8) followed by adaptive in the same order.
    """
    maps = []
    for c, (lo, hi) in enumerate(CHANNEL_RANGES):
        for nb in BIN_COUNTS:
            maps.append((fixed_bins(lab[..., c], lo, hi, nb), nb))
    for c in range(3):
        for nb in BIN_COUNTS:
            edges = adaptive_edges(lab[..., c], nb)
            maps.append((np.searchsorted(edges, lab[..., c], side="right"), nb))
    return maps


def color_from_counts(counts):
    """Assemble the 243-dim color block from the 12 per-histogram count arrays.

    ``counts`` follows :func:`color_bin_maps` order; each entry is an
    ``(n, nbins)`` array and the result is ``(n, 243)``.
    """
    hists = [normalize_rows(c) for c in counts]
    fixed = np.concatenate(hists[:6], axis=1)
    ent = np.stack([entropy_rows(hists[i]) for i in (0, 2, 4)], axis=1)
    adaptive = np.concatenate(hists[6:], axis=1)
    return np.concatenate([fixed, ent, adaptive], axis=1)


def color_histograms(lab, region):
    """243-dim color descriptor of one region of a Lab image."""
    mask = region.to_mask(lab.shape[:2])
    counts = [np.bincount(idx[mask], minlength=nb)[None] for idx, nb in color_bin_maps(lab)]
    return color_from_counts(counts)[0]

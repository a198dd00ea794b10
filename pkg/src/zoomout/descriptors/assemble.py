"""Location features, the 1818-dim handcrafted descriptor, zoom-out assembly
and the feature-store file format."""
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .. import LEVELS
from ..errors import FormatError, LayoutError
from .color import COLOR_DIM, color_bin_maps, color_from_counts
from .sift import SIFT_K, PATCH_SIZES, sift_from_counts, sift_words, word_counts
from .texton import TEXTON_K, texton_from_counts, texton_map

TEXTON_DIM = TEXTON_K + 1
SIFT_DIM = 3 * SIFT_K + 3 * len(PATCH_SIZES)
LOCATION_DIM = 4
HANDCRAFTED_DIM = COLOR_DIM + TEXTON_DIM + SIFT_DIM + LOCATION_DIM

assert (COLOR_DIM, TEXTON_DIM, SIFT_DIM, LOCATION_DIM) == (243, 65, 1506, 4)
assert HANDCRAFTED_DIM == 1818

ZOFT_MAGIC = b"ZOFT"
ZOFT_VERSION = 1
GLOBAL_KEY = 0xFFFFFFFF
KEY_DTYPE = np.dtype([("image", "<u8"), ("superpixel", "<u4"), ("row", "<u4")])


def location_features(centroid, dims):
    """``(x, y, |x|, |y|)`` with coordinates scaled to [-1, 1] about the image center."""
    x, y = centroid
    width, height = dims
    nx = 2.0 * x / width - 1.0
    ny = 2.0 * y / height - 1.0
    return np.array([nx, ny, abs(nx), abs(ny)])


def handcrafted_dim(texton_k=TEXTON_K, sift_k=SIFT_K):
    return COLOR_DIM + texton_k + 1 + 3 * sift_k + 3 * len(PATCH_SIZES) + LOCATION_DIM


@dataclass
class RegionCounts:
    """Additive per-region statistics from which descriptors are derived.

    Every field is a count (or a pixel-coordinate sum), so the statistics
    of a union of disjoint regions are the sums of its parts.
    """
    color: list
    texton: np.ndarray
    sift: np.ndarray
    pixels: np.ndarray
    coord_sum: np.ndarray

    def combine(self, members):
        """Statistics of the unions given by the boolean ``(m, n)`` matrix."""
        M = np.asarray(members, dtype=np.float64)
        n = len(self.pixels)
        return RegionCounts(
            color=[M @ c for c in self.color],
            texton=M @ self.texton,
            sift=(M @ self.sift.reshape(n, -1)).reshape((len(M),) + self.sift.shape[1:]),
            pixels=M @ self.pixels,
            coord_sum=M @ self.coord_sum,
        )

    def descriptors(self, dims):
        width, height = dims
        centroid = self.coord_sum / np.maximum(self.pixels, 1)[:, None]
        nx = 2.0 * centroid[:, 0] / width - 1.0
        ny = 2.0 * centroid[:, 1] / height - 1.0
        loc = np.stack([nx, ny, np.abs(nx), np.abs(ny)], axis=1)
        return np.concatenate([
            color_from_counts(self.color),
            texton_from_counts(self.texton),
            sift_from_counts(self.sift),
            loc,
        ], axis=1)


def region_counts(lab, groups, n_groups, texton_cb, sift_cb, dsift):
    """Count statistics for each pixel group; ``groups[y, x] = -1`` drops a pixel."""
    groups = np.asarray(groups, dtype=np.int64)
    keep = groups.ravel() >= 0
    g = groups.ravel()[keep]

    def per_group(index_map, nbins):
        flat = g * nbins + index_map.ravel()[keep]
        return np.bincount(flat, minlength=n_groups * nbins).reshape(n_groups, nbins)

    color = [per_group(idx, nb) for idx, nb in color_bin_maps(lab)]
    texton = per_group(texton_map(lab, texton_cb), texton_cb.k)
    site_group = groups[dsift.positions[:, 0], dsift.positions[:, 1]]
    words = sift_words(dsift, sift_cb)
    in_group = site_group >= 0
    sift = word_counts(words[in_group], site_group[in_group], n_groups, sift_cb.k)
    yy, xx = np.indices(groups.shape)
    pixels = np.bincount(g, minlength=n_groups).astype(np.float64)
    coord_sum = np.stack([
        np.bincount(g, weights=xx.ravel()[keep] + 0.5, minlength=n_groups),
        np.bincount(g, weights=yy.ravel()[keep] + 0.5, minlength=n_groups),
    ], axis=1)
    return RegionCounts(color, texton, sift, pixels, coord_sum)


def handcrafted_descriptor(lab, region, texton_cb, sift_cb, dsift):
    """``[color 243 | texton 65 | sift 1506 | location 4]`` for one region."""
    mask = region.to_mask(lab.shape[:2])
    counts = region_counts(lab, np.where(mask, 0, -1), 1, texton_cb, sift_cb, dsift)
    return counts.descriptors((lab.shape[1], lab.shape[0]))[0]


@dataclass(frozen=True)
class FeatureLayout:
    """Names and sizes of the non-empty zoom-out blocks, in order."""
    names: tuple
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.names) != len(self.dims):
            raise ValueError("names and dims differ in length")
        if any(d <= 0 for d in self.dims):
            raise ValueError("layout blocks must be non-empty")

    @classmethod
    def from_blocks(cls, named_dims):
        kept = [(n, d) for n, d in named_dims if d > 0]
        return cls(tuple(n for n, _ in kept), tuple(d for _, d in kept))

    @property
    def offsets(self):
        return tuple(int(v) for v in np.cumsum((0,) + self.dims[:-1]))

    @property
    def total(self):
        return sum(self.dims)

    def columns(self, names):
        """Column indices of the given blocks (unknown names raise ``KeyError``)."""
        cols = []
        for name in names:
            if name not in self.names:
                raise KeyError(f"block {name!r} not in layout {self.names}")
            i = self.names.index(name)
            cols.append(np.arange(self.offsets[i], self.offsets[i] + self.dims[i]))
        return np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)

    def to_dict(self):
        return {"names": list(self.names), "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), tuple(d["dims"]))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout

    @property
    def offsets(self):
        return self.layout.offsets

    def block(self, name):
        return self.values[self.layout.columns([name])]


def assemble_rows(blocks, layout=None):
    """Concatenate per-level ``(n, d)`` blocks (dict name -> array) in level order."""
    unknown = set(blocks) - set(LEVELS)
    if unknown:
        raise ValueError(f"unknown levels {sorted(unknown)}")
    named = [(lv, np.asarray(blocks[lv])) for lv in LEVELS if lv in blocks]
    got = FeatureLayout.from_blocks((lv, b.shape[-1]) for lv, b in named)
    if layout is not None and got != layout:
        raise LayoutError(f"block layout {got} differs from declared {layout}")
    parts = [b for _, b in named if b.shape[-1] > 0]
    if not parts:
        return np.zeros(named[0][1].shape[:-1] + (0,)) if named else np.zeros(0), got
    return np.concatenate(parts, axis=-1), got


def assemble_zoomout(local, proximal, distant, global_, layout=None):
    """Concatenate the four level vectors; empty levels are dropped from the layout."""
    values, got = assemble_rows(
        {"local": np.asarray(local, dtype=np.float64).ravel(),
         "proximal": np.asarray(proximal, dtype=np.float64).ravel(),
         "distant": np.asarray(distant, dtype=np.float64).ravel(),
         "global": np.asarray(global_, dtype=np.float64).ravel()},
        layout)
    return FeatureVector(values, got)


def image_key(image_id):
    """Stable 64-bit key of an image id string."""
    return int.from_bytes(hashlib.sha1(image_id.encode("utf-8")).digest()[:8], "little")


def write_feature_store(fh_or_path, rows, offsets, keys=None):
    """Write a ZOFT store: header, block offsets, f32 rows, then the key table."""
    rows = np.asarray(rows)
    n, dim = rows.shape
    keys = np.zeros(0, dtype=KEY_DTYPE) if keys is None else np.asarray(keys, dtype=KEY_DTYPE)
    with open(fh_or_path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", ZOFT_MAGIC, ZOFT_VERSION, n, dim, len(offsets)))
        fh.write(np.asarray(offsets, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(keys)))
        fh.write(keys.tobytes())


def read_feature_store(path):
    """Return ``(rows, offsets, keys)``; ``rows`` is float32 ``(n, dim)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 20:
        raise FormatError(f"{path}: truncated ZOFT header")
    magic, version, n, dim, n_blocks = struct.unpack_from("<4sIIII", data)
    if magic != ZOFT_MAGIC or version != ZOFT_VERSION:
        raise FormatError(f"{path}: not a ZOFT v{ZOFT_VERSION} feature store")
    pos = 20
    need = pos + 4 * n_blocks + 4 * n * dim
    if len(data) < need:
        raise FormatError(f"{path}: truncated ZOFT body")
    offsets = tuple(int(v) for v in np.frombuffer(data, "<u4", n_blocks, pos))
    pos += 4 * n_blocks
    rows = np.frombuffer(data, "<f4", n * dim, pos).reshape(n, dim).astype(np.float32)
    pos += 4 * n * dim
    if any(o >= dim for o in offsets) or list(offsets) != sorted(set(offsets)):
        raise FormatError(f"{path}: invalid block offsets {offsets}")
    keys = np.zeros(0, dtype=KEY_DTYPE)
    if pos < len(data):
        (n_keys,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if len(data) - pos != n_keys * KEY_DTYPE.itemsize:
            raise FormatError(f"{path}: key table size mismatch")
        keys = np.frombuffer(data, KEY_DTYPE, n_keys, pos).copy()
    return rows, offsets, keys

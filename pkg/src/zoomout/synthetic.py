"""Procedural scenes with controlled context dependence and class imbalance.

Each scene has noisy textured ground and a sky band that runs either along
the top edge or along the left edge.  Some classes need context:

* ``field`` covers a half-plane of the ground with a slightly shifted
  color under the same heavy pixel noise.  One superpixel holds too few
  pixels to tell the shift from noise; its neighborhood holds enough.
* ``marker-h`` and ``marker-v`` are the same checkered square in the
  bottom-right corner; the orientation of the sky band, far from the
  marker, decides which.  Both orientations give the same color
  statistics, so only the spatial layout of the whole image tells them
  apart.

``water``, ``car`` and ``rock`` are plain objects; ``rock`` is rare and
close to the ground in appearance.
"""
import os

import numpy as np
from scipy import ndimage

from .imagecore import save_image, save_label_map
from .pipeline import ManifestEntry, write_manifest

CLASS_NAMES = ("ground", "sky", "field", "water", "car", "marker-h", "marker-v", "rock")
GROUND, SKY, FIELD, WATER, CAR, MARKER_H, MARKER_V, ROCK = range(8)

_GROUND_BASES = ((95, 125, 60), (120, 100, 70), (80, 110, 85), (135, 120, 80))
_SKY = (115, 165, 230)
_WATER = (35, 70, 130)
FIELD_SHIFT = (8.0, -6.0, 5.0)
PIXEL_NOISE = 16.0


def _noise(rng, shape, sigma, amp):
    """Smooth noise with roughly ``amp`` standard deviation."""
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma)
    return field * amp / max(field.std(), 1e-9)


def _stripes(shape, phase):
    yy, xx = np.indices(shape)
    on = ((yy + xx + phase) // 2) % 2 == 0
    return np.where(on[..., None], np.array([205, 45, 45]), np.array([235, 195, 190])).astype(float)


def _checks(shape, phase):
    yy, xx = np.indices(shape)
    on = ((yy + phase) // 3 + (xx + phase) // 3) % 2 == 0
    return np.where(on[..., None], np.array([230, 210, 60]), np.array([60, 50, 25])).astype(float)


def _ellipse(shape, cy, cx, ry, rx):
    yy, xx = np.ogrid[:shape[0], :shape[1]]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _rect(shape, y0, x0, h, w):
    m = np.zeros(shape, dtype=bool)
    m[y0:y0 + h, x0:x0 + w] = True
    return m


def _try_place(rng, make, allowed, tries=60):
    """First mask ``make(rng, y, x)`` lying inside ``allowed``, anchored at allowed pixels."""
    ys, xs = np.nonzero(allowed)
    if len(ys) == 0:
        return None
    for _ in range(tries):
        i = rng.integers(len(ys))
        m = make(rng, ys[i], xs[i])
        if m.any() and not (m & ~allowed).any():
            return m
    return None


def generate_scene(rng, size=96):
    """One ``(H, W, 3)`` uint8 image and its ``(H, W)`` label map."""
    H = W = size
    shape = (H, W)
    base = np.array(_GROUND_BASES[rng.integers(len(_GROUND_BASES))]) + rng.uniform(-12, 12, 3)
    img = base + _noise(rng, (H, W, 1), 3.0, 8) + rng.normal(0, PIXEL_NOISE, (H, W, 3))
    lab = np.full(shape, GROUND, dtype=np.uint8)
    free = np.ones(shape, dtype=bool)
    # field: the far side of a random line through the lower-right area
    yy, xx = np.indices(shape)
    theta = rng.uniform(0, 2 * np.pi)
    py, px = rng.uniform(0.35, 0.75, 2) * size
    field = (yy - py) * np.sin(theta) + (xx - px) * np.cos(theta) > 0
    img[field] += np.array(FIELD_SHIFT)
    lab[field] = FIELD

    def place(mask, pixels, cls, margin):
        img[mask] = pixels[mask]
        lab[mask] = cls
        free[ndimage.binary_dilation(mask, iterations=margin) if margin else mask] = False

    band = int(rng.integers(size // 8, size // 6 + 1))
    horizontal = rng.random() < 0.5
    sky_mask = np.zeros(shape, dtype=bool)
    if horizontal:
        sky_mask[:band] = True
    else:
        sky_mask[:, :band] = True
    sky = np.array(_SKY) + rng.uniform(-8, 8, 3) + _noise(rng, (H, W, 1), 3.0, 4)
    # the area next to either band orientation stays free of objects
    edge = size // 6 + 4
    free[:edge] = False
    free[:, :edge] = False
    place(sky_mask, sky, SKY, 0)

    if rng.random() < 0.75:
        side = int(rng.integers(size // 7, size // 5 + 1))
        y0 = int(rng.integers(H - side - size // 10, H - side + 1))
        x0 = int(rng.integers(W - side - size // 10, W - side + 1))
        place(_rect(shape, y0, x0, side, side), _checks(shape, int(rng.integers(6))),
              MARKER_H if horizontal else MARKER_V, 6)
    corner = np.zeros(shape, dtype=bool)
    corner[H // 2:, W // 2:] = True
    free[corner] = False

    if rng.random() < 0.6:
        def make_lake(r, y, x):
            ry, rx = r.integers(size // 9, size // 6 + 1), r.integers(size // 7, size // 5 + 1)
            return _ellipse(shape, y, x, ry, rx)
        lake = _try_place(rng, make_lake, free)
        if lake is not None:
            water = np.array(_WATER) + rng.uniform(-6, 6, 3) + _noise(rng, (H, W, 1), 2.0, 5)
            place(lake, water, WATER, 4)
    if rng.random() < 0.6:
        for _ in range(int(rng.integers(1, 3))):
            car = _try_place(rng, lambda r, y, x: _rect(shape, y, x, r.integers(7, 10),
                                                        r.integers(12, 18)), free)
            if car is not None:
                place(car, _stripes(shape, int(rng.integers(4))), CAR, 4)
    if rng.random() < 0.2:
        rock = _try_place(rng, lambda r, y, x: _ellipse(shape, y, x, r.integers(7, 10),
                                                           r.integers(5, 8)), free)
        if rock is not None:
            tint = base + np.array([25, 20, 30]) + _noise(rng, (H, W, 1), 1.0, 12)
            place(rock, tint + rng.normal(0, PIXEL_NOISE, (H, W, 3)), ROCK, 0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), lab


def generate_dataset(directory, n_images=500, size=96, seed=0, val_fraction=0.2):
    """Write images, label maps and ``manifest.tsv``; returns the manifest path."""
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    os.makedirs(os.path.join(directory, "labels"), exist_ok=True)
    n_val = int(round(n_images * val_fraction))
    entries = []
    for i in range(n_images):
        img, lab = generate_scene(rng, size)
        name = f"scene{i:04d}"
        ipath = os.path.join(directory, "images", name + ".png")
        lpath = os.path.join(directory, "labels", name + ".png")
        save_image(ipath, img)
        save_label_map(lpath, lab)
        entries.append(ManifestEntry(ipath, lpath, "val" if i >= n_images - n_val else "train"))
    path = os.path.join(directory, "manifest.tsv")
    write_manifest(path, entries, CLASS_NAMES)
    return path

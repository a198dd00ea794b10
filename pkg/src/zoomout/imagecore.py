"""Image and label-map I/O, sRGB to CIELAB conversion, label rendering.

Images are ``(H, W, 3)`` uint8 arrays, Lab images ``(H, W, 3)`` float64
arrays with L in [0, 100], label maps ``(H, W)`` uint8 arrays in which
``IGNORE`` (255) marks void pixels.
"""
import os

import numpy as np
from PIL import Image as PILImage

from .errors import DataError

IGNORE = 255

VOC_CLASSES = (
    "background", "aeroplane", "bicycle", "bird", "boat", "bottle", "bus",
    "car", "cat", "chair", "cow", "diningtable", "dog", "horse", "motorbike",
    "person", "pottedplant", "sheep", "sofa", "train", "tvmonitor",
)

# linear sRGB -> XYZ, D65
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


def load_image(path):
    """Decode a PNG/JPEG file into an 8-bit RGB array."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except (OSError, SyntaxError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return np.asarray(rgb, dtype=np.uint8).copy()


def save_image(path, img):
    PILImage.fromarray(np.ascontiguousarray(img, dtype=np.uint8), "RGB").save(path)


def _srgb_to_linear(c):
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _lab_f(t):
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def rgb_to_lab(img):
    """Convert an 8-bit sRGB image to CIELAB (D65 white, 2 degree observer)."""
    rgb = _srgb_to_linear(np.asarray(img, dtype=np.float64) / 255.0)
    xyz = rgb @ _RGB_TO_XYZ.T / _WHITE
    f = _lab_f(xyz)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    # black yields -0.0 style noise around zero lightness
    np.clip(lab[..., 0], 0.0, 100.0, out=lab[..., 0])
    return lab


def load_label_map(path, num_classes):
    """Read an indexed (or grayscale) PNG whose pixel values are class ids.

    Values equal to ``IGNORE`` are kept as the void sentinel; any other value
    must be below ``num_classes``.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode not in ("P", "L"):
                raise DataError(f"label map {path} is not indexed (mode {im.mode})")
            lm = np.asarray(im, dtype=np.uint8).copy()
    except OSError as exc:
        raise DataError(f"cannot decode label map {path}: {exc}") from exc
    check_label_map(lm, num_classes)
    return lm


def check_label_map(lm, num_classes):
    bad = (lm != IGNORE) & (lm >= num_classes)
    if bad.any():
        raise DataError(
            f"class id {int(lm[bad].max())} out of range for {num_classes} classes")


def save_label_map(path, lm):
    """Write a label map as an indexed PNG carrying the VOC palette."""
    im = PILImage.fromarray(np.ascontiguousarray(lm, dtype=np.uint8), "P")
    pal = voc_palette(256)
    pal[IGNORE] = (255, 255, 255)
    im.putpalette(pal.ravel().tolist())
    im.save(path)


def voc_palette(num_classes):
    """The VOC bit-reversal colormap; class 0 is black, class 1 is (128,0,0)."""
    pal = np.zeros((num_classes, 3), dtype=np.uint8)
    for i in range(num_classes):
        c, r, g, b = i, 0, 0, 0
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal[i] = (r, g, b)
    return pal


def render_labels(lm, palette):
    """Color a label map; IGNORE pixels are rendered white."""
    lm = np.asarray(lm)
    palette = np.asarray(palette, dtype=np.uint8)
    valid = lm != IGNORE
    if valid.any() and int(lm[valid].max()) >= len(palette):
        raise DataError(
            f"class id {int(lm[valid].max())} not covered by a {len(palette)}-entry palette")
    out = np.full(lm.shape + (3,), 255, dtype=np.uint8)
    out[valid] = palette[lm[valid]]
    return out

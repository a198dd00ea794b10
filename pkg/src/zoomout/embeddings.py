"""Learned-feature providers for the local, distant and global zoom-out levels.

A provider turns an image region into a fixed-length vector.  Three kinds
exist: the built-in convnets trained here, an importer for externally
computed features (e.g. activations of a large pretrained network), and
the null provider that contributes nothing.
"""
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .descriptors.assemble import GLOBAL_KEY, image_key, read_feature_store
from .errors import DataError, FormatError
from .neuralnet import ConvNetModel, fit, read_model, write_model

log = logging.getLogger(__name__)

LOCAL_CROP = 25
LOCAL_INPUT = 35
PROVIDER_LEVELS = ("local", "distant", "global")


@dataclass(frozen=True)
class CropSpec:
    """Source box ``(y0, x0, y1, x1)`` (exclusive ends) and target ``(h, w)``."""
    box: tuple
    size: tuple = (LOCAL_CROP, LOCAL_CROP)

    def __post_init__(self):
        if min(self.size) < 8:
            raise ValueError(f"target size {self.size} below 8x8")

    def clamped(self, shape):
        y0, x0, y1, x1 = (int(v) for v in self.box)
        y0, x0 = max(0, y0), max(0, x0)
        y1, x1 = min(shape[0], y1), min(shape[1], x1)
        if y0 >= y1 or x0 >= x1:
            raise ValueError(f"crop {self.box} does not intersect image {shape[:2]}")
        return y0, x0, y1, x1


def bilinear_resize(img, size):
    """Resize an ``(H, W, C)`` array with bilinear sampling at pixel centers."""
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape[:2]
    h, w = size

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        c = np.clip(c, 0, n_in - 1)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, c - lo

    y0, y1, fy = coords(h, H)
    x0, x1, fx = coords(w, W)
    fx = fx[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy[:, None, None]) + bot * fy[:, None, None]


def crop_resize(lab, spec):
    y0, x0, y1, x1 = spec.clamped(lab.shape)
    return bilinear_resize(lab[y0:y1, x0:x1], spec.size)


def local_inputs(lab, boxes, pad_value):
    """Superpixel boxes stretched to 25x25 and padded to 35x35, as ``(n, 3, 35, 35)``."""
    out = np.empty((len(boxes), 3, LOCAL_INPUT, LOCAL_INPUT), dtype=np.float32)
    out[...] = np.asarray(pad_value, dtype=np.float32)[None, :, None, None]
    m = (LOCAL_INPUT - LOCAL_CROP) // 2
    for i, box in enumerate(boxes):
        crop = crop_resize(lab, CropSpec(tuple(box), (LOCAL_CROP, LOCAL_CROP)))
        out[i, :, m:m + LOCAL_CROP, m:m + LOCAL_CROP] = crop.transpose(2, 0, 1)
    return out


def context_inputs(lab, boxes, size):
    out = np.empty((len(boxes), 3, size, size), dtype=np.float32)
    for i, box in enumerate(boxes):
        out[i] = crop_resize(lab, CropSpec(tuple(box), (size, size))).transpose(2, 0, 1)
    return out


class FeatureProvider:
    kind = None
    level = None
    dim = 0

    def image_features(self, lab, sp, zoom, image_id):
        """Features for every superpixel of one image, ``(n, dim)``."""
        raise NotImplementedError

    def extract(self, lab, crop, superpixel=None, image_id=None):
        """Feature vector of one crop (or one keyed entry for imported features)."""
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind, "level": self.level, "dim": self.dim}


class NullProvider(FeatureProvider):
    kind = "null"

    def __init__(self, level):
        self.level = level

    def image_features(self, lab, sp, zoom, image_id):
        return np.zeros((sp.count, 0), dtype=np.float32)

    def extract(self, lab, crop, superpixel=None, image_id=None):
        return np.zeros(0, dtype=np.float32)


class LocalConvNetProvider(FeatureProvider):
    """Softmax outputs of a C-way and (optionally) a foreground/background net."""
    kind = "builtin-convnet"
    level = "local"

    def __init__(self, class_net, binary_net=None):
        self.class_net = class_net
        self.binary_net = binary_net
        self.dim = class_net.num_classes + (2 if binary_net is not None else 0)

    @property
    def pad_value(self):
        return np.asarray(self.class_net.mean).reshape(-1)

    def _emit(self, x):
        parts = [self.class_net.predict_proba(x, 256)]
        if self.binary_net is not None:
            parts.append(self.binary_net.predict_proba(x, 256))
        return np.concatenate(parts, axis=1).astype(np.float32)

    def image_features(self, lab, sp, zoom, image_id):
        return self._emit(local_inputs(lab, zoom.local_boxes, self.pad_value))

    def extract(self, lab, crop, superpixel=None, image_id=None):
        return self._emit(local_inputs(lab, [crop.box], self.pad_value))[0]

    def save(self, directory):
        write_model(os.path.join(directory, "local_class.zomd"), self.class_net)
        files = ["local_class.zomd"]
        if self.binary_net is not None:
            write_model(os.path.join(directory, "local_binary.zomd"), self.binary_net)
            files.append("local_binary.zomd")
        return files


class ContextConvNetProvider(FeatureProvider):
    """Last hidden layer of a convnet applied to distant boxes or the whole image."""
    kind = "builtin-convnet"

    def __init__(self, net, level):
        if level not in ("distant", "global"):
            raise ValueError(f"context provider level must be distant or global, not {level}")
        self.net = net
        self.level = level
        self.dim = net.layers[-1].n_in

    @property
    def input_size(self):
        return self.net.input_shape[1]

    def image_features(self, lab, sp, zoom, image_id):
        if self.level == "global":
            row = self.extract(lab, CropSpec(zoom.global_box, (self.input_size,) * 2))
            return np.tile(row, (sp.count, 1))
        x = context_inputs(lab, zoom.distant_boxes, self.input_size)
        return self.net.embed(x).astype(np.float32)

    def extract(self, lab, crop, superpixel=None, image_id=None):
        spec = CropSpec(crop.box, (self.input_size,) * 2)
        return self.net.embed(context_inputs(lab, [spec.box], self.input_size))[0].astype(np.float32)

    def save(self, directory):
        name = f"{self.level}_net.zomd"
        write_model(os.path.join(directory, name), self.net)
        return [name]


class PrecomputedProvider(FeatureProvider):
    """Serves rows of an imported feature file keyed by (image, superpixel)."""
    kind = "precomputed-file"

    def __init__(self, rows, keys, level, path=None):
        self.rows = rows
        self.level = level
        self.path = path
        self.dim = rows.shape[1]
        self.index = {(int(k["image"]), int(k["superpixel"])): int(k["row"]) for k in keys}

    def _row(self, image_id, superpixel):
        sp_key = GLOBAL_KEY if self.level == "global" else int(superpixel)
        try:
            return self.rows[self.index[(image_key(image_id), sp_key)]]
        except KeyError:
            raise KeyError(f"no {self.level} features for image {image_id!r}, "
                           f"superpixel {superpixel}") from None

    def image_features(self, lab, sp, zoom, image_id):
        if self.level == "global":
            return np.tile(self._row(image_id, None), (sp.count, 1))
        return np.stack([self._row(image_id, s) for s in range(sp.count)])

    def extract(self, lab, crop, superpixel=None, image_id=None):
        return np.array(self._row(image_id, superpixel))

    def describe(self):
        return dict(super().describe(), path=self.path)


def import_precomputed(path, level, manifest=None):
    """Load a ZOFT file with a key table as a provider for ``level``.

    With a manifest, every listed image must have an entry in the file.
    """
    rows, _, keys = read_feature_store(path)
    if rows.shape[1] == 0:
        raise FormatError(f"{path}: zero-dimensional features")
    if len(keys) == 0:
        raise FormatError(f"{path}: no key table")
    if np.any(keys["row"] >= len(rows)):
        raise FormatError(f"{path}: key table points past the last row")
    provider = PrecomputedProvider(rows, keys, level, str(path))
    if manifest is not None:
        present = {int(k) for k in keys["image"]}
        missing = [e.image_id for e in manifest.entries if image_key(e.image_id) not in present]
        if missing:
            raise DataError(f"{path}: no features for {len(missing)} manifest images "
                            f"(first: {missing[0]})")
    return provider


def _channel_stats(x):
    mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
    std = x.std(axis=(0, 2, 3), dtype=np.float64)
    std = np.where(std > 1e-6, std, 1.0)
    return mean.reshape(-1, 1, 1).astype(np.float32), std.reshape(-1, 1, 1).astype(np.float32)


def train_convnet(x, targets, num_classes, cfg, filters, fc, class_weights=None, norm=None):
    """Train a ConvNetModel on ``(n, 3, s, s)`` inputs; returns ``(model, history)``.

    ``norm`` overrides the per-channel ``(mean, std)`` computed from ``x``.
    """
    model = ConvNetModel.build(num_classes, filters, fc, input_size=x.shape[2],
                               seed=cfg.seed, dtype=np.float32)
    model.mean, model.std = norm if norm is not None else _channel_stats(x)
    weights = np.ones(num_classes) if class_weights is None else class_weights
    history = fit(model, x, targets, weights, cfg, full_loss=False)
    model.round_to_float32()
    return model, history


def _require_classes(labels, what):
    present = np.unique(labels)
    if len(present) < 2:
        raise DataError(f"{what}: training labels contain a single class "
                        f"({present.tolist()}); no gradient signal for the others")


def train_local_convnet(crops, labels, num_classes, cfg, filters=(32, 32, 64),
                        fc=(1152, 1152), binary_head=True, background=0):
    """Train the C-way superpixel net and, with ``binary_head``, a fg/bg net.

    ``crops`` are ``(n, 3, 35, 35)`` local inputs; their border is reset to
    the per-channel mean of the central 25x25 area over all crops, which
    is also the value used to pad at extraction time.  The emitted feature
    dimension is ``num_classes + 2`` (``num_classes`` without the binary
    head).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(crops) == 0:
        raise DataError("local convnet: empty training set")
    if crops.shape[1:] != (3, LOCAL_INPUT, LOCAL_INPUT):
        raise ValueError(f"local crops must be (n, 3, 35, 35), got {crops.shape}")
    _require_classes(labels, "local convnet")
    m = (LOCAL_INPUT - LOCAL_CROP) // 2
    norm = _channel_stats(crops[:, :, m:m + LOCAL_CROP, m:m + LOCAL_CROP])
    border = np.ones((LOCAL_INPUT, LOCAL_INPUT), dtype=bool)
    border[m:m + LOCAL_CROP, m:m + LOCAL_CROP] = False
    crops = crops.copy()
    crops[:, :, border] = norm[0].reshape(1, 3, 1)
    class_net, _ = train_convnet(crops, labels, num_classes, cfg, filters, fc, norm=norm)
    binary_net = None
    if binary_head:
        fg = (labels != background).astype(np.int64)
        _require_classes(fg, "local fg/bg convnet")
        binary_net, _ = train_convnet(crops, fg, 2, cfg, filters, fc, norm=norm)
    return LocalConvNetProvider(class_net, binary_net)


def train_context_convnet(inputs, targets, num_classes, level, cfg,
                          filters=(16, 16, 32), fc=(64,), class_weights=None):
    """Train a distant/global convnet; its last hidden layer becomes the feature."""
    if len(inputs) == 0:
        raise DataError(f"{level} convnet: empty training set")
    targets = np.asarray(targets)
    if targets.ndim == 1:
        _require_classes(targets, f"{level} convnet")
    net, _ = train_convnet(inputs, targets, num_classes, cfg, filters, fc, class_weights)
    return ContextConvNetProvider(net, level)


def save_provider(directory, provider):
    """Write a provider descriptor (and any model files) into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    desc = provider.describe()
    if isinstance(provider, (LocalConvNetProvider, ContextConvNetProvider)):
        desc["files"] = provider.save(directory)
    with open(os.path.join(directory, f"{provider.level}.json"), "w") as fh:
        json.dump(desc, fh, indent=1, sort_keys=True)


def load_provider(directory, level):
    path = os.path.join(directory, f"{level}.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        desc = json.load(fh)
    if desc["kind"] == "null":
        return NullProvider(level)
    if desc["kind"] == "precomputed-file":
        return import_precomputed(desc["path"], level)
    models = [read_model(os.path.join(directory, f)) for f in desc["files"]]
    if level == "local":
        return LocalConvNetProvider(*models)
    return ContextConvNetProvider(models[0], level)


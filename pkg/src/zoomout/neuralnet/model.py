"""Feedforward networks (MLP and small convnet) and the model file format."""
import json
import struct

import numpy as np

from ..errors import FormatError
from .layers import Conv2D, Dense, Flatten, MaxPool, ReLU, layer_from_spec

ZOMD_MAGIC = b"ZOMD"
ZOMD_VERSION = 1


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Network:
    """A stack of layers producing class logits.

    Inputs are standardized with ``(x - mean) / std`` before the first layer
    when those are set.  ``meta`` carries free-form JSON-serializable data
    (feature layout, class statistics, ...) that travels with the model file.
    """
    kind = "network"

    def __init__(self, layers, input_shape, num_classes, mean=None, std=None, meta=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.mean = mean
        self.std = std
        self.meta = dict(meta or {})
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (num_classes,):
            raise ValueError(f"network output {shape} != ({num_classes},)")

    @property
    def dtype(self):
        for layer in self.layers:
            if layer.params:
                return layer.params["W"].dtype
        return np.dtype(np.float64)

    def parameters(self):
        """``(layer index, name, array)`` for every trainable array, in order."""
        return [(i, name, layer.params[name])
                for i, layer in enumerate(self.layers) for name in ("W", "b")
                if name in layer.params]

    def n_parameters(self):
        return sum(a.size for _, _, a in self.parameters())

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} != model input {self.input_shape}")
        if not np.isfinite(x).all():
            raise ValueError("non-finite input")
        if self.mean is not None:
            x = (x - self.mean) / self.std
        return x

    def forward(self, x, upto=None):
        """Logits for a batch (or the activations after layer ``upto``)."""
        h = self._prepare(x)
        for layer in self.layers[:upto]:
            h = layer.forward(h)
        return h

    def backward(self, dlogits):
        g = dlogits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict_proba(self, x, batch_size=1024):
        x = np.asarray(x)
        if len(x) == 0:
            return np.zeros((0, self.num_classes))
        return np.concatenate([softmax(self.forward(x[s:s + batch_size]))
                               for s in range(0, len(x), batch_size)])

    def embed(self, x, batch_size=256):
        """Activations of the last hidden layer (input to the classifier head)."""
        x = np.asarray(x)
        dim = self.layers[-1].n_in
        if len(x) == 0:
            return np.zeros((0, dim))
        return np.concatenate([self.forward(x[s:s + batch_size], upto=-1)
                               for s in range(0, len(x), batch_size)])

    def round_to_float32(self):
        """Snap parameters to float32-representable values (keeps the dtype)."""
        for _, _, a in self.parameters():
            a[...] = a.astype(np.float32)
        for arr in (self.mean, self.std):
            if arr is not None:
                arr[...] = arr.astype(np.float32)


class MLPModel(Network):
    kind = "mlp"

    @classmethod
    def build(cls, input_dim, hidden, num_classes, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        layers, width = [], input_dim
        for h in hidden:
            layers += [Dense(width, h, rng, dtype), ReLU()]
            width = h
        layers.append(Dense(width, num_classes, rng, dtype))
        return cls(layers, (input_dim,), num_classes)

    @property
    def input_dim(self):
        return self.input_shape[0]


class ConvNetModel(Network):
    """Valid 5x5 conv + maxpool(3x3, stride 2) + ReLU blocks, dense ReLU layers, linear head.

    A block whose conv output is smaller than the pooling window skips the pool.
    """
    kind = "convnet"

    @classmethod
    def build(cls, num_classes, filters=(32, 32, 64), fc=(1152, 1152), input_size=35,
              channels=3, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        layers, c = [], channels
        shape = (channels, input_size, input_size)
        for f in filters:
            conv = Conv2D(c, f, 5, 0, rng, dtype)
            shape = conv.output_shape(shape)
            if min(shape[1:]) < 1:
                raise ValueError(f"input size {input_size} too small for {len(filters)} "
                                 f"valid 5x5 convolutions")
            layers.append(conv)
            if min(shape[1:]) >= 3:
                pool = MaxPool(3, 2)
                layers.append(pool)
                shape = pool.output_shape(shape)
            layers.append(ReLU())
            c = f
        layers.append(Flatten())
        width = int(np.prod(shape))
        for h in fc:
            layers += [Dense(width, h, rng, dtype), ReLU()]
            width = h
        layers.append(Dense(width, num_classes, rng, dtype))
        return cls(layers, (channels, input_size, input_size), num_classes)


_KINDS = {"mlp": MLPModel, "convnet": ConvNetModel, "network": Network}


def model_bytes(model):
    header = {
        "kind": model.kind,
        "layers": [layer.spec() for layer in model.layers],
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "dtype": np.dtype(model.dtype).name,
        "normalized": model.mean is not None,
        "meta": model.meta,
    }
    text = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<4sII", ZOMD_MAGIC, ZOMD_VERSION, len(text)), text]
    for _, _, a in model.parameters():
        parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    if model.mean is not None:
        parts.append(np.ascontiguousarray(model.mean, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(model.std, dtype="<f4").tobytes())
    return b"".join(parts)


def write_model(path, model):
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def read_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return model_from_bytes(data, str(path))


def model_from_bytes(data, name="<bytes>"):
    if len(data) < 12:
        raise FormatError(f"{name}: truncated ZOMD header")
    magic, version, n = struct.unpack_from("<4sII", data)
    if magic != ZOMD_MAGIC or version != ZOMD_VERSION:
        raise FormatError(f"{name}: not a ZOMD v{ZOMD_VERSION} model")
    try:
        header = json.loads(data[12:12 + n].decode("utf-8"))
        cls = _KINDS[header["kind"]]
        dtype = np.dtype(header["dtype"])
        layers = [layer_from_spec(s, dtype) for s in header["layers"]]
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{name}: bad model header: {exc}") from exc
    pos = 12 + n

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape))
        if pos + 4 * count > len(data):
            raise FormatError(f"{name}: truncated weight buffers")
        arr = np.frombuffer(data, "<f4", count, pos).reshape(shape).astype(dtype)
        pos += 4 * count
        return arr

    for layer in layers:
        for key in ("W", "b"):
            if key in layer.params:
                layer.params[key] = take(layer.params[key].shape)
    input_shape = tuple(header["input_shape"])
    mean = std = None
    if header["normalized"]:
        norm_shape = input_shape if len(input_shape) == 1 else (input_shape[0], 1, 1)
        mean, std = take(norm_shape), take(norm_shape)
    if pos != len(data):
        raise FormatError(f"{name}: {len(data) - pos} trailing bytes")
    return cls(layers, input_shape, header["num_classes"], mean, std, header["meta"])

"""Layers with explicit forward/backward passes.

Convolution and pooling operate on ``(N, C, H, W)`` arrays.  Each layer
caches what its backward pass needs during ``forward``; ``backward``
stores parameter gradients in ``self.grads`` and returns the gradient with
respect to the layer input.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = None

    def __init__(self):
        self.params = {}
        self.grads = {}

    def spec(self):
        return {"type": self.kind}

    def output_shape(self, shape):
        return shape


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng=None, dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "W": glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }

    def spec(self):
        return {"type": self.kind, "in": self.n_in, "out": self.n_out}

    def output_shape(self, shape):
        return (self.n_out,)

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0)


class Conv2D(Layer):
    """Square-kernel convolution, stride 1, symmetric zero padding."""
    kind = "conv"

    def __init__(self, n_in, n_out, size=5, pad=2, rng=None, dtype=np.float64):
        super().__init__()
        self.n_in, self.n_out, self.size, self.pad = n_in, n_out, size, pad
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in, fan_out = n_in * size * size, n_out * size * size
        self.params = {
            "W": glorot_uniform(rng, (n_out, n_in, size, size), fan_in, fan_out, dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }

    def spec(self):
        return {"type": self.kind, "in": self.n_in, "out": self.n_out,
                "size": self.size, "pad": self.pad}

    def output_shape(self, shape):
        c, h, w = shape
        k, p = self.size, self.pad
        return (self.n_out, h + 2 * p - k + 1, w + 2 * p - k + 1)

    def forward(self, x):
        p, k = self.pad, self.size
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        self._xp = xp
        cols = sliding_window_view(xp, (k, k), axis=(2, 3))
        out = np.tensordot(cols, self.params["W"], axes=([1, 4, 5], [1, 2, 3]))
        return out.transpose(0, 3, 1, 2) + self.params["b"][None, :, None, None]

    def backward(self, dout):
        p, k = self.pad, self.size
        cols = sliding_window_view(self._xp, (k, k), axis=(2, 3))
        self.grads["W"] = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
        self.grads["b"] = dout.sum(axis=(0, 2, 3))
        dpad = np.pad(dout, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
        win = sliding_window_view(dpad, (k, k), axis=(2, 3))
        flipped = self.params["W"][:, :, ::-1, ::-1]
        dxp = np.tensordot(win, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return np.ascontiguousarray(dxp)


class MaxPool(Layer):
    """Max pooling without padding; ties route the gradient to the first maximum."""
    kind = "pool"

    def __init__(self, size=3, stride=2):
        super().__init__()
        self.size, self.stride = size, stride

    def spec(self):
        return {"type": self.kind, "size": self.size, "stride": self.stride}

    def output_shape(self, shape):
        c, h, w = shape
        return (c, (h - self.size) // self.stride + 1, (w - self.size) // self.stride + 1)

    def _slices(self, shape):
        s, k = self.stride, self.size
        ho = (shape[2] - k) // s + 1
        wo = (shape[3] - k) // s + 1
        for dy in range(k):
            for dx in range(k):
                yield (slice(None), slice(None),
                       slice(dy, dy + s * (ho - 1) + 1, s),
                       slice(dx, dx + s * (wo - 1) + 1, s))

    def forward(self, x):
        if x.shape[2] < self.size or x.shape[3] < self.size:
            raise ValueError(f"input {x.shape[2:]} smaller than the pooling window")
        self._x = x
        out = None
        for sl in self._slices(x.shape):
            out = x[sl].copy() if out is None else np.maximum(out, x[sl])
        self._out = out
        return out

    def backward(self, dout):
        x = self._x
        dx = np.zeros_like(x)
        taken = np.zeros(self._out.shape, dtype=bool)
        for sl in self._slices(x.shape):
            hit = (x[sl] == self._out) & ~taken
            taken |= hit
            dx[sl] += np.where(hit, dout, 0)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


def layer_from_spec(spec, dtype=np.float64):
    kind = spec["type"]
    if kind == "dense":
        return Dense(spec["in"], spec["out"], dtype=dtype)
    if kind == "conv":
        return Conv2D(spec["in"], spec["out"], spec["size"], spec["pad"], dtype=dtype)
    if kind == "pool":
        return MaxPool(spec["size"], spec["stride"])
    if kind == "relu":
        return ReLU()
    if kind == "flatten":
        return Flatten()
    raise ValueError(f"unknown layer type {kind!r}")

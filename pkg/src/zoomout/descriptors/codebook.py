"""k-means codebooks (textons and visual words) and their binary format."""
import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from ..errors import FormatError

ZOCB_MAGIC = b"ZOCB"
ZOCB_VERSION = 1
KINDS = ("texton", "visual-word")


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def nearest(X, C, chunk=8192):
    """Index of and squared distance to the nearest row of ``C`` for each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    idx = np.empty(len(X), dtype=np.int64)
    dist = np.empty(len(X))
    for s in range(0, len(X), chunk):
        d = _sq_dists(X[s:s + chunk], C)
        idx[s:s + chunk] = d.argmin(1)
        dist[s:s + chunk] = d[np.arange(len(d)), idx[s:s + chunk]]
    return idx, dist


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = _sq_dists(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(n))
        centers[j] = X[pick]
        d2 = np.minimum(d2, _sq_dists(X, centers[j:j + 1])[:, 0])
    return centers


def kmeans(X, k, seed=0, max_iter=50, tol=1e-4):
    """Lloyd's k-means with k-means++ seeding.

    Stops after ``max_iter`` rounds or when the objective improves by less
    than ``tol`` relative.  Empty clusters are reseeded at the points
    farthest from their current centroid.  Returns ``(centers, objectives)``
    where ``objectives[i]`` is the sum of squared distances after the i-th
    assignment step.
    """
    X = np.asarray(X, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(X) < k:
        raise ValueError(f"{len(X)} samples cannot support {k} clusters")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, k, rng)
    history = []
    for _ in range(max_iter):
        idx, d2 = nearest(X, centers)
        obj = float(d2.sum())
        if history and history[-1] - obj <= tol * max(history[-1], 1e-300):
            history.append(obj)
            break
        history.append(obj)
        onehot = csr_matrix((np.ones(len(X)), (idx, np.arange(len(X)))), shape=(k, len(X)))
        counts = np.bincount(idx, minlength=k)
        sums = onehot @ X
        filled = counts > 0
        centers[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if len(empty):
            far = np.argsort(-d2, kind="stable")[:len(empty)]
            centers[empty] = X[far]
    return centers, history


@dataclass(frozen=True)
class Codebook:
    kind: str
    centroids: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown codebook kind {self.kind!r}")
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or len(c) < 1:
            raise ValueError("centroids must be a non-empty (k, dim) array")
        object.__setattr__(self, "centroids", c)

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]

    def assign(self, X):
        return nearest(np.asarray(X).reshape(-1, self.dim), self.centroids)[0]


def train_codebook(samples, k, kind, seed=0):
    samples = np.asarray(samples, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(samples) < 10 * k:
        raise ValueError(f"need at least {10 * k} samples for k={k}, got {len(samples)}")
    centers, _ = kmeans(samples, k, seed=seed)
    return Codebook(kind, centers)


def write_codebook(path, cb):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIBII", ZOCB_MAGIC, ZOCB_VERSION,
                             KINDS.index(cb.kind), cb.k, cb.dim))
        fh.write(cb.centroids.astype("<f4").tobytes())


def read_codebook(path):
    with open(path, "rb") as fh:
        head = fh.read(17)
        if len(head) != 17:
            raise FormatError(f"{path}: truncated ZOCB header")
        magic, version, kind, k, dim = struct.unpack("<4sIBII", head)
        if magic != ZOCB_MAGIC or version != ZOCB_VERSION or kind >= len(KINDS):
            raise FormatError(f"{path}: not a ZOCB v{ZOCB_VERSION} codebook")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != k * dim:
        raise FormatError(f"{path}: expected {k * dim} values, found {data.size}")
    return Codebook(KINDS[kind], data.reshape(k, dim).astype(np.float32))

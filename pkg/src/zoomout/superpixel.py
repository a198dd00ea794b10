"""SLIC over-segmentation, superpixel adjacency and zoom-out regions."""
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import FormatError

ZOSP_MAGIC = b"ZOSP"
ZOSP_VERSION = 1


@dataclass(frozen=True)
class SlicParams:
    target_count: int = 500
    compactness: float = 15.0
    iterations: int = 10
    # grid seeding is deterministic; the seed only enters the artifact header
    seed: int = 0

    def __post_init__(self):
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if not self.compactness > 0:
            raise ValueError("compactness must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class Superpixelization:
    """Pixel -> superpixel id map plus per-superpixel geometry.

    ``centroids`` hold (x, y) in pixel-center coordinates (pixel ``(0, 0)``
    covers [0, 1) x [0, 1)); ``boxes`` are ``(y0, x0, y1, x1)`` with exclusive
    ends.
    """
    labels: np.ndarray
    count: int
    sizes: np.ndarray
    centroids: np.ndarray
    boxes: np.ndarray

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @classmethod
    def from_labels(cls, labels):
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        count = int(labels.max()) + 1 if labels.size else 0
        flat = labels.ravel()
        sizes = np.bincount(flat, minlength=count)
        if (sizes == 0).any():
            raise ValueError("superpixel ids must form a contiguous range")
        yy, xx = np.indices(labels.shape)
        cx = np.bincount(flat, weights=xx.ravel() + 0.5, minlength=count) / sizes
        cy = np.bincount(flat, weights=yy.ravel() + 0.5, minlength=count) / sizes
        boxes = np.empty((count, 4), dtype=np.int64)
        for k, sl in enumerate(ndimage.find_objects(labels + 1)):
            boxes[k] = (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)
        return cls(labels, count, sizes, np.stack([cx, cy], axis=1), boxes)


def _gradient_map(lab):
    p = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dx = p[1:-1, 2:] - p[1:-1, :-2]
    dy = p[2:, 1:-1] - p[:-2, 1:-1]
    return (dx ** 2).sum(-1) + (dy ** 2).sum(-1)


def _perturb_seeds(grad, ys, xs):
    """Move each seed to the lowest-gradient pixel of its 3x3 window."""
    H, W = grad.shape
    g = np.pad(grad, 1, constant_values=np.inf)
    best_y, best_x = ys.copy(), xs.copy()
    best = g[ys + 1, xs + 1].copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            v = g[ys + 1 + dy, xs + 1 + dx]
            better = v < best
            best = np.where(better, v, best)
            best_y = np.where(better, ys + dy, best_y)
            best_x = np.where(better, xs + dx, best_x)
    return np.clip(best_y, 0, H - 1), np.clip(best_x, 0, W - 1)


def _init_centers(lab, K):
    H, W = lab.shape[:2]
    step = math.sqrt(H * W / K)
    ny = max(1, min(H, int(round(H / step))))
    nx = max(1, min(W, int(round(K / ny))))
    gy = ((np.arange(ny) + 0.5) * H / ny).astype(np.int64)
    gx = ((np.arange(nx) + 0.5) * W / nx).astype(np.int64)
    ys, xs = np.meshgrid(gy, gx, indexing="ij")
    ys, xs = _perturb_seeds(_gradient_map(lab), ys.ravel(), xs.ravel())
    centers = np.column_stack([lab[ys, xs], ys + 0.0, xs + 0.0])
    return centers, step, max(step, H / ny), max(step, W / nx)


def _assign(lab, centers, step, half_y, half_x, m):
    H, W = lab.shape[:2]
    dist = np.full((H, W), np.inf)
    labels = np.full((H, W), -1, dtype=np.int64)
    spatial = (m / step) ** 2
    for k, (L, a, b, cy, cx) in enumerate(centers):
        y0, y1 = max(0, int(math.floor(cy - half_y))), min(H, int(math.ceil(cy + half_y)) + 1)
        x0, x1 = max(0, int(math.floor(cx - half_x))), min(W, int(math.ceil(cx + half_x)) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        win = lab[y0:y1, x0:x1]
        d_lab = (win[..., 0] - L) ** 2 + (win[..., 1] - a) ** 2 + (win[..., 2] - b) ** 2
        yy = (np.arange(y0, y1) - cy)[:, None] ** 2
        xx = (np.arange(x0, x1) - cx)[None, :] ** 2
        d = d_lab + (yy + xx) * spatial
        # strict comparison: equal distances keep the lower cluster id
        closer = d < dist[y0:y1, x0:x1]
        dist[y0:y1, x0:x1][closer] = d[closer]
        labels[y0:y1, x0:x1][closer] = k
    missing = labels < 0
    if missing.any():
        py, px = np.nonzero(missing)
        feats = lab[py, px]
        d = ((feats[:, None, :] - centers[None, :, :3]) ** 2).sum(-1)
        d += ((py[:, None] - centers[None, :, 3]) ** 2
              + (px[:, None] - centers[None, :, 4]) ** 2) * spatial
        labels[py, px] = d.argmin(axis=1)
    return labels


class _Merger:
    """Union-find over connected components with adjacency bookkeeping."""

    def __init__(self, sizes, main, adjacency):
        self.parent = list(range(len(sizes)))
        self.size = list(sizes)
        self.main = list(main)
        self.adj = adjacency

    def find(self, c):
        while self.parent[c] != c:
            self.parent[c] = self.parent[self.parent[c]]
            c = self.parent[c]
        return c

    def absorb(self, r):
        nbrs = {self.find(c) for c in self.adj[r]} - {r}
        target = min(nbrs, key=lambda t: (-self.size[t], t))
        self.parent[r] = target
        self.size[target] += self.size[r]
        self.adj[target] |= self.adj[r]
        self.adj[r] = set()


def _enforce_connectivity(labels):
    """Give every label one 4-connected region.

    For each label the largest component keeps it; the remaining (orphan)
    components are absorbed into the largest adjacent region.
    """
    H, W = labels.shape
    comp = np.empty((H, W), dtype=np.int64)
    comp_label, comp_size, comp_main = [], [], []
    n = 0
    for k, sl in enumerate(ndimage.find_objects(labels + 1)):
        if sl is None:
            continue
        sub = labels[sl] == k
        cc, ncc = ndimage.label(sub)
        sizes = np.bincount(cc[sub], minlength=ncc + 1)[1:]
        comp[sl][sub] = cc[sub] - 1 + n
        main = int(np.argmax(sizes))
        comp_label.extend([k] * ncc)
        comp_size.extend(sizes.tolist())
        comp_main.extend(i == main for i in range(ncc))
        n += ncc
    if all(comp_main):
        return labels
    pairs = np.concatenate([
        np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], 1),
        np.stack([comp[:-1, :].ravel(), comp[1:, :].ravel()], 1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adjacency = [set() for _ in range(n)]
    for a, b in pairs.tolist():
        adjacency[a].add(b)
        adjacency[b].add(a)
    merger = _Merger(comp_size, comp_main, adjacency)
    pending = [c for c in range(n) if not comp_main[c]]
    while pending:
        for c in pending:
            r = merger.find(c)
            if r == c and not merger.main[r]:
                merger.absorb(r)
        pending = [c for c in pending
                   if merger.find(c) == c and not merger.main[c]]
    roots = np.array([merger.find(c) for c in range(n)])
    final = np.asarray(comp_label)[roots]
    return final[comp]


def slic_oversegment(lab, params=SlicParams()):
    """Over-segment a Lab image into roughly ``params.target_count`` superpixels."""
    lab = np.asarray(lab, dtype=np.float64)
    H, W = lab.shape[:2]
    if H < 2 or W < 2:
        raise ValueError(f"image must be at least 2x2, got {W}x{H}")
    if params.target_count > H * W:
        raise ValueError("image smaller than one grid cell "
                         f"({H * W} pixels for {params.target_count} superpixels)")
    centers, step, half_y, half_x = _init_centers(lab, params.target_count)
    m = params.compactness
    n = len(centers)
    yy, xx = np.indices((H, W))
    feats = np.concatenate([lab.reshape(-1, 3), yy.reshape(-1, 1), xx.reshape(-1, 1)], 1)
    for _ in range(params.iterations):
        labels = _assign(lab, centers, step, half_y, half_x, m)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n)
        sums = np.stack([np.bincount(flat, weights=feats[:, j], minlength=n)
                         for j in range(5)], axis=1)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    labels = _assign(lab, centers, step, half_y, half_x, m)
    labels = _enforce_connectivity(labels)
    _, contiguous = np.unique(labels, return_inverse=True)
    return Superpixelization.from_labels(contiguous.reshape(H, W))


@dataclass(frozen=True)
class SuperpixelGraph:
    """Undirected 4-connectivity adjacency between superpixels."""
    count: int
    neighbors: tuple = field(repr=False)

    def matrix(self):
        rows = np.repeat(np.arange(self.count), [len(n) for n in self.neighbors])
        cols = np.concatenate(self.neighbors) if self.count else np.zeros(0, int)
        data = np.ones(len(rows), dtype=np.int8)
        return csr_matrix((data, (rows, cols)), shape=(self.count, self.count))

    def hop_distances(self):
        """All-pairs graph distance; unreachable pairs are ``inf``."""
        return shortest_path(self.matrix(), unweighted=True, directed=False)


def build_adjacency(sp):
    labels = sp.labels
    pairs = np.concatenate([
        np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], 1),
        np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], 1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.sort(pairs, axis=1)
    pairs = np.unique(pairs, axis=0) if len(pairs) else pairs.reshape(0, 2)
    both = np.concatenate([pairs, pairs[:, ::-1]])
    both = both[np.lexsort((both[:, 1], both[:, 0]))]
    splits = np.searchsorted(both[:, 0], np.arange(1, sp.count))
    neighbors = tuple(np.split(both[:, 1].astype(np.int64), splits))
    return SuperpixelGraph(sp.count, neighbors)


def neighborhood(g, s, radius):
    """Superpixels within ``radius`` hops of ``s``, excluding ``s`` itself."""
    if not 0 <= s < g.count:
        raise IndexError(f"superpixel id {s} out of range [0, {g.count})")
    if radius < 0:
        raise ValueError("radius must be >= 0")
    seen = {s}
    frontier = [s]
    for _ in range(radius):
        nxt = []
        for u in frontier:
            for v in g.neighbors[u].tolist():
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    seen.discard(s)
    return seen


@dataclass(frozen=True)
class ZoomRegions:
    """Per-superpixel zoom-out regions.

    ``proximal`` and ``distant_members`` are boolean ``(n, n)`` membership
    matrices (row ``s`` marks the superpixels forming the region of ``s``,
    ``s`` included).  Boxes are ``(y0, x0, y1, x1)`` with exclusive ends.
    """
    local_boxes: np.ndarray
    proximal: np.ndarray
    distant_members: np.ndarray
    distant_boxes: np.ndarray
    global_box: tuple

    def proximal_mask(self, labels, s):
        return self.proximal[s][labels]


def _union_boxes(members, boxes):
    big = np.iinfo(np.int64).max
    y0 = np.where(members, boxes[None, :, 0], big).min(axis=1)
    x0 = np.where(members, boxes[None, :, 1], big).min(axis=1)
    y1 = np.where(members, boxes[None, :, 2], -1).max(axis=1)
    x1 = np.where(members, boxes[None, :, 3], -1).max(axis=1)
    return np.stack([y0, x0, y1, x1], axis=1)


def compute_zoom_regions(sp, g, proximal_radius=2, distant_radius=3):
    hops = g.hop_distances()
    proximal = hops <= proximal_radius
    distant = hops <= distant_radius
    return ZoomRegions(
        local_boxes=sp.boxes.copy(),
        proximal=proximal,
        distant_members=distant,
        distant_boxes=_union_boxes(distant, sp.boxes),
        global_box=(0, 0, sp.height, sp.width),
    )


def write_superpixelization(path, sp):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", ZOSP_MAGIC, ZOSP_VERSION,
                             sp.width, sp.height, sp.count))
        fh.write(sp.labels.astype("<u4").tobytes())


def read_superpixelization(path):
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) != 20:
            raise FormatError(f"{path}: truncated ZOSP header")
        magic, version, width, height, count = struct.unpack("<4sIIII", head)
        if magic != ZOSP_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != ZOSP_VERSION:
            raise FormatError(f"{path}: unsupported ZOSP version {version}")
        ids = np.frombuffer(fh.read(), dtype="<u4")
    if ids.size != width * height:
        raise FormatError(f"{path}: expected {width * height} ids, found {ids.size}")
    sp = Superpixelization.from_labels(ids.reshape(height, width).astype(np.int32))
    if sp.count != count:
        raise FormatError(f"{path}: header count {count} != {sp.count} ids")
    return sp

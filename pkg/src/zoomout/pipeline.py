"""Dataset manifests, superpixel labeling, feature extraction, training and prediction."""
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import LEVELS
from .descriptors import dense_sift, region_counts, train_sift_codebook, train_texton_codebook
from .descriptors.assemble import (
    KEY_DTYPE, FeatureLayout, assemble_rows, handcrafted_dim, image_key,
    read_feature_store, write_feature_store,
)
from .descriptors.codebook import read_codebook, write_codebook
from .descriptors.sift import PATCH_SIZES
from .embeddings import (
    PROVIDER_LEVELS, NullProvider, context_inputs, import_precomputed,
    load_provider, local_inputs, save_provider, train_context_convnet, train_local_convnet,
)
from .errors import DataError, LayoutError
from .evaluation import confusion_from_superpixels, majority_labels, superpixel_label_counts
from .imagecore import load_image, load_label_map, rgb_to_lab
from .neuralnet import ClassStats, TrainConfig, read_model, train_classifier, write_model
from .superpixel import SlicParams, build_adjacency, compute_zoom_regions, slic_oversegment

log = logging.getLogger(__name__)

EXCLUDED = -1
SPLITS = ("train", "val", "test")


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class NetConfig:
    """Architecture and schedule of a built-in convnet provider."""
    filters: tuple = (32, 32, 64)
    fc: tuple = (1152, 1152)
    epochs: int = 5
    learning_rate: float = 1e-2
    batch_size: int = 64
    max_crops: int = 20000
    input_size: int = 64
    binary_head: bool = True

    def train_config(self, seed):
        return TrainConfig(learning_rate=self.learning_rate, weight_decay=1e-4,
                           batch_size=self.batch_size, epochs=self.epochs, seed=seed,
                           loss="symmetric")


@dataclass(frozen=True)
class ZoomoutConfig:
    slic: SlicParams = SlicParams()
    proximal_radius: int = 2
    distant_radius: int = 3
    providers: dict = field(default_factory=lambda: {"local": "builtin", "distant": "builtin",
                                                     "global": "builtin"})
    hidden: tuple = (1024,)
    train: TrainConfig = TrainConfig()
    texton_k: int = 64
    sift_k: int = 500
    codebook_samples: int = 20000
    frequency_unit: str = "superpixel"
    local_net: NetConfig = NetConfig()
    distant_net: NetConfig = NetConfig(filters=(16, 16, 32), fc=(64,), input_size=64)
    global_net: NetConfig = NetConfig(filters=(16, 16, 32), fc=(64,), input_size=64, epochs=30)
    seed: int = 0

    def __post_init__(self):
        if self.proximal_radius < 1 or self.distant_radius < 1:
            raise ValueError("zoom radii must be >= 1")
        if self.distant_radius < self.proximal_radius:
            raise ValueError("distant radius must be >= proximal radius")
        if self.frequency_unit not in ("superpixel", "pixel"):
            raise ValueError("frequency_unit must be 'superpixel' or 'pixel'")
        for level, spec in self.providers.items():
            if level not in PROVIDER_LEVELS:
                raise ValueError(f"no provider slot for level {level!r}")
            if spec not in ("builtin", "none") and not spec.startswith("file:"):
                raise ValueError(f"provider {spec!r} is not builtin, none or file:PATH")

    def provider_spec(self, level):
        return self.providers.get(level, "none")

    def to_dict(self):
        d = asdict(self)
        d["providers"] = {lv: self.provider_spec(lv) for lv in PROVIDER_LEVELS}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        nets = {}
        for key in ("local_net", "distant_net", "global_net"):
            if key in d:
                sub = dict(d.pop(key))
                for t in ("filters", "fc"):
                    if t in sub:
                        sub[t] = tuple(sub[t])
                nets[key] = replace(getattr(cls(), key), **sub)
        slic = SlicParams(**d.pop("slic", {}))
        train = TrainConfig(**d.pop("train", {}))
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(slic=slic, train=train, **nets, **d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def digest(self):
        return hashlib.sha1(self.to_json().encode()).hexdigest()[:12]


def load_config(path):
    with open(path) as fh:
        return ZoomoutConfig.from_dict(json.load(fh))


# -------------------------------------------------------------- manifest

@dataclass(frozen=True)
class ManifestEntry:
    image: str
    label: str
    split: str

    @property
    def image_id(self):
        return os.path.splitext(os.path.basename(self.image))[0]


@dataclass
class DatasetManifest:
    entries: list
    num_classes: int
    class_names: tuple

    def split(self, name):
        return [e for e in self.entries if e.split == name]


def read_manifest(path, num_classes=None):
    """Parse ``image<TAB>label-or--<TAB>split`` lines.

    The class list comes from a ``# classes: a,b,c`` header (or ``# classes: N``);
    relative paths are resolved against the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    entries, names = [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "classes":
                    value = value.strip()
                    names = (tuple(f"class{c}" for c in range(int(value))) if value.isdigit()
                             else tuple(v.strip() for v in value.split(",")))
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            image, label, split = parts
            if split not in SPLITS:
                raise DataError(f"{path}:{lineno}: unknown split {split!r}")
            image = os.path.join(base, image)
            label = None if label == "-" else os.path.join(base, label)
            if not os.path.exists(image):
                raise DataError(f"{path}:{lineno}: missing image {image}")
            if label is not None and not os.path.exists(label):
                raise DataError(f"{path}:{lineno}: missing label map {label}")
            if split == "train" and label is None:
                raise DataError(f"{path}:{lineno}: train entry without a label map")
            entries.append(ManifestEntry(image, label, split))
    if names is None:
        if num_classes is None:
            raise DataError(f"{path}: no '# classes:' header and no class count given")
        names = tuple(f"class{c}" for c in range(num_classes))
    if num_classes is not None and num_classes != len(names):
        raise DataError(f"{path}: header lists {len(names)} classes, expected {num_classes}")
    ids = [e.image_id for e in entries]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: image ids (file stems) are not unique")
    return DatasetManifest(entries, len(names), names)


def write_manifest(path, entries, class_names):
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "w") as fh:
        fh.write(f"# classes: {','.join(class_names)}\n")
        for e in entries:
            label = "-" if e.label is None else os.path.relpath(e.label, base)
            fh.write(f"{os.path.relpath(e.image, base)}\t{label}\t{e.split}\n")


# -------------------------------------------------------------- labeling

@dataclass(frozen=True)
class LabeledSuperpixel:
    image_id: str
    superpixel: int
    label: int

    @property
    def excluded(self):
        return self.label == EXCLUDED


def superpixel_targets(sp_labels, truth, num_classes):
    """Per-superpixel training labels and ``(n, C)`` ground-truth pixel counts.

    The label is the plurality class among non-IGNORE pixels (lowest id on
    ties), or EXCLUDED when more than half the pixels are IGNORE.
    """
    counts, ignored = superpixel_label_counts(sp_labels, truth, num_classes)
    sizes = counts.sum(axis=1) + ignored
    labels = majority_labels(counts)
    labels[2 * ignored > sizes] = EXCLUDED
    return labels, counts


def label_superpixels(sp, truth, num_classes, image_id=""):
    labels, _ = superpixel_targets(sp.labels, truth, num_classes)
    return [LabeledSuperpixel(image_id, s, int(y)) for s, y in enumerate(labels)]


def class_frequencies(labels, num_classes=None):
    """``ClassStats`` over non-EXCLUDED labels (LabeledSuperpixels or ints)."""
    ys = np.array([getattr(y, "label", y) for y in labels], dtype=np.int64)
    ys = ys[ys != EXCLUDED]
    if len(ys) == 0:
        raise DataError("no labeled superpixels")
    n = num_classes if num_classes is not None else int(ys.max()) + 1
    return ClassStats.from_counts(np.bincount(ys, minlength=n))


# ----------------------------------------------------------- per image

@dataclass
class ImageContext:
    """An image with its oversegmentation and zoom-out regions."""
    image_id: str
    lab: np.ndarray
    sp: object
    zoom: object


def prepare_image(img, config, image_id=""):
    lab = rgb_to_lab(img)
    sp = slic_oversegment(lab, config.slic)
    zoom = compute_zoom_regions(sp, build_adjacency(sp), config.proximal_radius,
                                config.distant_radius)
    return ImageContext(image_id, lab, sp, zoom)


def min_image_side():
    return max(PATCH_SIZES)


class Extractor:
    """Turns images into zoom-out feature rows with a fixed layout."""

    def __init__(self, config, texton_cb, sift_cb, providers):
        self.config = config
        self.texton_cb = texton_cb
        self.sift_cb = sift_cb
        self.providers = {lv: providers.get(lv) or NullProvider(lv) for lv in PROVIDER_LEVELS}
        hc = handcrafted_dim(texton_cb.k, sift_cb.k)
        self.layout = FeatureLayout.from_blocks([
            ("local", hc + self.providers["local"].dim),
            ("proximal", hc),
            ("distant", self.providers["distant"].dim),
            ("global", self.providers["global"].dim),
        ])

    def features(self, ctx):
        lab, sp, zoom = ctx.lab, ctx.sp, ctx.zoom
        H, W = lab.shape[:2]
        if min(H, W) < min_image_side():
            raise DataError(f"image {ctx.image_id!r} is {W}x{H}; "
                            f"both sides must be >= {min_image_side()}")
        counts = region_counts(lab, sp.labels, sp.count, self.texton_cb, self.sift_cb,
                               dense_sift(lab))
        blocks = {
            "local": np.concatenate([
                counts.descriptors((W, H)),
                self.providers["local"].image_features(lab, sp, zoom, ctx.image_id)], axis=1),
            "proximal": counts.combine(zoom.proximal).descriptors((W, H)),
            "distant": self.providers["distant"].image_features(lab, sp, zoom, ctx.image_id),
            "global": self.providers["global"].image_features(lab, sp, zoom, ctx.image_id),
        }
        rows, _ = assemble_rows(blocks, self.layout)
        rows = rows.astype(np.float32)
        if not np.isfinite(rows).all():
            raise DataError(f"non-finite features for image {ctx.image_id!r}")
        return rows

    def process(self, img, image_id=""):
        ctx = prepare_image(img, self.config, image_id)
        return ctx, self.features(ctx)


# --------------------------------------------------------- feature store

@dataclass
class FeatureStore:
    """Per-superpixel rows of a set of images plus labels and ground-truth counts."""
    rows: np.ndarray
    labels: np.ndarray
    gt_counts: np.ndarray
    image_ids: list
    offsets: np.ndarray
    layout: FeatureLayout
    num_classes: int

    @classmethod
    def empty(cls, layout, num_classes):
        return cls(np.zeros((0, layout.total), np.float32), np.zeros(0, np.int64),
                   np.zeros((0, num_classes), np.int64), [], np.zeros(1, np.int64),
                   layout, num_classes)

    def __len__(self):
        return len(self.rows)

    def image_rows(self, i):
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def keys(self):
        keys = np.zeros(len(self.rows), dtype=KEY_DTYPE)
        for i, image_id in enumerate(self.image_ids):
            sl = self.image_rows(i)
            keys["image"][sl] = image_key(image_id)
            keys["superpixel"][sl] = np.arange(sl.stop - sl.start)
        keys["row"] = np.arange(len(self.rows))
        return keys

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_feature_store(os.path.join(directory, "features.zoft"), self.rows,
                            self.layout.offsets, self.keys())
        np.save(os.path.join(directory, "labels.npy"), self.labels.astype("<i8"))
        np.save(os.path.join(directory, "gt_counts.npy"), self.gt_counts.astype("<i8"))
        meta = {"layout": self.layout.to_dict(), "image_ids": list(self.image_ids),
                "offsets": [int(v) for v in self.offsets], "num_classes": self.num_classes}
        with open(os.path.join(directory, "index.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "index.json")) as fh:
            meta = json.load(fh)
        rows, offsets, _ = read_feature_store(os.path.join(directory, "features.zoft"))
        layout = FeatureLayout.from_dict(meta["layout"])
        if rows.shape[1] != layout.total or tuple(offsets) != layout.offsets:
            raise LayoutError(f"{directory}: stored rows do not match the recorded layout")
        return cls(rows, np.load(os.path.join(directory, "labels.npy")),
                   np.load(os.path.join(directory, "gt_counts.npy")), meta["image_ids"],
                   np.asarray(meta["offsets"], dtype=np.int64), layout, meta["num_classes"])


@dataclass
class ExtractionReport:
    done: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    def summary(self):
        text = f"{len(self.done)} images extracted, {len(self.failed)} failed"
        for image_id, why in self.failed:
            text += f"\n  {image_id}: {why}"
        return text


def _extract_one(extractor, entry, num_classes):
    ctx, rows = extractor.process(load_image(entry.image), entry.image_id)
    if entry.label is not None:
        truth = load_label_map(entry.label, num_classes)
        labels, counts = superpixel_targets(ctx.sp.labels, truth, num_classes)
    else:
        labels = np.full(ctx.sp.count, EXCLUDED, dtype=np.int64)
        counts = np.zeros((ctx.sp.count, num_classes), dtype=np.int64)
    return rows, labels, counts


def extract_dataset_features(manifest, extractor, entries=None, threads=1):
    """Extract every entry into a FeatureStore.

    Images that fail with a data error are skipped and listed in the report;
    a layout change between images is fatal.
    """
    entries = manifest.entries if entries is None else entries
    store = FeatureStore.empty(extractor.layout, manifest.num_classes)
    report = ExtractionReport()
    if not entries:
        log.warning("no images to extract")
        return store, report

    def work(entry):
        try:
            return _extract_one(extractor, entry, manifest.num_classes)
        except (DataError, ValueError, OSError) as exc:
            if isinstance(exc, LayoutError):
                raise
            return exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]
    rows, labels, counts, offsets = [], [], [], [0]
    for entry, res in zip(entries, results):
        if isinstance(res, Exception):
            log.warning("skipping %s: %s", entry.image_id, res)
            report.failed.append((entry.image_id, str(res)))
            continue
        if res[0].shape[1] != extractor.layout.total:
            raise LayoutError(f"{entry.image_id}: row width {res[0].shape[1]} "
                              f"!= layout width {extractor.layout.total}")
        rows.append(res[0])
        labels.append(res[1])
        counts.append(res[2])
        offsets.append(offsets[-1] + len(res[0]))
        store.image_ids.append(entry.image_id)
        report.done.append(entry.image_id)
    if rows:
        store.rows = np.concatenate(rows)
        store.labels = np.concatenate(labels)
        store.gt_counts = np.concatenate(counts)
        store.offsets = np.asarray(offsets, dtype=np.int64)
    log.info(report.summary())
    return store, report


# ------------------------------------------------------ codebooks, nets

def train_codebooks(manifest, config, entries=None):
    """Texton and visual-word codebooks from the training images."""
    entries = manifest.split("train") if entries is None else entries
    labs = [rgb_to_lab(load_image(e.image)) for e in entries]
    labs = [lab for lab in labs if min(lab.shape[:2]) >= min_image_side()]
    if not labs:
        raise DataError("no usable training images for the codebooks")
    per_image = max(2000, -(-config.codebook_samples // len(labs)))
    texton = train_texton_codebook(labs, config.texton_k, config.seed, per_image)
    desc = np.concatenate([dense_sift(lab).descriptors.reshape(-1, 128) for lab in labs])
    rng = np.random.default_rng(config.seed)
    if len(desc) > config.codebook_samples:
        desc = desc[np.sort(rng.choice(len(desc), config.codebook_samples, replace=False))]
    sift = train_sift_codebook(desc, config.sift_k, config.seed)
    return texton, sift


def _subsample(n, limit, rng):
    return np.arange(n) if n <= limit else np.sort(rng.choice(n, limit, replace=False))


def _balanced_weights(targets, num_classes):
    """Inverse-frequency class weights from hard or soft targets."""
    targets = np.asarray(targets)
    mass = (targets.sum(axis=0) if targets.ndim == 2
            else np.bincount(targets, minlength=num_classes).astype(float))
    return ClassStats.from_counts(mass).class_weights("asymmetric")


def train_builtin_providers(manifest, config, levels=None, entries=None):
    """Train the built-in convnet providers for ``levels`` (default: all set to builtin).

    Local nets see superpixel crops labeled with their majority class.  The
    distant net sees distant boxes labeled with the center superpixel's
    class, the global net whole images with the image's class histogram as
    soft target; both use inverse-frequency class weights.
    """
    if levels is None:
        levels = [lv for lv in PROVIDER_LEVELS if config.provider_spec(lv) == "builtin"]
    entries = manifest.split("train") if entries is None else entries
    C = manifest.num_classes
    rng = np.random.default_rng(config.seed)
    local_x, local_y, dist_x, dist_y, glob_x, glob_y = [], [], [], [], [], []
    for e in entries:
        ctx = prepare_image(load_image(e.image), config, e.image_id)
        labels, _ = superpixel_targets(ctx.sp.labels, load_label_map(e.label, C), C)
        keep = np.flatnonzero(labels != EXCLUDED)
        if not len(keep):
            continue
        if "local" in levels:
            local_x.append(local_inputs(ctx.lab, ctx.zoom.local_boxes[keep], np.zeros(3)))
            local_y.append(labels[keep])
        if "distant" in levels:
            dist_x.append(context_inputs(ctx.lab, ctx.zoom.distant_boxes[keep],
                                         config.distant_net.input_size))
            dist_y.append(labels[keep])
        if "global" in levels:
            glob_x.append(context_inputs(ctx.lab, [ctx.zoom.global_box],
                                         config.global_net.input_size))
            glob_y.append(np.bincount(labels[keep], minlength=C)[None] / len(keep))
    out = {}
    if "local" in levels:
        if not local_x:
            raise DataError("local convnet: empty training set")
        x, y = np.concatenate(local_x), np.concatenate(local_y)
        pick = _subsample(len(x), config.local_net.max_crops, rng)
        net = config.local_net
        out["local"] = train_local_convnet(
            x[pick], y[pick], C, net.train_config(config.seed), net.filters, net.fc,
            binary_head=net.binary_head)
    for level, xs, ys in (("distant", dist_x, dist_y), ("global", glob_x, glob_y)):
        if level not in levels:
            continue
        if not xs:
            raise DataError(f"{level} convnet: empty training set")
        net = getattr(config, f"{level}_net")
        x, y = np.concatenate(xs), np.concatenate(ys)
        pick = _subsample(len(x), net.max_crops, rng)
        out[level] = train_context_convnet(
            x[pick], y[pick], C, level, net.train_config(config.seed), net.filters, net.fc,
            class_weights=_balanced_weights(y[pick], C))
    return out


def resolve_providers(config, manifest=None, trained=None):
    """Provider per level from the config: trained builtin nets, imported files or null."""
    trained = trained or {}
    out = {}
    for lv in PROVIDER_LEVELS:
        spec = config.provider_spec(lv)
        if spec == "none":
            out[lv] = NullProvider(lv)
        elif spec.startswith("file:"):
            out[lv] = import_precomputed(spec[5:], lv, manifest)
        elif lv in trained:
            out[lv] = trained[lv]
        else:
            raise DataError(f"level {lv}: builtin provider requested but not trained")
    return out


# ---------------------------------------------------------------- bundle

@dataclass
class Bundle:
    """Everything needed to label new images."""
    config: ZoomoutConfig
    texton_cb: object
    sift_cb: object
    providers: dict
    model: object = None
    class_names: tuple = ()

    def extractor(self):
        return Extractor(self.config, self.texton_cb, self.sift_cb, self.providers)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "config.json"), "w") as fh:
            fh.write(self.config.to_json())
        with open(os.path.join(directory, "classes.txt"), "w") as fh:
            fh.write("".join(f"{n}\n" for n in self.class_names))
        write_codebook(os.path.join(directory, "texton.zocb"), self.texton_cb)
        write_codebook(os.path.join(directory, "sift.zocb"), self.sift_cb)
        for p in self.providers.values():
            save_provider(os.path.join(directory, "providers"), p)
        if self.model is not None:
            write_model(os.path.join(directory, "model.zomd"), self.model)

    @classmethod
    def load(cls, directory, need_model=True):
        if not os.path.isdir(directory):
            raise DataError(f"{directory}: not a bundle directory")
        config = load_config(os.path.join(directory, "config.json"))
        with open(os.path.join(directory, "classes.txt")) as fh:
            names = tuple(line.strip() for line in fh if line.strip())
        providers = {}
        for lv in PROVIDER_LEVELS:
            providers[lv] = load_provider(os.path.join(directory, "providers"), lv) or NullProvider(lv)
        path = os.path.join(directory, "model.zomd")
        model = read_model(path) if os.path.exists(path) else None
        if need_model and model is None:
            raise DataError(f"{directory}: bundle has no trained model")
        return cls(config, read_codebook(os.path.join(directory, "texton.zocb")),
                   read_codebook(os.path.join(directory, "sift.zocb")), providers, model, names)


# ------------------------------------------------------- train, predict

def train(store, config, loss=None, columns=None, hidden=None):
    """Train the superpixel classifier on a feature store.

    EXCLUDED superpixels are dropped.  Returns ``(model, report)``; the
    model's metadata carries the feature layout and class statistics.
    """
    keep = store.labels != EXCLUDED
    if not keep.any():
        raise DataError("no labeled superpixels to train on")
    X = store.rows[keep]
    if columns is not None:
        X = X[:, columns]
    y = store.labels[keep]
    if config.frequency_unit == "pixel":
        # f_c from labeled pixel counts instead of superpixel counts
        pixels = store.gt_counts[keep].sum(axis=0)
        present = np.bincount(y, minlength=store.num_classes) > 0
        stats = ClassStats.from_counts(np.where(present, pixels, 0))
    else:
        stats = class_frequencies(y, store.num_classes)
    cfg = config.train if loss is None else replace(config.train, loss=loss)
    hidden = config.hidden if hidden is None else tuple(hidden)
    model, history = train_classifier(X, y, stats, cfg, hidden=hidden)
    model.meta.update({"layout": store.layout.to_dict(), "class_stats": stats.to_dict(),
                       "loss": cfg.loss, "hidden": list(hidden)})
    report = {"examples": int(keep.sum()), "excluded": int((~keep).sum()),
              "class_counts": stats.counts.astype(int).tolist(), "history": history}
    return model, report


def predict_rows(model, rows):
    """Per-row argmax class; ties go to the lowest class id."""
    if len(rows) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(model.predict_proba(rows), axis=1)


def check_layout(model, layout):
    stored = model.meta.get("layout")
    if stored is None or FeatureLayout.from_dict(stored) != layout:
        raise LayoutError(f"model was trained on layout {stored}, features have {layout.to_dict()}")


def predict_image(bundle, img, image_id=""):
    """Label map with each superpixel's predicted class broadcast to its pixels."""
    extractor = bundle.extractor()
    check_layout(bundle.model, extractor.layout)
    ctx, rows = extractor.process(img, image_id)
    pred = predict_rows(bundle.model, rows)
    return pred.astype(np.uint8)[ctx.sp.labels], ctx


def evaluate_store(model, store, columns=None):
    """Dataset-level confusion matrix of superpixel predictions on a store."""
    rows = store.rows if columns is None else store.rows[:, columns]
    return confusion_from_superpixels(predict_rows(model, rows), store.gt_counts,
                                      store.num_classes)


def ablate(train_store, test_store, subsets, config, loss=None):
    """Linear classifiers on level subsets; returns ``[(subset, ConfusionMatrix)]``."""
    results = []
    for subset in subsets:
        if not subset:
            raise ValueError("empty level subset")
        bad = [lv for lv in subset if lv not in LEVELS]
        if bad:
            raise ValueError(f"unknown levels {bad}")
        cols = train_store.layout.columns(subset)
        model, _ = train(train_store, config, loss=loss, columns=cols, hidden=())
        results.append((tuple(subset), evaluate_store(model, test_store, cols)))
    return results


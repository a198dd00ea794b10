"""Command-line driver: ``zoomout <command> [flags]``."""
import argparse
import contextlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import replace

import numpy as np
import scipy

from . import LEVELS, __version__
from .embeddings import PROVIDER_LEVELS
from .errors import DataError, NumericError
from .evaluation import ConfusionMatrix, format_key_values, format_report, oracle_upper_bound
from .imagecore import (
    load_image, load_label_map, render_labels, rgb_to_lab, save_image, save_label_map,
    voc_palette,
)
from .pipeline import (
    Bundle, FeatureStore, ZoomoutConfig, ablate,
    extract_dataset_features, load_config, predict_image, read_manifest, resolve_providers,
    train, train_builtin_providers, train_codebooks,
)
from .superpixel import slic_oversegment, write_superpixelization

log = logging.getLogger("zoomout")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------- helpers

@contextlib.contextmanager
def atomic_output(path, directory=False):
    """Yield a temporary path that replaces ``path`` only if the block succeeds."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    if directory:
        tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    else:
        # keep the extension: image writers pick the format from it
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=os.path.splitext(path)[1], dir=parent)
        os.close(fd)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True) if directory else os.unlink(tmp)
        raise
    if directory and os.path.isdir(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def _levels(text):
    if text == "all":
        return LEVELS
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    if not names:
        raise UsageError("empty level subset")
    bad = [n for n in names if n not in LEVELS]
    if bad:
        raise UsageError(f"unknown level(s) {bad}; choose from {', '.join(LEVELS)} or 'all'")
    return names


def _provider_override(text):
    level, sep, spec = text.partition("=")
    if not sep or level not in PROVIDER_LEVELS:
        raise UsageError(f"--provider expects LEVEL=SPEC with LEVEL in {PROVIDER_LEVELS}")
    if spec not in ("builtin", "none") and not spec.startswith("file:"):
        raise UsageError(f"provider spec {spec!r} is not builtin, none or file:PATH")
    return level, spec


def build_config(args, base=None):
    """Config from ``--config`` (or ``base``) with command-line overrides applied."""
    if base is None:
        base = load_config(args.config) if getattr(args, "config", None) else ZoomoutConfig()
    cfg = base
    slic = cfg.slic
    if getattr(args, "k", None) is not None:
        slic = replace(slic, target_count=args.k)
    if getattr(args, "m", None) is not None:
        slic = replace(slic, compactness=args.m)
    tcfg = cfg.train
    if getattr(args, "epochs", None) is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    if getattr(args, "loss", None) is not None:
        tcfg = replace(tcfg, loss=args.loss)
    seed = cfg.seed
    if getattr(args, "seed", None) is not None:
        seed = args.seed
        slic = replace(slic, seed=args.seed)
        tcfg = replace(tcfg, seed=args.seed)
    providers = dict(cfg.providers)
    for text in getattr(args, "provider", None) or ():
        level, spec = _provider_override(text)
        providers[level] = spec
    hidden = cfg.hidden
    if getattr(args, "hidden", None) is not None:
        hidden = tuple(int(h) for h in args.hidden.split(",") if h.strip())
    return replace(cfg, slic=slic, train=tcfg, seed=seed, providers=providers, hidden=hidden)


def _header(command, cfg=None):
    parts = [f"zoomout {__version__}", f"command {command}"]
    if cfg is not None:
        parts += [f"config {cfg.digest()}", f"seed {cfg.seed}"]
    parts += [f"python {platform.python_version()}", f"numpy {np.__version__}",
              f"scipy {scipy.__version__}"]
    log.info(" | ".join(parts))


def _manifest_entries(manifest, split):
    return manifest.entries if split == "all" else manifest.split(split)


def _image_files(directory):
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))


# ------------------------------------------------------------ commands

def cmd_oversegment(args):
    cfg = build_config(args)
    _header("oversegment", cfg)
    sp = slic_oversegment(rgb_to_lab(load_image(args.image)), cfg.slic)
    with atomic_output(args.out) as tmp:
        write_superpixelization(tmp, sp)
    print(f"{sp.count} superpixels -> {args.out}")


def cmd_train_codebooks(args):
    cfg = build_config(args)
    _header("train-codebooks", cfg)
    manifest = read_manifest(args.manifest)
    texton, sift = train_codebooks(manifest, cfg)
    bundle = Bundle(cfg, texton, sift, {}, None, manifest.class_names)
    with atomic_output(args.out, directory=True) as tmp:
        bundle.save(tmp)
    print(f"codebooks: {texton.k} textons, {sift.k} visual words -> {args.out}")


def _load_bundle(path, need_model=False):
    return Bundle.load(path, need_model=need_model)


def cmd_train_local_net(args):
    bundle = _load_bundle(args.bundle)
    cfg = build_config(args, bundle.config)
    _header("train-local-net", cfg)
    manifest = read_manifest(args.manifest)
    trained = train_builtin_providers(manifest, cfg, levels=[args.level])
    bundle.providers[args.level] = trained[args.level]
    bundle.config = cfg
    out = args.out or args.bundle
    with atomic_output(out, directory=True) as tmp:
        if os.path.abspath(out) == os.path.abspath(args.bundle):
            shutil.copytree(args.bundle, tmp, dirs_exist_ok=True)
        bundle.save(tmp)
    print(f"{args.level} provider: {trained[args.level].dim} dims -> {out}")


def _bundle_providers(bundle, cfg, manifest):
    """Providers for extraction: bundle-stored nets, or imports / null per the config."""
    trained = {lv: p for lv, p in bundle.providers.items() if p.kind == "builtin-convnet"}
    return resolve_providers(cfg, manifest, trained)


def cmd_extract(args):
    bundle = _load_bundle(args.bundle)
    cfg = build_config(args, bundle.config)
    _header("extract", cfg)
    manifest = read_manifest(args.manifest)
    bundle.providers = _bundle_providers(bundle, cfg, manifest)
    bundle.config = cfg
    extractor = bundle.extractor()
    store, report = extract_dataset_features(
        manifest, extractor, _manifest_entries(manifest, args.split), threads=args.threads)
    with atomic_output(args.out, directory=True) as tmp:
        store.save(tmp)
    # the bundle records the providers the features were built with
    with atomic_output(args.bundle, directory=True) as tmp:
        shutil.copytree(args.bundle, tmp, dirs_exist_ok=True)
        bundle.save(tmp)
    print(report.summary())
    print(f"layout {dict(zip(store.layout.names, store.layout.dims))} -> {args.out}")


def cmd_train(args):
    bundle = _load_bundle(args.bundle)
    cfg = build_config(args, bundle.config)
    _header("train", cfg)
    store = FeatureStore.load(args.features)
    if store.layout != bundle.extractor().layout:
        raise DataError("feature store layout does not match the bundle's providers; "
                        "re-run extract with this bundle")
    model, report = train(store, cfg)
    bundle.model, bundle.config = model, cfg
    out = args.out or args.bundle
    with atomic_output(out, directory=True) as tmp:
        shutil.copytree(args.bundle, tmp, dirs_exist_ok=True)
        bundle.save(tmp)
        with open(os.path.join(tmp, "train_report.json"), "w") as fh:
            json.dump(report, fh, indent=1, sort_keys=True)
    last = report["history"][-1]["loss"] if report["history"] else float("nan")
    print(f"trained on {report['examples']} superpixels ({cfg.train.loss} loss), "
          f"final loss {last:.4f} -> {out}")


def cmd_predict(args):
    bundle = _load_bundle(args.bundle, need_model=True)
    _header("predict", bundle.config)
    if args.image:
        pred, _ = predict_image(bundle, load_image(args.image))
        with atomic_output(args.out) as tmp:
            save_label_map(tmp, pred)
        print(f"prediction -> {args.out}")
        return
    manifest = read_manifest(args.manifest, len(bundle.class_names))
    entries = _manifest_entries(manifest, args.split)
    with atomic_output(args.out, directory=True) as tmp:
        for e in entries:
            pred, _ = predict_image(bundle, load_image(e.image), e.image_id)
            save_label_map(os.path.join(tmp, e.image_id + ".png"), pred)
    print(f"{len(entries)} predictions -> {args.out}")


def _class_names(args, num_classes):
    if args.names:
        names = tuple(n.strip() for n in args.names.split(","))
        if len(names) != num_classes:
            raise UsageError(f"--names lists {len(names)} classes, --classes says {num_classes}")
        return names
    return None


def cmd_evaluate(args):
    _header("evaluate")
    C = args.classes
    names = _class_names(args, C)
    cm = ConfusionMatrix(C)
    files = _image_files(args.truth)
    if not files:
        raise DataError(f"{args.truth}: no label maps")
    for name in files:
        path = os.path.join(args.pred, name)
        if not os.path.exists(path):
            raise DataError(f"missing prediction {path}")
        cm.accumulate(load_label_map(path, C), load_label_map(os.path.join(args.truth, name), C))
    if cm.total == 0:
        raise DataError("no evaluable (non-IGNORE) pixels")
    table = format_report(cm, names)
    sys.stdout.write(table)
    if args.out:
        with atomic_output(args.out) as tmp:
            with open(tmp, "w") as fh:
                fh.write(format_key_values(cm, names))


def cmd_oracle(args):
    cfg = build_config(args)
    _header("oracle", cfg)
    manifest = read_manifest(args.manifest)
    C = manifest.num_classes
    correct = total = 0
    for e in _manifest_entries(manifest, args.split):
        if e.label is None:
            continue
        truth = load_label_map(e.label, C)
        valid = int((truth != 255).sum())
        if valid == 0:
            continue
        sp = slic_oversegment(rgb_to_lab(load_image(e.image)), cfg.slic)
        correct += oracle_upper_bound(sp.labels, truth, C) * valid
        total += valid
    if total == 0:
        raise DataError("no labeled pixels in the selected split")
    print(f"oracle pixel accuracy {correct / total:.4f} over {total} pixels")


def cmd_render(args):
    _header("render")
    C = args.classes
    lm = load_label_map(args.labels, C)
    out = render_labels(lm, voc_palette(C))
    if args.image:
        img = load_image(args.image)
        if img.shape[:2] != lm.shape:
            raise DataError("image and label map differ in size")
        out = np.rint(0.5 * img + 0.5 * out).astype(np.uint8)
    with atomic_output(args.out) as tmp:
        save_image(tmp, out)
    print(f"rendering -> {args.out}")


def cmd_ablate(args):
    cfg = build_config(args)
    _header("ablate", cfg)
    subsets = [_levels(t) for t in (args.levels or ["all"])]
    train_store = FeatureStore.load(args.features)
    test_store = FeatureStore.load(args.test_features)
    for sub in subsets:
        missing = [lv for lv in sub if lv not in train_store.layout.names]
        if missing:
            raise DataError(f"levels {missing} are empty in the stored layout "
                            f"{train_store.layout.names}")
    results = ablate(train_store, test_store, subsets, cfg)
    lines = ["levels\tmean_iou\tpixel_accuracy\tmean_class_accuracy"]
    for sub, cm in results:
        lines.append(f"{','.join(sub)}\t{cm.mean_iou():.6f}\t{cm.pixel_accuracy():.6f}\t"
                     f"{cm.mean_class_accuracy():.6f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with atomic_output(args.out) as tmp:
            with open(tmp, "w") as fh:
                fh.write(text)


def cmd_synthesize(args):
    from .synthetic import generate_dataset
    _header("synthesize")
    seed = 0 if args.seed is None else args.seed
    with atomic_output(args.out, directory=True) as tmp:
        generate_dataset(tmp, args.n, args.size, seed)
        # manifest paths are relative, so the rename keeps them valid
    print(f"{args.n} scenes -> {args.out}")


# -------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="zoomout", description="Superpixel semantic segmentation with zoom-out features.")
    p.add_argument("--version", action="version", version=f"zoomout {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def cmd(name, func, help_):
        s = sub.add_parser(name, help=help_, description=help_)
        s.set_defaults(func=func)
        return s

    def common(s, config=True, seed=True):
        if config:
            s.add_argument("--config", help="JSON config file")
        if seed:
            s.add_argument("--seed", type=int, help="override every seed in the config")

    def slic_flags(s):
        s.add_argument("--k", type=int, help="target superpixel count")
        s.add_argument("--m", type=float, help="SLIC compactness")

    s = cmd("oversegment", cmd_oversegment, "SLIC superpixels of one image to a ZOSP file")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    common(s)
    slic_flags(s)

    s = cmd("train-codebooks", cmd_train_codebooks,
            "train texton and visual-word codebooks; starts a model bundle")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="bundle directory")
    common(s)
    slic_flags(s)

    s = cmd("train-local-net", cmd_train_local_net, "train a built-in convnet provider")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bundle", required=True)
    s.add_argument("--level", choices=PROVIDER_LEVELS, default="local")
    s.add_argument("--out", help="output bundle (default: update --bundle)")
    common(s, config=False)

    s = cmd("extract", cmd_extract, "extract zoom-out features into a feature store")
    s.add_argument("--manifest", required=True)
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True, help="feature store directory")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="train")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--provider", action="append", metavar="LEVEL=SPEC",
                   help="local|distant|global = builtin | none | file:PATH")

    s = cmd("train", cmd_train, "train the superpixel classifier")
    s.add_argument("--features", required=True, help="feature store directory")
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", help="output bundle (default: update --bundle)")
    s.add_argument("--loss", choices=("asymmetric", "symmetric"))
    s.add_argument("--hidden", help="comma-separated hidden widths; empty for linear")
    s.add_argument("--epochs", type=int)
    common(s, config=False)

    s = cmd("predict", cmd_predict, "label an image or a manifest split")
    s.add_argument("--bundle", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--image")
    g.add_argument("--manifest")
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="val")
    s.add_argument("--out", required=True)

    s = cmd("evaluate", cmd_evaluate, "metrics of predicted vs ground-truth label maps")
    s.add_argument("--pred", required=True, help="directory of predicted label PNGs")
    s.add_argument("--truth", required=True, help="directory of ground-truth label PNGs")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--names", help="comma-separated class names")
    s.add_argument("--out", help="key-value report file")

    s = cmd("oracle", cmd_oracle, "superpixel oracle pixel accuracy of a manifest split")
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("train", "val", "test", "all"), default="val")
    common(s)
    slic_flags(s)

    s = cmd("render", cmd_render, "color a label map (optionally blended over its image)")
    s.add_argument("--labels", required=True)
    s.add_argument("--classes", type=int, default=21)
    s.add_argument("--image")
    s.add_argument("--out", required=True)

    s = cmd("ablate", cmd_ablate, "held-out mean IoU of linear models on level subsets")
    s.add_argument("--features", required=True, help="training feature store")
    s.add_argument("--test-features", required=True, help="held-out feature store")
    s.add_argument("--levels", action="append",
                   help="comma-separated levels or 'all'; repeat for several subsets")
    s.add_argument("--loss", choices=("asymmetric", "symmetric"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", help="write the table here as well")
    common(s)

    s = cmd("synthesize", cmd_synthesize, "generate the synthetic scene dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--size", type=int, default=96)
    s.add_argument("--seed", type=int)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if hasattr(args, "threads") and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args)
    except UsageError as exc:
        print(f"zoomout {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"zoomout {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError, KeyError) as exc:
        print(f"zoomout {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

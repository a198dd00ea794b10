"""Confusion-matrix based segmentation metrics and the superpixel oracle."""
import numpy as np

from .errors import DataError
from .imagecore import IGNORE


class ConfusionMatrix:
    """``C x C`` pixel counts; rows are ground truth, columns predictions."""

    def __init__(self, num_classes, counts=None):
        self.num_classes = num_classes
        self.counts = (np.zeros((num_classes, num_classes), dtype=np.int64)
                       if counts is None else np.asarray(counts, dtype=np.int64))

    def __add__(self, other):
        if other.num_classes != self.num_classes:
            raise ValueError("class counts differ")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def accumulate(self, pred, truth):
        """Add one prediction/ground-truth pair; IGNORE truth pixels are skipped."""
        pred, truth = np.asarray(pred), np.asarray(truth)
        if pred.shape != truth.shape:
            raise DataError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
        C = self.num_classes
        valid = truth != IGNORE
        t = truth[valid].astype(np.int64)
        p = pred[valid].astype(np.int64)
        if t.size and (t.max() >= C or p.max() >= C or p.min() < 0):
            raise DataError("class id out of range")
        self.counts += np.bincount(t * C + p, minlength=C * C).reshape(C, C)
        return self

    def class_iou(self, c):
        """IoU of class ``c``; ``nan`` when the class is absent from both maps."""
        inter = self.counts[c, c]
        union = self.counts[c, :].sum() + self.counts[:, c].sum() - inter
        return inter / union if union else float("nan")

    def ious(self):
        return np.array([self.class_iou(c) for c in range(self.num_classes)])

    def mean_iou(self):
        ious = self.ious()
        return float(np.nanmean(ious)) if np.isfinite(ious).any() else float("nan")

    def pixel_accuracy(self):
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float(np.trace(self.counts) / self.total)

    def class_accuracies(self):
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.counts) / np.where(rows > 0, rows, 1), np.nan)

    def mean_class_accuracy(self):
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float(np.nanmean(self.class_accuracies()))


def confusion_from_superpixels(pred, gt_counts, num_classes):
    """Pixel confusion from per-superpixel predictions and ground-truth pixel counts.

    ``gt_counts[s, c]`` is the number of non-IGNORE pixels of class ``c`` in
    superpixel ``s``; every pixel of ``s`` is predicted ``pred[s]``.
    """
    gt_counts = np.asarray(gt_counts, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for c in range(num_classes):
        counts[:, c] = gt_counts[pred == c].sum(axis=0)
    return ConfusionMatrix(num_classes, counts)


def superpixel_label_counts(sp_labels, truth, num_classes):
    """``(n, C)`` non-IGNORE ground-truth pixel counts per superpixel, plus IGNORE counts."""
    sp_labels, truth = np.asarray(sp_labels), np.asarray(truth)
    if sp_labels.shape != truth.shape:
        raise DataError(f"superpixels {sp_labels.shape} and labels {truth.shape} differ in shape")
    n = int(sp_labels.max()) + 1
    valid = truth != IGNORE
    flat = sp_labels[valid].astype(np.int64) * num_classes + truth[valid].astype(np.int64)
    counts = np.bincount(flat, minlength=n * num_classes).reshape(n, num_classes)
    ignored = np.bincount(sp_labels[~valid].ravel(), minlength=n)
    return counts, ignored


def majority_labels(gt_counts):
    """Plurality class per superpixel (lowest id on ties), -1 when it has no valid pixel."""
    gt_counts = np.asarray(gt_counts)
    return np.where(gt_counts.sum(axis=1) > 0, gt_counts.argmax(axis=1), -1)


def oracle_upper_bound(sp_labels, truth, num_classes=None):
    """Pixel accuracy of labeling each superpixel with its majority ground-truth class."""
    truth = np.asarray(truth)
    if num_classes is None:
        valid = truth[truth != IGNORE]
        num_classes = int(valid.max()) + 1 if valid.size else 1
    counts, _ = superpixel_label_counts(sp_labels, truth, num_classes)
    total = counts.sum()
    if total == 0:
        raise ValueError("no labeled pixels")
    return float(counts.max(axis=1).sum() / total)


def format_report(cm, class_names=None):
    """Aligned text table of per-class IoU and accuracy followed by the means."""
    names = list(class_names or [f"class{c}" for c in range(cm.num_classes)])
    width = max(12, max(len(n) for n in names) + 2)
    ious, accs = cm.ious(), cm.class_accuracies()
    lines = [f"{'class':<{width}}{'IoU':>8}{'acc':>8}"]
    for name, iou, acc in zip(names, ious, accs):
        lines.append(f"{name:<{width}}{_pct(iou):>8}{_pct(acc):>8}")
    lines.append(f"{'mean IoU':<{width}}{_pct(cm.mean_iou()):>8}")
    lines.append(f"{'pixel acc':<{width}}{_pct(cm.pixel_accuracy()):>8}")
    lines.append(f"{'class acc':<{width}}{_pct(cm.mean_class_accuracy()):>8}")
    return "\n".join(lines) + "\n"


def format_key_values(cm, class_names=None):
    """Machine-readable ``key<TAB>value`` lines (fractions, ``nan`` when undefined)."""
    names = list(class_names or [f"class{c}" for c in range(cm.num_classes)])
    lines = []
    for name, iou, acc in zip(names, cm.ious(), cm.class_accuracies()):
        lines.append(f"{name}\tiou\t{iou:.6f}")
        lines.append(f"{name}\taccuracy\t{acc:.6f}")
    lines.append(f"mean_iou\t{cm.mean_iou():.6f}")
    lines.append(f"pixel_accuracy\t{cm.pixel_accuracy():.6f}")
    lines.append(f"mean_class_accuracy\t{cm.mean_class_accuracy():.6f}")
    return "\n".join(lines) + "\n"


def _pct(v):
    return "-" if not np.isfinite(v) else f"{100 * v:.1f}"

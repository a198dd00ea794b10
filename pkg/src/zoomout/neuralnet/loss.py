"""Class statistics and the inverse-frequency weighted log-loss."""
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOSS_MODES = ("asymmetric", "symmetric")


@dataclass(frozen=True)
class ClassStats:
    """Per-class training frequencies ``f_c`` (summing to 1) and raw counts."""
    frequencies: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=np.float64)
        total = counts.sum()
        if total <= 0:
            raise ValueError("no labeled examples")
        return cls(counts / total, counts)

    @property
    def num_classes(self):
        return len(self.frequencies)

    def class_weights(self, mode="asymmetric"):
        """``1 / f_c`` for the asymmetric loss (0 for absent classes), else ones."""
        if mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {mode!r}")
        if mode == "symmetric":
            return np.ones(self.num_classes)
        f = self.frequencies
        return np.where(f > 0, 1.0 / np.where(f > 0, f, 1.0), 0.0)

    def to_dict(self):
        return {"frequencies": self.frequencies.tolist(), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["frequencies"], dtype=np.float64),
                   np.asarray(d["counts"], dtype=np.float64))


def _targets(labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label out of range")
    q = np.zeros((len(labels), num_classes))
    q[np.arange(len(labels)), labels] = 1.0
    return q


def weighted_log_loss(probs, labels, stats=None, mode="asymmetric"):
    """Mean over examples of ``-(1 / f_y) ln p(y)``; weight 1 in symmetric mode.

    Probabilities below 1e-12 are clamped (and reported) before the log.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    if mode == "asymmetric" and stats is None:
        raise ValueError("asymmetric loss needs class statistics")
    w = stats.class_weights(mode) if stats is not None else np.ones(probs.shape[1])
    p = probs[np.arange(len(labels)), labels]
    if (p < PROB_FLOOR).any():
        log.warning("%d true-class probabilities clamped at %g",
                    int((p < PROB_FLOOR).sum()), PROB_FLOOR)
    return float(-(w[labels] * np.log(np.maximum(p, PROB_FLOOR))).mean())


def loss_and_grad(logits, labels, class_weights):
    """Weighted log-loss of softmax(logits) and its gradient w.r.t. the logits.

    ``labels`` are class ids, or a row-stochastic ``(N, C)`` matrix of soft
    targets; with targets ``q`` the loss is ``-(1/N) sum_i sum_c w_c q_ic ln p_ic``.
    """
    n, C = logits.shape
    q = _targets(labels, C) * class_weights[None, :]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -(q * np.maximum(logp, np.log(PROB_FLOOR))).sum() / n
    p = np.exp(logp)
    grad = (q.sum(axis=1, keepdims=True) * p - q) / n
    return float(loss), grad.astype(logits.dtype, copy=False)

"""Fixed-rate mini-batch SGD with weight decay."""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError
from .loss import LOSS_MODES, loss_and_grad
from .model import MLPModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0
    loss: str = "asymmetric"

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {LOSS_MODES}")

    def to_dict(self):
        return asdict(self)


def sgd_step(model, x, labels, cfg, class_weights):
    """One update ``w <- w - lr * (grad + decay * w)``; returns ``(model, loss)``.

    Weight decay applies to weight matrices/kernels, not to biases.
    """
    logits = model.forward(x)
    loss, dlogits = loss_and_grad(logits, labels, class_weights)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    model.backward(dlogits)
    for i, name, param in model.parameters():
        g = model.layers[i].grads[name]
        if not np.isfinite(g).all():
            raise NumericError(
                f"non-finite gradient in layer {i} ({model.layers[i].kind}) {name}; "
                f"max |w| = {np.abs(param).max():.3g}")
        if name == "W" and cfg.weight_decay:
            g = g + cfg.weight_decay * param
        param -= cfg.learning_rate * g
    return model, loss


def dataset_loss(model, X, targets, class_weights, batch_size=2048):
    total = 0.0
    for s in range(0, len(X), batch_size):
        loss, _ = loss_and_grad(model.forward(X[s:s + batch_size]),
                                targets[s:s + batch_size], class_weights)
        total += loss * len(X[s:s + batch_size])
    return total / max(len(X), 1)


def fit(model, X, targets, class_weights, cfg, full_loss=True):
    """Shuffled mini-batch SGD for ``cfg.epochs`` epochs.

    Returns the per-epoch history: the mean batch loss and, with
    ``full_loss``, the loss over the whole set after the epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    n = len(X)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for s in range(0, n, cfg.batch_size):
            idx = np.sort(order[s:s + cfg.batch_size])
            _, loss = sgd_step(model, X[idx], targets[idx], cfg, class_weights)
            batch_losses.append(loss)
        entry = {"epoch": epoch + 1, "batch_loss": float(np.mean(batch_losses))}
        if full_loss:
            entry["loss"] = dataset_loss(model, X, targets, class_weights)
        history.append(entry)
        log.info("epoch %d: %s", epoch + 1,
                 ", ".join(f"{k}={v:.5g}" for k, v in entry.items() if k != "epoch"))
    return history


def feature_standardization(X, chunk=4096):
    """Column means and standard deviations (constant columns get std 1)."""
    n = len(X)
    total = np.zeros(X.shape[1])
    sq = np.zeros(X.shape[1])
    for s in range(0, n, chunk):
        block = np.asarray(X[s:s + chunk], dtype=np.float64)
        total += block.sum(0)
    mean = total / n
    for s in range(0, n, chunk):
        block = np.asarray(X[s:s + chunk], dtype=np.float64) - mean
        sq += (block * block).sum(0)
    std = np.sqrt(sq / n)
    return mean, np.where(std > 1e-8, std, 1.0)


def train_classifier(X, labels, stats, cfg, hidden=(1024,), standardize=True):
    """Train an MLP (``hidden=()`` gives a linear softmax model).

    Returns ``(model, history)``.  Model parameters are snapped to float32
    values so that the saved file reproduces the in-memory model exactly.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(labels) != len(X):
        raise ValueError("features and labels differ in length")
    C = stats.num_classes
    missing = np.flatnonzero(np.bincount(labels, minlength=C) == 0)
    if len(missing):
        log.warning("classes without training examples: %s", missing.tolist())
    model = MLPModel.build(X.shape[1], tuple(hidden), C, seed=cfg.seed)
    if standardize:
        model.mean, model.std = feature_standardization(X)
    history = fit(model, X, labels, stats.class_weights(cfg.loss), cfg)
    model.round_to_float32()
    return model, history

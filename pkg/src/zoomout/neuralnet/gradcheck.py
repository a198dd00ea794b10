"""Central finite-difference checks of the analytic gradients."""
import numpy as np

from .loss import loss_and_grad


def relative_error(analytic, numeric, floor=1e-7):
    """``|a - n| / max(|a| + |n|, floor)`` elementwise."""
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def gradient_check(model, x, labels, class_weights, eps=1e-4, max_params=10_000):
    """Max relative error between backprop and central differences over all parameters."""
    if model.n_parameters() > max_params:
        raise ValueError(f"model has {model.n_parameters()} parameters (limit {max_params})")
    if model.dtype != np.float64:
        raise ValueError("gradient checks need a float64 model")
    class_weights = np.asarray(class_weights, dtype=np.float64)

    def loss():
        return loss_and_grad(model.forward(x), labels, class_weights)[0]

    _, dlogits = loss_and_grad(model.forward(x), labels, class_weights)
    model.backward(dlogits)
    worst = 0.0
    for i, name, param in model.parameters():
        analytic = model.layers[i].grads[name].copy()
        numeric = np.empty_like(param)
        flat, nflat = param.reshape(-1), numeric.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            up = loss()
            flat[j] = old - eps
            down = loss()
            flat[j] = old
            nflat[j] = (up - down) / (2 * eps)
        worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def check_layer(layer, x, seed=0, eps=1e-4):
    """Gradient check of one layer in isolation against a random linear objective.

    Covers the parameters and the layer input; returns the max relative error.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    r = rng.standard_normal(layer.forward(x).shape)

    def objective():
        return float((layer.forward(x) * r).sum())

    objective()
    dx = layer.backward(r)
    targets = [(x, dx)] + [(layer.params[k], layer.grads[k].copy()) for k in layer.params]
    worst = 0.0
    for arr, analytic in targets:
        flat = arr.reshape(-1)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            up = objective()
            flat[j] = old - eps
            down = objective()
            flat[j] = old
            numeric[j] = (up - down) / (2 * eps)
        worst = max(worst, float(relative_error(analytic.reshape(-1), numeric).max()))
    return worst

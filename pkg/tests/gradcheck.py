"""Central finite-difference gradients for whole models.

The loss is re-evaluated through the public forward path with the same
dropout seed the analytic backward used, so the two sides differentiate
the identical function.  Relative error is measured against
max(|analytic|, |numeric|, 1).
"""

import numpy as np

from xling.neural.layers import cross_entropy_loss
from xling.neural.models import flatten_params, forward_batch, replace_leaves


def batch_loss(model_kind, params, x, y, mode="train", seed=0):
    probs = forward_batch(model_kind, params, x, mode=mode, seed=seed)
    return float(np.mean([cross_entropy_loss(p, int(label))
                          for p, label in zip(probs, y)]))


def fd_gradients(model_kind, params, x, y, mode="train", seed=0, step=1e-5):
    grads = {}
    for path, arr in flatten_params(params):
        g = np.zeros_like(arr)
        flat_g = g.reshape(-1)
        flat = arr.reshape(-1)
        for i in range(arr.size):
            plus = flat.copy()
            plus[i] += step
            minus = flat.copy()
            minus[i] -= step
            loss_plus = batch_loss(
                model_kind, replace_leaves(params, {path: plus.reshape(arr.shape)}),
                x, y, mode, seed)
            loss_minus = batch_loss(
                model_kind, replace_leaves(params, {path: minus.reshape(arr.shape)}),
                x, y, mode, seed)
            flat_g[i] = (loss_plus - loss_minus) / (2.0 * step)
        grads[path] = g
    return grads


def max_rel_error(analytic, numeric):
    assert set(analytic) == set(numeric)
    worst = 0.0
    for path, a in analytic.items():
        n = numeric[path]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst

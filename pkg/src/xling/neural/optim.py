"""Adam optimizer over named parameter leaves.

Update rule per leaf, with bias correction at step t+1 and epsilon added
inside the square root:

    m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
    m_hat = m / (1 - b1^(t+1))    v_hat = v / (1 - b2^(t+1))
    theta <- theta - lr * m_hat / sqrt(v_hat + eps)

With defaults and a first scalar step at g=1, lr=1e-3 the applied delta
is -9.99999995e-4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .models import flatten_params, replace_leaves


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam_state(params, beta1: float = 0.9, beta2: float = 0.999,
                    epsilon: float = 1e-8) -> AdamState:
    leaves = flatten_params(params)
    return AdamState(
        m={path: np.zeros_like(arr) for path, arr in leaves},
        v={path: np.zeros_like(arr) for path, arr in leaves},
        t=0,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params, grads: dict[str, np.ndarray], state: AdamState,
              lr: float):
    """One optimizer step; returns (new_params, new_state).

    Gradients must cover exactly the parameter leaves with matching
    shapes and be finite.  Zero gradients leave parameters and moments
    unchanged (apart from the timestep).
    """
    leaves = flatten_params(params)
    paths = [path for path, _ in leaves]
    if set(grads) != set(paths):
        missing = set(paths) - set(grads)
        extra = set(grads) - set(paths)
        raise ValidationError(
            "gradient keys mismatch (missing={}, extra={})".format(
                sorted(missing), sorted(extra)
            )
        )
    t_next = state.t + 1
    bc1 = 1.0 - state.beta1 ** t_next
    bc2 = 1.0 - state.beta2 ** t_next
    new_m, new_v, new_leaves = {}, {}, {}
    for path, arr in leaves:
        g = np.asarray(grads[path], dtype=np.float64)
        if g.shape != arr.shape:
            raise ValidationError(
                "gradient shape mismatch at {}: {} vs {}".format(path, g.shape, arr.shape)
            )
        if not np.all(np.isfinite(g)):
            raise ValidationError("non-finite gradient at {}".format(path))
        m = state.beta1 * state.m[path] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[path] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_leaves[path] = arr - lr * m_hat / np.sqrt(v_hat + state.epsilon)
        new_m[path] = m
        new_v[path] = v
    new_params = replace_leaves(params, new_leaves)
    new_state = AdamState(m=new_m, v=new_v, t=t_next, beta1=state.beta1,
                          beta2=state.beta2, epsilon=state.epsilon)
    return new_params, new_state

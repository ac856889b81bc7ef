"""LSTM cell and layer with two cell-state update variants.

Gate math (row-vector convention, works for a single step or a batch):

    f_t = sigmoid(x_t @ U_f + h_{t-1} @ W_f [+ b_f])
    i_t = sigmoid(x_t @ U_i + h_{t-1} @ W_i [+ b_i])
    o_t = sigmoid(x_t @ U_o + h_{t-1} @ W_o [+ b_o])
    g_t = tanh   (x_t @ U_g + h_{t-1} @ W_g [+ b_g])
    s_t = f_t * C_{t-1} + i_t * g_t

variant "paper_exact" squashes the cell state, C_t = sigmoid(s_t);
variant "standard" keeps C_t = s_t.  Both emit h_t = tanh(C_t) * o_t.
Biases are off by default.

The squash applied in the paper_exact branch is looked up through the
module attributes ``cell_state_squash`` / ``cell_state_squash_grad`` so a
test can swap in the identity and check that the two variants coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .layers import sigmoid

VARIANT_PAPER_EXACT = "paper_exact"
VARIANT_STANDARD = "standard"
VARIANTS = (VARIANT_PAPER_EXACT, VARIANT_STANDARD)


def _sigmoid_squash(s: np.ndarray) -> np.ndarray:
    return sigmoid(s)


def _sigmoid_squash_grad(s: np.ndarray, c: np.ndarray) -> np.ndarray:
    return c * (1.0 - c)


# Swappable hook: the paper_exact cell-state squash and its derivative.
cell_state_squash = _sigmoid_squash
cell_state_squash_grad = _sigmoid_squash_grad


@dataclass(eq=False)
class LSTMParams:
    """Weights of one LSTM layer.

    U_* map the input (input_dim, hidden); W_* map the previous hidden
    state (hidden, hidden); b_* are optional (hidden,) biases, all None
    by default.
    """

    u_forget: np.ndarray
    u_input: np.ndarray
    u_output: np.ndarray
    u_cand: np.ndarray
    w_forget: np.ndarray
    w_input: np.ndarray
    w_output: np.ndarray
    w_cand: np.ndarray
    b_forget: np.ndarray | None = None
    b_input: np.ndarray | None = None
    b_output: np.ndarray | None = None
    b_cand: np.ndarray | None = None
    variant: str = VARIANT_PAPER_EXACT

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError("unknown LSTM variant {!r}".format(self.variant))
        d, h = self.u_forget.shape
        for name in ("u_forget", "u_input", "u_output", "u_cand"):
            if getattr(self, name).shape != (d, h):
                raise ValidationError("{} must have shape ({}, {})".format(name, d, h))
        for name in ("w_forget", "w_input", "w_output", "w_cand"):
            if getattr(self, name).shape != (h, h):
                raise ValidationError("{} must have shape ({}, {})".format(name, h, h))
        biases = [self.b_forget, self.b_input, self.b_output, self.b_cand]
        present = [b is not None for b in biases]
        if any(present) and not all(present):
            raise ValidationError("either all four biases are present or none")
        for b in biases:
            if b is not None and b.shape != (h,):
                raise ValidationError("bias must have shape ({},)".format(h))

    @property
    def input_dim(self) -> int:
        return self.u_forget.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.u_forget.shape[1]

    @property
    def has_bias(self) -> bool:
        return self.b_forget is not None


def _gate_pre(x, h_prev, u, w, b):
    pre = x @ u + h_prev @ w
    if b is not None:
        pre = pre + b
    return pre


def lstm_cell_internals(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                        params: LSTMParams) -> dict:
    """One cell step, returning every intermediate needed for backprop.

    Accepts single rows (d,) or batches (B, d); states follow the same
    leading shape.
    """
    f = sigmoid(_gate_pre(x, h_prev, params.u_forget, params.w_forget, params.b_forget))
    i = sigmoid(_gate_pre(x, h_prev, params.u_input, params.w_input, params.b_input))
    o = sigmoid(_gate_pre(x, h_prev, params.u_output, params.w_output, params.b_output))
    g = np.tanh(_gate_pre(x, h_prev, params.u_cand, params.w_cand, params.b_cand))
    s = f * c_prev + i * g
    if params.variant == VARIANT_PAPER_EXACT:
        c = cell_state_squash(s)
    else:
        c = s
    tc = np.tanh(c)
    h = tc * o
    return {"x": x, "h_prev": h_prev, "c_prev": c_prev, "f": f, "i": i,
            "o": o, "g": g, "s": s, "c": c, "tc": tc, "h": h}


def lstm_cell_step(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                   params: LSTMParams) -> tuple[np.ndarray, np.ndarray]:
    """One step of the recurrence; returns (h, C)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ValidationError(
            "input width {} does not match layer input_dim {}".format(
                x.shape[-1], params.input_dim
            )
        )
    cache = lstm_cell_internals(x, h_prev, c_prev, params)
    return cache["h"], cache["c"]


def lstm_layer_forward(seq: np.ndarray, params: LSTMParams,
                       return_cache: bool = False):
    """Run a full sequence (T, d) or batch (B, T, d) from zero states.

    Returns the hidden-state sequence with the same leading shape and H
    as the last axis.  A T-step output prefix equals the output of the
    T-step prefix of the input.
    """
    seq = np.asarray(seq, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != params.input_dim:
        raise ValidationError("sequence must be (T, {0}) or (B, T, {0})".format(params.input_dim))
    batch, steps, _ = seq.shape
    h = np.zeros((batch, params.hidden_dim), dtype=np.float64)
    c = np.zeros((batch, params.hidden_dim), dtype=np.float64)
    outputs = np.empty((batch, steps, params.hidden_dim), dtype=np.float64)
    caches = []
    for t in range(steps):
        cache = lstm_cell_internals(seq[:, t], h, c, params)
        h, c = cache["h"], cache["c"]
        outputs[:, t] = h
        if return_cache:
            caches.append(cache)
    outputs = outputs[0] if single else outputs
    if return_cache:
        return outputs, caches
    return outputs


def lstm_layer_backward(caches: list[dict], d_outputs: np.ndarray,
                        params: LSTMParams) -> tuple[dict, np.ndarray]:
    """Backprop through time for one layer.

    caches comes from lstm_layer_forward(return_cache=True) on a batch;
    d_outputs is (B, T, H), the loss gradient wrt every emitted hidden
    state.  Returns (gradients keyed like the param fields, d_inputs of
    shape (B, T, d)).
    """
    steps = len(caches)
    batch = caches[0]["x"].shape[0]
    grads = {name: np.zeros_like(getattr(params, name))
             for name in ("u_forget", "u_input", "u_output", "u_cand",
                          "w_forget", "w_input", "w_output", "w_cand")}
    if params.has_bias:
        for name in ("b_forget", "b_input", "b_output", "b_cand"):
            grads[name] = np.zeros_like(getattr(params, name))
    d_inputs = np.empty((batch, steps, params.input_dim), dtype=np.float64)
    dh_next = np.zeros((batch, params.hidden_dim), dtype=np.float64)
    dc_next = np.zeros((batch, params.hidden_dim), dtype=np.float64)
    gate_names = (("f", "forget"), ("i", "input"), ("o", "output"), ("g", "cand"))
    for t in range(steps - 1, -1, -1):
        cache = caches[t]
        dh = d_outputs[:, t] + dh_next
        do = dh * cache["tc"]
        dc = dc_next + dh * cache["o"] * (1.0 - cache["tc"] ** 2)
        if params.variant == VARIANT_PAPER_EXACT:
            ds = dc * cell_state_squash_grad(cache["s"], cache["c"])
        else:
            ds = dc
        df = ds * cache["c_prev"]
        dc_next = ds * cache["f"]
        di = ds * cache["g"]
        dg = ds * cache["i"]
        d_pre = {
            "forget": df * cache["f"] * (1.0 - cache["f"]),
            "input": di * cache["i"] * (1.0 - cache["i"]),
            "output": do * cache["o"] * (1.0 - cache["o"]),
            "cand": dg * (1.0 - cache["g"] ** 2),
        }
        dx = np.zeros((batch, params.input_dim), dtype=np.float64)
        dh_next = np.zeros((batch, params.hidden_dim), dtype=np.float64)
        for _, gate in gate_names:
            dp = d_pre[gate]
            grads["u_" + gate] += cache["x"].T @ dp
            grads["w_" + gate] += cache["h_prev"].T @ dp
            if params.has_bias:
                grads["b_" + gate] += dp.sum(axis=0)
            dx += dp @ getattr(params, "u_" + gate).T
            dh_next += dp @ getattr(params, "w_" + gate).T
        d_inputs[:, t] = dx
    return grads, d_inputs

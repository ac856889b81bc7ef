"""Layer primitives: convolution over token windows, pooling, dense,
softmax, inverted dropout, cross-entropy.

All functions are pure and operate on float64 numpy arrays.  The batched
model kernels in models.py reuse the same math; the single-sample
functions here are the reference surface the tests pin down.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def identity(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre, out):
    return (pre > 0.0).astype(np.float64)


def _tanh_grad(pre, out):
    return 1.0 - out * out


def _sigmoid_grad(pre, out):
    return out * (1.0 - out)


def _identity_grad(pre, out):
    return np.ones_like(pre)


# name -> (f, df) where df takes (pre-activation, activation output)
ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (sigmoid, _sigmoid_grad),
    "identity": (identity, _identity_grad),
}


def activation_pair(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValidationError("unknown activation {!r}".format(name))


def conv_forward(inp: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                 activation: str = "relu") -> np.ndarray:
    """Full-width convolution of one (n, k) input.

    weights has shape (F, h, k): F filters of height h spanning all k
    input dimensions.  Output is (F, n - h + 1) with
    out[f, i] = act(<weights[f], inp[i:i+h]> + bias[f]).
    """
    inp = np.asarray(inp, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if inp.ndim != 2 or weights.ndim != 3:
        raise ValidationError("conv_forward expects a 2-d input and 3-d weights")
    n, k = inp.shape
    f_count, h, wk = weights.shape
    if wk != k:
        raise ValidationError(
            "filter width {} does not match input width {}".format(wk, k)
        )
    if n < h:
        raise ValidationError(
            "input length {} shorter than filter height {}".format(n, h)
        )
    if bias.shape != (f_count,):
        raise ValidationError("bias shape {} != ({},)".format(bias.shape, f_count))
    act, _ = activation_pair(activation)
    windows = np.lib.stride_tricks.sliding_window_view(inp, (h, k))[:, 0]
    pre = np.einsum("whk,fhk->fw", windows, weights) + bias[:, None]
    return act(pre)


def max_over_time(feature_map: np.ndarray) -> float:
    """Maximum of one 1-d feature map."""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    if feature_map.ndim != 1 or feature_map.size == 0:
        raise ValidationError("max_over_time expects a non-empty 1-d map")
    return float(np.max(feature_map))


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                  activation: str = "identity") -> np.ndarray:
    """act(x @ weight + bias) for a single row vector or a batch."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.shape[-1] != weight.shape[0]:
        raise ValidationError(
            "input width {} does not match weight rows {}".format(
                x.shape[-1], weight.shape[0]
            )
        )
    if bias.shape != (weight.shape[1],):
        raise ValidationError("bias shape mismatch")
    act, _ = activation_pair(activation)
    return act(x @ weight + bias)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValidationError("softmax input contains non-finite values")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=-1, keepdims=True)


def dropout_mask(shape: tuple[int, ...], rate: float, seed: int) -> np.ndarray:
    """Keep mask drawn from a Philox stream keyed by the seed.

    One mask per call site; the training step shares it across the batch
    and between forward and backward, which keeps the loss the gradient
    differentiates identical to the loss reported.
    """
    key = np.array([seed & (2**64 - 1), 0], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return (rng.random(shape) >= rate).astype(np.float64)


def dropout_forward(x: np.ndarray, rate: float, mode: str = "train",
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout.  Returns (output, mask).

    Train mode zeroes entries with probability rate and rescales the
    survivors by 1/(1-rate) so expectation is preserved; eval mode is the
    identity with an all-ones mask.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= rate < 1.0:
        raise ValidationError("dropout rate must be in [0, 1), got {}".format(rate))
    if mode not in ("train", "eval"):
        raise ValidationError("mode must be 'train' or 'eval'")
    if mode == "eval" or rate == 0.0:
        return x.copy(), np.ones_like(x)
    mask = dropout_mask(x.shape, rate, seed)
    return x * mask / (1.0 - rate), mask


def cross_entropy_loss(probs: np.ndarray, label: int) -> float:
    """Negative log-likelihood of the true class.

    probs must be a distribution (sum within 1e-9 of 1); the probability
    is clamped at 1e-12 below so degenerate predictions stay finite.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValidationError("probs must be 1-d")
    if abs(float(np.sum(probs)) - 1.0) > 1e-9:
        raise ValidationError("probs do not sum to 1")
    if not 0 <= label < probs.shape[0]:
        raise ValidationError("label {} out of range".format(label))
    return float(-np.log(max(float(probs[label]), 1e-12)))

"""Model definitions: a four-channel convolutional classifier and a
two-layer LSTM classifier, with exact reverse-mode gradients.

Both models end in dense(relu) -> dropout -> dense -> softmax and are
trained with categorical cross-entropy.  The convolutional model runs
four full-width channels with filter heights 2, 3, 4, 5, max-over-time
pools each feature map, and concatenates the pooled values.  The
recurrent model stacks two LSTM layers and classifies from the final
hidden state of the second layer (a full-sequence flatten option is
available).

backward() differentiates the exact training-mode loss: the dropout mask
is drawn once per call from the given seed and shared across the batch
and between the forward and backward passes.  A consequence used by the
tests: duplicating a sample inside a batch leaves the mean gradient
unchanged.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .layers import activation_pair, dropout_mask, softmax
from .lstm import (
    LSTMParams,
    VARIANT_PAPER_EXACT,
    VARIANTS,
    lstm_layer_backward,
    lstm_layer_forward,
)

CONV_HEIGHTS = (2, 3, 4, 5)

MODEL_CNN = "cnn"
MODEL_RNN = "rnn"
MODEL_KINDS = (MODEL_CNN, MODEL_RNN)

REDUCTION_FINAL = "final_hidden"
REDUCTION_FLATTEN = "flatten"


@dataclass(eq=False)
class ConvChannel:
    """One bank of full-width filters of a single height."""

    height: int
    weights: np.ndarray  # (F, height, k)
    bias: np.ndarray     # (F,)
    activation: str = "relu"

    def __post_init__(self) -> None:
        activation_pair(self.activation)
        if self.weights.ndim != 3 or self.weights.shape[1] != self.height:
            raise ValidationError(
                "channel weights must be (F, {}, k)".format(self.height)
            )
        if self.bias.shape != (self.weights.shape[0],):
            raise ValidationError("channel bias shape mismatch")


@dataclass(eq=False)
class CNNParams:
    channels: list[ConvChannel]
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        heights = tuple(ch.height for ch in self.channels)
        if heights != CONV_HEIGHTS:
            raise ValidationError(
                "expected channels with heights {}, got {}".format(CONV_HEIGHTS, heights)
            )
        f_counts = {ch.weights.shape[0] for ch in self.channels}
        widths = {ch.weights.shape[2] for ch in self.channels}
        if len(f_counts) != 1 or len(widths) != 1:
            raise ValidationError("all channels must share F and input width")
        f_count = f_counts.pop()
        if self.dense1_w.shape[0] != len(self.channels) * f_count:
            raise ValidationError(
                "dense1 input width {} != pooled width {}".format(
                    self.dense1_w.shape[0], len(self.channels) * f_count
                )
            )
        if self.dense1_w.shape[1] != self.dense1_b.shape[0]:
            raise ValidationError("dense1 bias shape mismatch")
        if self.dense2_w.shape[0] != self.dense1_w.shape[1]:
            raise ValidationError("dense2 input width mismatch")
        if self.dense2_w.shape[1] != self.dense2_b.shape[0]:
            raise ValidationError("dense2 bias shape mismatch")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")

    @property
    def embed_dim(self) -> int:
        return self.channels[0].weights.shape[2]

    @property
    def num_classes(self) -> int:
        return self.dense2_w.shape[1]


@dataclass(eq=False)
class RNNParams:
    layer1: LSTMParams
    layer2: LSTMParams
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray
    dropout_rate: float = 0.5
    reduction: str = REDUCTION_FINAL
    input_len: int | None = None

    def __post_init__(self) -> None:
        if self.layer2.input_dim != self.layer1.hidden_dim:
            raise ValidationError(
                "layer2 input width {} != layer1 hidden width {}".format(
                    self.layer2.input_dim, self.layer1.hidden_dim
                )
            )
        if self.layer1.variant != self.layer2.variant:
            raise ValidationError("both layers must use the same variant")
        if self.reduction not in (REDUCTION_FINAL, REDUCTION_FLATTEN):
            raise ValidationError("unknown reduction {!r}".format(self.reduction))
        expected = self.layer2.hidden_dim
        if self.reduction == REDUCTION_FLATTEN:
            if self.input_len is None:
                raise ValidationError("flatten reduction requires input_len")
            expected = self.input_len * self.layer2.hidden_dim
        if self.dense1_w.shape[0] != expected:
            raise ValidationError(
                "dense1 input width {} != reduced width {}".format(
                    self.dense1_w.shape[0], expected
                )
            )
        if self.dense1_w.shape[1] != self.dense1_b.shape[0]:
            raise ValidationError("dense1 bias shape mismatch")
        if self.dense2_w.shape[0] != self.dense1_w.shape[1]:
            raise ValidationError("dense2 input width mismatch")
        if self.dense2_w.shape[1] != self.dense2_b.shape[0]:
            raise ValidationError("dense2 bias shape mismatch")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")

    @property
    def embed_dim(self) -> int:
        return self.layer1.input_dim

    @property
    def num_classes(self) -> int:
        return self.dense2_w.shape[1]

    @property
    def variant(self) -> str:
        return self.layer1.variant


@dataclass(frozen=True)
class CNNSpec:
    """Shape hyperparameters for the convolutional model."""

    embed_dim: int
    num_classes: int
    filters_per_channel: int = 100
    dense_width: int = 128
    conv_activation: str = "relu"
    dropout_rate: float = 0.5


@dataclass(frozen=True)
class RNNSpec:
    """Shape hyperparameters for the recurrent model."""

    embed_dim: int
    num_classes: int
    hidden1: int = 128
    hidden2: int = 128
    dense_width: int = 128
    variant: str = VARIANT_PAPER_EXACT
    use_bias: bool = False
    reduction: str = REDUCTION_FINAL
    input_len: int | None = None
    dropout_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValidationError("unknown LSTM variant {!r}".format(self.variant))


def _glorot(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(model_kind: str, dims, seed: int):
    """Seed-deterministic Glorot-uniform init; biases start at zero.

    Fan counts: dense (in, out) uses (in, out); a filter bank (F, h, k)
    uses (h*k, F); recurrent matrices use their own two axes.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    if model_kind == MODEL_CNN:
        if not isinstance(dims, CNNSpec):
            raise ValidationError("cnn init needs a CNNSpec")
        f = dims.filters_per_channel
        channels = []
        for h in CONV_HEIGHTS:
            w = _glorot(rng, (f, h, dims.embed_dim), h * dims.embed_dim, f)
            channels.append(ConvChannel(height=h, weights=w,
                                        bias=np.zeros(f),
                                        activation=dims.conv_activation))
        pooled = len(CONV_HEIGHTS) * f
        return CNNParams(
            channels=channels,
            dense1_w=_glorot(rng, (pooled, dims.dense_width), pooled, dims.dense_width),
            dense1_b=np.zeros(dims.dense_width),
            dense2_w=_glorot(rng, (dims.dense_width, dims.num_classes),
                             dims.dense_width, dims.num_classes),
            dense2_b=np.zeros(dims.num_classes),
            dropout_rate=dims.dropout_rate,
        )
    if model_kind == MODEL_RNN:
        if not isinstance(dims, RNNSpec):
            raise ValidationError("rnn init needs an RNNSpec")

        def make_layer(d_in: int, hidden: int) -> LSTMParams:
            mats = {}
            for gate in ("forget", "input", "output", "cand"):
                mats["u_" + gate] = _glorot(rng, (d_in, hidden), d_in, hidden)
            for gate in ("forget", "input", "output", "cand"):
                mats["w_" + gate] = _glorot(rng, (hidden, hidden), hidden, hidden)
            if dims.use_bias:
                for gate in ("forget", "input", "output", "cand"):
                    mats["b_" + gate] = np.zeros(hidden)
            return LSTMParams(variant=dims.variant, **mats)

        layer1 = make_layer(dims.embed_dim, dims.hidden1)
        layer2 = make_layer(dims.hidden1, dims.hidden2)
        reduced = dims.hidden2
        if dims.reduction == REDUCTION_FLATTEN:
            if dims.input_len is None:
                raise ValidationError("flatten reduction requires input_len")
            reduced = dims.input_len * dims.hidden2
        return RNNParams(
            layer1=layer1,
            layer2=layer2,
            dense1_w=_glorot(rng, (reduced, dims.dense_width), reduced, dims.dense_width),
            dense1_b=np.zeros(dims.dense_width),
            dense2_w=_glorot(rng, (dims.dense_width, dims.num_classes),
                             dims.dense_width, dims.num_classes),
            dense2_b=np.zeros(dims.num_classes),
            dropout_rate=dims.dropout_rate,
            reduction=dims.reduction,
            input_len=dims.input_len,
        )
    raise ValidationError("unknown model kind {!r}".format(model_kind))


# ---------------------------------------------------------------------------
# parameter trees


def flatten_params(params) -> list[tuple[str, np.ndarray]]:
    """Ordered (path, array) leaves of a parameter container."""
    leaves: list[tuple[str, np.ndarray]] = []
    if isinstance(params, CNNParams):
        for i, ch in enumerate(params.channels):
            leaves.append(("channels.{}.weights".format(i), ch.weights))
            leaves.append(("channels.{}.bias".format(i), ch.bias))
    elif isinstance(params, RNNParams):
        for lname in ("layer1", "layer2"):
            layer = getattr(params, lname)
            for gate in ("forget", "input", "output", "cand"):
                leaves.append(("{}.u_{}".format(lname, gate), getattr(layer, "u_" + gate)))
            for gate in ("forget", "input", "output", "cand"):
                leaves.append(("{}.w_{}".format(lname, gate), getattr(layer, "w_" + gate)))
            if layer.has_bias:
                for gate in ("forget", "input", "output", "cand"):
                    leaves.append(("{}.b_{}".format(lname, gate), getattr(layer, "b_" + gate)))
    else:
        raise ValidationError("unsupported parameter container {!r}".format(type(params)))
    leaves.append(("dense1_w", params.dense1_w))
    leaves.append(("dense1_b", params.dense1_b))
    leaves.append(("dense2_w", params.dense2_w))
    leaves.append(("dense2_b", params.dense2_b))
    return leaves


def get_leaf(params, path: str) -> np.ndarray:
    obj = params
    parts = path.split(".")
    for part in parts[:-1]:
        if part.isdigit():
            obj = obj[int(part)]
        elif part == "channels":
            obj = obj.channels
        else:
            obj = getattr(obj, part)
    last = parts[-1]
    return obj[int(last)] if last.isdigit() else getattr(obj, last)


def set_leaf(params, path: str, value: np.ndarray) -> None:
    obj = params
    parts = path.split(".")
    for part in parts[:-1]:
        if part.isdigit():
            obj = obj[int(part)]
        elif part == "channels":
            obj = obj.channels
        else:
            obj = getattr(obj, part)
    last = parts[-1]
    if last.isdigit():
        obj[int(last)] = value
    else:
        setattr(obj, last, value)


def replace_leaves(params, mapping: dict[str, np.ndarray]):
    """Functional update: deep-copy the container, swap in new leaves."""
    expected = {path for path, _ in flatten_params(params)}
    unknown = set(mapping) - expected
    if unknown:
        raise ValidationError("unknown parameter paths: {}".format(sorted(unknown)))
    out = copy.deepcopy(params)
    for path, value in mapping.items():
        current = get_leaf(out, path)
        if current.shape != value.shape:
            raise ValidationError(
                "shape mismatch at {}: {} vs {}".format(path, current.shape, value.shape)
            )
        set_leaf(out, path, np.asarray(value, dtype=np.float64))
    return out


# ---------------------------------------------------------------------------
# forward


def _batch_windows(x: np.ndarray, h: int) -> np.ndarray:
    # (B, n, k) -> (B, n-h+1, h, k)
    return np.lib.stride_tricks.sliding_window_view(x, (h, x.shape[2]), axis=(1, 2))[:, :, 0]


def _cnn_batch(params: CNNParams, x: np.ndarray, mode: str, seed: int,
               want_cache: bool):
    batch, n, k = x.shape
    if k != params.embed_dim:
        raise ValidationError(
            "input width {} != model embed dim {}".format(k, params.embed_dim)
        )
    pooled_parts = []
    channel_caches = []
    for ch in params.channels:
        if n < ch.height:
            raise ValidationError(
                "input length {} shorter than filter height {}".format(n, ch.height)
            )
        act, act_grad = activation_pair(ch.activation)
        windows = _batch_windows(x, ch.height)
        pre = np.einsum("blhk,fhk->bfl", windows, ch.weights) + ch.bias[None, :, None]
        a = act(pre)
        arg = np.argmax(a, axis=2)
        pooled_parts.append(np.take_along_axis(a, arg[:, :, None], axis=2)[:, :, 0])
        if want_cache:
            channel_caches.append({"windows": windows, "pre": pre, "a": a, "arg": arg,
                                   "act_grad": act_grad})
    v = np.concatenate(pooled_parts, axis=1)
    z1 = v @ params.dense1_w + params.dense1_b
    a1 = np.maximum(z1, 0.0)
    if mode == "train" and params.dropout_rate > 0.0:
        mask = dropout_mask(a1.shape[1:], params.dropout_rate, seed)
        drop_scale = mask / (1.0 - params.dropout_rate)
    else:
        drop_scale = np.ones(a1.shape[1:])
    a1d = a1 * drop_scale
    z2 = a1d @ params.dense2_w + params.dense2_b
    probs = softmax(z2)
    if not want_cache:
        return probs, None
    cache = {"channels": channel_caches, "v": v, "z1": z1, "a1": a1,
             "drop_scale": drop_scale, "a1d": a1d, "probs": probs}
    return probs, cache


def _rnn_batch(params: RNNParams, x: np.ndarray, mode: str, seed: int,
               want_cache: bool):
    batch, steps, k = x.shape
    if k != params.embed_dim:
        raise ValidationError(
            "input width {} != model embed dim {}".format(k, params.embed_dim)
        )
    if params.reduction == REDUCTION_FLATTEN and steps != params.input_len:
        raise ValidationError(
            "flatten reduction expects length {}, got {}".format(params.input_len, steps)
        )
    h1, caches1 = lstm_layer_forward(x, params.layer1, return_cache=True)
    h2, caches2 = lstm_layer_forward(h1, params.layer2, return_cache=True)
    if params.reduction == REDUCTION_FINAL:
        v = h2[:, -1]
    else:
        v = h2.reshape(batch, steps * params.layer2.hidden_dim)
    z1 = v @ params.dense1_w + params.dense1_b
    a1 = np.maximum(z1, 0.0)
    if mode == "train" and params.dropout_rate > 0.0:
        mask = dropout_mask(a1.shape[1:], params.dropout_rate, seed)
        drop_scale = mask / (1.0 - params.dropout_rate)
    else:
        drop_scale = np.ones(a1.shape[1:])
    a1d = a1 * drop_scale
    z2 = a1d @ params.dense2_w + params.dense2_b
    probs = softmax(z2)
    if not want_cache:
        return probs, None
    cache = {"caches1": caches1, "caches2": caches2, "h2_shape": h2.shape,
             "v": v, "z1": z1, "a1": a1, "drop_scale": drop_scale,
             "a1d": a1d, "probs": probs}
    return probs, cache


def _as_batch(inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 3:
        raise ValidationError("batch inputs must be (B, n, k)")
    return x


def forward_batch(model_kind: str, params, inputs, mode: str = "eval",
                  seed: int = 0) -> np.ndarray:
    """Class probabilities for a batch (B, n, k); rows sum to 1."""
    x = _as_batch(inputs)
    if mode not in ("train", "eval"):
        raise ValidationError("mode must be 'train' or 'eval'")
    if model_kind == MODEL_CNN:
        probs, _ = _cnn_batch(params, x, mode, seed, want_cache=False)
    elif model_kind == MODEL_RNN:
        probs, _ = _rnn_batch(params, x, mode, seed, want_cache=False)
    else:
        raise ValidationError("unknown model kind {!r}".format(model_kind))
    return probs


def cnn_forward(inp: np.ndarray, params: CNNParams, mode: str = "eval",
                seed: int = 0) -> np.ndarray:
    """Probabilities (num_classes,) for one (n, k) input."""
    inp = np.asarray(inp, dtype=np.float64)
    if inp.ndim != 2:
        raise ValidationError("cnn_forward expects one (n, k) input")
    return forward_batch(MODEL_CNN, params, inp[None], mode=mode, seed=seed)[0]


def rnn_forward(inp: np.ndarray, params: RNNParams, mode: str = "eval",
                seed: int = 0) -> np.ndarray:
    """Probabilities (num_classes,) for one (T, d) input."""
    inp = np.asarray(inp, dtype=np.float64)
    if inp.ndim != 2:
        raise ValidationError("rnn_forward expects one (T, d) input")
    return forward_batch(MODEL_RNN, params, inp[None], mode=mode, seed=seed)[0]


# ---------------------------------------------------------------------------
# backward


def _dense_head_backward(params, cache, labels: np.ndarray):
    """Shared gradient path through softmax, dense2, dropout, dense1."""
    probs = cache["probs"]
    batch = probs.shape[0]
    dz2 = probs.copy()
    dz2[np.arange(batch), labels] -= 1.0
    dz2 /= batch
    grads = {
        "dense2_w": cache["a1d"].T @ dz2,
        "dense2_b": dz2.sum(axis=0),
    }
    da1d = dz2 @ params.dense2_w.T
    da1 = da1d * cache["drop_scale"]
    dz1 = da1 * (cache["z1"] > 0.0)
    grads["dense1_w"] = cache["v"].T @ dz1
    grads["dense1_b"] = dz1.sum(axis=0)
    dv = dz1 @ params.dense1_w.T
    return grads, dv


def backward(model_kind: str, params, inputs, labels, mode: str = "train",
             seed: int = 0) -> tuple[dict[str, np.ndarray], float]:
    """Mean cross-entropy over the batch and its exact parameter gradient.

    Returns (grads keyed like flatten_params, mean loss).  In train mode
    the dropout mask is derived from the seed, so repeated calls with the
    same arguments are bit-identical.
    """
    x = _as_batch(inputs)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
        raise ValidationError("labels must be one int per batch row")
    if model_kind == MODEL_CNN:
        num_classes = params.num_classes
    elif model_kind == MODEL_RNN:
        num_classes = params.num_classes
    else:
        raise ValidationError("unknown model kind {!r}".format(model_kind))
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError("label outside [0, {})".format(num_classes))
    if x.shape[0] == 0:
        raise ValidationError("cannot run backward on an empty batch")

    if model_kind == MODEL_CNN:
        probs, cache = _cnn_batch(params, x, mode, seed, want_cache=True)
        grads, dv = _dense_head_backward(params, cache, labels)
        f_count = params.channels[0].weights.shape[0]
        for idx, (ch, ch_cache) in enumerate(zip(params.channels, cache["channels"])):
            dpool = dv[:, idx * f_count:(idx + 1) * f_count]
            da = np.zeros_like(ch_cache["a"])
            np.put_along_axis(da, ch_cache["arg"][:, :, None], dpool[:, :, None], axis=2)
            dpre = da * ch_cache["act_grad"](ch_cache["pre"], ch_cache["a"])
            grads["channels.{}.weights".format(idx)] = np.einsum(
                "bfl,blhk->fhk", dpre, ch_cache["windows"]
            )
            grads["channels.{}.bias".format(idx)] = dpre.sum(axis=(0, 2))
    else:
        probs, cache = _rnn_batch(params, x, mode, seed, want_cache=True)
        grads, dv = _dense_head_backward(params, cache, labels)
        batch, steps, hidden2 = cache["h2_shape"]
        d_h2 = np.zeros(cache["h2_shape"], dtype=np.float64)
        if params.reduction == REDUCTION_FINAL:
            d_h2[:, -1] = dv
        else:
            d_h2[:] = dv.reshape(batch, steps, hidden2)
        layer2_grads, d_h1 = lstm_layer_backward(cache["caches2"], d_h2, params.layer2)
        layer1_grads, _ = lstm_layer_backward(cache["caches1"], d_h1, params.layer1)
        for name, g in layer2_grads.items():
            grads["layer2." + name] = g
        for name, g in layer1_grads.items():
            grads["layer1." + name] = g

    picked = probs[np.arange(x.shape[0]), labels]
    loss = float(np.mean(-np.log(np.maximum(picked, 1e-12))))
    return grads, loss

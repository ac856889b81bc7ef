"""From-scratch neural classifiers on numpy: layers, models, optimizer.

Everything here is float64 and fully deterministic given explicit seeds.
Gradients are computed by hand-written reverse-mode passes and are tested
against central finite differences.
"""

from .layers import (
    conv_forward,
    cross_entropy_loss,
    dense_forward,
    dropout_forward,
    max_over_time,
    sigmoid,
    softmax,
)
from .lstm import LSTMParams, lstm_cell_step, lstm_layer_forward
from .models import (
    CNNSpec,
    CNNParams,
    ConvChannel,
    RNNSpec,
    RNNParams,
    backward,
    cnn_forward,
    flatten_params,
    forward_batch,
    init_params,
    replace_leaves,
    rnn_forward,
)
from .optim import AdamState, adam_step, init_adam_state
from .checkpoint import load_params, save_params

__all__ = [
    "AdamState",
    "CNNParams",
    "CNNSpec",
    "ConvChannel",
    "LSTMParams",
    "RNNParams",
    "RNNSpec",
    "adam_step",
    "backward",
    "cnn_forward",
    "conv_forward",
    "cross_entropy_loss",
    "dense_forward",
    "dropout_forward",
    "flatten_params",
    "forward_batch",
    "init_adam_state",
    "init_params",
    "load_params",
    "lstm_cell_step",
    "lstm_layer_forward",
    "max_over_time",
    "replace_leaves",
    "save_params",
    "sigmoid",
    "softmax",
]

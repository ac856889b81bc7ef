"""Self-describing model checkpoints.

A checkpoint is a single .npz container holding every parameter leaf
plus a JSON metadata entry describing the model kind and dimensions.
Round-trips are bit-exact; loading validates every stored array against
the dimensions the metadata declares and refuses mismatches.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import FormatError, ValidationError
from .models import (
    CNNParams,
    CNNSpec,
    MODEL_CNN,
    MODEL_RNN,
    RNNParams,
    RNNSpec,
    flatten_params,
    init_params,
    replace_leaves,
)

_META_KEY = "__meta__"


def _describe(model_kind: str, params) -> dict:
    if model_kind == MODEL_CNN:
        return {
            "model_kind": MODEL_CNN,
            "embed_dim": params.embed_dim,
            "num_classes": params.num_classes,
            "filters_per_channel": int(params.channels[0].weights.shape[0]),
            "dense_width": int(params.dense1_w.shape[1]),
            "conv_activation": params.channels[0].activation,
            "dropout_rate": params.dropout_rate,
        }
    return {
        "model_kind": MODEL_RNN,
        "embed_dim": params.embed_dim,
        "num_classes": params.num_classes,
        "hidden1": int(params.layer1.hidden_dim),
        "hidden2": int(params.layer2.hidden_dim),
        "dense_width": int(params.dense1_w.shape[1]),
        "variant": params.variant,
        "use_bias": bool(params.layer1.has_bias),
        "reduction": params.reduction,
        "input_len": params.input_len,
        "dropout_rate": params.dropout_rate,
    }


def _spec_from_meta(meta: dict):
    kind = meta.get("model_kind")
    if kind == MODEL_CNN:
        return CNNSpec(
            embed_dim=meta["embed_dim"],
            num_classes=meta["num_classes"],
            filters_per_channel=meta["filters_per_channel"],
            dense_width=meta["dense_width"],
            conv_activation=meta["conv_activation"],
            dropout_rate=meta["dropout_rate"],
        )
    if kind == MODEL_RNN:
        return RNNSpec(
            embed_dim=meta["embed_dim"],
            num_classes=meta["num_classes"],
            hidden1=meta["hidden1"],
            hidden2=meta["hidden2"],
            dense_width=meta["dense_width"],
            variant=meta["variant"],
            use_bias=meta["use_bias"],
            reduction=meta["reduction"],
            input_len=meta["input_len"],
            dropout_rate=meta["dropout_rate"],
        )
    raise FormatError("checkpoint declares unknown model kind {!r}".format(kind))


def save_params(path: str, model_kind: str, params) -> None:
    if model_kind == MODEL_CNN and not isinstance(params, CNNParams):
        raise ValidationError("model_kind 'cnn' requires CNNParams")
    if model_kind == MODEL_RNN and not isinstance(params, RNNParams):
        raise ValidationError("model_kind 'rnn' requires RNNParams")
    meta = _describe(model_kind, params)
    arrays = {path_: arr for path_, arr in flatten_params(params)}
    arrays[_META_KEY] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    np.savez(path, **arrays)


def load_params(path: str):
    """Load a checkpoint; returns (model_kind, params).

    Raises FormatError when the container is missing metadata or any
    stored array disagrees with the declared dimensions.
    """
    try:
        with np.load(path) as bundle:
            if _META_KEY not in bundle:
                raise FormatError("{}: not a model checkpoint (no metadata)".format(path))
            meta = json.loads(bytes(bundle[_META_KEY].tobytes()).decode("utf-8"))
            stored = {k: bundle[k] for k in bundle.files if k != _META_KEY}
    except (OSError, ValueError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError("{}: unreadable checkpoint ({})".format(path, exc)) from exc
    spec = _spec_from_meta(meta)
    skeleton = init_params(meta["model_kind"], spec, seed=0)
    expected = dict(flatten_params(skeleton))
    if set(stored) != set(expected):
        raise FormatError(
            "{}: checkpoint leaves {} do not match declared model".format(
                path, sorted(set(stored) ^ set(expected))
            )
        )
    for key, arr in stored.items():
        if arr.shape != expected[key].shape:
            raise FormatError(
                "{}: array {} has shape {}, metadata implies {}".format(
                    path, key, arr.shape, expected[key].shape
                )
            )
    params = replace_leaves(skeleton, {k: np.asarray(v, dtype=np.float64)
                                       for k, v in stored.items()})
    return meta["model_kind"], params

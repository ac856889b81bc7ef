import numpy as np
import pytest

from gradcheck import batch_loss, fd_gradients, max_rel_error
from xling.errors import FormatError, ValidationError
from xling.neural.checkpoint import load_params, save_params
from xling.neural.layers import conv_forward, dense_forward, max_over_time, softmax
from xling.neural.lstm import VARIANT_PAPER_EXACT, VARIANT_STANDARD
from xling.neural.models import (
    CNNSpec,
    CONV_HEIGHTS,
    RNNSpec,
    backward,
    cnn_forward,
    flatten_params,
    forward_batch,
    get_leaf,
    glorot_bound,
    init_params,
    replace_leaves,
    rnn_forward,
)

CNN_SPEC = CNNSpec(embed_dim=5, num_classes=3, filters_per_channel=2,
                   dense_width=4)
RNN_SPEC = RNNSpec(embed_dim=5, num_classes=3, hidden1=3, hidden2=3,
                   dense_width=4)


def batch_for(spec, n=8, batch=3, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.normal(size=(batch, n, spec.embed_dim))
    y = rng.integers(spec.num_classes, size=batch)
    return x, y


def test_init_is_seed_deterministic():
    a = init_params("cnn", CNN_SPEC, seed=42)
    b = init_params("cnn", CNN_SPEC, seed=42)
    c = init_params("cnn", CNN_SPEC, seed=43)
    for (pa, la), (pb, lb), (pc, lc) in zip(*map(flatten_params, (a, b, c))):
        assert pa == pb == pc
        assert np.array_equal(la, lb)
        if la.size and "_b" not in pa and ".bias" not in pa:
            assert not np.array_equal(la, lc), pa


@pytest.mark.parametrize("kind,spec", [("cnn", CNN_SPEC), ("rnn", RNN_SPEC)])
def test_init_respects_glorot_bounds(kind, spec):
    params = init_params(kind, spec, seed=1)
    for path, leaf in flatten_params(params):
        if path.endswith("_b") or path.endswith(".bias") or ".b_" in path:
            assert np.array_equal(leaf, np.zeros_like(leaf)), path
            continue
        if ".weights" in path:
            f, h, k = leaf.shape
            bound = glorot_bound(h * k, f)
        elif "." in path:
            bound = glorot_bound(*leaf.shape)
        else:
            bound = glorot_bound(*leaf.shape)
        assert np.max(np.abs(leaf)) <= bound, path
        # a uniform draw that stayed in a much smaller box would be suspect
        assert np.max(np.abs(leaf)) > 0.1 * bound, path


def test_init_rnn_bias_flag():
    spec = RNNSpec(embed_dim=4, num_classes=2, hidden1=3, hidden2=3,
                   use_bias=True)
    params = init_params("rnn", spec, seed=2)
    assert params.layer1.has_bias and params.layer2.has_bias
    paths = [p for p, _ in flatten_params(params)]
    assert "layer1.b_forget" in paths and "layer2.b_cand" in paths


def test_init_rejects_wrong_spec_type():
    with pytest.raises(ValidationError):
        init_params("cnn", RNN_SPEC, seed=0)
    with pytest.raises(ValidationError):
        init_params("rnn", CNN_SPEC, seed=0)
    with pytest.raises(ValidationError):
        init_params("mlp", CNN_SPEC, seed=0)


def test_pooled_width_is_channels_times_filters():
    params = init_params("cnn", CNN_SPEC, seed=3)
    assert params.dense1_w.shape[0] == len(CONV_HEIGHTS) * CNN_SPEC.filters_per_channel
    wide = init_params("cnn", CNNSpec(embed_dim=4, num_classes=2,
                                      filters_per_channel=100), seed=3)
    assert wide.dense1_w.shape[0] == 400


@pytest.mark.parametrize("kind,spec", [("cnn", CNN_SPEC), ("rnn", RNN_SPEC)])
def test_forward_rows_are_distributions(kind, spec):
    params = init_params(kind, spec, seed=4)
    x, _ = batch_for(spec, batch=6, seed=5)
    probs = forward_batch(kind, params, x)
    assert probs.shape == (6, spec.num_classes)
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) <= 1e-12
    assert np.all(probs >= 0.0)


def test_cnn_forward_matches_layer_composition():
    params = init_params("cnn", CNN_SPEC, seed=6)
    x, _ = batch_for(CNN_SPEC, n=9, batch=1, seed=7)
    inp = x[0]
    pooled = []
    for ch in params.channels:
        fmap = conv_forward(inp, ch.weights, ch.bias, activation=ch.activation)
        pooled.extend(max_over_time(row) for row in fmap)
    v = np.array(pooled)
    a1 = dense_forward(v, params.dense1_w, params.dense1_b, activation="relu")
    want = softmax(dense_forward(a1, params.dense2_w, params.dense2_b))
    got = cnn_forward(inp, params)
    assert np.max(np.abs(got - want)) <= 1e-12


def test_rnn_zero_recurrent_weights_ignore_input():
    # standard variant with all-zero LSTM weights emits a zero feature
    # vector, so the class distribution is a constant of the dense head
    spec = RNNSpec(embed_dim=4, num_classes=3, hidden1=2, hidden2=2,
                   variant=VARIANT_STANDARD)
    params = init_params("rnn", spec, seed=8)
    zeros = {p: np.zeros_like(l) for p, l in flatten_params(params)
             if p.startswith("layer")}
    params = replace_leaves(params, zeros)
    rng = np.random.Generator(np.random.PCG64(9))
    out_a = rnn_forward(rng.normal(size=(6, 4)), params)
    out_b = rnn_forward(rng.normal(size=(11, 4)), params)
    z1 = np.maximum(params.dense1_b, 0.0)
    want = softmax(z1 @ params.dense2_w + params.dense2_b)
    assert np.max(np.abs(out_a - want)) <= 1e-12
    assert np.array_equal(out_a, out_b)


def test_rnn_flatten_reduction_checks_length():
    spec = RNNSpec(embed_dim=3, num_classes=2, hidden1=2, hidden2=2,
                   reduction="flatten", input_len=5)
    params = init_params("rnn", spec, seed=10)
    assert params.dense1_w.shape[0] == 5 * 2
    x = np.zeros((2, 5, 3))
    assert forward_batch("rnn", params, x).shape == (2, 2)
    with pytest.raises(ValidationError):
        forward_batch("rnn", params, np.zeros((2, 4, 3)))
    with pytest.raises(ValidationError):
        init_params("rnn", RNNSpec(embed_dim=3, num_classes=2,
                                   reduction="flatten"), seed=0)


def test_forward_validates_inputs():
    params = init_params("cnn", CNN_SPEC, seed=11)
    with pytest.raises(ValidationError):
        forward_batch("cnn", params, np.zeros((3, 5)))
    with pytest.raises(ValidationError):
        forward_batch("cnn", params, np.zeros((2, 8, 4)))
    with pytest.raises(ValidationError):
        forward_batch("cnn", params, np.zeros((2, 3, 5)))  # shorter than h=5
    with pytest.raises(ValidationError):
        forward_batch("cnn", params, np.zeros((2, 8, 5)), mode="test")


def test_flatten_get_set_round_trip():
    params = init_params("rnn", RNN_SPEC, seed=12)
    leaves = flatten_params(params)
    assert leaves[0][0] == "layer1.u_forget"
    assert leaves[-1][0] == "dense2_b"
    for path, leaf in leaves:
        assert get_leaf(params, path) is leaf
    doubled = replace_leaves(params, {"dense1_w": params.dense1_w * 2})
    assert np.array_equal(doubled.dense1_w, params.dense1_w * 2)
    # original container untouched
    assert not np.array_equal(doubled.dense1_w, params.dense1_w)


def test_replace_leaves_validates():
    params = init_params("cnn", CNN_SPEC, seed=13)
    with pytest.raises(ValidationError):
        replace_leaves(params, {"dense9_w": np.zeros((4, 3))})
    with pytest.raises(ValidationError):
        replace_leaves(params, {"dense1_w": np.zeros((1, 1))})


@pytest.mark.parametrize("mode", ["eval", "train"])
def test_cnn_gradients_match_finite_differences(mode):
    params = init_params("cnn", CNNSpec(embed_dim=4, num_classes=3,
                                        filters_per_channel=1, dense_width=3),
                         seed=14)
    x, y = batch_for(CNNSpec(embed_dim=4, num_classes=3), n=7, batch=2, seed=15)
    grads, loss = backward("cnn", params, x, y, mode=mode, seed=5)
    assert loss == pytest.approx(batch_loss("cnn", params, x, y, mode, seed=5),
                                 abs=1e-12)
    numeric = fd_gradients("cnn", params, x, y, mode=mode, seed=5)
    assert max_rel_error(grads, numeric) <= 1e-4


@pytest.mark.parametrize("variant", [VARIANT_PAPER_EXACT, VARIANT_STANDARD])
def test_rnn_gradients_match_finite_differences(variant):
    spec = RNNSpec(embed_dim=4, num_classes=3, hidden1=2, hidden2=2,
                   dense_width=3, variant=variant)
    params = init_params("rnn", spec, seed=16)
    x, y = batch_for(spec, n=5, batch=2, seed=17)
    grads, _ = backward("rnn", params, x, y, mode="train", seed=6)
    numeric = fd_gradients("rnn", params, x, y, mode="train", seed=6)
    assert max_rel_error(grads, numeric) <= 1e-4


def test_rnn_flatten_gradients_match_finite_differences():
    spec = RNNSpec(embed_dim=3, num_classes=2, hidden1=2, hidden2=2,
                   dense_width=3, reduction="flatten", input_len=4)
    params = init_params("rnn", spec, seed=18)
    x, y = batch_for(spec, n=4, batch=2, seed=19)
    grads, _ = backward("rnn", params, x, y, mode="train", seed=7)
    numeric = fd_gradients("rnn", params, x, y, mode="train", seed=7)
    assert max_rel_error(grads, numeric) <= 1e-4


def test_backward_duplicated_batch_keeps_mean_gradient():
    # the dropout mask depends on feature shape and seed only, so feeding
    # every sample twice must reproduce the same mean gradient and loss
    params = init_params("cnn", CNN_SPEC, seed=20)
    x, y = batch_for(CNN_SPEC, n=8, batch=3, seed=21)
    x2 = np.concatenate([x, x])
    y2 = np.concatenate([y, y])
    grads, loss = backward("cnn", params, x, y, mode="train", seed=8)
    grads2, loss2 = backward("cnn", params, x2, y2, mode="train", seed=8)
    assert loss2 == pytest.approx(loss, abs=1e-12)
    for path in grads:
        assert np.max(np.abs(grads[path] - grads2[path])) <= 1e-12, path


def test_backward_mean_of_single_samples():
    params = init_params("rnn", RNN_SPEC, seed=22)
    x, y = batch_for(RNN_SPEC, n=6, batch=3, seed=23)
    grads, loss = backward("rnn", params, x, y, mode="train", seed=9)
    singles = [backward("rnn", params, x[i:i + 1], y[i:i + 1],
                        mode="train", seed=9) for i in range(3)]
    mean_loss = np.mean([l for _, l in singles])
    assert loss == pytest.approx(float(mean_loss), abs=1e-12)
    for path in grads:
        mean_g = np.mean([g[path] for g, _ in singles], axis=0)
        assert np.max(np.abs(grads[path] - mean_g)) <= 1e-12, path


def test_backward_validates_labels():
    params = init_params("cnn", CNN_SPEC, seed=24)
    x, _ = batch_for(CNN_SPEC, batch=2, seed=25)
    with pytest.raises(ValidationError):
        backward("cnn", params, x, [0, 3])
    with pytest.raises(ValidationError):
        backward("cnn", params, x, [0])
    with pytest.raises(ValidationError):
        backward("cnn", params, np.zeros((0, 8, 5)), [])


@pytest.mark.parametrize("kind,spec", [("cnn", CNN_SPEC), ("rnn", RNN_SPEC)])
def test_checkpoint_round_trip_is_bit_exact(kind, spec, tmp_path):
    params = init_params(kind, spec, seed=26)
    path = str(tmp_path / "model.npz")
    save_params(path, kind, params)
    kind2, loaded = load_params(path)
    assert kind2 == kind
    for (pa, la), (pb, lb) in zip(flatten_params(params), flatten_params(loaded)):
        assert pa == pb
        assert np.array_equal(la, lb)
        assert la.dtype == lb.dtype == np.float64
    x, _ = batch_for(spec, batch=2, seed=27)
    assert np.array_equal(forward_batch(kind, params, x),
                          forward_batch(kind, loaded, x))


def test_checkpoint_refuses_kind_mismatch(tmp_path):
    params = init_params("cnn", CNN_SPEC, seed=28)
    with pytest.raises(ValidationError):
        save_params(str(tmp_path / "x.npz"), "rnn", params)


def test_checkpoint_refuses_corrupt_metadata(tmp_path):
    path = str(tmp_path / "bad.npz")
    np.savez(path, dense1_w=np.zeros((4, 4)))
    with pytest.raises(FormatError):
        load_params(path)


def test_checkpoint_refuses_shape_mismatch(tmp_path):
    params = init_params("cnn", CNN_SPEC, seed=29)
    path = str(tmp_path / "model.npz")
    save_params(path, "cnn", params)
    with np.load(path) as bundle:
        arrays = {k: bundle[k] for k in bundle.files}
    arrays["dense2_b"] = np.zeros(7)
    np.savez(path, **arrays)
    with pytest.raises(FormatError):
        load_params(path)
    del arrays["dense1_w"]
    np.savez(path, **arrays)
    with pytest.raises(FormatError):
        load_params(path)

import os
import tempfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xling.embeddings import (
    EmbeddingSpace,
    PAD_ZERO,
    PaddingPolicy,
    embed_sequence,
    load_vec,
    lookup,
    normalize,
    pad_vector,
    save_vec,
)
from xling.errors import FormatError, ValidationError


def make_space(seed=0, n=12, dim=5, language="en"):
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = tuple("w{}".format(i) for i in range(n))
    return EmbeddingSpace(language=language, dim=dim, vocab=vocab,
                          matrix=rng.normal(size=(n, dim)))


def test_load_basic(tmp_path):
    path = tmp_path / "toy.vec"
    path.write_text("2 3\nhello 1.0 2.0 3.0\nworld 0.5 -1.5 0.25\n",
                    encoding="utf-8")
    space = load_vec(str(path), "en")
    assert space.vocab == ("hello", "world")
    assert space.dim == 3
    assert np.array_equal(space.matrix[1], [0.5, -1.5, 0.25])
    assert not space.normalized


def test_save_load_round_trip(tmp_path):
    space = make_space()
    path = str(tmp_path / "rt.vec")
    save_vec(space, path)
    again = load_vec(path, "en")
    assert again.vocab == space.vocab
    assert np.max(np.abs(again.matrix - space.matrix)) <= 1e-6


def test_round_trip_values_exact(tmp_path):
    # repr round-trips doubles exactly, so the documented 1e-6 bound is
    # met with zero error
    space = make_space(seed=3)
    path = str(tmp_path / "exact.vec")
    save_vec(space, path)
    assert np.array_equal(load_vec(path, "en").matrix, space.matrix)


def test_load_rejects_malformed(tmp_path):
    cases = {
        "bad-header.vec": "2\nhello 1.0\n",
        "bad-width.vec": "1 3\nhello 1.0 2.0\n",
        "bad-float.vec": "1 2\nhello 1.0 abc\n",
        "dup-word.vec": "2 2\nhello 1.0 2.0\nhello 3.0 4.0\n",
        "bad-count.vec": "3 2\nhello 1.0 2.0\nworld 3.0 4.0\n",
    }
    for name, content in cases.items():
        path = tmp_path / name
        path.write_text(content, encoding="utf-8")
        with pytest.raises(FormatError):
            load_vec(str(path), "en")


def test_language_code_validated():
    with pytest.raises(ValidationError):
        make_space(language="english")


def test_lookup_exhaustive():
    space = make_space()
    for i, word in enumerate(space.vocab):
        assert np.array_equal(lookup(space, word), space.matrix[i])
    assert lookup(space, "missing") is None


def test_normalize_unit_rows_and_cosine():
    space = make_space(seed=1)
    unit = normalize(space)
    norms = np.linalg.norm(unit.matrix, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-9
    a, b = space.matrix[0], space.matrix[1]
    cosine = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    assert abs(cosine - float(unit.matrix[0] @ unit.matrix[1])) <= 1e-12


def test_normalize_idempotent_at_file_level(tmp_path):
    space = make_space(seed=2)
    once = normalize(space)
    twice = normalize(once)
    p1 = tmp_path / "once.vec"
    p2 = tmp_path / "twice.vec"
    save_vec(once, str(p1))
    save_vec(twice, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_normalize_zero_row_names_word():
    space = EmbeddingSpace(language="en", dim=2, vocab=("ok", "dead"),
                           matrix=np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValidationError, match="dead"):
        normalize(space)


def test_embed_known_tokens_and_replay():
    space = make_space()
    policy = PaddingPolicy(kind="gaussian", sigma=0.1, seed=9)
    tokens = ["w0", "w3", "w7"]
    out, oov = embed_sequence(space, tokens, max_len=100, policy=policy)
    assert oov == 0
    for row, token in enumerate(tokens):
        assert np.array_equal(out[row], lookup(space, token))
    again, _ = embed_sequence(space, tokens, max_len=100, policy=policy)
    assert np.array_equal(out, again)
    assert not np.array_equal(out[3], np.zeros(space.dim))


def test_embed_truncates_long_sequences():
    space = make_space()
    tokens = ["w{}".format(i % 12) for i in range(150)]
    out, oov = embed_sequence(space, tokens, max_len=100,
                              policy=PaddingPolicy())
    assert out.shape == (100, space.dim)
    assert oov == 0
    for row in range(100):
        assert np.array_equal(out[row], lookup(space, tokens[row]))


def test_embed_counts_oov_and_zero_policy():
    space = make_space()
    out, oov = embed_sequence(space, ["w0", "nope", "w1"], max_len=4,
                              policy=PaddingPolicy(kind=PAD_ZERO))
    assert oov == 1
    assert np.array_equal(out[1], np.zeros(space.dim))
    assert np.array_equal(out[3], np.zeros(space.dim))


def test_pad_rows_depend_only_on_row_and_seed():
    space = make_space()
    policy = PaddingPolicy(sigma=0.1, seed=4)
    a, _ = embed_sequence(space, ["w0"], max_len=6, policy=policy)
    b, _ = embed_sequence(space, ["w1", "w2", "w3"], max_len=6, policy=policy)
    for row in range(3, 6):
        assert np.array_equal(a[row], b[row])
    assert np.array_equal(a[1], pad_vector(policy, space.dim, 1))


def test_explicit_seed_overrides_policy_seed():
    space = make_space()
    policy = PaddingPolicy(sigma=0.1, seed=4)
    default, _ = embed_sequence(space, [], max_len=3, policy=policy)
    override, _ = embed_sequence(space, [], max_len=3, policy=policy, seed=99)
    matched, _ = embed_sequence(space, [], max_len=3,
                                policy=PaddingPolicy(sigma=0.1, seed=99))
    assert not np.array_equal(default, override)
    assert np.array_equal(override, matched)


def test_matrix_is_read_only():
    space = make_space()
    with pytest.raises(ValueError):
        space.matrix[0, 0] = 5.0


def test_space_rejects_duplicate_vocab():
    with pytest.raises(ValidationError):
        EmbeddingSpace(language="en", dim=2, vocab=("a", "a"),
                       matrix=np.zeros((2, 2)))


@given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=2**32))
def test_vec_round_trip_property(n, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = tuple("t{}".format(i) for i in range(n))
    space = EmbeddingSpace(language="de", dim=4, vocab=vocab,
                           matrix=rng.normal(size=(n, 4)) * 10.0)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "p.vec")
        save_vec(space, path)
        again = load_vec(path, "de")
    assert again.vocab == space.vocab
    assert np.array_equal(again.matrix, space.matrix)

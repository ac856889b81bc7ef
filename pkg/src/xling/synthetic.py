"""Synthetic fixtures: rotated embedding pairs and token-distribution
corpora for desk-scale benchmarks.

The bilingual benchmark builds language A embeddings as random unit
vectors and language B embeddings as rotated (optionally noised) copies,
with a word-for-word lexicon linking the two vocabularies.  Documents
are sampled from per-class token distributions: each class owns a block
of class-specific tokens and shares a common block with every other
class, so classification difficulty is controlled by the mixing rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import SeedDictionary
from .data import Corpus, LabeledDoc
from .embeddings import EmbeddingSpace, normalize
from .errors import ValidationError
from .translate import BilingualLexicon


def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    vecs = rng.normal(size=(count, dim))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / norms


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-distributed rotation via QR with sign correction."""
    a = rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def make_rotated_spaces(
    seed: int,
    n_words: int,
    dim: int,
    noise_sigma: float = 0.0,
    source_language: str = "en",
    target_language: str = "fr",
):
    """Source space, rotated target space, the rotation, and word pairs.

    Target row i is (source row i) @ R plus optional Gaussian noise,
    re-normalized.  Returns (src_space, tgt_space, rotation, pairs).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    src_matrix = random_unit_vectors(rng, n_words, dim)
    rotation = random_orthogonal(rng, dim)
    tgt_matrix = src_matrix @ rotation
    if noise_sigma > 0.0:
        tgt_matrix = tgt_matrix + rng.normal(0.0, noise_sigma, size=tgt_matrix.shape)
        tgt_matrix = tgt_matrix / np.linalg.norm(tgt_matrix, axis=1, keepdims=True)
    src_vocab = tuple("s{:05d}".format(i) for i in range(n_words))
    tgt_vocab = tuple("t{:05d}".format(i) for i in range(n_words))
    src_space = EmbeddingSpace(language=source_language, dim=dim, vocab=src_vocab,
                               matrix=src_matrix, normalized=True)
    tgt_space = EmbeddingSpace(language=target_language, dim=dim, vocab=tgt_vocab,
                               matrix=tgt_matrix, normalized=True)
    pairs = tuple(zip(src_vocab, tgt_vocab))
    return src_space, tgt_space, rotation, pairs


@dataclass(frozen=True)
class CorpusRecipe:
    """Token-distribution parameters for a synthetic labeled corpus."""

    labels: tuple[str, ...] = ("books", "dvd", "music")
    class_tokens: int = 30
    shared_tokens: int = 60
    doc_len_min: int = 8
    doc_len_max: int = 16
    class_token_prob: float = 0.45

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ValidationError("need at least two labels")
        if not 0.0 < self.class_token_prob <= 1.0:
            raise ValidationError("class_token_prob must be in (0, 1]")
        if self.doc_len_min < 1 or self.doc_len_max < self.doc_len_min:
            raise ValidationError("bad document length range")

    @property
    def vocab_size(self) -> int:
        return len(self.labels) * self.class_tokens + self.shared_tokens


def _word_names(prefix: str, count: int) -> list[str]:
    return ["{}{:05d}".format(prefix, i) for i in range(count)]


def sample_corpus(
    seed: int,
    language: str,
    per_label: int,
    recipe: CorpusRecipe = CorpusRecipe(),
    word_prefix: str = "w",
) -> Corpus:
    """Sample per_label documents for every label in the recipe."""
    rng = np.random.Generator(np.random.PCG64(seed))
    words = _word_names(word_prefix, recipe.vocab_size)
    shared_start = len(recipe.labels) * recipe.class_tokens
    docs = []
    for li, label in enumerate(recipe.labels):
        class_start = li * recipe.class_tokens
        for _ in range(per_label):
            length = int(rng.integers(recipe.doc_len_min, recipe.doc_len_max + 1))
            tokens = []
            for _ in range(length):
                if rng.random() < recipe.class_token_prob:
                    idx = class_start + int(rng.integers(recipe.class_tokens))
                else:
                    idx = shared_start + int(rng.integers(recipe.shared_tokens))
                tokens.append(words[idx])
            docs.append(LabeledDoc(label=label, text=" ".join(tokens)))
    return Corpus(language=language, docs=tuple(docs))


def embedding_space_for_vocab(
    seed: int, language: str, vocab: list[str], dim: int
) -> EmbeddingSpace:
    rng = np.random.Generator(np.random.PCG64(seed))
    matrix = random_unit_vectors(rng, len(vocab), dim)
    return EmbeddingSpace(language=language, dim=dim, vocab=tuple(vocab),
                          matrix=matrix, normalized=True)


@dataclass(frozen=True, eq=False)
class BilingualBenchmark:
    corpus_a: Corpus
    corpus_b: Corpus
    space_a: EmbeddingSpace
    space_b: EmbeddingSpace
    lexicon_ab: BilingualLexicon
    lexicon_ba: BilingualLexicon
    seed_dictionary: SeedDictionary
    rotation: np.ndarray


def make_bilingual_benchmark(
    seed: int,
    per_label_a: int = 284,
    per_label_b: int = 28,
    dim: int = 16,
    noise_sigma: float = 0.05,
    language_a: str = "en",
    language_b: str = "fr",
    recipe: CorpusRecipe = CorpusRecipe(),
) -> BilingualBenchmark:
    """Two-language corpus/embedding bundle with a construction lexicon.

    Language B's embeddings are rotated noisy copies of A's, word i of A
    translating to word i of B, so the seed dictionary and both lexicons
    come straight from the construction.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab_a = _word_names("a", recipe.vocab_size)
    vocab_b = _word_names("b", recipe.vocab_size)
    matrix_a = random_unit_vectors(rng, recipe.vocab_size, dim)
    rotation = random_orthogonal(rng, dim)
    matrix_b = matrix_a @ rotation
    if noise_sigma > 0.0:
        matrix_b = matrix_b + rng.normal(0.0, noise_sigma, size=matrix_b.shape)
    matrix_b = matrix_b / np.linalg.norm(matrix_b, axis=1, keepdims=True)
    space_a = EmbeddingSpace(language=language_a, dim=dim, vocab=tuple(vocab_a),
                             matrix=matrix_a, normalized=True)
    space_b = EmbeddingSpace(language=language_b, dim=dim, vocab=tuple(vocab_b),
                             matrix=matrix_b, normalized=True)
    pairs = list(zip(vocab_a, vocab_b))
    corpus_a = sample_corpus(int(rng.integers(2**63)), language_a, per_label_a,
                             recipe, word_prefix="a")
    corpus_b = sample_corpus(int(rng.integers(2**63)), language_b, per_label_b,
                             recipe, word_prefix="b")
    return BilingualBenchmark(
        corpus_a=corpus_a,
        corpus_b=corpus_b,
        space_a=space_a,
        space_b=space_b,
        lexicon_ab=BilingualLexicon.from_pairs(pairs),
        lexicon_ba=BilingualLexicon.from_pairs([(b, a) for a, b in pairs]),
        seed_dictionary=SeedDictionary(pairs=tuple(pairs), provenance="construction"),
        rotation=rotation,
    )

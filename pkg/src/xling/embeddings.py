"""Word embedding storage: text-format I/O, normalization, sequence embedding.

The on-disk format is the plain-text ``.vec`` layout: a header line
``<count> <dim>`` followed by one ``<word> <v1> ... <vdim>`` line per word.
Values are written with ``repr`` so that save/load round-trips are exact;
the documented load tolerance for foreign producers is 1e-6.

Sequences shorter than the model input length are padded with per-row
Gaussian noise drawn from a counter-based generator keyed by
(seed, row index), so pad vectors are reproducible and independent of
the order in which rows are generated.  Out-of-vocabulary tokens receive
the same treatment at their own row position.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ValidationError

LANGUAGE_RE = re.compile(r"^[a-z]{2}$")

PAD_GAUSSIAN = "gaussian"
PAD_ZERO = "zero"


def _check_language(code: str) -> str:
    if not LANGUAGE_RE.match(code):
        raise ValidationError(
            "language must be a two-letter lowercase code, got {!r}".format(code)
        )
    return code


@dataclass(frozen=True, eq=False)
class EmbeddingSpace:
    """An ordered vocabulary with one float64 row vector per word.

    The matrix is locked read-only after construction; operations that
    change vectors return a new space.
    """

    language: str
    dim: int
    vocab: tuple[str, ...]
    matrix: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        _check_language(self.language)
        if self.dim < 1:
            raise ValidationError("dim must be >= 1, got {}".format(self.dim))
        if len(set(self.vocab)) != len(self.vocab):
            raise ValidationError("vocabulary contains duplicate words")
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (len(self.vocab), self.dim):
            raise ValidationError(
                "matrix shape {} does not match ({}, {})".format(
                    matrix.shape, len(self.vocab), self.dim
                )
            )
        matrix = matrix.copy()
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(
            self, "_index", {w: i for i, w in enumerate(self.vocab)}
        )
        if self.normalized:
            norms = np.linalg.norm(matrix, axis=1)
            if matrix.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValidationError(
                    "normalized space has a row with L2 norm outside 1 +/- 1e-9"
                )

    def __len__(self) -> int:
        return len(self.vocab)

    def row_index(self, word: str):
        return self._index.get(word)


@dataclass(frozen=True)
class PaddingPolicy:
    """How missing rows (padding and OOV) are filled.

    kind "gaussian" draws i.i.d. N(0, sigma^2) per dimension; kind "zero"
    fills with zeros.  The seed keys the counter-based generator.
    """

    kind: str = PAD_GAUSSIAN
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (PAD_GAUSSIAN, PAD_ZERO):
            raise ValidationError("unknown padding kind {!r}".format(self.kind))
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")


def pad_vector(policy: PaddingPolicy, dim: int, row: int, seed: int | None = None) -> np.ndarray:
    """Deterministic fill vector for one row position.

    Gaussian fills come from a Philox stream keyed by (seed, row), so the
    vector at a given position depends only on (kind, sigma, seed, row).
    """
    if policy.kind == PAD_ZERO:
        return np.zeros(dim, dtype=np.float64)
    effective = policy.seed if seed is None else seed
    key = np.array([effective & (2**64 - 1), row & (2**64 - 1)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.normal(0.0, policy.sigma, size=dim)


def load_vec(path: str, language: str) -> EmbeddingSpace:
    """Read a text-format embedding file into an EmbeddingSpace.

    Raises FormatError on a malformed header, wrong row width, duplicate
    words, unparsable values, or a count mismatch.
    """
    _check_language(language)
    with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
        header = fin.readline()
        if not header:
            raise FormatError("{}: empty file, expected '<count> <dim>' header".format(path))
        parts = header.split()
        if len(parts) != 2:
            raise FormatError("{}: malformed header {!r}".format(path, header.strip()))
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError("{}: non-integer header {!r}".format(path, header.strip()))
        if count < 0 or dim < 1:
            raise FormatError("{}: invalid header values {} {}".format(path, count, dim))
        words: list[str] = []
        seen: set[str] = set()
        matrix = np.empty((count, dim), dtype=np.float64)
        for lineno, line in enumerate(fin, start=2):
            row = len(words)
            if row >= count:
                if line.strip():
                    raise FormatError(
                        "{}: more rows than the declared count {}".format(path, count)
                    )
                continue
            fields = line.rstrip("\n").split(" ")
            word = fields[0]
            if word in seen:
                raise FormatError(
                    "{}:{}: duplicate word {!r}".format(path, lineno, word)
                )
            values = fields[1:]
            if len(values) != dim:
                raise FormatError(
                    "{}:{}: expected {} values, got {}".format(path, lineno, dim, len(values))
                )
            try:
                matrix[row] = [float(v) for v in values]
            except ValueError:
                raise FormatError("{}:{}: unparsable vector value".format(path, lineno))
            seen.add(word)
            words.append(word)
    if len(words) != count:
        raise FormatError(
            "{}: header declares {} words but file has {}".format(path, count, len(words))
        )
    return EmbeddingSpace(language=language, dim=dim, vocab=tuple(words), matrix=matrix)


def save_vec(space: EmbeddingSpace, path: str) -> None:
    """Write a space in the text format; values round-trip exactly."""
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        fout.write("{} {}\n".format(len(space.vocab), space.dim))
        for word, row in zip(space.vocab, space.matrix):
            fout.write(word)
            for v in row:
                fout.write(" ")
                fout.write(repr(float(v)))
            fout.write("\n")


def lookup(space: EmbeddingSpace, word: str) -> np.ndarray | None:
    """Exact matrix row for a word, or None when absent."""
    idx = space.row_index(word)
    if idx is None:
        return None
    return space.matrix[idx]


def normalize(space: EmbeddingSpace) -> EmbeddingSpace:
    """Rescale every row to unit L2 norm.

    Rows already within 1e-12 of unit norm are kept bit-identical, which
    makes normalization idempotent at the file level.  A zero-norm row is
    an error (the offending word is named).
    """
    matrix = np.array(space.matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise ValidationError(
            "cannot normalize zero-norm row for word {!r}".format(space.vocab[zero[0]])
        )
    needs = np.abs(norms - 1.0) > 1e-12
    matrix[needs] = matrix[needs] / norms[needs, None]
    return replace(space, matrix=matrix, normalized=True)


def embed_sequence(
    space: EmbeddingSpace,
    tokens: list[str],
    max_len: int = 100,
    policy: PaddingPolicy = PaddingPolicy(),
    seed: int | None = None,
) -> tuple[np.ndarray, int]:
    """Embed a token sequence into a (max_len, dim) matrix.

    Known tokens copy their vectors; OOV tokens and rows past the end of
    the sequence are filled by the padding policy.  Sequences longer than
    max_len are chopped.  Returns (matrix, oov_count); the explicit seed
    argument overrides policy.seed when given.
    """
    if max_len < 1:
        raise ValidationError("max_len must be >= 1, got {}".format(max_len))
    out = np.empty((max_len, space.dim), dtype=np.float64)
    oov = 0
    kept = tokens[:max_len]
    for row, token in enumerate(kept):
        vec = lookup(space, token)
        if vec is None:
            out[row] = pad_vector(policy, space.dim, row, seed)
            oov += 1
        else:
            out[row] = vec
    for row in range(len(kept), max_len):
        out[row] = pad_vector(policy, space.dim, row, seed)
    return out, oov

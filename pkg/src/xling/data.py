"""Labeled corpora: TSV I/O, tokenization, truncation, stratified splits.

Corpus files hold one ``label<TAB>text`` record per line, UTF-8, LF line
endings.  Literal tabs, newlines, and backslashes inside the text field
are escaped as ``\\t``, ``\\n``, ``\\\\``; the reader decodes the same
three sequences, so write-then-read is the identity.
"""

from __future__ import annotations

import io
import math
import unicodedata
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import FormatError, ValidationError

from .embeddings import _check_language


def escape_field(text: str) -> str:
    """Escape backslash, tab, and newline for tab-separated storage."""
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def unescape_field(text: str) -> str:
    """Inverse of escape_field."""
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n:
            nxt = text[i + 1]
            if nxt == "t":
                out.append("\t")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


@dataclass(frozen=True)
class LabeledDoc:
    label: str
    text: str

    def __post_init__(self) -> None:
        if not self.label:
            raise ValidationError("document label must be non-empty")


@dataclass(frozen=True, eq=False)
class Corpus:
    """An ordered collection of labeled documents in one language."""

    language: str
    docs: tuple[LabeledDoc, ...]

    def __post_init__(self) -> None:
        _check_language(self.language)
        object.__setattr__(self, "docs", tuple(self.docs))

    @property
    def label_set(self) -> tuple[str, ...]:
        return tuple(sorted({d.label for d in self.docs}))

    def __len__(self) -> int:
        return len(self.docs)


def read_corpus(path: str, language: str) -> Corpus:
    """Read a label<TAB>text file.

    Raises FormatError on a missing tab, an empty label, or invalid UTF-8.
    """
    docs: list[LabeledDoc] = []
    try:
        with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
            for lineno, line in enumerate(fin, start=1):
                line = line.rstrip("\n")
                if line == "":
                    continue
                if "\t" not in line:
                    raise FormatError(
                        "{}:{}: missing tab separator".format(path, lineno)
                    )
                label, text = line.split("\t", 1)
                if not label:
                    raise FormatError("{}:{}: empty label".format(path, lineno))
                docs.append(LabeledDoc(label=label, text=unescape_field(text)))
    except UnicodeDecodeError as exc:
        raise FormatError("{}: invalid UTF-8 ({})".format(path, exc)) from exc
    return Corpus(language=language, docs=tuple(docs))


def write_corpus(corpus: Corpus, path: str) -> None:
    """Write a corpus in the tab-separated format read_corpus accepts."""
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        for doc in corpus.docs:
            if "\t" in doc.label or "\n" in doc.label or "\\" in doc.label:
                raise ValidationError(
                    "label {!r} contains a separator character".format(doc.label)
                )
            fout.write(doc.label)
            fout.write("\t")
            fout.write(escape_field(doc.text))
            fout.write("\n")


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, trim edge punctuation.

    Tokens that become empty after trimming are dropped.  Total: any
    string tokenizes without error.
    """
    out = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


def truncate_tokens(tokens: list[str], max_len: int) -> list[str]:
    if max_len < 0:
        raise ValidationError("max_len must be >= 0")
    return tokens[:max_len]


@dataclass(frozen=True)
class SplitSpec:
    """Stratified split fractions plus the shuffle seed."""

    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValidationError("fractions must be three positive numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValidationError(
                "fractions must sum to 1, got {}".format(sum(self.fractions))
            )


def stratified_split(corpus: Corpus, spec: SplitSpec = SplitSpec()) -> tuple[Corpus, Corpus, Corpus]:
    """Split into (train, val, test), stratified by label.

    Per label the documents are shuffled with the spec seed, counts are
    floor(fraction * n) per part, and the remainder goes to train; the
    merged splits are then shuffled.  Every label must have at least
    3 documents.  The same (corpus, seed) always yields the same split.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    by_label: dict[str, list[int]] = {}
    for i, doc in enumerate(corpus.docs):
        by_label.setdefault(doc.label, []).append(i)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for label in sorted(by_label):
        idx = by_label[label]
        n = len(idx)
        if n < 3:
            raise ValidationError(
                "label {!r} has only {} documents; need at least 3".format(label, n)
            )
        order = rng.permutation(n)
        shuffled = [idx[j] for j in order]
        n_train = math.floor(spec.fractions[0] * n)
        n_val = math.floor(spec.fractions[1] * n)
        n_test = math.floor(spec.fractions[2] * n)
        n_train += n - n_train - n_val - n_test
        parts[0].extend(shuffled[:n_train])
        parts[1].extend(shuffled[n_train:n_train + n_val])
        parts[2].extend(shuffled[n_train + n_val:n_train + n_val + n_test])
    out = []
    for indices in parts:
        order = rng.permutation(len(indices))
        merged = [indices[j] for j in order]
        out.append(
            Corpus(language=corpus.language, docs=tuple(corpus.docs[i] for i in merged))
        )
    return out[0], out[1], out[2]


@dataclass(frozen=True)
class LabelEncoder:
    """Bijection between label strings and contiguous class indices."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("encoder labels must be unique")

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def encode(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError("label {!r} not known to the encoder".format(label))

    def decode(self, index: int) -> str:
        if not 0 <= index < len(self.labels):
            raise ValidationError("class index {} out of range".format(index))
        return self.labels[index]


def encode_labels(corpora: Corpus | Iterable[Corpus]) -> LabelEncoder:
    """Build an encoder over the union of label sets, ascending order."""
    if isinstance(corpora, Corpus):
        corpora = [corpora]
    labels: set[str] = set()
    for corpus in corpora:
        labels.update(corpus.label_set)
    if not labels:
        raise ValidationError("cannot build a label encoder from empty corpora")
    return LabelEncoder(labels=tuple(sorted(labels)))

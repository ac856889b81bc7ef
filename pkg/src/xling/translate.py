"""Document translation: a deterministic lexicon substitute and a
batched HTTP client with retries and a persistent cache.

The lexicon path is deliberately crude word-for-word substitution: text
is tokenized with the standard tokenizer, each token is replaced by the
preferred (first-listed) target for it, and the result is re-joined with
single spaces.  Unknown tokens are kept or dropped per policy.

The external path POSTs JSON ``{"q": [texts], "source": code,
"target": code}`` with bearer auth and expects ``{"translations":
[texts]}`` of equal length.  5xx responses and timeouts are retried with
exponential backoff; every result is written through a persistent
tab-separated cache, so re-translating the same corpus issues zero
requests.
"""

from __future__ import annotations

import io
import logging
import os
import time
from dataclasses import dataclass, field

import requests

from .data import Corpus, LabeledDoc, escape_field, tokenize, unescape_field
from .embeddings import _check_language
from .errors import FormatError, TranslationError, ValidationError

logger = logging.getLogger(__name__)

OOV_KEEP = "keep"
OOV_DROP = "drop"

REQUEST_TIMEOUT_SECONDS = 30.0


@dataclass(frozen=True)
class BilingualLexicon:
    """Source word -> ordered candidate target words (first = preferred)."""

    entries: dict[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        for word, targets in self.entries.items():
            if not targets:
                raise ValidationError("lexicon entry {!r} has no targets".format(word))

    @classmethod
    def from_pairs(cls, pairs) -> "BilingualLexicon":
        entries: dict[str, list[str]] = {}
        for src, tgt in pairs:
            bucket = entries.setdefault(src, [])
            if tgt not in bucket:
                bucket.append(tgt)
        return cls(entries={w: tuple(t) for w, t in entries.items()})

    @classmethod
    def from_file(cls, path: str) -> "BilingualLexicon":
        pairs = []
        with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
            for lineno, line in enumerate(fin, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                if "\t" not in line:
                    raise FormatError("{}:{}: missing tab separator".format(path, lineno))
                src, tgt = line.split("\t", 1)
                if not src or not tgt:
                    raise FormatError("{}:{}: empty word".format(path, lineno))
                pairs.append((src, tgt))
        return cls.from_pairs(pairs)

    def preferred(self, word: str) -> str | None:
        targets = self.entries.get(word)
        return targets[0] if targets else None


def translate_tokens_lexicon(tokens: list[str], lexicon: BilingualLexicon,
                             oov_policy: str = OOV_KEEP) -> list[str]:
    """Word-for-word mapping; OOV tokens kept verbatim or dropped."""
    if oov_policy not in (OOV_KEEP, OOV_DROP):
        raise ValidationError("unknown OOV policy {!r}".format(oov_policy))
    out = []
    for token in tokens:
        target = lexicon.preferred(token)
        if target is not None:
            out.append(target)
        elif oov_policy == OOV_KEEP:
            out.append(token)
    return out


class TranslationCache:
    """Persistent source->target text cache.

    One ``source<TAB>target`` line per entry; tabs, newlines, and
    backslashes in either field are escaped.  Entries are appended as
    they are inserted, so the cache survives across runs.
    """

    def __init__(self, path: str):
        self.path = path
        self._entries: dict[str, str] = {}
        if os.path.exists(path):
            with io.open(path, "r", encoding="utf-8", newline="\n") as fin:
                for lineno, line in enumerate(fin, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    if "\t" not in line:
                        raise FormatError(
                            "{}:{}: malformed cache line".format(path, lineno)
                        )
                    src, tgt = line.split("\t", 1)
                    self._entries[unescape_field(src)] = unescape_field(tgt)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, text: str) -> str | None:
        return self._entries.get(text)

    def put_many(self, pairs: list[tuple[str, str]]) -> None:
        fresh = [(s, t) for s, t in pairs if s not in self._entries]
        if not fresh:
            return
        with io.open(self.path, "a", encoding="utf-8", newline="\n") as fout:
            for src, tgt in fresh:
                self._entries[src] = tgt
                fout.write(escape_field(src))
                fout.write("\t")
                fout.write(escape_field(tgt))
                fout.write("\n")


@dataclass(frozen=True)
class ExternalEndpointConfig:
    url: str
    source_language: str
    target_language: str
    cache_path: str
    auth_env: str | None = None
    batch_size: int = 16
    max_retries: int = 3
    backoff_base_ms: float = 250.0

    def __post_init__(self) -> None:
        _check_language(self.source_language)
        _check_language(self.target_language)
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")
        if self.backoff_base_ms < 0:
            raise ValidationError("backoff_base_ms must be >= 0")


def _auth_headers(config: ExternalEndpointConfig) -> dict[str, str]:
    if not config.auth_env:
        return {}
    token = os.environ.get(config.auth_env)
    if token is None:
        raise ValidationError(
            "auth environment variable {!r} is not set".format(config.auth_env)
        )
    return {"Authorization": "Bearer {}".format(token)}


def _post_once(session, config: ExternalEndpointConfig, texts: list[str]):
    return session.post(
        config.url,
        json={"q": texts, "source": config.source_language,
              "target": config.target_language},
        headers=_auth_headers(config),
        timeout=REQUEST_TIMEOUT_SECONDS,
    )


def _post_with_retries(session, config: ExternalEndpointConfig,
                       texts: list[str]) -> list[str]:
    attempt = 0
    while True:
        retryable = False
        try:
            response = _post_once(session, config, texts)
            if response.status_code == 200:
                try:
                    payload = response.json()
                except ValueError as exc:
                    raise TranslationError("response is not JSON") from exc
                translations = payload.get("translations")
                if not isinstance(translations, list) or len(translations) != len(texts):
                    raise TranslationError(
                        "response translations do not match request length"
                    )
                return [str(t) for t in translations]
            if 500 <= response.status_code < 600:
                retryable = True
                reason = "server error {}".format(response.status_code)
            else:
                raise TranslationError(
                    "request failed with status {}".format(response.status_code)
                )
        except (requests.Timeout, requests.ConnectionError) as exc:
            retryable = True
            reason = "network failure: {}".format(exc)
        if not retryable or attempt >= config.max_retries:
            raise TranslationError(
                "translation failed after {} attempts ({})".format(attempt + 1, reason)
            )
        delay = config.backoff_base_ms * (2 ** attempt) / 1000.0
        time.sleep(delay)
        attempt += 1


class ExternalTranslator:
    """Cache-first client for an HTTP translation endpoint."""

    def __init__(self, config: ExternalEndpointConfig,
                 session: requests.Session | None = None):
        self.config = config
        self.cache = TranslationCache(config.cache_path)
        self.session = session if session is not None else requests.Session()
        self.requests_issued = 0

    @property
    def source_language(self) -> str:
        return self.config.source_language

    @property
    def target_language(self) -> str:
        return self.config.target_language

    def translate_texts(self, texts: list[str]) -> list[str]:
        missing = []
        for text in texts:
            if self.cache.get(text) is None and text not in missing:
                missing.append(text)
        for start in range(0, len(missing), self.config.batch_size):
            batch = missing[start:start + self.config.batch_size]
            self.requests_issued += 1
            translated = _post_with_retries(self.session, self.config, batch)
            self.cache.put_many(list(zip(batch, translated)))
        return [self.cache.get(text) for text in texts]


def external_translate_batch(texts: list[str], config: ExternalEndpointConfig,
                             session: requests.Session | None = None,
                             cache: TranslationCache | None = None) -> list[str]:
    """One wire round-trip (plus retries) for a batch of texts.

    An empty batch issues no request.  When a cache is supplied the
    results are written through it.
    """
    if not texts:
        return []
    session = session if session is not None else requests.Session()
    translated = _post_with_retries(session, config, list(texts))
    if cache is not None:
        cache.put_many(list(zip(texts, translated)))
    return translated


class LexiconTranslator:
    """Deterministic word-for-word corpus translator."""

    def __init__(self, lexicon: BilingualLexicon, source_language: str,
                 target_language: str, oov_policy: str = OOV_KEEP):
        _check_language(source_language)
        _check_language(target_language)
        if oov_policy not in (OOV_KEEP, OOV_DROP):
            raise ValidationError("unknown OOV policy {!r}".format(oov_policy))
        self.lexicon = lexicon
        self.source_language = source_language
        self.target_language = target_language
        self.oov_policy = oov_policy

    def translate_texts(self, texts: list[str]) -> list[str]:
        return [
            " ".join(translate_tokens_lexicon(tokenize(t), self.lexicon,
                                              self.oov_policy))
            for t in texts
        ]


def translate_corpus(corpus: Corpus, translator) -> Corpus:
    """Translate every document; labels and order are preserved."""
    if corpus.language != translator.source_language:
        raise ValidationError(
            "translator expects source {!r}, corpus is {!r}".format(
                translator.source_language, corpus.language
            )
        )
    texts = [doc.text for doc in corpus.docs]
    translated = translator.translate_texts(texts)
    if len(translated) != len(texts):
        raise TranslationError("translator returned a different document count")
    docs = tuple(
        LabeledDoc(label=doc.label, text=new_text)
        for doc, new_text in zip(corpus.docs, translated)
    )
    return Corpus(language=translator.target_language, docs=docs)

"""Run configuration files.

A run is described by one JSON object; every path inside it resolves
relative to the file's own directory.  Keys are checked strictly at
every level: an unknown key is rejected by name rather than ignored, so
typos fail loudly instead of silently falling back to defaults.

Top-level layout::

    {
      "dataset": "pair-en-fr",
      "seed": 7,
      "output_dir": "runs",
      "split_fractions": [0.7, 0.15, 0.15],
      "padding": {"kind": "gaussian", "sigma": 0.1},
      "embeddings": {"en": "emb/en.vec", "fr": "emb/fr.vec"},
      "corpora": {"en": "corpora/en.tsv", "fr": "corpora/fr.tsv"},
      "dictionaries": {"en-fr": {"train": "dict/train.tsv",
                                 "test": "dict/test.tsv"}},
      "translators": {"en-fr": {"kind": "lexicon", "path": "lex/en-fr.tsv"}},
      "alignment": {"method": "procrustes"},
      "model": {"kind": "cnn"},
      "training": {"batch_size": 32},
      "scenarios": [{"kind": "mono_original", "language": "en",
                     "test_language": "en"}],
      "comparisons": [["original(fr)", "co-aligned(en+fr|test=fr)"]]
    }

Language-pair keys are ``<source>-<target>`` with two-letter codes.
External translators use {"kind": "external", "url": ..., "cache": ...,
"auth_env": ..., "batch_size": ..., "max_retries": ...,
"backoff_base_ms": ...} instead of a lexicon path.
"""

from __future__ import annotations

import io
import json
import os
import re
from dataclasses import dataclass, replace

from .alignment import (
    AlignHyper,
    METHOD_PROCRUSTES,
    METHOD_RCSLS,
    SeedDictionary,
    fit_procrustes,
    fit_rcsls,
    read_dictionary,
)
from .data import Corpus, SplitSpec, read_corpus
from .embeddings import EmbeddingSpace, PAD_GAUSSIAN, PAD_ZERO, load_vec, normalize
from .errors import FormatError, ValidationError
from .experiment import (
    ExperimentConfig,
    ModelSettings,
    ScenarioSpec,
    required_map_pairs,
    required_translator_pairs,
)
from .translate import (
    BilingualLexicon,
    ExternalEndpointConfig,
    ExternalTranslator,
    LexiconTranslator,
    OOV_DROP,
    OOV_KEEP,
)
from .training import MONITORS, TrainConfig

PAIR_RE = re.compile(r"^([a-z]{2})-([a-z]{2})$")

TRANSLATOR_LEXICON = "lexicon"
TRANSLATOR_EXTERNAL = "external"


def _check_keys(obj, where: str, required=(), optional=()) -> dict:
    if not isinstance(obj, dict):
        raise FormatError("{} must be a JSON object".format(where))
    allowed = set(required) | set(optional)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise FormatError(
            "{}: unknown key(s) {}; allowed keys are {}".format(
                where,
                ", ".join(repr(k) for k in unknown),
                ", ".join(repr(k) for k in sorted(allowed)),
            )
        )
    missing = sorted(set(required) - set(obj))
    if missing:
        raise FormatError(
            "{}: missing required key(s) {}".format(
                where, ", ".join(repr(k) for k in missing)
            )
        )
    return obj


def _typed(obj, key: str, kind, where: str, default=None):
    if key not in obj:
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise FormatError("{}.{}: expected an integer".format(where, key))
    if not isinstance(value, kind):
        raise FormatError(
            "{}.{}: expected {}, got {}".format(
                where, key, kind.__name__, type(value).__name__
            )
        )
    return value


def _pair_key(key: str, where: str) -> tuple[str, str]:
    match = PAIR_RE.match(key)
    if not match:
        raise FormatError(
            "{}: language pair keys look like 'en-fr', got {!r}".format(where, key)
        )
    src, tgt = match.group(1), match.group(2)
    if src == tgt:
        raise FormatError("{}: pair {!r} maps a language to itself".format(where, key))
    return src, tgt


def _path_map(obj, where: str) -> dict[str, str]:
    if not isinstance(obj, dict) or not obj:
        raise FormatError("{} must be a non-empty object".format(where))
    out = {}
    for lang, path in obj.items():
        if not re.match(r"^[a-z]{2}$", lang):
            raise FormatError(
                "{}: keys are two-letter language codes, got {!r}".format(where, lang)
            )
        if not isinstance(path, str) or not path:
            raise FormatError("{}.{}: expected a path string".format(where, lang))
        out[lang] = path
    return out


@dataclass(frozen=True)
class TranslatorSpec:
    kind: str
    source: str
    target: str
    path: str | None = None
    oov_policy: str = OOV_KEEP
    url: str | None = None
    cache: str | None = None
    auth_env: str | None = None
    batch_size: int = 16
    max_retries: int = 3
    backoff_base_ms: float = 250.0


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    output_dir: str | None
    embeddings: dict[str, str]
    corpora: dict[str, str]
    dictionaries: dict[tuple[str, str], dict[str, str]]
    translators: dict[tuple[str, str], TranslatorSpec]
    align_method: str
    align_hyper: AlignHyper
    scenarios: tuple[ScenarioSpec, ...]
    comparisons: tuple[tuple[str, str], ...]


def _parse_model(obj, where: str) -> ModelSettings:
    _check_keys(obj, where, optional=(
        "kind", "max_len", "filters_per_channel", "dense_width",
        "conv_activation", "hidden1", "hidden2", "variant", "use_bias",
        "reduction",
    ))
    defaults = ModelSettings()
    try:
        return ModelSettings(
            kind=_typed(obj, "kind", str, where, defaults.kind),
            max_len=_typed(obj, "max_len", int, where, defaults.max_len),
            filters_per_channel=_typed(obj, "filters_per_channel", int, where,
                                       defaults.filters_per_channel),
            dense_width=_typed(obj, "dense_width", int, where, defaults.dense_width),
            conv_activation=_typed(obj, "conv_activation", str, where,
                                   defaults.conv_activation),
            hidden1=_typed(obj, "hidden1", int, where, defaults.hidden1),
            hidden2=_typed(obj, "hidden2", int, where, defaults.hidden2),
            variant=_typed(obj, "variant", str, where, defaults.variant),
            use_bias=_typed(obj, "use_bias", bool, where, defaults.use_bias),
            reduction=_typed(obj, "reduction", str, where, defaults.reduction),
        )
    except ValidationError as exc:
        raise FormatError("{}: {}".format(where, exc))


def _parse_training(obj, where: str, seed: int) -> TrainConfig:
    _check_keys(obj, where, optional=(
        "learning_rate", "batch_size", "dropout", "patience", "max_epochs",
        "monitor", "restore_best",
    ))
    defaults = TrainConfig()
    monitor = _typed(obj, "monitor", str, where, defaults.monitor)
    if monitor not in MONITORS:
        raise FormatError(
            "{}.monitor: {!r} is not one of {}".format(where, monitor,
                                                       ", ".join(MONITORS))
        )
    try:
        return TrainConfig(
            learning_rate=_typed(obj, "learning_rate", float, where,
                                 defaults.learning_rate),
            batch_size=_typed(obj, "batch_size", int, where, defaults.batch_size),
            dropout=_typed(obj, "dropout", float, where, defaults.dropout),
            patience=_typed(obj, "patience", int, where, defaults.patience),
            max_epochs=_typed(obj, "max_epochs", int, where, defaults.max_epochs),
            seed=seed,
            monitor=monitor,
            restore_best=_typed(obj, "restore_best", bool, where,
                                defaults.restore_best),
        )
    except ValidationError as exc:
        raise FormatError("{}: {}".format(where, exc))


def _parse_alignment(obj, where: str) -> tuple[str, AlignHyper]:
    _check_keys(obj, where, optional=(
        "method", "k_neighbors", "learning_rate", "epochs", "batch",
        "neighbor_pool",
    ))
    method = _typed(obj, "method", str, where, METHOD_PROCRUSTES)
    if method not in (METHOD_PROCRUSTES, METHOD_RCSLS):
        raise FormatError(
            "{}.method: {!r} is not one of {}, {}".format(
                where, method, METHOD_PROCRUSTES, METHOD_RCSLS
            )
        )
    defaults = AlignHyper()
    batch = obj.get("batch", defaults.batch)
    if batch is not None and (isinstance(batch, bool) or not isinstance(batch, int)):
        raise FormatError("{}.batch: expected an integer or null".format(where))
    try:
        hyper = AlignHyper(
            k_neighbors=_typed(obj, "k_neighbors", int, where, defaults.k_neighbors),
            learning_rate=_typed(obj, "learning_rate", float, where,
                                 defaults.learning_rate),
            epochs=_typed(obj, "epochs", int, where, defaults.epochs),
            batch=batch,
            neighbor_pool=_typed(obj, "neighbor_pool", int, where,
                                 defaults.neighbor_pool),
        )
    except ValidationError as exc:
        raise FormatError("{}: {}".format(where, exc))
    return method, hyper


def _parse_translator(obj, where: str, src: str, tgt: str) -> TranslatorSpec:
    kind = _typed(obj, "kind", str, where)
    if kind == TRANSLATOR_LEXICON:
        _check_keys(obj, where, required=("kind", "path"), optional=("oov",))
        oov = _typed(obj, "oov", str, where, OOV_KEEP)
        if oov not in (OOV_KEEP, OOV_DROP):
            raise FormatError(
                "{}.oov: {!r} is not one of {}, {}".format(where, oov, OOV_KEEP,
                                                           OOV_DROP)
            )
        return TranslatorSpec(kind=kind, source=src, target=tgt,
                              path=_typed(obj, "path", str, where), oov_policy=oov)
    if kind == TRANSLATOR_EXTERNAL:
        _check_keys(obj, where, required=("kind", "url", "cache"),
                    optional=("auth_env", "batch_size", "max_retries",
                              "backoff_base_ms"))
        return TranslatorSpec(
            kind=kind,
            source=src,
            target=tgt,
            url=_typed(obj, "url", str, where),
            cache=_typed(obj, "cache", str, where),
            auth_env=_typed(obj, "auth_env", str, where),
            batch_size=_typed(obj, "batch_size", int, where, 16),
            max_retries=_typed(obj, "max_retries", int, where, 3),
            backoff_base_ms=_typed(obj, "backoff_base_ms", float, where, 250.0),
        )
    raise FormatError(
        "{}.kind: {!r} is not one of {}, {}".format(
            where, kind, TRANSLATOR_LEXICON, TRANSLATOR_EXTERNAL
        )
    )


def _parse_scenario(obj, index: int) -> ScenarioSpec:
    where = "scenarios[{}]".format(index)
    _check_keys(obj, where, required=("kind", "test_language"),
                optional=("language", "target_language", "model_kind", "name"))
    try:
        return ScenarioSpec(
            kind=_typed(obj, "kind", str, where),
            test_language=_typed(obj, "test_language", str, where),
            language=_typed(obj, "language", str, where),
            target_language=_typed(obj, "target_language", str, where),
            model_kind=_typed(obj, "model_kind", str, where),
            name=_typed(obj, "name", str, where),
        )
    except ValidationError as exc:
        raise FormatError("{}: {}".format(where, exc))


def parse_config(obj: dict, base_dir: str) -> RunConfig:
    """Validate a decoded config object and resolve its paths."""
    _check_keys(
        obj, "config",
        required=("embeddings", "corpora", "scenarios"),
        optional=("dataset", "seed", "output_dir", "split_fractions", "padding",
                  "dictionaries", "translators", "alignment", "model",
                  "training", "comparisons"),
    )

    def resolve(path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(base_dir, path)

    seed = _typed(obj, "seed", int, "config", 0)
    dataset = _typed(obj, "dataset", str, "config", "default")
    output_dir = _typed(obj, "output_dir", str, "config")

    fractions = obj.get("split_fractions", [0.70, 0.15, 0.15])
    if (not isinstance(fractions, list) or len(fractions) != 3
            or not all(isinstance(f, (int, float)) and not isinstance(f, bool)
                       for f in fractions)):
        raise FormatError("config.split_fractions must be three numbers")
    try:
        SplitSpec(fractions=tuple(float(f) for f in fractions))
    except ValidationError as exc:
        raise FormatError("config.split_fractions: {}".format(exc))

    padding = _check_keys(obj.get("padding", {}), "config.padding",
                          optional=("kind", "sigma"))
    pad_kind = _typed(padding, "kind", str, "config.padding", PAD_GAUSSIAN)
    if pad_kind not in (PAD_GAUSSIAN, PAD_ZERO):
        raise FormatError(
            "config.padding.kind: {!r} is not one of {}, {}".format(
                pad_kind, PAD_GAUSSIAN, PAD_ZERO
            )
        )
    pad_sigma = _typed(padding, "sigma", float, "config.padding", 0.1)

    model = _parse_model(obj.get("model", {}), "config.model")
    training = _parse_training(obj.get("training", {}), "config.training", seed)
    align_method, align_hyper = _parse_alignment(obj.get("alignment", {}),
                                                 "config.alignment")

    embeddings = {lang: resolve(p)
                  for lang, p in _path_map(obj["embeddings"], "config.embeddings").items()}
    corpora = {lang: resolve(p)
               for lang, p in _path_map(obj["corpora"], "config.corpora").items()}

    dictionaries: dict[tuple[str, str], dict[str, str]] = {}
    for key, entry in (obj.get("dictionaries") or {}).items():
        pair = _pair_key(key, "config.dictionaries")
        where = "config.dictionaries.{}".format(key)
        _check_keys(entry, where, required=("train",), optional=("test",))
        dictionaries[pair] = {
            name: resolve(_typed(entry, name, str, where))
            for name in ("train", "test") if name in entry
        }

    translators: dict[tuple[str, str], TranslatorSpec] = {}
    for key, entry in (obj.get("translators") or {}).items():
        pair = _pair_key(key, "config.translators")
        where = "config.translators.{}".format(key)
        spec = _parse_translator(_check_keys(entry, where, required=("kind",),
                                             optional=("path", "oov", "url",
                                                       "cache", "auth_env",
                                                       "batch_size", "max_retries",
                                                       "backoff_base_ms")),
                                 where, *pair)
        if spec.path is not None:
            spec = replace(spec, path=resolve(spec.path))
        if spec.cache is not None:
            spec = replace(spec, cache=resolve(spec.cache))
        translators[pair] = spec

    raw_scenarios = obj["scenarios"]
    if not isinstance(raw_scenarios, list) or not raw_scenarios:
        raise FormatError("config.scenarios must be a non-empty list")
    scenarios = tuple(_parse_scenario(s, i) for i, s in enumerate(raw_scenarios))

    comparisons = []
    for i, entry in enumerate(obj.get("comparisons") or []):
        if (not isinstance(entry, list) or len(entry) != 2
                or not all(isinstance(v, str) for v in entry)):
            raise FormatError(
                "config.comparisons[{}] must be [baseline, variant]".format(i)
            )
        comparisons.append((entry[0], entry[1]))

    for lang in sorted({l for s in scenarios for l in s.languages}):
        if lang not in corpora:
            raise FormatError(
                "config.corpora: scenarios use language {!r} but no corpus is given".format(lang)
            )
        if lang not in embeddings:
            raise FormatError(
                "config.embeddings: scenarios use language {!r} but no embeddings are given".format(lang)
            )
    for pair in sorted(required_map_pairs(scenarios)):
        if pair not in dictionaries:
            raise FormatError(
                "config.dictionaries: aligned scenarios need a '{}-{}' entry".format(*pair)
            )
    for pair in sorted(required_translator_pairs(scenarios)):
        if pair not in translators:
            raise FormatError(
                "config.translators: translated scenarios need a '{}-{}' entry".format(*pair)
            )

    try:
        experiment = ExperimentConfig(
            seed=seed,
            dataset=dataset,
            split_fractions=tuple(float(f) for f in fractions),
            pad_kind=pad_kind,
            pad_sigma=pad_sigma,
            model=model,
            train=training,
        )
    except ValidationError as exc:
        raise FormatError("config: {}".format(exc))
    return RunConfig(
        experiment=experiment,
        output_dir=resolve(output_dir) if output_dir else None,
        embeddings=embeddings,
        corpora=corpora,
        dictionaries=dictionaries,
        translators=translators,
        align_method=align_method,
        align_hyper=align_hyper,
        scenarios=scenarios,
        comparisons=tuple(comparisons),
    )


def load_config(path: str) -> RunConfig:
    with io.open(path, "r", encoding="utf-8") as fin:
        try:
            obj = json.load(fin)
        except json.JSONDecodeError as exc:
            raise FormatError("{}: invalid JSON ({})".format(path, exc))
    return parse_config(obj, os.path.dirname(os.path.abspath(path)))


def build_translator(spec: TranslatorSpec):
    if spec.kind == TRANSLATOR_LEXICON:
        return LexiconTranslator(BilingualLexicon.from_file(spec.path),
                                 spec.source, spec.target, spec.oov_policy)
    endpoint = ExternalEndpointConfig(
        url=spec.url,
        source_language=spec.source,
        target_language=spec.target,
        cache_path=spec.cache,
        auth_env=spec.auth_env,
        batch_size=spec.batch_size,
        max_retries=spec.max_retries,
        backoff_base_ms=spec.backoff_base_ms,
    )
    return ExternalTranslator(endpoint)


@dataclass
class LoadedBundle:
    """Every artifact a run needs, loaded and validated."""

    run: RunConfig
    corpora: dict[str, Corpus]
    spaces: dict[str, EmbeddingSpace]
    translators: dict[tuple[str, str], object]
    train_dicts: dict[tuple[str, str], SeedDictionary]
    test_dicts: dict[tuple[str, str], SeedDictionary]


def load_bundle(run: RunConfig) -> LoadedBundle:
    """Read corpora, embeddings (normalized), lexicons, and dictionaries."""
    corpora = {lang: read_corpus(path, lang) for lang, path in run.corpora.items()}
    spaces = {lang: normalize(load_vec(path, lang))
              for lang, path in run.embeddings.items()}
    translators = {pair: build_translator(spec)
                   for pair, spec in run.translators.items()}
    train_dicts = {}
    test_dicts = {}
    for pair, entry in run.dictionaries.items():
        train_dicts[pair] = read_dictionary(entry["train"])
        if "test" in entry:
            test_dicts[pair] = read_dictionary(entry["test"])
    return LoadedBundle(run=run, corpora=corpora, spaces=spaces,
                        translators=translators, train_dicts=train_dicts,
                        test_dicts=test_dicts)


def fit_required_maps(bundle: LoadedBundle) -> dict[tuple[str, str], "object"]:
    """Fit one alignment map per (source, target) pair the scenarios use."""
    run = bundle.run
    maps = {}
    for pair in sorted(required_map_pairs(run.scenarios)):
        src_lang, tgt_lang = pair
        if src_lang not in bundle.spaces or tgt_lang not in bundle.spaces:
            raise ValidationError(
                "alignment {}->{} needs embeddings for both languages".format(*pair)
            )
        dictionary = bundle.train_dicts[pair]
        src = bundle.spaces[src_lang]
        tgt = bundle.spaces[tgt_lang]
        if run.align_method == METHOD_PROCRUSTES:
            maps[pair] = fit_procrustes(src, tgt, dictionary)
        else:
            maps[pair] = fit_rcsls(src, tgt, dictionary, hyper=run.align_hyper)
    return maps

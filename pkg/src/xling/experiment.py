"""The monolingual/bilingual scenario matrix.

Five scenario kinds cover every combination of where the training data
comes from and which representation space it lives in:

  mono_original          train and test one language in its own space
  mono_translated        translate a language's documents into another
                         language and work in the target space
  mono_aligned           represent one language in a shared space (the
                         mapping target's space; the target language
                         itself passes through unchanged)
  bilingual_translated   co-train on the target language plus the other
                         language translated into it
  bilingual_aligned      co-train on both languages in the shared space

Instantiating the five kinds over both languages of a pair enumerates
the full eight-model matrix (six monolingual variants plus the two
co-trained models).

Every stochastic choice derives from the experiment root seed, so a run
with the same config and seed is bit-reproducible; run records are
serialized with a fixed field order and a zeroed wall_seconds field so
identical runs produce byte-identical JSON.  Measured wall time is kept
on the in-memory record for console reporting.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import time
from dataclasses import dataclass, replace

import numpy as np

from .alignment import AlignHyper, AlignmentMap, apply_map
from .data import (
    Corpus,
    LabelEncoder,
    SplitSpec,
    encode_labels,
    stratified_split,
    tokenize,
    truncate_tokens,
)
from .embeddings import EmbeddingSpace, PaddingPolicy, embed_sequence, normalize
from .errors import FormatError, ScenarioError, ValidationError
from .metrics import MetricsReport
from .neural.models import (
    CNNSpec,
    MODEL_CNN,
    MODEL_KINDS,
    MODEL_RNN,
    REDUCTION_FLATTEN,
    RNNSpec,
    init_params,
)
from .seeding import derive_seed
from .training import EpochStats, TrainConfig, evaluate, train
from .translate import translate_corpus

logger = logging.getLogger(__name__)

KIND_MONO_ORIGINAL = "mono_original"
KIND_MONO_TRANSLATED = "mono_translated"
KIND_MONO_ALIGNED = "mono_aligned"
KIND_BI_TRANSLATED = "bilingual_translated"
KIND_BI_ALIGNED = "bilingual_aligned"
SCENARIO_KINDS = (
    KIND_MONO_ORIGINAL,
    KIND_MONO_TRANSLATED,
    KIND_MONO_ALIGNED,
    KIND_BI_TRANSLATED,
    KIND_BI_ALIGNED,
)


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the scenario matrix.

    language is the mono/transformed language; target_language is the
    translation target or the shared-space anchor; test_language picks
    whose held-out documents are evaluated (always represented the same
    way the training data is).
    """

    kind: str
    test_language: str
    language: str | None = None
    target_language: str | None = None
    model_kind: str | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValidationError("unknown scenario kind {!r}".format(self.kind))
        if self.model_kind is not None and self.model_kind not in MODEL_KINDS:
            raise ValidationError("unknown model kind {!r}".format(self.model_kind))
        if self.kind == KIND_MONO_ORIGINAL:
            if not self.language:
                raise ValidationError("mono_original needs 'language'")
            if self.test_language != self.language:
                raise ValidationError("mono_original tests its own language")
        elif self.kind == KIND_MONO_TRANSLATED:
            if not self.language or not self.target_language:
                raise ValidationError(
                    "mono_translated needs 'language' and 'target_language'"
                )
            if self.language == self.target_language:
                raise ValidationError("translation target must differ")
            if self.test_language != self.language:
                raise ValidationError("mono_translated tests its own language")
        elif self.kind == KIND_MONO_ALIGNED:
            if not self.language or not self.target_language:
                raise ValidationError(
                    "mono_aligned needs 'language' and 'target_language'"
                )
            if self.test_language != self.language:
                raise ValidationError("mono_aligned tests its own language")
        else:
            if not self.language or not self.target_language:
                raise ValidationError(
                    "bilingual scenarios need 'language' and 'target_language'"
                )
            if self.language == self.target_language:
                raise ValidationError("bilingual scenarios need two languages")
            if self.test_language not in (self.language, self.target_language):
                raise ValidationError(
                    "test_language must be one of the scenario languages"
                )

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == KIND_MONO_ORIGINAL:
            return "original({})".format(self.language)
        if self.kind == KIND_MONO_TRANSLATED:
            return "translated({}->{})".format(self.language, self.target_language)
        if self.kind == KIND_MONO_ALIGNED:
            return "aligned({}@{})".format(self.language, self.target_language)
        if self.kind == KIND_BI_TRANSLATED:
            return "co-translated({}+{}|test={})".format(
                self.language, self.target_language, self.test_language
            )
        return "co-aligned({}+{}|test={})".format(
            self.language, self.target_language, self.test_language
        )

    @property
    def languages(self) -> tuple[str, ...]:
        if self.kind == KIND_MONO_ORIGINAL:
            return (self.language,)
        return (self.language, self.target_language)


@dataclass(frozen=True)
class ModelSettings:
    """Shape hyperparameters shared by every scenario of a run."""

    kind: str = MODEL_CNN
    max_len: int = 100
    filters_per_channel: int = 100
    dense_width: int = 128
    conv_activation: str = "relu"
    hidden1: int = 128
    hidden2: int = 128
    variant: str = "paper_exact"
    use_bias: bool = False
    reduction: str = "final_hidden"

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValidationError("unknown model kind {!r}".format(self.kind))
        if self.max_len < 5:
            raise ValidationError("max_len must be >= 5 (largest filter height)")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: str = "default"
    split_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
    pad_kind: str = "gaussian"
    pad_sigma: float = 0.1
    model: ModelSettings = ModelSettings()
    train: TrainConfig = TrainConfig()


@dataclass(eq=False)
class RunRecord:
    scenario: str
    model_kind: str
    dataset: str
    seed: int
    config: dict
    history: list[EpochStats]
    metrics: MetricsReport
    stopped_epoch: int
    wall_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "model_kind": self.model_kind,
            "dataset": self.dataset,
            "seed": self.seed,
            "config": self.config,
            "history": [
                {"epoch": h.epoch, "train_loss": h.train_loss,
                 "val_loss": h.val_loss, "monitor": h.monitor}
                for h in self.history
            ],
            "metrics": self.metrics.to_json_dict(),
            "stopped_epoch": self.stopped_epoch,
            # zeroed in the serialized form so identical runs are
            # byte-identical; the measured value stays on the object
            "wall_seconds": 0.0,
        }


def record_filename(record: RunRecord) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]+", "_", record.scenario)
    return "{}__{}.json".format(slug, record.model_kind)


def write_record(record: RunRecord, directory: str) -> str:
    path = os.path.join(directory, record_filename(record))
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        json.dump(record.to_json_dict(), fout, indent=2, ensure_ascii=False)
        fout.write("\n")
    return path


def read_record(path: str) -> RunRecord:
    with io.open(path, "r", encoding="utf-8") as fin:
        try:
            payload = json.load(fin)
        except json.JSONDecodeError as exc:
            raise FormatError("{}: {}".format(path, exc))
    return record_from_dict(payload, where=path)


def record_from_dict(payload: dict, where: str = "record") -> RunRecord:
    required = {"scenario", "model_kind", "dataset", "seed", "config",
                "history", "metrics", "stopped_epoch", "wall_seconds"}
    if not isinstance(payload, dict) or set(payload) != required:
        raise FormatError("{}: not a run record".format(where))
    metrics = payload["metrics"]
    try:
        report = MetricsReport(
            weighted_precision=float(metrics["weighted_precision"]),
            weighted_recall=float(metrics["weighted_recall"]),
            weighted_f1=float(metrics["weighted_f1"]),
            accuracy=float(metrics["accuracy"]),
            mean_average_precision=float(metrics["map"]),
            per_class=metrics["per_class"],
            confusion=np.array(metrics["confusion"], dtype=np.int64),
        )
        history = [
            EpochStats(epoch=int(h["epoch"]), train_loss=float(h["train_loss"]),
                       val_loss=float(h["val_loss"]), monitor=float(h["monitor"]))
            for h in payload["history"]
        ]
        return RunRecord(
            scenario=str(payload["scenario"]),
            model_kind=str(payload["model_kind"]),
            dataset=str(payload["dataset"]),
            seed=int(payload["seed"]),
            config=dict(payload["config"]),
            history=history,
            metrics=report,
            stopped_epoch=int(payload["stopped_epoch"]),
            wall_seconds=float(payload["wall_seconds"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError("{}: malformed run record ({})".format(where, exc))


def _config_dict(cfg: ExperimentConfig, model_kind: str) -> dict:
    return {
        "dataset": cfg.dataset,
        "split_fractions": list(cfg.split_fractions),
        "pad_kind": cfg.pad_kind,
        "pad_sigma": cfg.pad_sigma,
        "model_kind": model_kind,
        "max_len": cfg.model.max_len,
        "filters_per_channel": cfg.model.filters_per_channel,
        "dense_width": cfg.model.dense_width,
        "conv_activation": cfg.model.conv_activation,
        "hidden1": cfg.model.hidden1,
        "hidden2": cfg.model.hidden2,
        "variant": cfg.model.variant,
        "use_bias": cfg.model.use_bias,
        "reduction": cfg.model.reduction,
        "learning_rate": cfg.train.learning_rate,
        "batch_size": cfg.train.batch_size,
        "dropout": cfg.train.dropout,
        "patience": cfg.train.patience,
        "max_epochs": cfg.train.max_epochs,
        "monitor": cfg.train.monitor,
        "restore_best": cfg.train.restore_best,
    }


def split_language(corpus: Corpus, cfg: ExperimentConfig) -> tuple[Corpus, Corpus, Corpus]:
    """The canonical per-language split every scenario of a run shares."""
    spec = SplitSpec(fractions=cfg.split_fractions,
                     seed=derive_seed(cfg.seed, "split:" + corpus.language))
    return stratified_split(corpus, spec)


def _representation(language: str, spec: ScenarioSpec, spaces, maps):
    """Space used to embed documents of `language` in this scenario.

    For aligned kinds the shared space is the target language's own
    space; other languages are mapped into it and re-normalized.
    """
    if spec.kind in (KIND_MONO_ALIGNED, KIND_BI_ALIGNED) and language != spec.target_language:
        key = (language, spec.target_language)
        if key not in maps:
            raise ScenarioError(
                "scenario {!r} needs an alignment map {}->{}".format(
                    spec.label, *key
                )
            )
        return normalize(apply_map(spaces[language], maps[key]))
    return spaces[language]


def _embed_part(docs, space: EmbeddingSpace, encoder: LabelEncoder,
                cfg: ExperimentConfig, context: str):
    policy = PaddingPolicy(kind=cfg.pad_kind, sigma=cfg.pad_sigma, seed=0)
    inputs = np.empty((len(docs), cfg.model.max_len, space.dim), dtype=np.float64)
    labels = np.empty(len(docs), dtype=np.int64)
    for i, doc in enumerate(docs):
        tokens = truncate_tokens(tokenize(doc.text), cfg.model.max_len)
        seed = derive_seed(cfg.seed, "pad:" + context, i)
        inputs[i], _ = embed_sequence(space, tokens, cfg.model.max_len, policy, seed)
        labels[i] = encoder.encode(doc.label)
    return inputs, labels


def _translate_docs(docs, language: str, target: str, translators, spec_label: str):
    key = (language, target)
    if key not in translators:
        raise ScenarioError(
            "scenario {!r} needs a translator {}->{}".format(spec_label, *key)
        )
    corpus = Corpus(language=language, docs=tuple(docs))
    return translate_corpus(corpus, translators[key]).docs


def _model_spec(model_kind: str, cfg: ExperimentConfig, embed_dim: int,
                num_classes: int):
    if model_kind == MODEL_CNN:
        return CNNSpec(
            embed_dim=embed_dim,
            num_classes=num_classes,
            filters_per_channel=cfg.model.filters_per_channel,
            dense_width=cfg.model.dense_width,
            conv_activation=cfg.model.conv_activation,
            dropout_rate=cfg.train.dropout,
        )
    return RNNSpec(
        embed_dim=embed_dim,
        num_classes=num_classes,
        hidden1=cfg.model.hidden1,
        hidden2=cfg.model.hidden2,
        dense_width=cfg.model.dense_width,
        variant=cfg.model.variant,
        use_bias=cfg.model.use_bias,
        reduction=cfg.model.reduction,
        input_len=cfg.model.max_len if cfg.model.reduction == REDUCTION_FLATTEN else None,
        dropout_rate=cfg.train.dropout,
    )


@dataclass
class ScenarioData:
    """Embedded datasets for one scenario, ready to train on."""

    label: str
    model_kind: str
    encoder: LabelEncoder
    embed_dim: int
    train: tuple[np.ndarray, np.ndarray]
    val: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]


def assemble_scenario(spec: ScenarioSpec, corpora: dict, spaces: dict,
                      maps: dict, translators: dict,
                      cfg: ExperimentConfig) -> ScenarioData:
    """Build a scenario's train/val/test arrays.

    corpora and spaces are keyed by language code, maps and translators
    by (source, target) tuples.  Raises ScenarioError when a required
    ingredient is missing.
    """
    model_kind = spec.model_kind or cfg.model.kind
    for lang in spec.languages:
        if lang not in corpora:
            raise ScenarioError("scenario {!r} needs corpus {!r}".format(spec.label, lang))
        if lang not in spaces:
            raise ScenarioError("scenario {!r} needs embeddings {!r}".format(spec.label, lang))
    encoder = encode_labels([corpora[lang] for lang in spec.languages])
    splits = {lang: split_language(corpora[lang], cfg) for lang in spec.languages}

    label = spec.label
    if spec.kind == KIND_MONO_ORIGINAL:
        space = spaces[spec.language]
        tr, va, te = splits[spec.language]
        train_parts = [(tr.docs, space)]
        val_parts = [(va.docs, space)]
        test_part = (te.docs, space)
    elif spec.kind == KIND_MONO_TRANSLATED:
        space = spaces[spec.target_language]
        translated = {
            name: _translate_docs(docs.docs, spec.language, spec.target_language,
                                  translators, label)
            for name, docs in zip(("train", "val", "test"), splits[spec.language])
        }
        train_parts = [(translated["train"], space)]
        val_parts = [(translated["val"], space)]
        test_part = (translated["test"], space)
    elif spec.kind == KIND_MONO_ALIGNED:
        space = _representation(spec.language, spec, spaces, maps)
        tr, va, te = splits[spec.language]
        train_parts = [(tr.docs, space)]
        val_parts = [(va.docs, space)]
        test_part = (te.docs, space)
    elif spec.kind == KIND_BI_TRANSLATED:
        native = spec.target_language
        other = spec.language
        space = spaces[native]
        tr_n, va_n, te_n = splits[native]
        tr_o, va_o, te_o = splits[other]
        tr_t = _translate_docs(tr_o.docs, other, native, translators, label)
        va_t = _translate_docs(va_o.docs, other, native, translators, label)
        train_parts = [(tr_n.docs, space), (tr_t, space)]
        val_parts = [(va_n.docs, space), (va_t, space)]
        if spec.test_language == native:
            test_part = (te_n.docs, space)
        else:
            te_t = _translate_docs(te_o.docs, other, native, translators, label)
            test_part = (te_t, space)
    else:  # bilingual_aligned
        native = spec.target_language
        other = spec.language
        space_native = spaces[native]
        space_other = _representation(other, spec, spaces, maps)
        tr_n, va_n, te_n = splits[native]
        tr_o, va_o, te_o = splits[other]
        train_parts = [(tr_n.docs, space_native), (tr_o.docs, space_other)]
        val_parts = [(va_n.docs, space_native), (va_o.docs, space_other)]
        if spec.test_language == native:
            test_part = (te_n.docs, space_native)
        else:
            test_part = (te_o.docs, space_other)

    dims = {space.dim for _, space in train_parts + val_parts + [test_part]}
    if len(dims) != 1:
        raise ScenarioError(
            "scenario {!r} mixes embedding dimensions {}".format(label, sorted(dims))
        )
    embed_dim = dims.pop()

    def build(parts, part_name):
        arrays, labels = [], []
        for j, (docs, space_) in enumerate(parts):
            context = "{}:{}:{}".format(label, part_name, j)
            x, y = _embed_part(docs, space_, encoder, cfg, context)
            arrays.append(x)
            labels.append(y)
        return np.concatenate(arrays, axis=0), np.concatenate(labels, axis=0)

    return ScenarioData(
        label=label,
        model_kind=model_kind,
        encoder=encoder,
        embed_dim=embed_dim,
        train=build(train_parts, "train"),
        val=build(val_parts, "val"),
        test=build([test_part], "test"),
    )


def scenario_seed(cfg: ExperimentConfig, label: str) -> int:
    return derive_seed(cfg.seed, "scenario:" + label)


def run_scenario(spec: ScenarioSpec, corpora: dict, spaces: dict, maps: dict,
                 translators: dict, cfg: ExperimentConfig,
                 params_out: list | None = None) -> RunRecord:
    """Assemble one scenario's datasets, train, evaluate, and record.

    When params_out is given the trained parameters are appended to it
    (for callers that want to checkpoint the model afterwards).
    """
    started = time.monotonic()
    data = assemble_scenario(spec, corpora, spaces, maps, translators, cfg)
    model_spec = _model_spec(data.model_kind, cfg, data.embed_dim,
                             data.encoder.num_classes)
    seed = scenario_seed(cfg, data.label)
    params = init_params(data.model_kind, model_spec, derive_seed(seed, "init"))
    train_cfg = replace(cfg.train, seed=derive_seed(seed, "train"))
    params, history = train(data.model_kind, params, data.train, data.val, train_cfg)
    if params_out is not None:
        params_out.append(params)
    report = evaluate(params, data.model_kind, data.test, data.encoder)
    return RunRecord(
        scenario=data.label,
        model_kind=data.model_kind,
        dataset=cfg.dataset,
        seed=seed,
        config=_config_dict(cfg, data.model_kind),
        history=history,
        metrics=report,
        stopped_epoch=len(history),
        wall_seconds=time.monotonic() - started,
    )


def required_map_pairs(scenarios) -> set[tuple[str, str]]:
    """(source, target) alignment maps the scenario list depends on."""
    need = set()
    for spec in scenarios:
        if spec.kind in (KIND_MONO_ALIGNED, KIND_BI_ALIGNED):
            if spec.language != spec.target_language:
                need.add((spec.language, spec.target_language))
    return need


def required_translator_pairs(scenarios) -> set[tuple[str, str]]:
    need = set()
    for spec in scenarios:
        if spec.kind in (KIND_MONO_TRANSLATED, KIND_BI_TRANSLATED):
            need.add((spec.language, spec.target_language))
    return need


def run_experiment(scenarios, corpora, spaces, maps, translators,
                   cfg: ExperimentConfig, output_dir: str | None = None,
                   jobs: int = 1):
    """Run every scenario, collecting failures instead of aborting.

    Returns (records, failures) where failures is a list of
    (scenario label, message) pairs.  Records are returned in scenario
    order regardless of jobs, and written to output_dir when given.
    """
    if jobs < 1:
        raise ValidationError("jobs must be >= 1")
    seen = set()
    for spec in scenarios:
        key = (spec.label, spec.model_kind or cfg.model.kind)
        if key in seen:
            raise ValidationError(
                "duplicate scenario {!r} with model {!r}".format(*key)
            )
        seen.add(key)

    def one(spec):
        return run_scenario(spec, corpora, spaces, maps, translators, cfg)

    results: list[RunRecord | None] = [None] * len(scenarios)
    failures: list[tuple[str, str]] = []
    if jobs == 1 or len(scenarios) <= 1:
        for i, spec in enumerate(scenarios):
            try:
                results[i] = one(spec)
            except Exception as exc:
                logger.warning("scenario %r failed: %s", spec.label, exc)
                failures.append((spec.label, str(exc)))
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [(i, spec, pool.submit(one, spec))
                       for i, spec in enumerate(scenarios)]
            for i, spec, future in futures:
                try:
                    results[i] = future.result()
                except Exception as exc:
                    logger.warning("scenario %r failed: %s", spec.label, exc)
                    failures.append((spec.label, str(exc)))
    records = [r for r in results if r is not None]
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        for record in records:
            write_record(record, output_dir)
    return records, failures


# ---------------------------------------------------------------------------
# comparisons


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[str, ...]
    columns: tuple[tuple[str, str], ...]  # (model_kind, dataset)
    cells: dict[tuple[str, tuple[str, str]], float]
    verdicts: tuple[dict, ...]


def compare_runs(records: list[RunRecord],
                 comparisons: list[tuple[str, str]] | None = None) -> ComparisonTable:
    """Weighted-F1 table: scenario rows, (model, dataset) columns.

    Each declared (baseline, variant) pair receives a verdict per column
    where both scenarios are present: improved when the F1 difference is
    positive, degraded when negative, unchanged at zero.
    """
    if not records:
        raise ValidationError("no run records to compare")
    rows: list[str] = []
    columns: list[tuple[str, str]] = []
    cells: dict[tuple[str, tuple[str, str]], float] = {}
    for record in records:
        col = (record.model_kind, record.dataset)
        key = (record.scenario, col)
        if key in cells:
            raise ValidationError(
                "duplicate cell for scenario {!r}, model {!r}, dataset {!r}".format(
                    record.scenario, record.model_kind, record.dataset
                )
            )
        if record.scenario not in rows:
            rows.append(record.scenario)
        if col not in columns:
            columns.append(col)
        cells[key] = record.metrics.weighted_f1
    verdicts = []
    for baseline, variant in comparisons or []:
        if baseline not in rows or variant not in rows:
            raise ValidationError(
                "comparison references unknown scenario {!r}".format(
                    baseline if baseline not in rows else variant
                )
            )
        for col in columns:
            b = cells.get((baseline, col))
            v = cells.get((variant, col))
            if b is None or v is None:
                continue
            delta = v - b
            verdict = "unchanged"
            if delta > 0:
                verdict = "improved"
            elif delta < 0:
                verdict = "degraded"
            verdicts.append({
                "baseline": baseline,
                "variant": variant,
                "model_kind": col[0],
                "dataset": col[1],
                "f1_delta": delta,
                "verdict": verdict,
            })
    return ComparisonTable(rows=tuple(rows), columns=tuple(columns),
                           cells=dict(cells), verdicts=tuple(verdicts))


def comparison_to_csv(table: ComparisonTable, path: str) -> None:
    with io.open(path, "w", encoding="utf-8", newline="") as fout:
        writer = csv.writer(fout, lineterminator="\n")
        writer.writerow(
            ["scenario"] + ["f1[{}/{}]".format(m, d) for m, d in table.columns]
        )
        for row in table.rows:
            out = [row]
            for col in table.columns:
                value = table.cells.get((row, col))
                out.append("" if value is None else repr(float(value)))
            writer.writerow(out)


def render_comparison(table: ComparisonTable) -> str:
    headers = ["scenario"] + ["f1[{}/{}]".format(m, d) for m, d in table.columns]
    body = []
    for row in table.rows:
        line = [row]
        for col in table.columns:
            value = table.cells.get((row, col))
            line.append("-" if value is None else "{:.4f}".format(value))
        body.append(line)
    widths = [max(len(str(r[i])) for r in [headers] + body) for i in range(len(headers))]
    lines = ["  ".join(str(v).ljust(w) for v, w in zip(r, widths))
             for r in [headers] + body]
    for verdict in table.verdicts:
        lines.append(
            "{} vs {} [{}/{}]: {} ({:+.4f})".format(
                verdict["variant"], verdict["baseline"], verdict["model_kind"],
                verdict["dataset"], verdict["verdict"], verdict["f1_delta"]
            )
        )
    return "\n".join(lines)

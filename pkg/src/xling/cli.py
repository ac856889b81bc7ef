"""Command-line interface.

Exit codes: 0 success, 1 I/O or endpoint failure, 2 malformed input or
invalid configuration, 3 one or more scenarios failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .alignment import (
    AlignHyper,
    METHOD_PROCRUSTES,
    METHOD_RCSLS,
    apply_map,
    eval_alignment,
    fit_procrustes,
    fit_rcsls,
    load_map,
    read_dictionary,
    save_map,
)
from .config import RunConfig, fit_required_maps, load_bundle, load_config
from .data import SplitSpec, read_corpus, stratified_split, tokenize, write_corpus
from .embeddings import load_vec, normalize, save_vec
from .errors import FormatError, ScenarioError, TranslationError, ValidationError
from .experiment import (
    assemble_scenario,
    compare_runs,
    comparison_to_csv,
    read_record,
    render_comparison,
    required_map_pairs,
    run_experiment,
    run_scenario,
    write_record,
)
from .neural.checkpoint import load_params, save_params
from .training import evaluate
from .translate import (
    ExternalEndpointConfig,
    ExternalTranslator,
    OOV_DROP,
    OOV_KEEP,
    translate_corpus,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_SCENARIO = 3


def _cmd_embed_info(args) -> int:
    space = load_vec(args.embeddings, args.language)
    norms = np.linalg.norm(space.matrix, axis=1)
    print("words {}".format(len(space)))
    print("dim {}".format(space.dim))
    print("min_norm {:.6f}".format(float(norms.min())))
    print("mean_norm {:.6f}".format(float(norms.mean())))
    print("max_norm {:.6f}".format(float(norms.max())))
    return EXIT_OK


def _cmd_embed_normalize(args) -> int:
    space = normalize(load_vec(args.embeddings, args.language))
    save_vec(space, args.out)
    print("wrote {} ({} words, dim {})".format(args.out, len(space), space.dim))
    return EXIT_OK


def _align_hyper(args) -> AlignHyper:
    return AlignHyper(
        k_neighbors=args.k_neighbors,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch=args.batch,
        neighbor_pool=args.neighbor_pool,
    )


def _cmd_align_fit(args) -> int:
    src = normalize(load_vec(args.source_embeddings, args.source_language))
    tgt = normalize(load_vec(args.target_embeddings, args.target_language))
    dictionary = read_dictionary(args.dictionary)
    if args.method == METHOD_PROCRUSTES:
        amap = fit_procrustes(src, tgt, dictionary)
    else:
        amap = fit_rcsls(src, tgt, dictionary, hyper=_align_hyper(args))
    save_map(amap, args.out)
    report = amap.report
    print("method {}".format(amap.method))
    print("retained_pairs {}".format(report.retained_pairs))
    print("dropped_pairs {}".format(report.dropped_pairs))
    print("objective {!r}".format(report.objective))
    print("wrote {}".format(args.out))
    return EXIT_OK


def _cmd_align_eval(args) -> int:
    src = normalize(load_vec(args.source_embeddings, args.source_language))
    tgt = normalize(load_vec(args.target_embeddings, args.target_language))
    amap = load_map(args.map)
    quality = eval_alignment(src, tgt, amap, read_dictionary(args.dictionary),
                             k_neighbors=args.k_neighbors)
    print("evaluated_pairs {}".format(quality.evaluated_pairs))
    print("accuracy_at_1 {:.4f}".format(quality.accuracy_at_1))
    print("accuracy_at_5 {:.4f}".format(quality.accuracy_at_5))
    print("mean_csls_margin {:.6f}".format(quality.mean_csls_margin))
    return EXIT_OK


def _cmd_align_apply(args) -> int:
    space = load_vec(args.embeddings, args.language)
    if not space.normalized:
        space = normalize(space)
    mapped = apply_map(space, load_map(args.map))
    if not args.raw:
        mapped = normalize(mapped)
    save_vec(mapped, args.out)
    print("wrote {} ({} words, dim {})".format(args.out, len(mapped), mapped.dim))
    return EXIT_OK


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError("fractions look like '0.7,0.15,0.15'")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise ValidationError("fractions must be numbers, got {!r}".format(text))
    return (a, b, c)


def _cmd_data_split(args) -> int:
    corpus = read_corpus(args.corpus, args.language)
    spec = SplitSpec(fractions=_parse_fractions(args.fractions), seed=args.seed)
    parts = stratified_split(corpus, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in zip(("train", "val", "test"), parts):
        path = os.path.join(args.out_dir, "{}.tsv".format(name))
        write_corpus(part, path)
        print("{} {} docs -> {}".format(name, len(part.docs), path))
    return EXIT_OK


def _cmd_data_stats(args) -> int:
    corpus = read_corpus(args.corpus, args.language)
    counts: dict[str, int] = {}
    lengths = []
    for doc in corpus.docs:
        counts[doc.label] = counts.get(doc.label, 0) + 1
        lengths.append(len(tokenize(doc.text)))
    print("language {}".format(corpus.language))
    print("docs {}".format(len(corpus.docs)))
    print("labels {}".format(len(counts)))
    for label in sorted(counts):
        print("  {} {}".format(label, counts[label]))
    if lengths:
        print("tokens_min {}".format(min(lengths)))
        print("tokens_mean {:.1f}".format(sum(lengths) / len(lengths)))
        print("tokens_max {}".format(max(lengths)))
    return EXIT_OK


def _cmd_translate_run(args) -> int:
    corpus = read_corpus(args.corpus, args.language)
    if args.lexicon and args.url:
        raise ValidationError("give either --lexicon or --url, not both")
    if args.lexicon:
        from .translate import BilingualLexicon, LexiconTranslator

        translator = LexiconTranslator(
            BilingualLexicon.from_file(args.lexicon),
            args.language, args.target, args.oov,
        )
    elif args.url:
        if not args.cache:
            raise ValidationError("--url requires --cache")
        translator = ExternalTranslator(ExternalEndpointConfig(
            url=args.url,
            source_language=args.language,
            target_language=args.target,
            cache_path=args.cache,
            auth_env=args.auth_env,
            batch_size=args.batch_size,
            max_retries=args.max_retries,
            backoff_base_ms=args.backoff_base_ms,
        ))
    else:
        raise ValidationError("give a translator: --lexicon PATH or --url URL")
    translated = translate_corpus(corpus, translator)
    write_corpus(translated, args.out)
    print("wrote {} ({} docs)".format(args.out, len(translated.docs)))
    if isinstance(translator, ExternalTranslator):
        print("requests_issued {}".format(translator.requests_issued))
    return EXIT_OK


def _load_run(args) -> RunConfig:
    run = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        experiment = replace(
            run.experiment,
            seed=args.seed,
            train=replace(run.experiment.train, seed=args.seed),
        )
        run = replace(run, experiment=experiment)
    return run


def _find_scenario(run: RunConfig, label: str):
    for spec in run.scenarios:
        if spec.label == label:
            return spec
    raise ValidationError(
        "no scenario {!r}; available: {}".format(
            label, ", ".join(repr(s.label) for s in run.scenarios)
        )
    )


def _scenario_ingredients(run: RunConfig, spec):
    bundle = load_bundle(run)
    needed = required_map_pairs([spec])
    maps = {}
    if needed:
        pruned = replace(run, scenarios=(spec,))
        maps = fit_required_maps(
            replace(bundle, run=pruned)
        )
    return bundle, maps


def _print_metrics(report) -> None:
    payload = report.to_json_dict()
    for key in ("weighted_precision", "weighted_recall", "weighted_f1",
                "accuracy", "map"):
        print("{} {:.6f}".format(key, payload[key]))


def _cmd_train(args) -> int:
    run = _load_run(args)
    spec = _find_scenario(run, args.scenario)
    bundle, maps = _scenario_ingredients(run, spec)
    params_out: list = []
    record = run_scenario(spec, bundle.corpora, bundle.spaces, maps,
                          bundle.translators, run.experiment,
                          params_out=params_out)
    print("scenario {}".format(record.scenario))
    print("model {}".format(record.model_kind))
    print("stopped_epoch {}".format(record.stopped_epoch))
    print("wall_seconds {:.1f}".format(record.wall_seconds))
    _print_metrics(record.metrics)
    if args.save_params:
        save_params(args.save_params, record.model_kind, params_out[0])
        print("params -> {}".format(args.save_params))
    if args.record:
        os.makedirs(args.record, exist_ok=True)
        path = write_record(record, args.record)
        print("record -> {}".format(path))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    run = _load_run(args)
    spec = _find_scenario(run, args.scenario)
    bundle, maps = _scenario_ingredients(run, spec)
    data = assemble_scenario(spec, bundle.corpora, bundle.spaces, maps,
                             bundle.translators, run.experiment)
    model_kind, params = load_params(args.params)
    if model_kind != data.model_kind:
        raise ValidationError(
            "checkpoint is a {!r} model but the scenario uses {!r}".format(
                model_kind, data.model_kind
            )
        )
    report = evaluate(params, model_kind, data.test, data.encoder)
    print(json.dumps(report.to_json_dict(), indent=2))
    return EXIT_OK


def _cmd_experiment_run(args) -> int:
    run = _load_run(args)
    output_dir = args.output_dir or run.output_dir
    bundle = load_bundle(run)
    maps = fit_required_maps(bundle)
    records, failures = run_experiment(
        run.scenarios, bundle.corpora, bundle.spaces, maps, bundle.translators,
        run.experiment, output_dir=output_dir, jobs=args.jobs,
    )
    for record in records:
        print("done {} [{}] f1={:.4f} epochs={} ({:.1f}s)".format(
            record.scenario, record.model_kind, record.metrics.weighted_f1,
            record.stopped_epoch, record.wall_seconds,
        ))
    for label, message in failures:
        print("failed {}: {}".format(label, message), file=sys.stderr)
    if records:
        present = {record.scenario for record in records}
        usable = [pair for pair in run.comparisons
                  if pair[0] in present and pair[1] in present]
        for pair in run.comparisons:
            if pair not in usable:
                print("comparison {} vs {} skipped: missing record".format(*pair),
                      file=sys.stderr)
        table = compare_runs(records, usable)
        print(render_comparison(table))
        if output_dir:
            csv_path = os.path.join(output_dir, "comparison.csv")
            comparison_to_csv(table, csv_path)
            print("comparison -> {}".format(csv_path))
    return EXIT_SCENARIO if failures else EXIT_OK


def _cmd_report(args) -> int:
    names = sorted(n for n in os.listdir(args.records) if n.endswith(".json"))
    if not names:
        raise ValidationError("no .json records under {}".format(args.records))
    records = [read_record(os.path.join(args.records, n)) for n in names]
    comparisons = [tuple(pair) for pair in args.compare or []]
    if args.config:
        comparisons.extend(load_config(args.config).comparisons)
    table = compare_runs(records, comparisons)
    print(render_comparison(table))
    if args.csv:
        comparison_to_csv(table, args.csv)
        print("comparison -> {}".format(args.csv))
    return EXIT_OK


def _add_align_fit_flags(sub) -> None:
    sub.add_argument("--method", choices=(METHOD_PROCRUSTES, METHOD_RCSLS),
                     default=METHOD_PROCRUSTES)
    sub.add_argument("--k-neighbors", type=int, default=10)
    sub.add_argument("--learning-rate", type=float, default=1.0)
    sub.add_argument("--epochs", type=int, default=10)
    sub.add_argument("--batch", type=int, default=None)
    sub.add_argument("--neighbor-pool", type=int, default=10000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xling",
        description="Cross-lingual text classification experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    commands = parser.add_subparsers(dest="command")

    embed = commands.add_parser("embed", help="embedding utilities")
    embed_sub = embed.add_subparsers(dest="subcommand")
    info = embed_sub.add_parser("info", help="summarize a .vec file")
    info.add_argument("--embeddings", required=True)
    info.add_argument("--language", required=True)
    info.set_defaults(func=_cmd_embed_info)
    norm = embed_sub.add_parser("normalize", help="unit-normalize every row")
    norm.add_argument("--embeddings", required=True)
    norm.add_argument("--language", required=True)
    norm.add_argument("--out", required=True)
    norm.set_defaults(func=_cmd_embed_normalize)

    align = commands.add_parser("align", help="cross-space alignment maps")
    align_sub = align.add_subparsers(dest="subcommand")
    fit = align_sub.add_parser("fit", help="fit a map from a seed dictionary")
    fit.add_argument("--source-embeddings", required=True)
    fit.add_argument("--source-language", required=True)
    fit.add_argument("--target-embeddings", required=True)
    fit.add_argument("--target-language", required=True)
    fit.add_argument("--dictionary", required=True)
    fit.add_argument("--out", required=True)
    _add_align_fit_flags(fit)
    fit.set_defaults(func=_cmd_align_fit)
    evl = align_sub.add_parser("eval", help="retrieval accuracy on a test dictionary")
    evl.add_argument("--source-embeddings", required=True)
    evl.add_argument("--source-language", required=True)
    evl.add_argument("--target-embeddings", required=True)
    evl.add_argument("--target-language", required=True)
    evl.add_argument("--map", required=True)
    evl.add_argument("--dictionary", required=True)
    evl.add_argument("--k-neighbors", type=int, default=10)
    evl.set_defaults(func=_cmd_align_eval)
    app = align_sub.add_parser("apply", help="map embeddings into the target space")
    app.add_argument("--embeddings", required=True)
    app.add_argument("--language", required=True)
    app.add_argument("--map", required=True)
    app.add_argument("--out", required=True)
    app.add_argument("--raw", action="store_true",
                     help="skip re-normalizing the mapped rows")
    app.set_defaults(func=_cmd_align_apply)

    data = commands.add_parser("data", help="corpus utilities")
    data_sub = data.add_subparsers(dest="subcommand")
    split = data_sub.add_parser("split", help="stratified train/val/test split")
    split.add_argument("--corpus", required=True)
    split.add_argument("--language", required=True)
    split.add_argument("--out-dir", required=True)
    split.add_argument("--fractions", default="0.7,0.15,0.15")
    split.add_argument("--seed", type=int, default=0)
    split.set_defaults(func=_cmd_data_split)
    stats = data_sub.add_parser("stats", help="label and token statistics")
    stats.add_argument("--corpus", required=True)
    stats.add_argument("--language", required=True)
    stats.set_defaults(func=_cmd_data_stats)

    translate = commands.add_parser("translate", help="corpus translation")
    translate_sub = translate.add_subparsers(dest="subcommand")
    trun = translate_sub.add_parser("run", help="translate a labeled corpus")
    trun.add_argument("--corpus", required=True)
    trun.add_argument("--language", required=True)
    trun.add_argument("--target", required=True)
    trun.add_argument("--out", required=True)
    trun.add_argument("--lexicon")
    trun.add_argument("--oov", choices=(OOV_KEEP, OOV_DROP), default=OOV_KEEP)
    trun.add_argument("--url")
    trun.add_argument("--cache")
    trun.add_argument("--auth-env")
    trun.add_argument("--batch-size", type=int, default=16)
    trun.add_argument("--max-retries", type=int, default=3)
    trun.add_argument("--backoff-base-ms", type=float, default=250.0)
    trun.set_defaults(func=_cmd_translate_run)

    train_cmd = commands.add_parser("train", help="train one scenario")
    train_cmd.add_argument("--config", required=True)
    train_cmd.add_argument("--scenario", required=True)
    train_cmd.add_argument("--seed", type=int, default=None)
    train_cmd.add_argument("--save-params", help="write a checkpoint here")
    train_cmd.add_argument("--record", help="write the run record in this directory")
    train_cmd.set_defaults(func=_cmd_train)

    eval_cmd = commands.add_parser("evaluate",
                                   help="evaluate a checkpoint on a scenario's test set")
    eval_cmd.add_argument("--config", required=True)
    eval_cmd.add_argument("--scenario", required=True)
    eval_cmd.add_argument("--params", required=True)
    eval_cmd.add_argument("--seed", type=int, default=None)
    eval_cmd.set_defaults(func=_cmd_evaluate)

    experiment = commands.add_parser("experiment", help="scenario matrices")
    experiment_sub = experiment.add_subparsers(dest="subcommand")
    erun = experiment_sub.add_parser("run", help="run every scenario in a config")
    erun.add_argument("--config", required=True)
    erun.add_argument("--seed", type=int, default=None)
    erun.add_argument("--jobs", type=int, default=1)
    erun.add_argument("--output-dir", default=None)
    erun.set_defaults(func=_cmd_experiment_run)

    report = commands.add_parser("report", help="tabulate saved run records")
    report.add_argument("--records", required=True)
    report.add_argument("--csv")
    report.add_argument("--compare", nargs=2, action="append",
                        metavar=("BASELINE", "VARIANT"))
    report.add_argument("--config", help="pull comparisons from a config file")
    report.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    levels = {0: logging.WARNING, 1: logging.INFO}
    logging.basicConfig(level=levels.get(args.verbose, logging.DEBUG),
                        format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_INVALID
    try:
        return args.func(args)
    except ScenarioError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_SCENARIO
    except (FormatError, ValidationError) as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_INVALID
    except TranslationError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

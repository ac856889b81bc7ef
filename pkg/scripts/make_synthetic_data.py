#!/usr/bin/env python
"""Emit a self-contained synthetic two-language workspace.

Writes embeddings (.vec), labeled corpora (.tsv), word lexicons for
both directions, train/test seed dictionaries, and a config.json that
enumerates the full eight-model scenario matrix with the two co-trained
models compared against the small language's own baseline.

Usage:
    python scripts/make_synthetic_data.py --out workspace [--seed 7]
    xling experiment run --config workspace/config.json
"""

from __future__ import annotations

import argparse
import io
import json
import os

from xling.alignment import SeedDictionary, write_dictionary
from xling.data import write_corpus
from xling.embeddings import save_vec
from xling.synthetic import make_bilingual_benchmark


def write_lexicon(pairs, path: str) -> None:
    with io.open(path, "w", encoding="utf-8", newline="\n") as fout:
        for src, tgt in pairs:
            fout.write("{}\t{}\n".format(src, tgt))


def split_dictionary(dictionary: SeedDictionary, test_every: int = 5):
    """Deterministic interleaved train/test split of the word pairs."""
    train, test = [], []
    for i, pair in enumerate(dictionary.pairs):
        (test if i % test_every == 0 else train).append(pair)
    return (SeedDictionary(pairs=tuple(train), provenance="train"),
            SeedDictionary(pairs=tuple(test), provenance="test"))


def build_config(args) -> dict:
    return {
        "dataset": "synthetic-en-fr",
        "seed": args.seed,
        "output_dir": "runs",
        "padding": {"kind": "gaussian", "sigma": 0.1},
        "embeddings": {"en": "emb/en.vec", "fr": "emb/fr.vec"},
        "corpora": {"en": "corpora/en.tsv", "fr": "corpora/fr.tsv"},
        "dictionaries": {
            "en-fr": {"train": "dicts/en-fr.train.tsv",
                      "test": "dicts/en-fr.test.tsv"},
            "fr-en": {"train": "dicts/fr-en.train.tsv",
                      "test": "dicts/fr-en.test.tsv"},
        },
        "translators": {
            "en-fr": {"kind": "lexicon", "path": "lexicons/en-fr.tsv"},
            "fr-en": {"kind": "lexicon", "path": "lexicons/fr-en.tsv"},
        },
        "alignment": {"method": args.align_method},
        "model": {"kind": args.model, "max_len": args.max_len},
        "training": {"max_epochs": args.max_epochs, "patience": args.patience},
        "scenarios": [
            {"kind": "mono_original", "language": "en", "test_language": "en"},
            {"kind": "mono_original", "language": "fr", "test_language": "fr"},
            {"kind": "mono_translated", "language": "en",
             "target_language": "fr", "test_language": "en"},
            {"kind": "mono_translated", "language": "fr",
             "target_language": "en", "test_language": "fr"},
            {"kind": "mono_aligned", "language": "en",
             "target_language": "fr", "test_language": "en"},
            {"kind": "mono_aligned", "language": "fr",
             "target_language": "en", "test_language": "fr"},
            {"kind": "bilingual_translated", "language": "en",
             "target_language": "fr", "test_language": "fr"},
            {"kind": "bilingual_aligned", "language": "en",
             "target_language": "fr", "test_language": "fr"},
        ],
        "comparisons": [
            ["original(fr)", "co-translated(en+fr|test=fr)"],
            ["original(fr)", "co-aligned(en+fr|test=fr)"],
        ],
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="workspace directory")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--per-label-a", type=int, default=284,
                        help="documents per label for the large language")
    parser.add_argument("--per-label-b", type=int, default=28,
                        help="documents per label for the small language")
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--noise-sigma", type=float, default=0.05)
    parser.add_argument("--model", choices=("cnn", "rnn"), default="cnn")
    parser.add_argument("--max-len", type=int, default=20)
    parser.add_argument("--max-epochs", type=int, default=50)
    parser.add_argument("--patience", type=int, default=5)
    parser.add_argument("--align-method", choices=("procrustes", "rcsls"),
                        default="procrustes")
    args = parser.parse_args(argv)

    bench = make_bilingual_benchmark(
        seed=args.seed,
        per_label_a=args.per_label_a,
        per_label_b=args.per_label_b,
        dim=args.dim,
        noise_sigma=args.noise_sigma,
    )
    for sub in ("emb", "corpora", "lexicons", "dicts", "runs"):
        os.makedirs(os.path.join(args.out, sub), exist_ok=True)

    save_vec(bench.space_a, os.path.join(args.out, "emb", "en.vec"))
    save_vec(bench.space_b, os.path.join(args.out, "emb", "fr.vec"))
    write_corpus(bench.corpus_a, os.path.join(args.out, "corpora", "en.tsv"))
    write_corpus(bench.corpus_b, os.path.join(args.out, "corpora", "fr.tsv"))
    write_lexicon(bench.seed_dictionary.pairs,
                  os.path.join(args.out, "lexicons", "en-fr.tsv"))
    write_lexicon([(b, a) for a, b in bench.seed_dictionary.pairs],
                  os.path.join(args.out, "lexicons", "fr-en.tsv"))

    train_ab, test_ab = split_dictionary(bench.seed_dictionary)
    write_dictionary(train_ab, os.path.join(args.out, "dicts", "en-fr.train.tsv"))
    write_dictionary(test_ab, os.path.join(args.out, "dicts", "en-fr.test.tsv"))
    reversed_pairs = tuple((b, a) for a, b in bench.seed_dictionary.pairs)
    train_ba, test_ba = split_dictionary(SeedDictionary(pairs=reversed_pairs))
    write_dictionary(train_ba, os.path.join(args.out, "dicts", "fr-en.train.tsv"))
    write_dictionary(test_ba, os.path.join(args.out, "dicts", "fr-en.test.tsv"))

    config_path = os.path.join(args.out, "config.json")
    with io.open(config_path, "w", encoding="utf-8", newline="\n") as fout:
        json.dump(build_config(args), fout, indent=2)
        fout.write("\n")

    print("workspace -> {}".format(args.out))
    print("  en: {} docs, {} words".format(len(bench.corpus_a.docs),
                                           len(bench.space_a)))
    print("  fr: {} docs, {} words".format(len(bench.corpus_b.docs),
                                           len(bench.space_b)))
    print("  config: {}".format(config_path))
    print("next: xling experiment run --config {}".format(config_path))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

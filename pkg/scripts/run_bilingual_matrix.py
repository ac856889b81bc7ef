#!/usr/bin/env python
"""Generate a synthetic workspace (if needed) and run the full matrix.

One-command end-to-end drive of the pipeline: data generation, map
fitting, the eight scenarios, and the comparison table.

Usage:
    python scripts/run_bilingual_matrix.py --workspace /tmp/ws [--jobs 4]
"""

from __future__ import annotations

import argparse
import os
import sys

from xling.cli import main as xling_main

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
import make_synthetic_data


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workspace", required=True)
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed for this run")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--model", choices=("cnn", "rnn"), default="cnn")
    args = parser.parse_args(argv)

    config_path = os.path.join(args.workspace, "config.json")
    if not os.path.exists(config_path):
        code = make_synthetic_data.main(
            ["--out", args.workspace, "--model", args.model]
        )
        if code != 0:
            return code

    cli_args = ["experiment", "run", "--config", config_path,
                "--jobs", str(args.jobs)]
    if args.seed is not None:
        cli_args += ["--seed", str(args.seed)]
    return xling_main(cli_args)


if __name__ == "__main__":
    sys.exit(main())

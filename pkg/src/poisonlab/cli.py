"""poisonlab command line: run the full experiment or individual stages.

Exit codes: 0 success, 1 component failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from . import pipeline, reporting
from .config import ConfigError, load_config
from .reporting import render_sweep_table


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--seed", type=int, help="override the master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisonlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "full pipeline: ingest, attack, predict, eval, defend, sweep"),
        ("ingest", "load and persist the canonical corpus"),
        ("attack", "poison the support pool and write the audit log"),
        ("predict", "clean and poisoned ICL prediction runs"),
        ("eval", "robustness metrics from stored predictions"),
        ("defend", "spectral defense and post-defense validation"),
    ):
        stage = sub.add_parser(name, help=help_text)
        _add_config_arguments(stage)
    report = sub.add_parser("report", help="render result tables from a run directory")
    report.add_argument("--dir", required=True, help="output directory of a completed run")
    return parser


def _config_from_args(args: argparse.Namespace):
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            print(reporting.render_report(args.dir))
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0
    try:
        config = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            results = pipeline.run_all(config, Path(args.config))
            report = results["robustness"]
            print(reporting.render_summary_table(report))
            print()
            print(render_sweep_table(results["sweep"]))
            print(f"\nartifacts written to {config.out_dir}")
        else:
            config.out_dir.mkdir(parents=True, exist_ok=True)
            stage = {
                "ingest": pipeline.stage_ingest,
                "attack": pipeline.stage_attack,
                "predict": pipeline.stage_predict,
                "eval": pipeline.stage_eval,
                "defend": pipeline.stage_defend,
            }[args.command]
            stage(config)
            print(f"{args.command} complete; artifacts in {config.out_dir}")
    except Exception as exc:  # component failure: report and exit 1
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

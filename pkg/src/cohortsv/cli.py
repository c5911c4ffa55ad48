"""Command-line entry point: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, load_config
from .pipeline import (
    MissingInputError,
    run_adapt,
    run_all,
    run_cluster,
    run_cost_curve,
    run_evaluate,
    run_features,
    run_score,
    run_synth,
    run_train_decider,
    run_train_ubm,
)
from .synthio import ParseError

_STAGES = {
    "synth": run_synth,
    "train-ubm": run_train_ubm,
    "adapt": run_adapt,
    "cluster": run_cluster,
    "cost-curve": run_cost_curve,
    "score": run_score,
}
_CONDITIONAL_STAGES = {
    "features": run_features,
    "train-decider": run_train_decider,
    "evaluate": run_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohortsv",
        description="Speaker-verification decision engine based on cohort scores.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("synth", "generate the synthetic corpus"),
        ("train-ubm", "train the background model"),
        ("adapt", "adapt one model per enrolled speaker"),
        ("cluster", "build the cohort by clustering dev speaker models"),
        ("cost-curve", "emit clustering cost against cohort size"),
        ("score", "score all trials against claimed model, UBM, and cohort"),
        ("features", "assemble per-trial decision features"),
        ("train-decider", "train the SVM or MLP decision model"),
        ("evaluate", "evaluate a decider on the eval trials"),
        ("run-all", "run every stage and write the summary"),
    ]
    for name, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file (INI); defaults are bundled")
        p.add_argument("--out", help="output directory (default from config, 'out')")
        p.add_argument("--seed", type=int, help="override every named seed in the config")
        if name in ("features", "train-decider", "evaluate", "run-all"):
            p.add_argument("--condition", help="feature condition C1..C7")
        if name in ("train-decider", "evaluate", "run-all"):
            p.add_argument("--decider", choices=("svm", "mlp"), help="decision model kind")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(
            cfg,
            seed=args.seed,
            out=args.out,
            condition=getattr(args, "condition", None),
            decider=getattr(args, "decider", None),
        )
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(cfg.run.out)
    try:
        if args.command in _STAGES:
            _STAGES[args.command](cfg, out)
        elif args.command in _CONDITIONAL_STAGES:
            _CONDITIONAL_STAGES[args.command](cfg, out)
        elif args.command == "run-all":
            summary = run_all(cfg, out)
            width = max(len(r["condition"]) for r in summary)
            for row in summary:
                print(f"{row['condition']:<{width}}  {row['decider']:<4}  "
                      f"eer={row['eer']:.4f}")
        else:  # pragma: no cover - argparse enforces the choices
            raise AssertionError(args.command)
    except (MissingInputError, ParseError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

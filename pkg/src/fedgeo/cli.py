"""Command-line entry point.

Subcommands:
  run               --config FILE [--seed N] [--out DIR]
  toy-appendix      print the spectral-collapse illustration and verify it
  partition-report  --config FILE

Exit codes: 0 success; 1 configuration or input error; 2 numerical
divergence during training; 3 toy illustration deviates from its
closed-form targets.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigError, DivergenceError, InputError
from .harness import partition_report, run
from .toy import toy_appendix

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedgeo",
        description="Deterministic federated GNN training simulator "
        "with geometric regulation and coherence diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured federation")
    p_run.add_argument("--config", required=True, help="path to a config file")
    p_run.add_argument("--seed", type=int, default=None,
                       help="run only this seed (overrides run.seeds)")
    p_run.add_argument("--out", default=None,
                       help="output directory (overrides run.out)")

    sub.add_parser("toy-appendix",
                   help="reproduce the two-client spectral-collapse example")

    p_rep = sub.add_parser("partition-report",
                           help="show the client partition without training")
    p_rep.add_argument("--config", required=True, help="path to a config file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            result = run(cfg, seed=args.seed, out=args.out)
            print(f"wrote {result.csv_path}")
            for p in result.jsonl_paths:
                print(f"wrote {p}")
            print(f"wrote {result.summary_path}")
            return 0
        if args.command == "toy-appendix":
            report, ok = toy_appendix()
            print(report)
            return 0 if ok else 3
        if args.command == "partition-report":
            cfg = load_config(args.config)
            print(partition_report(cfg))
            return 0
    except (ConfigError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

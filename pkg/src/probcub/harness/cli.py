"""``probcub <experiment> --config <path> [--out <dir>] [--seed <u64>] [--threads <k>]``.

Exit codes: 0 success, 2 config error, 3 numerical error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from ..exceptions import ConditioningError, ConfigError, DegenerateChainError, DesignFileError, ProbcubError
from .config import EXPERIMENTS, describe_keys, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="probcub",
        description="Run a Bayesian cubature experiment and write CSV (and SVG) results.",
        epilog=describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="plain-text 'key = value' file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .experiments import run_experiment

    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, args.experiment, args.out, args.seed)
        result = run_experiment(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"probcub: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConditioningError, DegenerateChainError, ArithmeticError, FloatingPointError) as exc:
        print(f"probcub: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DesignFileError) as exc:
        print(f"probcub: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ProbcubError, ValueError) as exc:
        print(f"probcub: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in sorted(result.files):
        print(result.files[name])
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

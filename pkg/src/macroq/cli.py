"""Command-line front end.

    macroq run <config.json> [--output PATH]
    macroq sweep <config.json> --param NAME --values V1,V2,... [--output PATH]
    macroq --version

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure (for example a diverging Lagrange-multiplier solve).  The
MACROQ_WORKERS environment variable overrides the sweep worker count.
"""

import argparse
import os
import sys
import time

from . import __version__
from .ensembles import LambdaSolveError
from .experiments import (
    ConfigError,
    load_config,
    run_experiment,
    sweep_values,
    write_result,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_values(text):
    values = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        number = float(chunk)
        values.append(int(number) if number == int(number) else number)
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="macroq",
        description="Finite-size quantum macrostate experiments (tables out, plots elsewhere).",
    )
    parser.add_argument("--version", action="version", version=f"macroq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("config", help="path to the experiment configuration")
    run_p.add_argument("--output", help="override the output CSV path")

    sweep_p = sub.add_parser("sweep", help="rerun an experiment over parameter values")
    sweep_p.add_argument("config", help="path to the experiment configuration")
    sweep_p.add_argument("--param", required=True, help="numeric parameter to sweep")
    sweep_p.add_argument(
        "--values", required=True, help="comma-separated list of parameter values"
    )
    sweep_p.add_argument("--output", help="override the output CSV path")
    return parser


def _output_path(config, override, suffix):
    if override:
        return override
    if config.output:
        return config.output
    return f"{config.kind}{suffix}.csv"


def _workers(config):
    env = os.environ.get("MACROQ_WORKERS")
    if env is None:
        return config.workers
    try:
        workers = int(env)
    except ValueError:
        raise ConfigError(f"MACROQ_WORKERS: expected an integer, got {env!r}") from None
    if workers < 1:
        raise ConfigError(f"MACROQ_WORKERS: expected a positive integer, got {workers}")
    return workers


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        started = time.perf_counter()
        if args.command == "run":
            table, summary = run_experiment(config)
            out = _output_path(config, args.output, "")
            write_result(table, out, config, time.perf_counter() - started)
            print(f"wrote {out} ({len(table.rows)} rows)")
            for key, value in summary.items():
                print(f"  {key} = {value}")
        else:
            values = _parse_values(args.values)
            table = sweep_values(config, args.param, values, workers=_workers(config))
            out = _output_path(config, args.output, "_sweep")
            write_result(table, out, config, time.perf_counter() - started)
            print(f"wrote {out} ({len(table.rows)} rows)")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LambdaSolveError as exc:
        print(
            f"numerical failure: {exc} (best residual {exc.residual:.3e} after "
            f"{exc.iterations} iterations)",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

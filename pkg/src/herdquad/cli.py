"""Command-line entry point: ``herdquad <command> [options]``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments, plotting
from .config import ExperimentConfig, load_config
from .errors import InputError, NumericalError

log = logging.getLogger("herdquad")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

COMMANDS = {
    "mmd-curve": experiments.cmd_mmd_curve,
    "error-curve": experiments.cmd_error_curve,
    "weights": experiments.cmd_weights,
    "bench": experiments.cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdquad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults apply when omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads across seeds")
    p = sub.add_parser("plot", help="render a results CSV as a log-log SVG chart")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, help="output SVG path (default: next to the CSV)")
    p = sub.add_parser("audit", help="recompute a finished run's CSV from its trajectory dump")
    p.add_argument("trajectories", type=Path)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig.from_dict({})
    if args.threads is not None and args.threads < 1:
        raise InputError("--threads must be at least 1")
    return cfg.with_overrides(seed=args.seed, output_dir=args.out)


def cmd_plot(csv_path: Path, out: Path | None = None) -> Path:
    rows = experiments.read_csv(csv_path)
    if not rows:
        raise InputError(f"{csv_path}: no data rows")
    out = out or csv_path.with_suffix(".svg")
    return plotting.plot_curves(rows, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            path = cmd_plot(args.csv, args.out)
        elif args.command == "audit":
            checked = experiments.audit(args.trajectories)
            print(f"audit ok: {checked} values recomputed")
            return EXIT_OK
        else:
            path = COMMANDS[args.command](_config(args), threads=args.threads)
    except InputError as exc:
        print(f"herdquad: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"herdquad: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"herdquad: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"herdquad: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``retarded-bohm {simulate,reduced,ensemble,energy,scan,report}``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import OUTPUT_ENV, default_config, parse_config
from .errors import ConfigError, RBTError
from .experiment_runner import emit_plots, ExperimentResult, format_table, read_summary, run_experiment

SUBCOMMANDS = {
    "simulate": "cm_drift",
    "reduced": "unstability",
    "ensemble": "density_shift",
    "energy": "energy_ledger",
    "scan": "limits_scan",
}


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retarded-bohm", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment configuration file")
    common.add_argument("--seed", type=_u64, help="override the configured seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help=f"output directory (default: ${OUTPUT_ENV} or ./rbt_output)")
    common.add_argument("--units", choices=("internal", "si"), help="unit system of the [reduced] section")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "centre-of-mass drift of the bound pair (equal and unequal masses)",
        "reduced": "equal-mass planar reduction against its closed form",
        "ensemble": "Monte Carlo density shift against the first-order prediction",
        "energy": "energy ledger with instantaneous and retarded potentials",
        "scan": "trajectory deviation from the instantaneous limit as c grows",
        "report": "collect summaries under --out, print them and rewrite plot scripts",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _load(args, name):
    if args.config is None:
        cfg = default_config(name, args.units or "internal")
    else:
        cfg = parse_config(args.config.read_text())
        problems = []
        if cfg.name != name:
            problems.append(f"[experiment] name: {cfg.name!r} does not match subcommand {args.command!r}")
        if args.units is not None and args.units != cfg.experiment.units:
            # dimensional values in the file were read in the file's own unit system
            problems.append(f"[experiment] units: file says {cfg.experiment.units!r}, --units says {args.units!r}")
        if problems:
            raise ConfigError(problems)
    return cfg.override(seed=args.seed, output=None if args.out is None else str(args.out))


def _report(out: Path) -> int:
    summaries = sorted(out.glob("*/summary.csv"))
    if not summaries:
        print(f"no summaries under {out}", file=sys.stderr)
        return 1
    rows = []
    for path in summaries:
        rows += read_summary(path)
        emit_plots(ExperimentResult(path.parent.name, path.parent))
    print(format_table(rows), end="")
    return 0 if all(r[5] == "pass" for r in rows) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            out = args.out or Path(os.environ.get(OUTPUT_ENV, "rbt_output"))
            return _report(out)
        cfg = _load(args, SUBCOMMANDS[args.command])
        result = run_experiment(cfg)
    except ConfigError as exc:
        print(f"configuration error:\n  " + "\n  ".join(exc.violations), file=sys.stderr)
        return 2
    except (RBTError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_table(result.rows), end="")
    print(f"outputs: {result.out_dir}")
    return 0 if result.passed else 1

"""Command-line entry point.

Experiments::

    mellinstop loss_boxplot --config spec.json --seed 7 --out results --format csv,svg --threads 8

Density estimation from a file of observations::

    mellinstop estimate --data obs.csv --process bessel --d 5 --gamma 0.7 --gn auto --x-grid 0.1,10,200

Exit status is 0 on success, 2 for invalid input and 3 when a numerical
routine fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import NumericalError, ValidationError
from ..estimator import EstimatorConfig, clip_and_renormalize, estimate_density
from ..mellin import SampleBatch
from ..processes import make_process
from .experiments import EXPERIMENTS, default_spec, run_experiment, spec_from_dict
from .report import FORMATS, emit, write_csv_rows

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _formats(text: str) -> list[str]:
    fmts = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fmts if f not in FORMATS]
    if not fmts or bad:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {FORMATS}")
    return fmts


def _x_grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, k = text.split(",")
        return float(lo), float(hi), int(k)
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi,points") from None


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mellinstop",
        description="Mellin-transform density estimation for random times and its simulation harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name.replace('_', ' ')} experiment")
        p.add_argument("--config", type=Path, help="JSON file with ExperimentSpec fields")
        p.add_argument("--seed", type=_seed, help="base seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--format", type=_formats, default=["csv", "svg"],
                       help="comma-separated subset of csv,json,svg (default csv,svg)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")

    est = sub.add_parser("estimate", help="estimate the density of T from observations of |Y_T|")
    est.add_argument("--data", type=Path, required=True, help="CSV of positive observations")
    est.add_argument("--process", choices=("bessel", "gaussian_ss", "gamma_ss"), default="bessel")
    est.add_argument("--d", type=float, default=None, help="Bessel dimension")
    est.add_argument("--H", type=float, default=None, help="self-similarity index")
    est.add_argument("--sigma", type=float, default=None, help="shape of the Gamma marginal")
    est.add_argument("--gamma", type=float, required=True, help="real part of the inversion line")
    est.add_argument("--gn", default="auto", help="cut-off: 'auto' or a nonnegative number")
    est.add_argument("--beta", type=float, default=0.0, help="sector angle used by the auto rule")
    est.add_argument("--x-grid", type=_x_grid, default=(0.1, 10.0, 200), help="lo,hi,points")
    est.add_argument("--clip", action="store_true", help="clip at zero and renormalize on the grid")
    est.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")
    return parser


def read_observations(path: Path) -> np.ndarray:
    """All numeric cells of a CSV file; a non-numeric first row is taken as a header."""
    values = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            cells = [c.strip() for c in row if c.strip()]
            try:
                values.extend(float(c) for c in cells)
            except ValueError:
                if i == 0:
                    continue
                raise ValidationError(f"{path}: non-numeric value on line {i + 1}") from None
    if not values:
        raise ValidationError(f"{path}: no observations found")
    return np.asarray(values)


def _run_estimate(args) -> int:
    params = {k: v for k, v in (("d", args.d), ("H", args.H), ("sigma", args.sigma)) if v is not None}
    process = make_process(args.process, **params)
    batch = SampleBatch(read_observations(args.data), seed_provenance=str(args.data))
    if args.gn == "auto":
        cutoff = None
    else:
        try:
            cutoff = float(args.gn)
        except ValueError:
            raise ValidationError("--gn must be 'auto' or a number") from None
    config = EstimatorConfig(process, args.gamma, cutoff=cutoff, beta_angle=args.beta)
    lo, hi, k = args.x_grid
    if not (0 < lo < hi and k >= 2) and not (k == 1 and lo > 0):
        raise ValidationError("x grid needs 0 < lo < hi and at least two points")
    xs = np.linspace(lo, hi, k)
    est = estimate_density(config, batch, xs)
    if args.clip:
        est = clip_and_renormalize(xs, est)
    text = write_csv_rows(("x", "estimate"), zip(xs, est))
    if args.out is None:
        sys.stdout.write(text)
    else:
        try:
            args.out.write_bytes(text.encode("utf-8"))
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write {args.out}: {exc.strerror}") from exc
    return EXIT_OK


def _run_experiment(name: str, args) -> int:
    if args.threads < 1:
        raise ValidationError("--threads must be at least 1")
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
        spec = spec_from_dict(data, experiment=name)
    else:
        spec = default_spec(name)
    if args.seed is not None:
        spec = spec_from_dict({**spec.to_dict(), "base_seed": args.seed})
    report = run_experiment(spec, threads=args.threads)
    for fmt in args.format:
        print(emit(report, fmt, args.out))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "estimate":
            return _run_estimate(args)
        return _run_experiment(args.command, args)
    except (ValidationError, OSError) as exc:
        print(f"mellinstop: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"mellinstop: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 insufficient
entropy, 5 malformed seed file, 6 entropy source too short.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from truerand import __version__
from truerand.errors import (
    DomainError,
    InsufficientEntropyError,
    NumericError,
    SeedFormatError,
    SourceExhaustedError,
)
from truerand.extractor import (
    SystemEntropy,
    extract_stream,
    plan_extraction,
    read_seed,
    sample_seed,
    write_seed,
)
from truerand.models import (
    DetailedModelParams,
    SimpleModelParams,
    entropy_report_detailed,
    entropy_report_simple,
)
from truerand.simulator import SimulationConfig, simulate_batches, write_outputs

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_ENTROPY = 4
EXIT_FORMAT = 5
EXIT_SOURCE = 6

SWEEP_POINTS_ENV = "TRUERAND_SWEEP_POINTS"
CSV_HEADER = ("alpha2", "hmin_cond", "shannon_cond", "hmin_uncond", "y_star", "trunc_err")


class UsageError(Exception):
    pass


def _n_max(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"n-max must be an integer or 'auto', got {value!r}")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=("simple", "detailed"), default="simple")
    p.add_argument("--mu", type=float, default=0.1, help="detector efficiency")
    p.add_argument("--p-dark", type=float, default=0.0, help="dark-count probability")
    p.add_argument("--gamma", type=float, default=0.0, help="afterpulse parameter")
    p.add_argument("--delta", type=float, default=0.0, help="crosstalk parameter")
    p.add_argument("--n-max", type=_n_max, default="auto", help="Poisson truncation")
    p.add_argument("--y-grid", type=int, default=1024, help="grid size for the y search")


def _params(args, alpha2: float):
    if args.model == "simple":
        if args.p_dark or args.gamma or args.delta:
            raise UsageError("--p-dark/--gamma/--delta apply to the detailed model only")
        return SimpleModelParams(alpha2, args.mu, args.n_max)
    return DetailedModelParams(
        alpha2, args.mu, args.p_dark, args.gamma, args.delta, args.n_max, args.y_grid
    )


def _sweep(args) -> np.ndarray:
    if args.alpha2 is not None:
        return np.array([args.alpha2])
    points = args.points
    if points is None:
        env = os.environ.get(SWEEP_POINTS_ENV, "50")
        try:
            points = int(env)
        except ValueError:
            raise UsageError(f"{SWEEP_POINTS_ENV} must be an integer, got {env!r}")
    if points < 1:
        raise UsageError(f"points must be >= 1, got {points}")
    if args.scale == "log":
        if args.start <= 0 or args.stop <= 0:
            raise UsageError("start and stop must be > 0 for a log sweep")
        return np.geomspace(args.start, args.stop, points)
    return np.linspace(args.start, args.stop, points)


def _fmt(value) -> str:
    return "" if value is None else f"{value:.12g}"


def cmd_analyze(args) -> int:
    alphas = _sweep(args)
    report_fn = entropy_report_simple if args.model == "simple" else entropy_report_detailed
    rows = [report_fn(_params(args, float(a))) for a in alphas]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for a, r in zip(alphas, rows):
        writer.writerow(
            [
                _fmt(float(a)),
                _fmt(r.hmin_cond),
                _fmt(r.shannon_cond),
                _fmt(r.hmin_uncond),
                _fmt(r.y_star),
                _fmt(r.truncation_error),
            ]
        )
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = SimulationConfig(
        _params(args, args.alpha2), args.pulses, args.seed, args.noise_mode
    )
    side = open(args.side_out, "wb") if args.side_out else None
    try:
        with open(args.raw_out, "wb") as raw:
            counts = write_outputs(simulate_batches(config), raw, side)
    finally:
        if side is not None:
            side.close()
    total = int(counts.sum())
    freqs = counts / total if total else np.zeros(4)
    print(f"pulses: {total}")
    print(f"seed: {args.seed}")
    for label, c, f in zip(("00", "01", "10", "11"), counts, freqs):
        print(f"P_X({label}): {f:.6f} ({int(c)})")
    return EXIT_OK


def cmd_extract(args) -> int:
    seed = read_seed(args.seed_file)
    size_bits = 8 * os.path.getsize(args.input)
    available = size_bits // seed.n
    k_blocks = args.blocks if args.blocks is not None else max(1, available)
    if available > k_blocks:
        raise UsageError(
            f"--blocks: input holds {available} blocks but the plan covers {k_blocks}"
        )
    plan = plan_extraction(
        args.hmin_per_block, seed.n, args.eps, k_blocks, args.eps_seed, args.shannon_per_block
    )
    with open(args.input, "rb") as src, open(args.output, "wb") as dst:
        result = extract_stream(seed, src, plan, sink=dst)
    print(f"n: {plan.n}")
    print(f"l: {min(plan.l, seed.l)}")
    print(f"eps_hash: {plan.eps_hash:.6g}")
    print(f"eps_total: {plan.eps_total:.6g}")
    if plan.shannon_bound is not None:
        print(f"consistent: {'yes' if plan.consistent else 'NO'}")
    print(f"blocks: {result.blocks}")
    print(f"output bits: {result.output_bits}")
    print(f"discarded bits: {result.discarded_bits}")
    return EXIT_OK


def cmd_seedgen(args) -> int:
    if args.source:
        with open(args.source, "rb") as fh:
            seed = sample_seed(args.n, args.l, fh)
    else:
        seed = sample_seed(args.n, args.l, SystemEntropy())
    fingerprint = write_seed(args.output, seed)
    print(f"n: {seed.n}")
    print(f"l: {seed.l}")
    print(f"sha256: {fingerprint}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="truerand",
        description="Entropy accounting and two-universal hashing for beam-splitter QRNGs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="entropy rates over an intensity sweep (CSV)")
    _add_model_args(p)
    p.add_argument("--alpha2", type=float, help="single mean photon number")
    p.add_argument("--start", type=float, default=1e-3)
    p.add_argument("--stop", type=float, default=20.0)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--scale", choices=("log", "linear"), default="log")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo pulses to raw-bit and side-info files")
    _add_model_args(p)
    p.add_argument("--alpha2", type=float, required=True)
    p.add_argument("--pulses", type=int, required=True)
    p.add_argument("--seed", type=int, default=0, help="64-bit replay seed")
    p.add_argument("--noise-mode", choices=("stationary", "mechanistic"), default="stationary")
    p.add_argument("--raw-out", required=True)
    p.add_argument("--side-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="hash a raw bit file block by block")
    p.add_argument("--seed-file", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--hmin-per-block", type=float, required=True)
    p.add_argument("--eps", type=float, required=True, help="total error budget")
    p.add_argument("--blocks", type=int, default=None, help="blocks covered by the budget")
    p.add_argument("--eps-seed", type=float, default=0.0)
    p.add_argument("--shannon-per-block", type=float, default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("seedgen", help="draw a hash seed and write it to a file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--source", help="file of random bytes (default: OS entropy)")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_seedgen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsufficientEntropyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENTROPY
    except SeedFormatError as exc:
        print(f"error: malformed seed file: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SourceExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOURCE
    except (UsageError, DomainError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

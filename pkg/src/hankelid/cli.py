"""Command-line interface: identify, realize, and benchmark subcommands.

Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import modelio
from .bench import METHODS, emit_csv, run_sweep
from .dc import DcSettings, solve_dcp
from .errors import DivergenceError, InnerSolverError, RankDeficiencyError
from .model import (
    AffineParameterization,
    assemble,
    build_hankel,
    ho_kalman_realize,
    markov_sequence,
)
from .plots import plot_objective_trace, plot_success_curves

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hankelid",
                     description="Gray-box identification via structured "
                                 "low-rank Hankel factorization")
    sub = parser.add_subparsers(dest="command", required=True)

    identify = sub.add_parser("identify", help="run the DC solver on a model file")
    identify.add_argument("--model", required=True, help="model JSON (affine parameterization)")
    identify.add_argument("--markov", help="Markov JSON to build Y from; defaults to the "
                                           "model's theta_true")
    identify.add_argument("--hankel-v", type=int, default=None)
    identify.add_argument("--hankel-h", type=int, default=None)
    identify.add_argument("--lambda1", type=float, default=1e-4)
    identify.add_argument("--lambda2", type=float, default=1e-5)
    identify.add_argument("--rho", type=float, default=1e-10)
    identify.add_argument("--eps", type=float, default=1e-4)
    identify.add_argument("--max-iters", type=int, default=100)
    identify.add_argument("--out", required=True, help="solution audit JSON")
    identify.add_argument("--plot", help="optional PNG of the objective trace")

    realize = sub.add_parser("realize", help="Ho-Kalman black-box realization")
    realize.add_argument("--markov", required=True)
    realize.add_argument("--order", type=int, required=True)
    realize.add_argument("--out", required=True, help="model JSON with q = 0")

    bench = sub.add_parser("bench", help="Monte-Carlo success-rate sweeps")
    bench_sub = bench.add_subparsers(dest="family", required=True)

    random_p = bench_sub.add_parser("random", help="random structured instances")
    random_p.add_argument("--order", type=int, required=True)
    random_p.add_argument("--m", type=int, default=1)
    random_p.add_argument("--p", type=int, default=1)
    random_p.add_argument("--params", required=True,
                          help="comma-separated free-parameter counts, e.g. 2,4,6,8")
    compart_p = bench_sub.add_parser("compartmental", help="compartmental chains")
    compart_p.add_argument("--orders", required=True,
                           help="comma-separated system orders, e.g. 2,3,4")
    for sub_parser in (random_p, compart_p):
        sub_parser.add_argument("--trials", type=int, default=25)
        sub_parser.add_argument("--methods", default="dcp",
                                help=f"comma-separated subset of {','.join(METHODS)}")
        sub_parser.add_argument("--seed", type=int, default=0)
        sub_parser.add_argument("--csv", required=True)
        sub_parser.add_argument("--workers", type=int, default=1)
        sub_parser.add_argument("--threshold", type=float, default=1e-3)
        sub_parser.add_argument("--timeout", type=float, default=120.0)
        sub_parser.add_argument("--no-plot", action="store_true",
                                help="skip the PNG next to the CSV")
    return parser


def _parse_int_list(text: str, flag: str):
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise SystemExit(_usage(f"{flag} expects comma-separated integers, got {text!r}"))
    if not values:
        raise SystemExit(_usage(f"{flag} must not be empty"))
    return values


def _usage(message: str) -> int:
    print(f"hankelid: error: {message}", file=sys.stderr)
    return USAGE_ERROR


def _cmd_identify(args) -> int:
    param, theta_true = modelio.load_model(args.model)
    n = param.dims.n
    v = args.hankel_v if args.hankel_v is not None else n + 1
    h = args.hankel_h if args.hankel_h is not None else n + 1
    if args.markov:
        markov = modelio.load_markov(args.markov)
    elif theta_true is not None:
        markov = markov_sequence(assemble(param, theta_true), v + h - 1)
    else:
        return _usage("model file has no theta_true; supply --markov")
    Y = build_hankel(markov, v, h)
    settings = DcSettings(lambda1=args.lambda1, lambda2=args.lambda2, rho=args.rho,
                          epsilon=args.eps, max_outer_iters=args.max_iters, v=v, h=h)
    solution = solve_dcp(Y, param, settings=settings)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(solution.to_dict(), fh, indent=2)
        fh.write("\n")
    if args.plot:
        plot_objective_trace(solution, args.plot)
    print(f"status: {solution.status} after {len(solution.objective_trace)} iterations; "
          f"wrote {args.out}")
    return 0


def _cmd_realize(args) -> int:
    markov = modelio.load_markov(args.markov)
    count = markov.shape[0]
    v = (count + 1) // 2
    h = count + 1 - v
    hankel = build_hankel(markov, v, h)
    ss = ho_kalman_realize(hankel, args.order)
    param = AffineParameterization(dims=ss.dims, offset_a=ss.A, offset_b=ss.B,
                                   offset_c=ss.C)
    modelio.save_model(args.out, param)
    print(f"wrote order-{args.order} realization to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    methods = [part.strip() for part in args.methods.split(",") if part.strip()]
    for method in methods:
        if method not in METHODS:
            return _usage(f"unknown method {method!r}; pick from {','.join(METHODS)}")
    if not methods:
        return _usage("--methods must name at least one method")
    common = dict(trials_per_point=args.trials, base_seed=args.seed,
                  workers=args.workers, success_threshold=args.threshold,
                  timeout_s=args.timeout)
    if args.family == "random":
        values = _parse_int_list(args.params, "--params")
        curves = run_sweep("random", methods, values, n=args.order, m=args.m,
                           p=args.p, **common)
    else:
        values = _parse_int_list(args.orders, "--orders")
        curves = run_sweep("compartmental", methods, values, **common)
    emit_csv(curves, args.csv)
    print(f"wrote {args.csv}")
    if not args.no_plot:
        png = Path(args.csv).with_suffix(".png")
        plot_success_curves(curves, png, title=f"{args.family} benchmark")
        print(f"wrote {png}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        if args.command == "identify":
            return _cmd_identify(args)
        if args.command == "realize":
            return _cmd_realize(args)
        return _cmd_bench(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"hankelid: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (RankDeficiencyError, InnerSolverError, DivergenceError,
            np.linalg.LinAlgError) as exc:
        print(f"hankelid: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    raise SystemExit(main())

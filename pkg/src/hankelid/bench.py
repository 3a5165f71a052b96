"""Monte-Carlo benchmark harness: seeded trials, sweeps and CSV reports.

Each trial draws an instance family member from its own derived seed,
builds the exact Hankel data from the continuous-time truth, runs one
method and scores it by the normalized impulse-response fit. Per-trial
seeds are a pure mixing hash of (base seed, sweep value, trial index), so
aggregated curves do not depend on execution order and trials can run in
parallel.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    IoData,
    SimilarityIterate,
    altmin_similarity,
    pem_surrogate,
    similarity_cost,
    simulate_discrete,
)
from .dc import DcSettings, solve_dcp
from .inner import SplitSettings
from .model import (
    Dims,
    assemble,
    build_hankel,
    compartmental_instance,
    discretize_zoh,
    impulse_response_fit,
    markov_sequence,
    random_structured_instance,
)

METHODS = ("altmin", "dcp", "pem")

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """splitmix64 finalizer; a stable 64-bit mixing hash."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, sweep_value: int, trial_index: int) -> int:
    """Order-free per-trial seed from (base seed, sweep value, trial index)."""
    acc = _mix64(base_seed)
    acc = _mix64(acc ^ _mix64(sweep_value))
    acc = _mix64(acc ^ _mix64(trial_index))
    return acc


@dataclass(frozen=True)
class TrialConfig:
    """Everything one benchmark trial needs, picklable for worker pools.

    ``family`` is "random" (free entries of a random stable system; ``q``
    required) or "compartmental" (chain of ``n`` compartments).
    """

    family: str
    n: int
    method: str
    seed: int
    q: int | None = None
    m: int = 1
    p: int = 1
    success_threshold: float = 1e-3
    timeout_s: float = 120.0
    dc: DcSettings = field(default_factory=DcSettings)
    inner: SplitSettings = field(default_factory=SplitSettings)
    baseline_max_iters: int = 100

    def __post_init__(self):
        if self.family not in ("random", "compartmental"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; pick from {METHODS}")
        if self.family == "random" and self.q is None:
            raise ValueError("the random family needs an explicit q")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")


@dataclass(frozen=True)
class TrialResult:
    irf: float
    success: bool
    iterations: int
    wall_clock_ms: int
    extras: dict


@dataclass(frozen=True)
class CurvePoint:
    value: int
    trials: int
    successes: int
    rate: float
    mean_irf: float


@dataclass(frozen=True)
class SuccessCurve:
    sweep_variable: str          # "q" or "n"
    points: tuple


def _make_instance(config: TrialConfig):
    if config.family == "compartmental":
        return compartmental_instance(config.n, config.seed)
    dims = Dims(n=config.n, m=config.m, p=config.p)
    return random_structured_instance(dims, config.q, config.seed)


def _pem_sampling_period(A: np.ndarray) -> float:
    """Half the Nyquist-critical period of A, capped at 1 second."""
    max_imag = float(np.max(np.abs(np.linalg.eigvals(A).imag)))
    if max_imag == 0.0:
        return 1.0
    return min(1.0, 0.5 * np.pi / max_imag)


def _run_method(config: TrialConfig, param, theta_star, truth, Y):
    """Dispatch one method; returns (theta_hat, iterations, extras)."""
    if config.method == "dcp":
        solution = solve_dcp(Y, param, settings=config.dc, inner_settings=config.inner)
        return solution.theta, len(solution.objective_trace), {
            "status": solution.status,
            "final_objective": solution.objective_trace[-1],
        }
    if config.method == "altmin":
        rng = np.random.default_rng([config.seed, 1])
        Q0 = rng.standard_normal((param.dims.n, param.dims.n))
        theta0 = rng.standard_normal(param.q)
        init = SimilarityIterate(
            Q=Q0, theta=theta0, cost=similarity_cost(Q0, theta0, truth, param))
        result = altmin_similarity(truth, param, init, max_iters=config.baseline_max_iters)
        return result.theta, result.iterations, {
            "cost": result.cost,
            "min_singular_value_q": float(np.linalg.svd(result.Q, compute_uv=False)[-1]),
            "rank_deficient": result.rank_deficient,
        }
    # pem
    T = _pem_sampling_period(truth.A)
    input_rng = np.random.default_rng([config.seed, 2])
    u = input_rng.choice([-1.0, 1.0], size=(500, param.dims.m))
    y = simulate_discrete(discretize_zoh(truth, T), u)
    data = IoData(u=u, y=y, T=T)
    init_rng = np.random.default_rng([config.seed, 3])
    theta0 = init_rng.standard_normal(param.q)
    theta_hat, trace = pem_surrogate(data, param, theta0,
                                     max_iters=config.baseline_max_iters)
    return theta_hat, len(trace) - 1, {"final_cost": trace[-1]}


def run_trial(config: TrialConfig) -> TrialResult:
    """One seeded trial; method failures are folded into irf = +inf."""
    tic = time.perf_counter()
    param, theta_star = _make_instance(config)
    n = param.dims.n
    v = h = n + 1
    truth = assemble(param, theta_star)
    reference = markov_sequence(truth, v + h - 1)
    Y = build_hankel(reference, v, h)
    extras: dict = {}
    try:
        theta_hat, iterations, extras = _run_method(config, param, theta_star, truth, Y)
        candidate = markov_sequence(assemble(param, theta_hat), v + h - 1)
        irf = impulse_response_fit(candidate, reference)
    except Exception as exc:  # never abort a sweep on a method failure
        irf = np.inf
        iterations = 0
        extras = dict(extras, error=f"{type(exc).__name__}: {exc}")
    wall_ms = int(round(1000 * (time.perf_counter() - tic)))
    if wall_ms > 1000 * config.timeout_s:
        extras = dict(extras, timed_out=True, measured_irf=irf)
        irf = np.inf
    return TrialResult(
        irf=float(irf),
        success=bool(irf <= config.success_threshold),
        iterations=iterations,
        wall_clock_ms=wall_ms,
        extras=extras)


def success_rate(results) -> float:
    """Fraction of successful trials."""
    results = list(results)
    if not results:
        raise ValueError("success_rate of an empty result list is undefined")
    return sum(r.success for r in results) / len(results)


def run_sweep(family: str, methods, sweep_values, trials_per_point: int,
              base_seed: int, n: int | None = None, m: int = 1, p: int = 1,
              workers: int = 1, **trial_kwargs):
    """Success curves over a sweep variable, one per method.

    For the random family the sweep runs over the free-parameter count q
    (``n``, ``m``, ``p`` fixed); for the compartmental family it runs over
    the system order. Extra keyword arguments (success_threshold, dc,
    inner, ...) are forwarded to every :class:`TrialConfig`. Trials are
    independent; ``workers > 1`` runs them in a process pool without
    changing the aggregated curves.

    Returns {method: SuccessCurve}.
    """
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be at least 1")
    if family == "random" and n is None:
        raise ValueError("the random family needs the system order n")
    sweep_values = list(sweep_values)
    variable = "q" if family == "random" else "n"

    jobs = {}
    for method in methods:
        for value in sweep_values:
            for index in range(trials_per_point):
                seed = derive_seed(base_seed, value, index)
                if family == "random":
                    config = TrialConfig(family=family, n=n, q=value, m=m, p=p,
                                         method=method, seed=seed, **trial_kwargs)
                else:
                    config = TrialConfig(family=family, n=value, method=method,
                                         seed=seed, **trial_kwargs)
                jobs[(method, value, index)] = config

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            keys = list(jobs)
            for key, result in zip(keys, pool.map(run_trial, (jobs[k] for k in keys))):
                results[key] = result
    else:
        for key, config in jobs.items():
            results[key] = run_trial(config)

    curves = {}
    for method in methods:
        points = []
        for value in sweep_values:
            batch = [results[(method, value, i)] for i in range(trials_per_point)]
            successes = sum(r.success for r in batch)
            points.append(CurvePoint(
                value=value,
                trials=trials_per_point,
                successes=successes,
                rate=successes / trials_per_point,
                mean_irf=float(np.mean([r.irf for r in batch]))))
        curves[method] = SuccessCurve(sweep_variable=variable, points=tuple(points))
    return curves


CSV_HEADER = "method,sweep_variable,sweep_value,trials,successes,rate,mean_irf"


def emit_csv(curves: dict, destination) -> None:
    """Write the curves as CSV, rows sorted by method then sweep value.

    Float columns use shortest-roundtrip formatting, so re-emitting the
    same curves is byte-identical.
    """
    if not curves:
        raise ValueError("no curves to emit")
    lines = [CSV_HEADER]
    for method in sorted(curves):
        curve = curves[method]
        for point in sorted(curve.points, key=lambda pt: pt.value):
            lines.append(
                f"{method},{curve.sweep_variable},{point.value},{point.trials},"
                f"{point.successes},{point.rate!r},{point.mean_irf!r}")
    with open(destination, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

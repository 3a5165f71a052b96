import sys
import time
import warnings

import numpy as np

import hankelid as hk
from hankelid.inner import SplitSettings

warnings.simplefilter("ignore")


def trial(n, seed, inner):
    param, theta_star = hk.compartmental_instance(n, seed=seed)
    truth = hk.assemble(param, theta_star)
    v = h = n + 1
    ref = hk.markov_sequence(truth, v + h - 1)
    Y = hk.build_hankel(ref, v, h)
    t0 = time.perf_counter()
    sol = hk.solve_dcp(Y, param, inner_settings=inner)
    dt = time.perf_counter() - t0
    cand = hk.markov_sequence(hk.assemble(param, sol.theta), v + h - 1)
    return hk.impulse_response_fit(cand, ref), dt, len(sol.objective_trace)


variants = {
    "tol1e-8": SplitSettings(max_iters=8000, primal_tol=1e-8, dual_tol=1e-8),
    "tol3e-8": SplitSettings(max_iters=6000, primal_tol=3e-8, dual_tol=3e-8),
}
for name, inner in variants.items():
    for n in (4, 3, 2):
        results = [trial(n, s, inner) for s in range(8)]
        ok = sum(r[0] <= 1e-3 for r in results)
        tt = sum(r[1] for r in results)
        outs = " ".join(f"{r[0]:.0e}" for r in results)
        print(f"{name} n={n}: {ok}/8  {tt:.0f}s  {outs}", flush=True)

"""Comparison methods: similarity-transform alternating minimization,
discrete-time simulation, and a damped Gauss-Newton prediction-error fit.

The similarity route searches for (Q, theta) with Q A* = A(theta) Q,
Q B* = B(theta) and C* = C(theta) Q; both block updates are exact linear
least squares because the parameterization is affine. The prediction-error
surrogate minimizes the mean squared simulation error of the discretized
model on input/output records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .model import AffineParameterization, StateSpaceRealization, assemble, discretize_zoh


@dataclass(frozen=True)
class SimilarityIterate:
    """State of the alternating minimization: basis change, parameters and
    the criterion value at that pair."""

    Q: np.ndarray
    theta: np.ndarray
    cost: float
    rank_deficient: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class IoData:
    """Sampled input/output record with its sampling period."""

    u: np.ndarray        # (N, m)
    y: np.ndarray        # (N, p)
    T: float

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != y.shape[0]:
            raise ValueError(f"u and y must have equal lengths, got {u.shape[0]} vs {y.shape[0]}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("IO data must be finite")
        if not self.T > 0:
            raise ValueError("sampling period must be positive")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)


def similarity_cost(Q, theta, black_box: StateSpaceRealization,
                    param: AffineParameterization) -> float:
    """||Q A* - A(th) Q||_F^2 + ||Q B* - B(th)||_F^2 + ||C* - C(th) Q||_F^2."""
    Q = np.asarray(Q, dtype=float)
    ss = assemble(param, theta)
    return float(
        np.linalg.norm(Q @ black_box.A - ss.A @ Q) ** 2
        + np.linalg.norm(Q @ black_box.B - ss.B) ** 2
        + np.linalg.norm(black_box.C - ss.C @ Q) ** 2)


def build_vectorized_similarity(theta, black_box: StateSpaceRealization,
                                param: AffineParameterization):
    """Stack the three matrix equations as M(theta) vec(Q) = N(theta).

    M has n^2 + n*m + p*n rows and n^2 columns (column-major vec).
    """
    ss = assemble(param, theta)
    n = param.dims.n
    I = np.eye(n)
    M = np.vstack([
        np.kron(black_box.A.T, I) - np.kron(I, ss.A),
        np.kron(black_box.B.T, I),
        np.kron(I, ss.C),
    ])
    N = np.concatenate([
        np.zeros(n * n),
        ss.B.ravel(order="F"),
        black_box.C.ravel(order="F"),
    ])
    return M, N


def _theta_step(Q, black_box, param):
    """Exact least squares over theta with Q fixed."""
    q = param.q
    if q == 0:
        return np.zeros(0), False
    cols = []
    for i in range(q):
        cols.append(np.concatenate([
            (param.coeffs_a[i] @ Q).ravel(order="F"),
            param.coeffs_b[i].ravel(order="F"),
            (param.coeffs_c[i] @ Q).ravel(order="F"),
        ]))
    G = np.column_stack(cols)
    target = np.concatenate([
        (Q @ black_box.A - param.offset_a @ Q).ravel(order="F"),
        (Q @ black_box.B - param.offset_b).ravel(order="F"),
        (black_box.C - param.offset_c @ Q).ravel(order="F"),
    ])
    theta, _, rank, _ = np.linalg.lstsq(G, target, rcond=None)
    return theta, rank < q


def altmin_similarity(black_box: StateSpaceRealization, param: AffineParameterization,
                      init: SimilarityIterate, max_iters: int = 100) -> SimilarityIterate:
    """Alternate exact least-squares updates of Q and theta.

    The cost sequence is non-increasing by construction; iteration stops at
    ``max_iters`` or when the relative cost change drops below 1e-10.
    Rank-deficient least-squares steps take the minimum-norm solution and
    mark the returned iterate.
    """
    n = param.dims.n
    Q = np.asarray(init.Q, dtype=float)
    theta = param.check_theta(init.theta)
    cost = similarity_cost(Q, theta, black_box, param)
    flagged = False
    iterations = 0
    for _ in range(max_iters):
        if cost == 0.0:
            break
        M, N = build_vectorized_similarity(theta, black_box, param)
        vec_q, _, rank_q, _ = np.linalg.lstsq(M, N, rcond=None)
        flagged |= rank_q < n * n
        Q = vec_q.reshape((n, n), order="F")
        theta, deficient = _theta_step(Q, black_box, param)
        flagged |= deficient
        new_cost = similarity_cost(Q, theta, black_box, param)
        iterations += 1
        done = (cost - new_cost) <= 1e-10 * cost
        cost = new_cost
        if done:
            break
    return SimilarityIterate(Q=Q, theta=theta, cost=cost, rank_deficient=flagged,
                             iterations=iterations)


def simulate_discrete(ssd: StateSpaceRealization, u, x0=None) -> np.ndarray:
    """Run y(k) = C x(k), x(k+1) = A_T x(k) + B_T u(k) over an input record.

    ``u`` has shape (N, m); the output has shape (N, p). Raises
    :class:`DivergenceError` with the offending step when the state blows up.
    """
    if not ssd.is_discrete:
        raise ValueError("simulate_discrete needs a discrete-time realization")
    u = np.atleast_2d(np.asarray(u, dtype=float))
    d = ssd.dims
    if u.shape[1] != d.m:
        raise ValueError(f"u must have {d.m} columns, got {u.shape[1]}")
    x = np.zeros(d.n) if x0 is None else np.asarray(x0, dtype=float).reshape(d.n)
    y = np.empty((u.shape[0], d.p))
    for k in range(u.shape[0]):
        y[k] = ssd.C @ x
        x = ssd.A @ x + ssd.B @ u[k]
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state diverged at step {k + 1}", step=k + 1)
    return y


def _pem_cost(theta, data: IoData, param: AffineParameterization):
    """Mean squared simulation error; +inf when simulation diverges."""
    try:
        ssd = discretize_zoh(assemble(param, theta), data.T)
        y_hat = simulate_discrete(ssd, data.u)
    except DivergenceError:
        return np.inf, None
    residual = (data.y - y_hat).ravel()
    with np.errstate(over="ignore"):
        cost = residual @ residual / data.u.shape[0]
    return cost, residual


def pem_surrogate(data: IoData, param: AffineParameterization, init_theta,
                  max_iters: int = 100):
    """Damped Gauss-Newton minimization of the prediction-error criterion.

    The Jacobian of the stacked residuals is formed by central finite
    differences with step 1e-6 * max(1, |theta_i|); the damping parameter is
    halved after accepted steps and doubled after rejections (a diverging
    simulation counts as a rejection). Returns (theta, cost_trace) where the
    trace holds the cost after every accepted step, starting at the initial
    point.
    """
    theta = param.check_theta(init_theta)
    N = data.u.shape[0]
    cost, residual = _pem_cost(theta, data, param)
    if not np.isfinite(cost):
        raise DivergenceError("simulation diverges at the initial parameters")
    trace = [float(cost)]
    damping = 1e-3
    for _ in range(max_iters):
        J = np.empty((residual.size, param.q))
        for i in range(param.q):
            step = 1e-6 * max(1.0, abs(theta[i]))
            bumped = theta.copy()
            bumped[i] += step
            _, r_plus = _pem_cost(bumped, data, param)
            bumped[i] = theta[i] - step
            _, r_minus = _pem_cost(bumped, data, param)
            if r_plus is None or r_minus is None:
                raise DivergenceError("simulation diverges inside the difference stencil")
            J[:, i] = (r_plus - r_minus) / (2 * step)
        # residual = y - y_hat, so J approximates -d y_hat/d theta and the
        # Gauss-Newton step solves (J'J + damping I) delta = -J'residual
        gram = J.T @ J
        grad = J.T @ residual
        accepted = False
        for _ in range(30):
            delta = np.linalg.solve(gram + damping * np.eye(param.q), -grad)
            new_cost, new_residual = _pem_cost(theta + delta, data, param)
            if new_cost < cost:
                theta = theta + delta
                improvement = (cost - new_cost) / max(cost, 1e-300)
                cost, residual = new_cost, new_residual
                trace.append(float(cost))
                damping = max(damping / 2, 1e-12)
                accepted = True
                break
            damping = min(damping * 2, 1e12)
        if not accepted:
            break
        if improvement <= 1e-10:
            break
    return theta, trace

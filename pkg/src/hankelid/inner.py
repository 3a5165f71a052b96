"""Operator-splitting solver for the per-iteration convex subproblem.

The subproblem couples a separable quadratic over a stacked variable z with
two nuclear-norm terms evaluated on affine images W(z), T(z) and a set of
affine equality constraints E z = e. It is solved by ADMM: the z-update is
an equality-constrained quadratic program solved through a factored KKT
system, and the splitting copies of W and T take closed-form singular-value
thresholding steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack as _lapack

from .errors import InnerSolverError

try:
    import numba as _numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class VariableLayout:
    """Coordinate ranges of the stacked subproblem variable.

    Order: theta (q), O_v (vp x n), C_h (n x hm), X (vp x hm), then the q
    lifted observability blocks ((v-1)p x n each) and the q lifted
    controllability blocks (n x (h-1)m each). Matrix blocks are stored in
    column-major (Fortran) vec order.
    """

    n: int
    m: int
    p: int
    q: int
    v: int
    h: int

    @property
    def obs_shape(self):
        return (self.v * self.p, self.n)

    @property
    def ctrl_shape(self):
        return (self.n, self.h * self.m)

    @property
    def x_shape(self):
        return (self.v * self.p, self.h * self.m)

    @property
    def lifted_obs_shape(self):
        return ((self.v - 1) * self.p, self.n)

    @property
    def lifted_ctrl_shape(self):
        return (self.n, (self.h - 1) * self.m)

    @property
    def w_shape(self):
        return (self.v * self.p + self.n, self.h * self.m + self.n)

    @property
    def t_shape(self):
        rows = 1 + (self.v - 1) * self.p * self.n + (self.h - 1) * self.m * self.n
        return (rows, self.q + 1)

    def _sizes(self):
        obs = self.v * self.p * self.n
        ctrl = self.n * self.h * self.m
        x = self.v * self.p * self.h * self.m
        lob = (self.v - 1) * self.p * self.n
        lct = self.n * (self.h - 1) * self.m
        return obs, ctrl, x, lob, lct

    @property
    def size(self) -> int:
        obs, ctrl, x, lob, lct = self._sizes()
        return self.q + obs + ctrl + x + self.q * (lob + lct)

    @property
    def theta_slice(self):
        return slice(0, self.q)

    @property
    def obs_slice(self):
        obs, *_ = self._sizes()
        return slice(self.q, self.q + obs)

    @property
    def ctrl_slice(self):
        obs, ctrl, *_ = self._sizes()
        start = self.q + obs
        return slice(start, start + ctrl)

    @property
    def x_slice(self):
        obs, ctrl, x, _, _ = self._sizes()
        start = self.q + obs + ctrl
        return slice(start, start + x)

    def lifted_obs_slice(self, i: int):
        obs, ctrl, x, lob, _ = self._sizes()
        start = self.q + obs + ctrl + x + i * lob
        return slice(start, start + lob)

    def lifted_ctrl_slice(self, i: int):
        obs, ctrl, x, lob, lct = self._sizes()
        start = self.q + obs + ctrl + x + self.q * lob + i * lct
        return slice(start, start + lct)

    def coord_grid(self, sl: slice, shape) -> np.ndarray:
        """Coordinate indices of a matrix block, arranged as the matrix."""
        return np.arange(sl.start, sl.stop).reshape(shape, order="F")

    def unpack(self, z: np.ndarray):
        """Split a stacked vector into (theta, O, C, X, [Gammas], [Upsilons])."""
        theta = z[self.theta_slice].copy()
        obs = z[self.obs_slice].reshape(self.obs_shape, order="F")
        ctrl = z[self.ctrl_slice].reshape(self.ctrl_shape, order="F")
        x = z[self.x_slice].reshape(self.x_shape, order="F")
        lifted_obs = tuple(
            z[self.lifted_obs_slice(i)].reshape(self.lifted_obs_shape, order="F")
            for i in range(self.q))
        lifted_ctrl = tuple(
            z[self.lifted_ctrl_slice(i)].reshape(self.lifted_ctrl_shape, order="F")
            for i in range(self.q))
        return theta, obs, ctrl, x, lifted_obs, lifted_ctrl


@dataclass(frozen=True)
class AffineMatrixMap:
    """Entrywise affine map z -> M where each entry of M is either a fixed
    constant or a single coordinate of z (each coordinate used at most once)."""

    index: np.ndarray      # int, -1 marks a constant entry
    const: np.ndarray      # same shape; holds the fixed entries
    nvar: int              # length of the stacked variable

    def __post_init__(self):
        mask = self.index >= 0
        object.__setattr__(self, "_mask", mask)
        object.__setattr__(self, "_coords", self.index[mask])

    @property
    def shape(self):
        return self.index.shape

    def apply(self, z: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        out[self._mask] = z[self._coords]
        return out

    def adjoint(self, G: np.ndarray) -> np.ndarray:
        """Adjoint of the linear part: scatter matrix entries back onto z."""
        out = np.zeros(self.nvar)
        out[self._coords] = G[self._mask]
        return out

    def coord_mask(self) -> np.ndarray:
        """Boolean marker of the z coordinates this map reads."""
        out = np.zeros(self.nvar, dtype=bool)
        out[self._coords] = True
        return out


def build_w_map(layout: VariableLayout) -> AffineMatrixMap:
    """The certificate block [[X, O_v], [C_h, I_n]] as an affine map of z."""
    rows, cols = layout.w_shape
    index = np.full((rows, cols), -1, dtype=int)
    const = np.zeros((rows, cols))
    vp = layout.v * layout.p
    hm = layout.h * layout.m
    index[:vp, :hm] = layout.coord_grid(layout.x_slice, layout.x_shape)
    index[:vp, hm:] = layout.coord_grid(layout.obs_slice, layout.obs_shape)
    index[vp:, :hm] = layout.coord_grid(layout.ctrl_slice, layout.ctrl_shape)
    const[vp:, hm:] = np.eye(layout.n)
    return AffineMatrixMap(index=index, const=const, nvar=layout.size)


def build_t_map(layout: VariableLayout) -> AffineMatrixMap:
    """The rank-one certificate [[1, theta^T], [vec(Obar), vec(Gamma_i)],
    [vec(Cbar), vec(Upsilon_i)]] as an affine map of z."""
    rows, cols = layout.t_shape
    index = np.full((rows, cols), -1, dtype=int)
    const = np.zeros((rows, cols))
    const[0, 0] = 1.0
    index[0, 1:] = np.arange(layout.q)
    # vec(Obar): leading (v-1)p rows of O_v, column-major
    obs_grid = layout.coord_grid(layout.obs_slice, layout.obs_shape)
    bar_rows = (layout.v - 1) * layout.p
    nob = bar_rows * layout.n
    index[1:1 + nob, 0] = obs_grid[:bar_rows, :].ravel(order="F")
    # vec(Cbar): leading (h-1)m columns of C_h
    ctrl_grid = layout.coord_grid(layout.ctrl_slice, layout.ctrl_shape)
    bar_cols = (layout.h - 1) * layout.m
    index[1 + nob:, 0] = ctrl_grid[:, :bar_cols].ravel(order="F")
    for i in range(layout.q):
        index[1:1 + nob, 1 + i] = np.arange(
            layout.lifted_obs_slice(i).start, layout.lifted_obs_slice(i).stop)
        index[1 + nob:, 1 + i] = np.arange(
            layout.lifted_ctrl_slice(i).start, layout.lifted_ctrl_slice(i).stop)
    return AffineMatrixMap(index=index, const=const, nvar=layout.size)


@dataclass(frozen=True)
class SubproblemSpec:
    """One fully assembled convex subproblem.

    The smooth part is separable: 0.5 * z' diag(quad_diag) z + quad_linear' z
    + quad_const (data fit plus the linearization trace terms). The solver
    adds the proximal terms rho * ||W(z) - prox_w||_F^2 (likewise for T) and
    the nuclear-norm terms weighted by lambda1, lambda2.
    """

    layout: VariableLayout
    quad_diag: np.ndarray
    quad_linear: np.ndarray
    quad_const: float
    map_w: AffineMatrixMap
    map_t: AffineMatrixMap
    E: np.ndarray
    e: np.ndarray
    lambda1: float
    lambda2: float
    prox_w: np.ndarray
    prox_t: np.ndarray
    rho: float

    def __post_init__(self):
        N = self.layout.size
        if self.quad_diag.shape != (N,) or self.quad_linear.shape != (N,):
            raise ValueError("quadratic terms do not match the variable layout")
        if self.E.ndim != 2 or self.E.shape[1] != N or self.e.shape != (self.E.shape[0],):
            raise ValueError("constraint system does not match the variable layout")
        if self.map_w.shape != self.prox_w.shape or self.map_t.shape != self.prox_t.shape:
            raise ValueError("proximal centers do not match the affine map shapes")

    def smooth_objective(self, z: np.ndarray) -> float:
        """Quadratic + trace part, plus the proximal terms at z."""
        val = 0.5 * z @ (self.quad_diag * z) + self.quad_linear @ z + self.quad_const
        val += self.rho * np.linalg.norm(self.map_w.apply(z) - self.prox_w) ** 2
        val += self.rho * np.linalg.norm(self.map_t.apply(z) - self.prox_t) ** 2
        return val

    def full_objective(self, z: np.ndarray) -> float:
        """Complete subproblem objective (smooth + nuclear-norm terms)."""
        nw = np.linalg.svd(self.map_w.apply(z), compute_uv=False).sum()
        nt = np.linalg.svd(self.map_t.apply(z), compute_uv=False).sum()
        return self.smooth_objective(z) + self.lambda1 * nw + self.lambda2 * nt


def _thin_svd(M: np.ndarray):
    """Thin SVD through the raw LAPACK driver (low overhead on small
    matrices); falls back to numpy when the driver fails to converge."""
    u, s, vt, info = _lapack.dgesdd(M, compute_uv=1, full_matrices=0)
    if info != 0:
        return np.linalg.svd(M, full_matrices=False)
    return u, s, vt


def svt(M: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: prox of tau * nuclear norm at M."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    U, s, Vt = _thin_svd(np.asarray(M, dtype=float))
    shrunk = np.maximum(s - tau, 0.0)
    return (U * shrunk) @ Vt


def _top_factor_product(M: np.ndarray) -> np.ndarray:
    """U1 V1' summed over singular values above the dominant scale
    (all of them for a generic matrix; zero for a zero matrix)."""
    if not M.any():
        return np.zeros(M.shape)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > 1e-10 * s[0]
    return U[:, keep] @ Vt[keep]


@dataclass
class ReducedKkt:
    """Factored solve of min 0.5 z'Hz + g'z s.t. E z = e with diagonal H.

    The constraint block is eliminated through the Schur complement
    S = E H^-1 E'; since the minimizer is affine in the linear term, the
    whole solve collapses to one precomputed matrix-vector product
    z = M g + c. Rank-deficient constraint systems fall back to a
    pseudo-inverse (least-squares) treatment and set ``rank_deficient``.
    """

    h_diag: np.ndarray
    E: np.ndarray
    e: np.ndarray
    rank_deficient: bool = False
    deficient_rows: int = 0
    _solve_mat: np.ndarray = field(init=False, repr=False, default=None)
    _solve_off: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        with np.errstate(divide="ignore"):
            h_inv = np.where(self.h_diag > 0, 1.0 / self.h_diag, 0.0)
        N = self.h_diag.size
        if self.E.shape[0] == 0:
            self._solve_mat = -np.diag(h_inv)
            self._solve_off = np.zeros(N)
            return
        EH = self.E * h_inv
        S = EH @ self.E.T
        S_inv = None
        try:
            chol = scipy.linalg.cho_factor(S)
            pivots = np.abs(np.diag(chol[0]))
            # pivots scale like sqrt(eigenvalues); ratio 1e-7 ~ cond(S) 1e14
            if pivots.min() <= 1e-7 * pivots.max():
                raise scipy.linalg.LinAlgError("near-singular Schur complement")
            S_inv = scipy.linalg.cho_solve(chol, np.eye(S.shape[0]))
        except scipy.linalg.LinAlgError:
            rank = np.linalg.matrix_rank(self.E)
            self.rank_deficient = True
            self.deficient_rows = self.E.shape[0] - rank
            warnings.warn(
                f"constraint system is rank deficient ({self.deficient_rows} redundant rows); "
                "using a least-squares treatment", RuntimeWarning, stacklevel=2)
            S_inv = np.linalg.pinv(S, hermitian=True)
        # z(g) = (-H^-1 + H^-1 E' S^-1 E H^-1) g + H^-1 E' S^-1 e
        lift = EH.T @ S_inv
        self._solve_mat = lift @ EH
        self._solve_mat[np.diag_indices(N)] -= h_inv
        self._solve_off = lift @ self.e

    def solve(self, g: np.ndarray) -> np.ndarray:
        """Minimizer for linear term g (other data fixed at assembly)."""
        return self._solve_mat @ g + self._solve_off

    def constraint_residual(self, z: np.ndarray) -> float:
        if self.E.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.E @ z - self.e)))


def assemble_reduced_system(spec: SubproblemSpec, mu_w: float,
                            mu_t: float | None = None) -> ReducedKkt:
    """Build and factor the KKT system of the z-update.

    The Hessian is the spec's separable quadratic plus 2*rho plus the
    splitting penalty on every coordinate each affine map reads. The two
    certificate blocks may carry different penalties.
    """
    if mu_t is None:
        mu_t = mu_w
    h = spec.quad_diag.copy()
    h[spec.map_w.coord_mask()] += 2.0 * spec.rho + mu_w
    h[spec.map_t.coord_mask()] += 2.0 * spec.rho + mu_t
    return ReducedKkt(h_diag=h, E=spec.E, e=spec.e)


def _admm_chunk_py(solve_mat, solve_off, g0,
                   coords_w, pos_w, const_w, rw, cw, tau_w, mu_w,
                   coords_t, pos_t, const_t, rt, ct, tau_t, mu_t,
                   z_w, z_t, dual_w, dual_t, merit_buf,
                   primal_tol, dual_tol, max_iters, adaptive, ratio):
    """One ADMM run segment on flattened state; pure-python fallback twin of
    the jitted kernel. Returns (status, iters, z, rp_w, rp_t, rd_w, rd_t)
    with status 0 converged, 1 iteration cap, 2 penalty adaptation requested.
    Mutates z_w, z_t, dual_w, dual_t and fills merit_buf[:iters]."""
    z = np.zeros(solve_off.size)
    rp_w = rp_t = rd_w = rd_t = np.inf
    for it in range(max_iters):
        g = g0.copy()
        for k in range(coords_w.size):
            g[coords_w[k]] -= mu_w * (z_w[pos_w[k]] - dual_w[pos_w[k]])
        for k in range(coords_t.size):
            g[coords_t[k]] -= mu_t * (z_t[pos_t[k]] - dual_t[pos_t[k]])
        z = solve_mat @ g + solve_off

        img_w = const_w.copy()
        for k in range(coords_w.size):
            img_w[pos_w[k]] = z[coords_w[k]]
        img_t = const_t.copy()
        for k in range(coords_t.size):
            img_t[pos_t[k]] = z[coords_t[k]]

        U, s, Vt = np.linalg.svd((img_w + dual_w).reshape(rw, cw),
                                 full_matrices=False)
        new_w = ((U * np.maximum(s - tau_w, 0.0)) @ Vt).ravel()
        U, s, Vt = np.linalg.svd((img_t + dual_t).reshape(rt, ct),
                                 full_matrices=False)
        new_t = ((U * np.maximum(s - tau_t, 0.0)) @ Vt).ravel()

        res_w = img_w - new_w
        res_t = img_t - new_t
        rp_w2 = res_w @ res_w
        rp_t2 = res_t @ res_t
        step_w = new_w - z_w
        step_t = new_t - z_t
        acc_w = 0.0
        for k in range(pos_w.size):
            acc_w += step_w[pos_w[k]] ** 2
        acc_t = 0.0
        for k in range(pos_t.size):
            acc_t += step_t[pos_t[k]] ** 2
        rd_w = mu_w * np.sqrt(acc_w)
        rd_t = mu_t * np.sqrt(acc_t)
        rp_w = np.sqrt(rp_w2)
        rp_t = np.sqrt(rp_t2)
        merit_buf[it] = mu_w * (rp_w2 + step_w @ step_w) \
            + mu_t * (rp_t2 + step_t @ step_t)

        dual_w += res_w
        dual_t += res_t
        z_w[:] = new_w
        z_t[:] = new_t

        scale = max(1.0, np.sqrt(img_w @ img_w + img_t @ img_t))
        rp = np.sqrt(rp_w2 + rp_t2)
        rd = np.sqrt(rd_w ** 2 + rd_t ** 2)
        if rp <= primal_tol * scale and rd <= dual_tol * scale:
            return 0, it + 1, z, rp_w, rp_t, rd_w, rd_t
        if adaptive:
            need_w = (rp_w > ratio * rd_w and mu_w < 1e6) \
                or (rd_w > ratio * rp_w and mu_w > 1e-6)
            need_t = (rp_t > ratio * rd_t and mu_t < 1e6) \
                or (rd_t > ratio * rp_t and mu_t > 1e-6)
            if need_w or need_t:
                return 2, it + 1, z, rp_w, rp_t, rd_w, rd_t
    return 1, max_iters, z, rp_w, rp_t, rd_w, rd_t


if _HAVE_NUMBA:
    _admm_chunk_jit = _numba.njit(cache=True)(_admm_chunk_py)
else:  # pragma: no cover
    _admm_chunk_jit = _admm_chunk_py


@dataclass(frozen=True)
class SplitSettings:
    """ADMM controls for the subproblem solver."""

    mu: float = 1.0
    max_iters: int = 2000
    primal_tol: float = 1e-7
    dual_tol: float = 1e-7
    adaptive_penalty: bool = True
    penalty_ratio: float = 10.0
    penalty_scale: float = 2.0

    def __post_init__(self):
        if min(self.mu, self.max_iters, self.primal_tol, self.dual_tol,
               self.penalty_ratio, self.penalty_scale) <= 0:
            raise ValueError("all split settings must be positive")


@dataclass
class SplitDiagnostics:
    """Outcome record of one ADMM run."""

    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    mu_history: list
    constraint_residual: float
    merit_trace: list
    rank_deficient: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "mu_updates": len(self.mu_history),
            "constraint_residual": self.constraint_residual,
            "rank_deficient": self.rank_deficient,
        }


def split_solve(spec: SubproblemSpec, settings: SplitSettings = SplitSettings()):
    """Solve the subproblem by ADMM with singular-value thresholding.

    Returns (z, SplitDiagnostics). ``diagnostics.converged`` is False when
    the iteration cap was reached before the residual tolerances; the best
    iterate found is still returned.

    The recorded merit is the splitting fixed-point residual
    mu * (||r||^2 + ||Z - Z_prev||^2), which is non-increasing between
    penalty updates.
    """
    layout = spec.layout
    mu_w = mu_t = settings.mu
    kkt = assemble_reduced_system(spec, mu_w, mu_t)
    mu_history = [(mu_w, mu_t)]

    # proximal linear term: 2*rho * P'(const - center) for each map
    g_prox = 2.0 * spec.rho * (
        spec.map_w.adjoint(spec.map_w.const - spec.prox_w)
        + spec.map_t.adjoint(spec.map_t.const - spec.prox_t))
    g_base = spec.quad_linear + g_prox
    adj_const_w = spec.map_w.adjoint(spec.map_w.const)
    adj_const_t = spec.map_t.adjoint(spec.map_t.const)

    rw, cw = spec.map_w.shape
    rt, ct = spec.map_t.shape
    coords_w = np.ascontiguousarray(spec.map_w._coords)
    coords_t = np.ascontiguousarray(spec.map_t._coords)
    pos_w = np.flatnonzero(spec.map_w._mask.ravel())
    pos_t = np.flatnonzero(spec.map_t._mask.ravel())
    const_w = np.ascontiguousarray(spec.map_w.const.ravel())
    const_t = np.ascontiguousarray(spec.map_t.const.ravel())

    z_w = spec.prox_w.ravel().copy()
    z_t = spec.prox_t.ravel().copy()
    # the stationary scaled dual is a nuclear-norm subgradient over mu;
    # seeding it from the proximal center's top factors shortens the dual
    # ramp-up (a zero center seeds zero duals)
    dual_w = ((spec.lambda1 / mu_w) * _top_factor_product(spec.prox_w)).ravel().copy()
    dual_t = ((spec.lambda2 / mu_t) * _top_factor_product(spec.prox_t)).ravel().copy()

    kernel = _admm_chunk_jit
    merit_trace: list = []
    converged = False
    rp_w = rp_t = rd_w = rd_t = np.inf
    z = np.zeros(layout.size)
    iterations = 0

    while iterations < settings.max_iters:
        budget = settings.max_iters - iterations
        merit_buf = np.empty(budget)
        g0 = g_base + mu_w * adj_const_w + mu_t * adj_const_t
        status, used, z, rp_w, rp_t, rd_w, rd_t = kernel(
            kkt._solve_mat, kkt._solve_off, g0,
            coords_w, pos_w, const_w, rw, cw, spec.lambda1 / mu_w, mu_w,
            coords_t, pos_t, const_t, rt, ct, spec.lambda2 / mu_t, mu_t,
            z_w, z_t, dual_w, dual_t, merit_buf,
            settings.primal_tol, settings.dual_tol, budget,
            settings.adaptive_penalty, settings.penalty_ratio)
        merit_trace.extend(merit_buf[:used].tolist())
        iterations += used
        if status == 0:
            converged = True
            break
        if status == 1:
            break
        # status 2: rebalance the penalty of whichever block drifted
        changed = False
        if rp_w > settings.penalty_ratio * rd_w and mu_w < 1e6:
            mu_w *= settings.penalty_scale
            dual_w /= settings.penalty_scale
            changed = True
        elif rd_w > settings.penalty_ratio * rp_w and mu_w > 1e-6:
            mu_w /= settings.penalty_scale
            dual_w *= settings.penalty_scale
            changed = True
        if rp_t > settings.penalty_ratio * rd_t and mu_t < 1e6:
            mu_t *= settings.penalty_scale
            dual_t /= settings.penalty_scale
            changed = True
        elif rd_t > settings.penalty_ratio * rp_t and mu_t > 1e-6:
            mu_t /= settings.penalty_scale
            dual_t *= settings.penalty_scale
            changed = True
        if not changed:  # pragma: no cover - kernel and shell use one rule
            break
        kkt = assemble_reduced_system(spec, mu_w, mu_t)
        mu_history.append((mu_w, mu_t))

    diag = SplitDiagnostics(
        iterations=iterations,
        converged=converged,
        primal_residual=float(np.sqrt(rp_w ** 2 + rp_t ** 2)),
        dual_residual=float(np.sqrt(rd_w ** 2 + rd_t ** 2)),
        mu_history=mu_history,
        constraint_residual=kkt.constraint_residual(z),
        merit_trace=merit_trace,
        rank_deficient=kkt.rank_deficient)
    return z, diag

"""Affinely parameterized state-space models and impulse-response machinery.

The model class is strictly proper (no feedthrough):

    dx/dt = A(theta) x + B(theta) u,    y = C(theta) x,

with A(theta) = A0 + sum_i Ai * theta_i and likewise for B, C. Everything
downstream (Hankel matrices, realizations, benchmark instances) is built
from the impulse-response matrices M_i = C A^i B of such triples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DivergenceError, RankDeficiencyError, UndefinedMetricError

# sigma_k <= RANK_RTOL * sigma_1 counts as zero wherever a rank decision is made
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Dims:
    """State, input and output dimensions (n, m, p)."""

    n: int
    m: int
    p: int

    def __post_init__(self):
        for name in ("n", "m", "p"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


def _as_matrix(value, shape, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class AffineParameterization:
    """Known coefficient matrices defining A(theta), B(theta), C(theta).

    Attributes
    ----------
    dims : Dims
    offset_a, offset_b, offset_c : ndarray
        The constant terms A0 (n x n), B0 (n x m), C0 (p x n).
    coeffs_a, coeffs_b, coeffs_c : tuple of ndarray
        Per-parameter coefficient matrices; the three tuples share length q.
    """

    dims: Dims
    offset_a: np.ndarray
    offset_b: np.ndarray
    offset_c: np.ndarray
    coeffs_a: tuple = ()
    coeffs_b: tuple = ()
    coeffs_c: tuple = ()

    def __post_init__(self):
        n, m, p = self.dims.n, self.dims.m, self.dims.p
        object.__setattr__(self, "offset_a", _as_matrix(self.offset_a, (n, n), "offset_a"))
        object.__setattr__(self, "offset_b", _as_matrix(self.offset_b, (n, m), "offset_b"))
        object.__setattr__(self, "offset_c", _as_matrix(self.offset_c, (p, n), "offset_c"))
        if not (len(self.coeffs_a) == len(self.coeffs_b) == len(self.coeffs_c)):
            raise ValueError("coefficient lists must share a common length q")
        object.__setattr__(
            self, "coeffs_a",
            tuple(_as_matrix(M, (n, n), f"coeffs_a[{i}]") for i, M in enumerate(self.coeffs_a)))
        object.__setattr__(
            self, "coeffs_b",
            tuple(_as_matrix(M, (n, m), f"coeffs_b[{i}]") for i, M in enumerate(self.coeffs_b)))
        object.__setattr__(
            self, "coeffs_c",
            tuple(_as_matrix(M, (p, n), f"coeffs_c[{i}]") for i, M in enumerate(self.coeffs_c)))

    @property
    def q(self) -> int:
        """Number of free parameters."""
        return len(self.coeffs_a)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.q,):
            raise ValueError(f"theta must have length {self.q}, got shape {theta.shape}")
        return theta


@dataclass(frozen=True)
class StateSpaceRealization:
    """A concrete (A, B, C) triple.

    ``dt == 0`` marks a continuous-time realization; ``dt > 0`` is the
    sampling period of a discrete-time one.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != n:
            raise ValueError(f"B must be {n} x m, got {B.shape}")
        if C.ndim != 2 or C.shape[1] != n:
            raise ValueError(f"C must be p x {n}, got {C.shape}")
        if not (np.isfinite(self.dt) and self.dt >= 0):
            raise ValueError(f"dt must be 0 (continuous) or a positive period, got {self.dt}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def dims(self) -> Dims:
        return Dims(self.A.shape[0], self.B.shape[1], self.C.shape[0])

    @property
    def is_discrete(self) -> bool:
        return self.dt > 0


@dataclass(frozen=True)
class HankelMatrix:
    """Block Hankel arrangement of impulse-response matrices.

    ``data`` is the dense (v*p) x (h*m) matrix whose (i, j) block of size
    p x m equals M_{i+j}.
    """

    data: np.ndarray
    v: int
    h: int
    p: int
    m: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (self.v * self.p, self.h * self.m):
            raise ValueError(
                f"data must have shape {(self.v * self.p, self.h * self.m)}, got {data.shape}")
        object.__setattr__(self, "data", data)

    def block(self, i: int, j: int) -> np.ndarray:
        """The p x m block at block position (i, j)."""
        return self.data[i * self.p:(i + 1) * self.p, j * self.m:(j + 1) * self.m]


def assemble(param: AffineParameterization, theta) -> StateSpaceRealization:
    """Evaluate the affine parameterization at ``theta``.

    Returns the continuous-time triple (A(theta), B(theta), C(theta)).
    """
    theta = param.check_theta(theta)
    A = param.offset_a.copy()
    B = param.offset_b.copy()
    C = param.offset_c.copy()
    for i, t in enumerate(theta):
        A += param.coeffs_a[i] * t
        B += param.coeffs_b[i] * t
        C += param.coeffs_c[i] * t
    return StateSpaceRealization(A, B, C, dt=0.0)


def markov_sequence(ss: StateSpaceRealization, count: int) -> np.ndarray:
    """Impulse-response matrices M_i = C A^i B for i = 0 .. count-1.

    Returns an array of shape (count, p, m). A^i B is accumulated by
    repeated multiplication, never by explicit matrix powers.
    """
    if count < 1:
        raise ValueError("count must be positive")
    d = ss.dims
    blocks = np.empty((count, d.p, d.m))
    reach = ss.B
    for i in range(count):
        blocks[i] = ss.C @ reach
        if i + 1 < count:
            reach = ss.A @ reach
    return blocks


def observability_stack(ss: StateSpaceRealization, v: int) -> np.ndarray:
    """Extended observability matrix [C; CA; ...; CA^(v-1)], shape (v*p, n)."""
    rows = [ss.C]
    for _ in range(v - 1):
        rows.append(rows[-1] @ ss.A)
    return np.vstack(rows)


def controllability_stack(ss: StateSpaceRealization, h: int) -> np.ndarray:
    """Extended controllability matrix [B, AB, ..., A^(h-1)B], shape (n, h*m)."""
    cols = [ss.B]
    for _ in range(h - 1):
        cols.append(ss.A @ cols[-1])
    return np.hstack(cols)


def build_hankel(markov: np.ndarray, v: int, h: int) -> HankelMatrix:
    """Arrange Markov blocks into the v x h block Hankel matrix.

    ``markov`` must supply at least v + h - 1 blocks of shape (p, m).
    """
    markov = np.asarray(markov, dtype=float)
    if markov.ndim != 3:
        raise ValueError("markov must have shape (count, p, m)")
    if v < 1 or h < 1:
        raise ValueError("v and h must be positive")
    count, p, m = markov.shape
    if count < v + h - 1:
        raise ValueError(f"need at least {v + h - 1} Markov blocks, got {count}")
    data = np.empty((v * p, h * m))
    for i in range(v):
        for j in range(h):
            data[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i + j]
    return HankelMatrix(data, v=v, h=h, p=p, m=m)


def impulse_response_fit(candidate: np.ndarray, reference: np.ndarray) -> float:
    """Normalized aggregate impulse-response error.

    sum_i ||M_i^cand - M_i^ref||_F / sum_i ||M_i^ref||_F over matching
    block sequences. Raises :class:`UndefinedMetricError` when the
    reference is identically zero.
    """
    candidate = np.asarray(candidate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if candidate.shape != reference.shape:
        raise ValueError(
            f"block sequences must have equal shapes, got {candidate.shape} vs {reference.shape}")
    denom = sum(np.linalg.norm(M) for M in reference)
    if denom == 0.0:
        raise UndefinedMetricError("reference impulse response is identically zero")
    num = sum(np.linalg.norm(Mc - Mr) for Mc, Mr in zip(candidate, reference))
    return num / denom


def discretize_zoh(ss: StateSpaceRealization, T: float) -> StateSpaceRealization:
    """Zero-order-hold discretization with sampling period ``T``.

    A_T = exp(A T) and B_T = int_0^T exp(A tau) B dtau are read off the
    matrix exponential of the augmented block [[A, B], [0, 0]] * T; C is
    unchanged.
    """
    if ss.is_discrete:
        raise ValueError("realization is already discrete")
    if not (T > 0 and np.isfinite(T)):
        raise ValueError(f"sampling period must be positive and finite, got {T}")
    d = ss.dims
    aug = np.zeros((d.n + d.m, d.n + d.m))
    aug[:d.n, :d.n] = ss.A
    aug[:d.n, d.n:] = ss.B
    E = scipy.linalg.expm(aug * T)
    if not np.all(np.isfinite(E)):
        raise DivergenceError("matrix exponential overflowed; A*T is too large")
    return StateSpaceRealization(E[:d.n, :d.n], E[:d.n, d.n:], ss.C, dt=T)


def ho_kalman_realize(hankel: HankelMatrix, n: int) -> StateSpaceRealization:
    """Balanced realization of order ``n`` from an exact block Hankel matrix.

    Factors the rank-n truncated SVD into extended observability and
    controllability stacks and solves the block-shift relation for A in
    least squares. The returned basis is arbitrary (balanced); only the
    Markov parameters are meaningful.
    """
    if n < 1:
        raise ValueError("order must be positive")
    if (hankel.v - 1) * hankel.p < n:
        raise ValueError(
            f"need (v-1)*p >= n to form the shifted observability relation, "
            f"got v={hankel.v}, p={hankel.p}, n={n}")
    U, s, Vt = np.linalg.svd(hankel.data, full_matrices=False)
    if n > s.size or s[n - 1] <= RANK_RTOL * s[0]:
        raise RankDeficiencyError(
            f"Hankel matrix has numeric rank < {n} (singular values {s[:n]})")
    sqrt_s = np.sqrt(s[:n])
    obs = U[:, :n] * sqrt_s
    ctrl = sqrt_s[:, None] * Vt[:n]
    p = hankel.p
    A = np.linalg.lstsq(obs[:-p], obs[p:], rcond=None)[0]
    return StateSpaceRealization(A, ctrl[:, :hankel.m], obs[:p], dt=0.0)


def _random_stable_matrix(n: int, rng: np.random.Generator, max_imag: float = np.pi / 2):
    """Stable n x n matrix: eigenvalue real parts in (-2, -0.1), conjugated
    by a random orthogonal basis. Imaginary parts are capped so a unit
    sampling period stays below the Nyquist rate."""
    pairs = int(rng.integers(0, n // 2 + 1))
    D = np.zeros((n, n))
    k = 0
    for _ in range(pairs):
        a = rng.uniform(-2.0, -0.1)
        b = rng.uniform(0.0, max_imag)
        D[k:k + 2, k:k + 2] = [[a, b], [-b, a]]
        k += 2
    for _ in range(n - 2 * pairs):
        D[k, k] = rng.uniform(-2.0, -0.1)
        k += 1
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ D @ Q.T


def hankel_numeric_rank(hankel: HankelMatrix) -> int:
    """Numeric rank of the Hankel data at the package-wide tolerance."""
    s = np.linalg.svd(hankel.data, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def random_structured_instance(dims: Dims, q: int, seed: int):
    """Random minimal stable system with q free entries of (A, B, C).

    Each selected entry becomes an elementary-matrix coefficient with its
    original value as the true parameter; the offsets carry all unselected
    entries. Deterministic in ``seed``.

    Returns (AffineParameterization, theta_star).
    """
    n, m, p = dims.n, dims.m, dims.p
    if not 1 <= q <= (p + m) * n:
        raise ValueError(f"q must be between 1 and (p+m)*n = {(p + m) * n}, got {q}")
    rng = np.random.default_rng(seed)
    for _ in range(64):
        A = _random_stable_matrix(n, rng)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        ss = StateSpaceRealization(A, B, C)
        hank = build_hankel(markov_sequence(ss, 2 * n + 1), n + 1, n + 1)
        if hankel_numeric_rank(hank) == n:
            break
    else:  # pragma: no cover - vanishing probability
        raise RuntimeError("failed to draw a minimal system after 64 attempts")

    shapes = [("A", (n, n)), ("B", (n, m)), ("C", (p, n))]
    total = n * n + n * m + p * n
    picks = rng.choice(total, size=q, replace=False)
    matrices = {"A": A.copy(), "B": B.copy(), "C": C.copy()}
    coeffs = {"A": [], "B": [], "C": []}
    theta_star = np.empty(q)
    for i, flat in enumerate(picks):
        flat = int(flat)
        for name, shape in shapes:
            size = shape[0] * shape[1]
            if flat < size:
                x, y = divmod(flat, shape[1])
                break
            flat -= size
        for other, other_shape in shapes:
            E = np.zeros(other_shape)
            if other == name:
                E[x, y] = 1.0
            coeffs[other].append(E)
        theta_star[i] = matrices[name][x, y]
        matrices[name][x, y] = 0.0
    param = AffineParameterization(
        dims=dims,
        offset_a=matrices["A"], offset_b=matrices["B"], offset_c=matrices["C"],
        coeffs_a=tuple(coeffs["A"]), coeffs_b=tuple(coeffs["B"]), coeffs_c=tuple(coeffs["C"]))
    return param, theta_star


def compartmental_instance(n: int, seed: int):
    """Chain of n compartments with exchange rates as free parameters.

    The state matrix is tridiagonal with zero column sums: theta_{2i-1} is
    the forward rate i -> i+1 and theta_{2i} the backward rate i+1 -> i,
    for i = 1 .. n-1 (so q = 2n - 2). Input and output act on the last
    compartment only. True rates are drawn uniformly from (0.1, 2.0).

    Returns (AffineParameterization, theta_star).
    """
    if n < 2:
        raise ValueError(f"compartmental structure needs n >= 2, got {n}")
    dims = Dims(n=n, m=1, p=1)
    q = 2 * n - 2
    coeffs_a = []
    for i in range(n - 1):
        forward = np.zeros((n, n))
        forward[i, i] = -1.0
        forward[i + 1, i] = 1.0
        backward = np.zeros((n, n))
        backward[i + 1, i + 1] = -1.0
        backward[i, i + 1] = 1.0
        coeffs_a.extend([forward, backward])
    zero_b = np.zeros((n, 1))
    zero_c = np.zeros((1, n))
    unit = np.zeros((n, 1))
    unit[-1, 0] = 1.0
    param = AffineParameterization(
        dims=dims,
        offset_a=np.zeros((n, n)), offset_b=unit, offset_c=unit.T,
        coeffs_a=tuple(coeffs_a),
        coeffs_b=tuple(zero_b.copy() for _ in range(q)),
        coeffs_c=tuple(zero_c.copy() for _ in range(q)))
    rng = np.random.default_rng(seed)
    theta_star = rng.uniform(0.1, 2.0, size=q)
    return param, theta_star

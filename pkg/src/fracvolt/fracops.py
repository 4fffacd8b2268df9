"""Fractional-calculus primitives on time meshes.

Everything here is built around the kernel family

    omega(mu, t) = t**(mu-1) / Gamma(mu),

its antiderivative ladder (omega(mu+1), omega(mu+2), ...), and product
integration: singular convolutions are evaluated by integrating the exact
kernel against the piecewise-linear interpolant of the sampled function, so
the t=s singularity never meets a numerical quadrature rule.

The module is pure: meshes and grid functions are immutable after
construction and every operation returns a fresh object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "GridFunction",
    "TimeMesh",
    "conv_weights",
    "default_grading",
    "frac_integral",
    "frac_integral_tmoment",
    "gamma_fn",
    "mittag_leffler",
    "omega",
    "rl_derivative",
]


# ---------------------------------------------------------------------------
# Gamma function (Lanczos, g = 7, 9 terms)
# ---------------------------------------------------------------------------

# Godfrey's coefficient set for g = 7.  Relative error below 1e-14 on the
# real axis away from the poles; comfortably beats the 1e-13 budget on (0, 20].
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Gamma(x) for real x that is not a non-positive integer."""
    if x != x:
        raise ValueError("gamma_fn: argument is NaN")
    if x <= 0.0 and x == math.floor(x):
        raise ValueError(f"gamma_fn: pole at non-positive integer x={x}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_C[0]
    for k in range(1, len(_LANCZOS_C)):
        acc += _LANCZOS_C[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


# ---------------------------------------------------------------------------
# omega kernels
# ---------------------------------------------------------------------------


def omega(mu: float, t):
    """Kernel omega(mu, t) = t**(mu-1)/Gamma(mu); vectorized over ``t``.

    At t=0: zero for mu > 1, one for mu = 1, and a domain error for mu < 1
    (the kernel blows up there; callers integrate across, never through, it).
    """
    if mu <= 0.0:
        raise ValueError(f"omega: order must be positive, got mu={mu}")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("omega: negative time")
    if mu < 1.0 and np.any(arr == 0.0):
        raise ValueError(f"omega: singular at t=0 for mu={mu} < 1")
    g = gamma_fn(mu)
    with np.errstate(divide="ignore"):
        out = arr ** (mu - 1.0) / g
    if arr.ndim == 0:
        return float(out)
    return out


def default_grading(alpha: float) -> float:
    """Default mesh grading 2/alpha, clamped to [1, 8]."""
    return min(max(2.0 / alpha, 1.0), 8.0)


# ---------------------------------------------------------------------------
# Time mesh and grid functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeMesh:
    """Graded partition of [0, T] with nodes t_n = T (n/N)**gamma.

    gamma = 1 reproduces the uniform mesh (node values computed as T*(n/N)).
    """

    T: float
    N: int
    gamma: float = 1.0
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError(f"TimeMesh: horizon must be positive, got T={self.T}")
        if self.N < 1:
            raise ValueError(f"TimeMesh: need at least one cell, got N={self.N}")
        if self.gamma < 1.0:
            raise ValueError(f"TimeMesh: grading must be >= 1, got {self.gamma}")
        frac = np.arange(self.N + 1, dtype=float) / self.N
        if self.gamma == 1.0:
            nodes = self.T * frac
        else:
            nodes = self.T * frac**self.gamma
        nodes[0], nodes[-1] = 0.0, self.T
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("TimeMesh: nodes are not strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeMesh":
        return cls(T, N, 1.0)

    @classmethod
    def graded(cls, T: float, N: int, gamma: float) -> "TimeMesh":
        return cls(T, N, gamma)

    @property
    def h(self) -> np.ndarray:
        """Cell widths."""
        return np.diff(self.nodes)


@dataclass(frozen=True)
class GridFunction:
    """Time samples of an R^m valued function, read piecewise-linearly.

    ``values`` has shape (N+1, m): one row per mesh node.
    """

    mesh: TimeMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.mesh.N + 1:
            raise ValueError(
                f"GridFunction: {vals.shape[0]} rows for {self.mesh.N + 1} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFunction: non-finite entries")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_callable(cls, mesh: TimeMesh, f: Callable[[float], float | np.ndarray]) -> "GridFunction":
        rows = [np.atleast_1d(np.asarray(f(t), dtype=float)) for t in mesh.nodes]
        return cls(mesh, np.vstack(rows))

    @classmethod
    def zeros(cls, mesh: TimeMesh, dim: int = 1) -> "GridFunction":
        return cls(mesh, np.zeros((mesh.N + 1, dim)))

    def node_norms(self) -> np.ndarray:
        """Euclidean norm of the value vector at each node."""
        return np.sqrt(np.sum(self.values**2, axis=1))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.mesh, values)


# ---------------------------------------------------------------------------
# Product-integration convolution weights
# ---------------------------------------------------------------------------

# Below this cell-width-to-distance ratio the binomial tail series for the
# in-cell moment is used; the direct antiderivative difference cancels
# catastrophically there on strongly graded meshes.
_SERIES_RATIO = 0.25


_BINOM_TAIL_TERMS = 32


def _binom_tail(mu1: float, r: np.ndarray) -> np.ndarray:
    """(1+r)**mu1 - 1 - mu1*r via its binomial series, for 0 <= r <= 1/4.

    Horner over a fixed number of terms: coefficients fall at least
    geometrically with ratio r <= 1/4, so 32 terms overshoot machine
    precision.  The direct expression loses all digits as r -> 0.
    """
    coeffs = np.empty(_BINOM_TAIL_TERMS)
    c = 0.5 * mu1 * (mu1 - 1.0)
    for i in range(_BINOM_TAIL_TERMS):
        coeffs[i] = c
        k = i + 3  # next term index
        c = c * (mu1 - (k - 1.0)) / k
    out = np.full_like(r, coeffs[-1])
    for i in range(_BINOM_TAIL_TERMS - 2, -1, -1):
        out = out * r + coeffs[i]
    return out * r * r


def _cell_integrals(mu: float, t: np.ndarray, n: int):
    """Per-cell integrals of omega against 1 and against (s - t_i)/h_i.

    Returns (A, B) of length n with

        A_i = int_cell omega(mu, t_n - s) ds,
        B_i = (1/h_i) int_cell (s - t_i) omega(mu, t_n - s) ds,

    both from the exact antiderivatives omega(mu+1), omega(mu+2), written in
    expm1/log1p/binomial-tail form so they stay accurate when a cell is far
    from t_n and much smaller than its distance (graded meshes).
    """
    tn = t[n]
    tt = t[: n + 1]
    h = np.diff(tt)
    a1 = tn - tt[1:]  # distance of right endpoints (a1[-1] = 0)
    g1 = gamma_fn(mu + 1.0)
    g2 = gamma_fn(mu + 2.0)
    A = np.empty(n)
    B = np.empty(n)
    # last cell touches the singularity: a1 = 0
    A[-1] = h[-1] ** mu / g1
    B[-1] = h[-1] ** mu / g2
    if n > 1:
        hh = h[:-1]
        aa = a1[:-1]
        r = hh / aa
        lp = np.log1p(r)
        # A = omega(mu+1, a1+h) - omega(mu+1, a1) = a1^mu/G(mu+1) * ((1+r)^mu - 1)
        A[:-1] = aa**mu / g1 * np.expm1(mu * lp)
        # B*h = omega(mu+2, a1+h) - omega(mu+2, a1) - h*omega(mu+1, a1)
        #     = a1^(mu+1)/G(mu+2) * ((1+r)^(mu+1) - 1 - (mu+1) r)
        g = np.empty(n - 1)
        small = r <= _SERIES_RATIO
        if np.any(small):
            g[small] = _binom_tail(mu + 1.0, r[small])
        big = ~small
        if np.any(big):
            g[big] = np.expm1((mu + 1.0) * lp[big]) - (mu + 1.0) * r[big]
        B[:-1] = aa ** (mu + 1.0) / g2 * g / hh
    return A, B


def conv_weights(mu: float, mesh: TimeMesh, n: int) -> np.ndarray:
    """Weights w[0..n] with sum_j w[j] phi_j = int_0^{t_n} omega(mu, t_n - s)
    (piecewise-linear interpolant of phi)(s) ds.

    Weights are nonnegative; for constant phi they sum to omega(mu+1, t_n)
    exactly up to rounding (the per-cell antiderivative differences
    telescope).
    """
    if mu <= 0.0:
        raise ValueError(f"conv_weights: order must be positive, got mu={mu}")
    if not 1 <= n <= mesh.N:
        raise ValueError(f"conv_weights: node index {n} outside 1..{mesh.N}")
    A, B = _cell_integrals(mu, mesh.nodes, n)
    w = np.zeros(n + 1)
    w[:n] += A - B
    w[1:n + 1] += B
    return w


def trap_weights(mesh: TimeMesh, n: int) -> np.ndarray:
    """Composite trapezoid weights on nodes 0..n (== conv_weights(1, ...))."""
    if not 1 <= n <= mesh.N:
        raise ValueError(f"trap_weights: node index {n} outside 1..{mesh.N}")
    h = np.diff(mesh.nodes[: n + 1])
    w = np.zeros(n + 1)
    w[:n] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@lru_cache(maxsize=16)
def _weight_matrix(mu: float, mesh: TimeMesh) -> np.ndarray:
    """Stacked conv_weights rows as a lower-triangular (N+1)x(N+1) matrix.

    Cached per (order, mesh); meshes hash by (T, N, gamma).  Only meshes
    with N <= 512 are admitted to keep the cache small.
    """
    W = np.zeros((mesh.N + 1, mesh.N + 1))
    for n in range(1, mesh.N + 1):
        W[n, : n + 1] = conv_weights(mu, mesh, n)
    W.setflags(write=False)
    return W


def frac_integral(mu: float, phi: GridFunction) -> GridFunction:
    """(I^mu phi) sampled at the mesh nodes, by product integration.

    mu = 0 is the identity.  Node 0 carries exact zero.  Exact (up to
    rounding) whenever phi is affine in t on each cell.
    """
    if mu < 0.0:
        raise ValueError(f"frac_integral: order must be >= 0, got mu={mu}")
    if mu == 0.0:
        return phi.with_values(phi.values)
    mesh = phi.mesh
    if mesh.N <= 512:
        return phi.with_values(_weight_matrix(mu, mesh) @ phi.values)
    out = np.zeros_like(phi.values)
    for n in range(1, mesh.N + 1):
        w = conv_weights(mu, mesh, n)
        out[n] = w @ phi.values[: n + 1]
    return phi.with_values(out)


def frac_integral_tmoment(mu: float, phi: GridFunction) -> GridFunction:
    """I^mu applied to t*phi(t), exact for the piecewise-linear phi.

    The integrand s*interp(phi)(s) is piecewise quadratic; using
    s = t_n - tau it is integrated against omega via the identities
    omega(mu,tau)*tau = mu*omega(mu+1,tau) and
    omega(mu,tau)*tau^2 = mu*(mu+1)*omega(mu+2,tau).

    Used by the commutator checks t*I^mu - I^mu(t*.) = mu*I^(mu+1).
    """
    if mu <= 0.0:
        raise ValueError(f"frac_integral_tmoment: order must be positive, got mu={mu}")
    mesh = phi.mesh
    t = mesh.nodes
    vals = phi.values
    out = np.zeros_like(vals)
    g1 = gamma_fn(mu + 1.0)
    g2 = gamma_fn(mu + 2.0)
    g3 = gamma_fn(mu + 3.0)
    for n in range(1, mesh.N + 1):
        tn = t[n]
        tt = t[: n + 1]
        h = np.diff(tt)
        a0 = tn - tt[:n]
        a1 = tn - tt[1:]
        # moments of omega over each cell in the tau variable
        m0 = (a0**mu - a1**mu) / g1
        m1 = mu * (a0 ** (mu + 1.0) - a1 ** (mu + 1.0)) / g2
        m2 = mu * (mu + 1.0) * (a0 ** (mu + 2.0) - a1 ** (mu + 2.0)) / g3
        # s*phi~(s) = (tn - tau)(c0 + c1 (a0 - tau)/h) with c0 = phi_i,
        # c1 = phi_{i+1} - phi_i; expand in powers of tau
        c0 = vals[:n]
        c1 = vals[1 : n + 1] - vals[:n]
        r = (a0 / h)[:, None]
        # with s = tn - tau:
        #   s*phi = (tn - tau) * (c0 + c1*(a0 - tau)/h)
        #         = [tn*c0 + tn*c1*a0/h]
        #         + tau * [-c0 - c1*a0/h - tn*c1/h]
        #         + tau^2 * [c1/h]
        q0 = tn * c0 + tn * r * c1
        q1 = -c0 - r * c1 - (tn / h)[:, None] * c1
        q2 = c1 / h[:, None]
        out[n] = (
            np.sum(q0 * m0[:, None], axis=0)
            + np.sum(q1 * m1[:, None], axis=0)
            + np.sum(q2 * m2[:, None], axis=0)
        )
    return phi.with_values(out)


def rl_derivative(alpha: float, phi: GridFunction) -> GridFunction:
    """Diagnostic derivative d/dt I^alpha phi by finite differences.

    Centered differences at interior nodes, one-sided at the ends; first
    order only near t=0.  The solver never calls this: the marching schemes
    work with the integrated forms.
    """
    mesh = phi.mesh
    if mesh.N < 2:
        raise ValueError("rl_derivative: need at least two cells")
    psi = frac_integral(alpha, phi).values
    t = mesh.nodes
    out = np.empty_like(psi)
    out[0] = (psi[1] - psi[0]) / (t[1] - t[0])
    out[-1] = (psi[-1] - psi[-2]) / (t[-1] - t[-2])
    for n in range(1, mesh.N):
        out[n] = (psi[n + 1] - psi[n - 1]) / (t[n + 1] - t[n - 1])
    return phi.with_values(out)


# ---------------------------------------------------------------------------
# Mittag-Leffler function
# ---------------------------------------------------------------------------

_ML_MAX_NEG = 50.0


def _ml_series(alpha: float, z: float) -> float:
    """Power series with Kahan-compensated summation.

    Only called where cancellation is benign (see mittag_leffler); terms are
    produced by the ratio recurrence so no Gamma overflow occurs.
    """
    total = 1.0
    comp = 0.0
    term = 1.0
    n = 0
    while True:
        term *= z * (gamma_fn(1.0 + n * alpha) / gamma_fn(1.0 + (n + 1) * alpha))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        n += 1
        if abs(term) < 1e-18 * max(abs(total), 1e-30) or n > 10000:
            return total


def _ml_spectral_neg(alpha: float, x: float) -> float:
    """E_alpha(-x) for x > 0, 0 < alpha < 1, via the spectral representation

        E_alpha(-x) = sin(pi a)/(pi a) *
                      int_0^inf exp(-(s x)^(1/a)) / (s^2 + 2 s cos(pi a) + 1) ds.

    The substitution s = e^u gives an analytic integrand that decays on both
    ends; the trapezoid rule on the u-line converges geometrically, limited
    by the complex poles at distance sin(pi a) from the real axis.  The step
    is refined until two successive levels agree to 1e-12 relative.
    """
    sa = math.sin(alpha * math.pi)
    ca = math.cos(alpha * math.pi)
    inv_a = 1.0 / alpha
    lo = -40.0
    hi = math.log(max(45.0**alpha / x, 1.0)) + 4.0
    h = min(0.05, sa / 6.0)

    def level(step: float) -> float:
        u = np.arange(lo, hi, step)
        s = np.exp(u)
        vals = np.exp(-((s * x) ** inv_a)) / (s * s + 2.0 * ca * s + 1.0) * s
        return sa / (alpha * math.pi) * float(np.trapezoid(vals, dx=step))

    prev = level(h)
    for _ in range(7):
        h *= 0.5
        cur = level(h)
        if abs(cur - prev) <= 1e-12 * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev


def mittag_leffler(alpha: float, z: float) -> float:
    """One-parameter Mittag-Leffler function E_alpha(z) for real z.

    Supported range: 0 < alpha <= 1 and -50 <= z <= z_max(alpha), where the
    positive side is limited by double-precision overflow of E itself.
    For z <= 0 the value lies in (0, 1].
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"mittag_leffler: alpha must be in (0, 1], got {alpha}")
    if z != z:
        raise ValueError("mittag_leffler: z is NaN")
    if z == 0.0:
        return 1.0
    if 1.0 - 2e-5 < alpha < 1.0:
        # the spectral path needs the pole distance sin(pi*alpha) resolved;
        # that costs ~50/sin(pi*alpha) grid points, which stops being
        # reasonable here, and the series has no precision left either
        raise ValueError(
            f"mittag_leffler: alpha={alpha} unsupported; orders within 2e-5 "
            f"of 1 are outside the supported range (use alpha=1)"
        )
    if alpha == 1.0:
        if z > 700.0:
            raise ValueError(
                "mittag_leffler: z outside supported range [-50, 700] for alpha=1"
            )
        if z < -_ML_MAX_NEG:
            raise ValueError(
                f"mittag_leffler: z outside supported range [-{_ML_MAX_NEG:g}, 700]"
            )
        return math.exp(z)
    if z > 0.0:
        # all-positive terms: the series is stable; refuse once E_alpha(z)
        # itself would overflow (leading growth exp(z**(1/alpha)))
        if z ** (1.0 / alpha) > 700.0:
            zmax = 700.0**alpha
            raise ValueError(
                f"mittag_leffler: z outside supported range "
                f"[-{_ML_MAX_NEG:g}, {zmax:.3g}] for alpha={alpha}"
            )
        return _ml_series(alpha, z)
    x = -z
    if x > _ML_MAX_NEG:
        raise ValueError(
            f"mittag_leffler: z outside supported range [-{_ML_MAX_NEG:g}, 0] "
            f"for negative arguments (got z={z})"
        )
    # alternating series loses roughly x**(1/alpha) * log10(e) digits to
    # cancellation; keep it only while that is under ~2 digits
    if x ** (1.0 / alpha) <= 4.0:
        return min(_ml_series(alpha, z), 1.0)
    return min(_ml_spectral_neg(alpha, x), 1.0)

"""Spatial Galerkin machinery on the unit interval.

Two homogeneous-Dirichlet bases are provided: the orthonormal sine
eigenbasis of the Laplacian and piecewise-linear hats on a uniform interior
grid.  Coefficients enter as grammar expressions (or plain callables) and
the operator matrices are assembled by Gauss-Legendre quadrature:

    <K1(t) v, w> = <kappa v', w'> - <F(t) v, w'> + <a(t) v, w>
    <K2(t) v, w> = <b(t) v, w>    - <G(t) v, w'>
    <K1'(t) v, w> = -<F'(t) v, w'> + <a'(t) v, w>
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_factor, cho_solve

from .coeffexpr import CoeffExpr, parse_coeff_expr
from .fracops import GridFunction, TimeMesh

__all__ = [
    "BasisSpec",
    "Coefficient",
    "CoefficientSet",
    "KernelAssembly",
    "Problem",
    "RescaleInfo",
    "SourceSpec",
    "project_data",
    "rescale_time",
    "validate_source_bound",
]


# ---------------------------------------------------------------------------
# Bases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisSpec:
    """Finite-dimensional subspace of H^1_0(0,1).

    kind "sine": phi_k(x) = sqrt(2) sin(k pi x), k = 1..dim (orthonormal).
    kind "p1":   hat functions on interior nodes x_i = i/(dim+1).
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("sine", "p1"):
            raise ValueError(f"BasisSpec: unknown kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"BasisSpec: dim must be >= 1, got {self.dim}")

    def eval(self, x: np.ndarray) -> np.ndarray:
        """Basis values, shape (len(x), dim)."""
        x = np.asarray(x, dtype=float)
        k = np.arange(1, self.dim + 1)
        if self.kind == "sine":
            return np.sqrt(2.0) * np.sin(np.outer(x, k) * np.pi)
        h = 1.0 / (self.dim + 1)
        xi = k * h
        return np.maximum(0.0, 1.0 - np.abs(x[:, None] - xi[None, :]) / h)

    def deval(self, x: np.ndarray) -> np.ndarray:
        """Basis derivatives, shape (len(x), dim)."""
        x = np.asarray(x, dtype=float)
        k = np.arange(1, self.dim + 1)
        if self.kind == "sine":
            return np.sqrt(2.0) * (k * np.pi) * np.cos(np.outer(x, k) * np.pi)
        h = 1.0 / (self.dim + 1)
        xi = k * h
        d = x[:, None] - xi[None, :]
        out = np.zeros_like(d)
        out[(d > -h) & (d <= 0.0)] = 1.0 / h
        out[(d > 0.0) & (d < h)] = -1.0 / h
        return out

    def quadrature(self, n_points: Optional[int] = None):
        """Assembly rule: (x, w) on (0,1).

        sine: one global Gauss-Legendre rule, 3*dim+12 points by default
        (the classic 2m+8 narrowly misses the 1e-10 q-doubling contract).
        p1: composite 8-point Gauss-Legendre per cell, so kinks at the
        interior nodes never sit inside a panel.
        """
        if self.kind == "sine":
            q = n_points if n_points else 3 * self.dim + 12
            xg, wg = leggauss(q)
            return 0.5 * (xg + 1.0), 0.5 * wg
        per_cell = n_points if n_points else 8
        xg, wg = leggauss(per_cell)
        h = 1.0 / (self.dim + 1)
        cells = np.arange(self.dim + 1) * h
        x = (cells[:, None] + 0.5 * h * (xg[None, :] + 1.0)).ravel()
        w = np.tile(0.5 * h * wg, self.dim + 1)
        return x, w


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    """A space-time coefficient with optional exact time derivative."""

    fn: Callable
    depends_on_t: bool
    derivative: Optional[Callable] = None
    is_zero: bool = False
    source: Optional[str] = None

    @classmethod
    def from_expr(cls, expr: CoeffExpr | str) -> "Coefficient":
        if isinstance(expr, str):
            expr = parse_coeff_expr(expr)
        deriv = None
        if not expr.depends_on_t:
            deriv = _zero_fn
        elif expr.symbolically_differentiable:
            deriv = expr.diff_t()
        return cls(
            fn=expr,
            depends_on_t=expr.depends_on_t,
            derivative=deriv,
            is_zero=expr.is_zero,
            source=expr.source,
        )

    @classmethod
    def constant(cls, value: float) -> "Coefficient":
        v = float(value)
        return cls(
            fn=lambda x, t, _v=v: np.full_like(np.asarray(x, dtype=float), _v),
            depends_on_t=False,
            derivative=_zero_fn,
            is_zero=(v == 0.0),
            source=repr(v),
        )

    @classmethod
    def from_callable(
        cls,
        fn: Callable,
        depends_on_t: bool = True,
        derivative: Optional[Callable] = None,
        is_zero: bool = False,
    ) -> "Coefficient":
        if not depends_on_t and derivative is None:
            derivative = _zero_fn
        return cls(fn=fn, depends_on_t=depends_on_t, derivative=derivative, is_zero=is_zero)

    def __call__(self, x, t):
        return self.fn(x, t)


def _zero_fn(x, t):
    return np.zeros_like(np.asarray(x, dtype=float))


_ZERO = Coefficient(fn=_zero_fn, depends_on_t=False, derivative=_zero_fn, is_zero=True, source="0")


def _as_coeff(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if isinstance(c, (int, float)):
        return Coefficient.constant(c)
    if isinstance(c, (str, CoeffExpr)):
        return Coefficient.from_expr(c)
    raise TypeError(f"cannot interpret coefficient of type {type(c).__name__}")


@dataclass(frozen=True)
class CoefficientSet:
    """kappa, F, G, a, b with exact time derivatives where available.

    kappa may depend on x only.  Derivatives come from the grammar when the
    expression is symbolically differentiable, or are user supplied; the
    schemes that need K1'/K2' refuse to run without them.
    """

    kappa: Coefficient
    F: Coefficient
    G: Coefficient
    a: Coefficient
    b: Coefficient

    def __post_init__(self):
        if self.kappa.depends_on_t:
            raise ValueError("CoefficientSet: kappa must not depend on t")

    @classmethod
    def from_expressions(cls, kappa="1", F="0", G="0", a="0", b="0", **derivs) -> "CoefficientSet":
        co = {name: _as_coeff(val) for name, val in
              dict(kappa=kappa, F=F, G=G, a=a, b=b).items()}
        for name in ("F", "G", "a", "b"):
            key = f"{name}_prime"
            if derivs.get(key) is not None:
                dc = _as_coeff(derivs[key])
                co[name] = replace(co[name], derivative=dc.fn)
        unknown = set(derivs) - {"F_prime", "G_prime", "a_prime", "b_prime"}
        if unknown:
            raise TypeError(f"unexpected derivative keys: {sorted(unknown)}")
        return cls(**co)

    @property
    def k1_time_dependent(self) -> bool:
        return self.F.depends_on_t or self.a.depends_on_t

    @property
    def k2_time_dependent(self) -> bool:
        return self.G.depends_on_t or self.b.depends_on_t

    def require_k1_derivatives(self):
        for name in ("F", "a"):
            c = getattr(self, name)
            if c.depends_on_t and c.derivative is None:
                raise ValueError(
                    f"coefficient {name} is time-dependent but has no exact time "
                    f"derivative (not polynomial in t and none supplied); "
                    f"cannot assemble K1'"
                )

    def require_k2_derivatives(self):
        for name in ("G", "b"):
            c = getattr(self, name)
            if c.depends_on_t and c.derivative is None:
                raise ValueError(
                    f"coefficient {name} is time-dependent but has no exact time "
                    f"derivative (not polynomial in t and none supplied); "
                    f"cannot assemble K2'"
                )


@dataclass(frozen=True)
class SourceSpec:
    """Source g with its growth envelope ||g(t)|| <= M_bound t^(eta-1), and u0."""

    g: Coefficient
    eta: float
    M_bound: float
    u0: Coefficient

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError(f"SourceSpec: eta must be positive, got {self.eta}")
        if self.M_bound < 0.0:
            raise ValueError(f"SourceSpec: M_bound must be >= 0, got {self.M_bound}")

    @classmethod
    def from_expressions(cls, g="0", eta=1.0, M_bound=0.0, u0="0") -> "SourceSpec":
        return cls(g=_as_coeff(g), eta=float(eta), M_bound=float(M_bound), u0=_as_coeff(u0))


@dataclass(frozen=True)
class Problem:
    """Everything the Volterra engine needs, before discretization."""

    alpha: float
    T: float
    coeffs: CoefficientSet
    source: SourceSpec
    basis: BasisSpec

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"Problem: alpha must be in (0, 1], got {self.alpha}")
        if self.T <= 0.0:
            raise ValueError(f"Problem: T must be positive, got {self.T}")


# ---------------------------------------------------------------------------
# Time rescaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RescaleInfo:
    """Record of the t -> sigma*t substitution that enforces inf kappa >= 1."""

    sigma: float
    kappa_min: float

    @property
    def is_identity(self) -> bool:
        return self.sigma == 1.0


def _sampled_kappa_min(coeffs: CoefficientSet, n: int = 4096) -> float:
    x = np.linspace(0.0, 1.0, n + 1)
    vals = np.asarray(coeffs.kappa(x, 0.0), dtype=float)
    return float(np.min(vals))


def _remap(c: Coefficient, sigma: float, amp: float) -> Coefficient:
    """amp * c(x, t/sigma) with chain-rule derivative."""
    fn = lambda x, t, _c=c.fn: amp * np.asarray(_c(x, np.asarray(t) / sigma))
    deriv = None
    if c.derivative is not None:
        deriv = lambda x, t, _d=c.derivative: (amp / sigma) * np.asarray(
            _d(x, np.asarray(t) / sigma)
        )
    return Coefficient(fn=fn, depends_on_t=c.depends_on_t, derivative=deriv,
                       is_zero=c.is_zero, source=c.source)


def rescale_time(problem: Problem) -> tuple[Problem, RescaleInfo]:
    """Substitute t -> sigma*t with sigma = (inf kappa)^(1/alpha) when inf
    kappa < 1, so the transformed diffusivity kappa/inf(kappa) has minimum 1.

    The transformed problem runs on horizon sigma*T; node values of its
    solution coincide with the original solution at the original nodes, so
    traces carry over unchanged once times are divided by sigma.
    """
    c = _sampled_kappa_min(problem.coeffs)
    if c <= 0.0:
        raise ValueError(f"rescale_time: sampled inf kappa = {c:g} is not positive")
    if c >= 1.0:
        return problem, RescaleInfo(sigma=1.0, kappa_min=c)
    sigma = c ** (1.0 / problem.alpha)
    cs = problem.coeffs
    kap = Coefficient(
        fn=lambda x, t, _k=cs.kappa.fn: np.asarray(_k(x, t)) / c,
        depends_on_t=False,
        derivative=_zero_fn,
        is_zero=False,
        source=cs.kappa.source,
    )
    new_coeffs = CoefficientSet(
        kappa=kap,
        F=_remap(cs.F, sigma, 1.0 / c),
        G=_remap(cs.G, sigma, 1.0 / sigma),
        a=_remap(cs.a, sigma, 1.0 / c),
        b=_remap(cs.b, sigma, 1.0 / sigma),
    )
    src = problem.source
    new_source = SourceSpec(
        g=_remap(src.g, sigma, 1.0 / sigma),
        eta=src.eta,
        M_bound=src.M_bound / sigma**src.eta,
        u0=src.u0,
    )
    scaled = Problem(
        alpha=problem.alpha,
        T=sigma * problem.T,
        coeffs=new_coeffs,
        source=new_source,
        basis=problem.basis,
    )
    return scaled, RescaleInfo(sigma=sigma, kappa_min=c)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


class KernelAssembly:
    """Quadrature-backed assembly of MASS, K1(t), K1'(t), K2(t), K2'(t).

    Pure given (coefficients, basis, t); time-independent matrices are
    cached.  Entry (i, j) pairs trial function j against test function i.
    """

    def __init__(self, coeffs: CoefficientSet, basis: BasisSpec,
                 quad_points: Optional[int] = None):
        self.coeffs = coeffs
        self.basis = basis
        self.xq, self.wq = basis.quadrature(quad_points)
        self.Phi = basis.eval(self.xq)
        self.dPhi = basis.deval(self.xq)
        self._kappa_q = np.asarray(coeffs.kappa(self.xq, 0.0), dtype=float)
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.basis.dim

    def _massw(self, cq: np.ndarray) -> np.ndarray:
        # entry (i,j) = int c phi_j phi_i
        return (self.Phi * ((cq * self.wq)[:, None])).T @ self.Phi

    def _adv(self, cq: np.ndarray) -> np.ndarray:
        # entry (i,j) = int c phi_j phi_i'
        return (self.dPhi * ((cq * self.wq)[:, None])).T @ self.Phi

    def _coeff_q(self, c: Coefficient, t: float) -> np.ndarray:
        return np.asarray(c(self.xq, t), dtype=float)

    def mass(self) -> np.ndarray:
        if "mass" not in self._cache:
            self._cache["mass"] = self._massw(np.ones_like(self.xq))
        return self._cache["mass"]

    def stiffness(self) -> np.ndarray:
        """<kappa phi_j', phi_i'>."""
        if "stiff" not in self._cache:
            self._cache["stiff"] = (self.dPhi * ((self._kappa_q * self.wq)[:, None])).T @ self.dPhi
        return self._cache["stiff"]

    def stiffness_plain(self) -> np.ndarray:
        """<phi_j', phi_i'> (kappa-free; used for H1 seminorms)."""
        if "stiff1" not in self._cache:
            self._cache["stiff1"] = (self.dPhi * (self.wq[:, None])).T @ self.dPhi
        return self._cache["stiff1"]

    def k1(self, t: float) -> np.ndarray:
        cs = self.coeffs
        if not cs.k1_time_dependent and "k1" in self._cache:
            return self._cache["k1"]
        mat = self.stiffness().copy()
        if not cs.F.is_zero:
            mat -= self._adv(self._coeff_q(cs.F, t))
        if not cs.a.is_zero:
            mat += self._massw(self._coeff_q(cs.a, t))
        if not cs.k1_time_dependent:
            self._cache["k1"] = mat
        return mat

    def k1prime(self, t: float) -> np.ndarray:
        cs = self.coeffs
        if not cs.k1_time_dependent:
            return np.zeros((self.dim, self.dim))
        cs.require_k1_derivatives()
        mat = np.zeros((self.dim, self.dim))
        if cs.F.depends_on_t:
            mat -= self._adv(np.asarray(cs.F.derivative(self.xq, t), dtype=float))
        if cs.a.depends_on_t:
            mat += self._massw(np.asarray(cs.a.derivative(self.xq, t), dtype=float))
        return mat

    def k2(self, t: float) -> np.ndarray:
        cs = self.coeffs
        if cs.b.is_zero and cs.G.is_zero:
            return np.zeros((self.dim, self.dim))
        if not cs.k2_time_dependent and "k2" in self._cache:
            return self._cache["k2"]
        mat = np.zeros((self.dim, self.dim))
        if not cs.b.is_zero:
            mat += self._massw(self._coeff_q(cs.b, t))
        if not cs.G.is_zero:
            mat -= self._adv(self._coeff_q(cs.G, t))
        if not cs.k2_time_dependent:
            self._cache["k2"] = mat
        return mat

    def k2prime(self, t: float) -> np.ndarray:
        cs = self.coeffs
        if not cs.k2_time_dependent:
            return np.zeros((self.dim, self.dim))
        cs.require_k2_derivatives()
        mat = np.zeros((self.dim, self.dim))
        if cs.b.depends_on_t:
            mat += self._massw(np.asarray(cs.b.derivative(self.xq, t), dtype=float))
        if cs.G.depends_on_t:
            mat -= self._adv(np.asarray(cs.G.derivative(self.xq, t), dtype=float))
        return mat

    @cached_property
    def mass_factor(self):
        return cho_factor(self.mass())

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.basis.kind == "sine":
            return rhs
        return cho_solve(self.mass_factor, rhs)

    def l2_project(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Coefficients of the L2 projection of a function of x."""
        vals = np.asarray(f(self.xq), dtype=float)
        b = self.Phi.T @ (self.wq * vals)
        return self.mass_solve(b)


# ---------------------------------------------------------------------------
# Data projection
# ---------------------------------------------------------------------------

_GL8 = leggauss(8)
_GL16 = leggauss(16)


def _g_moment(assembly: KernelAssembly, g: Coefficient, s: float) -> np.ndarray:
    vals = np.asarray(g(assembly.xq, s), dtype=float)
    return assembly.Phi.T @ (assembly.wq * vals)


def project_data(assembly: KernelAssembly, source: SourceSpec, mesh: TimeMesh) -> GridFunction:
    """f_X at the nodes: P_X u0 + (I^1 P_X g)(t_n), node 0 exactly P_X u0.

    The first-cell time integral substitutes s = t_1 sigma^(1/eta) so a
    source blowing up like t^(eta-1) integrates against a bounded
    integrand; later cells use plain Gauss panels.
    """
    m = assembly.dim
    c0 = assembly.l2_project(lambda x: np.asarray(source.u0(x, 0.0), dtype=float))
    out = np.tile(c0, (mesh.N + 1, 1))
    if source.g.is_zero:
        return GridFunction(mesh, out)
    t = mesh.nodes
    acc = np.zeros(m)
    increments = np.zeros((mesh.N, m))
    # first cell, singular-aware
    t1 = t[1]
    eta = source.eta
    xg, wg = _GL16
    sig = 0.5 * (xg + 1.0)
    wsig = 0.5 * wg
    first = np.zeros(m)
    for sj, wj in zip(sig, wsig):
        s = t1 * sj ** (1.0 / eta)
        jac = (t1 / eta) * sj ** (1.0 / eta - 1.0)
        first += wj * jac * _g_moment(assembly, source.g, s)
    increments[0] = first
    xg8, wg8 = _GL8
    for n in range(2, mesh.N + 1):
        a, b = t[n - 1], t[n]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        inc = np.zeros(m)
        for sj, wj in zip(xg8, wg8):
            inc += half * wj * _g_moment(assembly, source.g, mid + half * sj)
        increments[n - 1] = inc
    acc = np.cumsum(increments, axis=0)
    out[1:] += assembly.mass_solve(acc.T).T if assembly.basis.kind == "p1" else acc
    return GridFunction(mesh, out)


def validate_source_bound(assembly: KernelAssembly, source: SourceSpec,
                          mesh: TimeMesh) -> list[str]:
    """Check ||g(t)|| <= M_bound t^(eta-1) at interior nodes; warn, don't fail."""
    if source.g.is_zero:
        return []
    msgs = []
    for tn in mesh.nodes[1:-1]:
        vals = np.asarray(source.g(assembly.xq, tn), dtype=float)
        norm = float(np.sqrt(np.sum(assembly.wq * vals**2)))
        bound = source.M_bound * tn ** (source.eta - 1.0)
        if norm > bound * (1.0 + 1e-9) + 1e-300:
            msg = (f"source bound violated at t={tn:.6g}: ||g|| = {norm:.6g} > "
                   f"M*t^(eta-1) = {bound:.6g}")
            msgs.append(msg)
            warnings.warn(msg)
            break
    return msgs

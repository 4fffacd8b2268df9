"""Independent ground-truth generators.

Nothing here shares accumulation order or quadrature machinery with the
solver-side modules: the separable-solution values come from a compensated
double-double power series where cancellation is benign and otherwise from
adaptive Gauss-Kronrod quadrature of the spectral representation (the
solver-side evaluator uses a refined trapezoid on a different substitution);
the manufactured cases carry closed-form forcing validated by direct
quadrature of the integrated equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from typing import Optional

import numpy as np
import scipy.integrate

from .fracops import GridFunction, TimeMesh, gamma_fn
from .spatial import (
    BasisSpec,
    CoefficientSet,
    Coefficient,
    Problem,
    SourceSpec,
)
from .volterra import SolutionTrace, SolverOptions, solve_direct

__all__ = [
    "ManufacturedCase",
    "UnsupportedCoefficientError",
    "manufactured",
    "ml_series_dd",
    "ml_spectral_quad",
    "refined_reference",
    "separable_exact",
]


class UnsupportedCoefficientError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Mittag-Leffler, oracle side
# ---------------------------------------------------------------------------


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def ml_series_dd(alpha: float, z: float, max_terms: int = 4000) -> float:
    """Power series with paired-limb (double-double) accumulation.

    Valid only while cancellation is benign; the oracle routes here for
    |z|**(1/alpha) <= 2 and to quadrature otherwise.
    """
    hi, lo = 1.0, 0.0
    term = 1.0
    for n in range(max_terms):
        term *= z * (gamma_fn(1.0 + n * alpha) / gamma_fn(1.0 + (n + 1) * alpha))
        hi, e = _two_sum(hi, term)
        lo += e
        if abs(term) < 1e-20 * max(abs(hi), 1e-30):
            break
    return hi + lo


def ml_spectral_quad(alpha: float, x: float) -> float:
    """E_alpha(-x) for x > 0 by adaptive quadrature of

        sin(pi a)/(pi a) int_0^inf exp(-(s x)^(1/a)) / (s^2 + 2 s cos(pi a) + 1) ds.

    QUADPACK does the work; the integrand is smooth and positive.
    """
    if x <= 0.0:
        raise ValueError("ml_spectral_quad: need x > 0")
    sa = math.sin(alpha * math.pi)
    ca = math.cos(alpha * math.pi)
    inv_a = 1.0 / alpha

    def integrand(s: float) -> float:
        return math.exp(-((s * x) ** inv_a)) / (s * s + 2.0 * ca * s + 1.0)

    hi_cut = max(45.0**alpha / x, 2.0)
    v1, _ = scipy.integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    v2, _ = scipy.integrate.quad(integrand, 1.0, hi_cut, epsabs=1e-14, epsrel=1e-13, limit=200)
    v3, _ = scipy.integrate.quad(integrand, hi_cut, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    return sa / (alpha * math.pi) * (v1 + v2 + v3)


def separable_exact(alpha: float, lam: float, t: float) -> float:
    """E_alpha(-lam t^alpha): the separable single-mode solution value.

    lam > 0; same supported range as the solver-side evaluator but computed
    through an independent path (double-double series for small arguments,
    adaptive quadrature otherwise).
    """
    if lam <= 0.0:
        raise ValueError(f"separable_exact: lam must be positive, got {lam}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"separable_exact: alpha must be in (0, 1], got {alpha}")
    if t < 0.0:
        raise ValueError(f"separable_exact: t must be >= 0, got {t}")
    if t == 0.0:
        return 1.0
    if alpha == 1.0:
        return math.exp(-lam * t)
    x = lam * t**alpha
    if x > 50.0:
        raise ValueError(
            f"separable_exact: lam*t^alpha = {x:g} outside supported range [0, 50]"
        )
    if x ** (1.0 / alpha) <= 2.0:
        return ml_series_dd(alpha, -x)
    return ml_spectral_quad(alpha, x)


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    """u(x,t) = t^beta * sqrt(2) sin(k pi x) with constant coefficients and
    the closed-form forcing that makes the integrated equation exact.

    The time factor of the fractional term uses
    I^alpha t^beta = (Gamma(1+beta)/Gamma(1+beta+alpha)) t^(beta+alpha),
    differentiated once in t.
    """

    alpha: float
    beta: float
    k: int
    kappa0: float
    F0: float
    a0: float
    b0: float
    G0: float

    @property
    def lam(self) -> float:
        return (self.k * math.pi) ** 2

    @property
    def dcoef(self) -> float:
        """Time factor of d/dt I^alpha t^beta = dcoef * t^(beta+alpha-1)."""
        return gamma_fn(1.0 + self.beta) / gamma_fn(self.beta + self.alpha)

    def exact_coefficient(self, t) -> np.ndarray:
        return np.asarray(t, dtype=float) ** self.beta

    def exact_solution_values(self, mesh: TimeMesh, dim: int) -> np.ndarray:
        if dim < self.k:
            raise ValueError(f"need dim >= {self.k} to represent mode {self.k}")
        vals = np.zeros((mesh.N + 1, dim))
        vals[:, self.k - 1] = self.exact_coefficient(mesh.nodes)
        return vals

    def g(self, x, t):
        """Forcing g(x, t), vectorized over x."""
        xa = np.asarray(x, dtype=float)
        ta = np.asarray(t, dtype=float)
        kpi = self.k * math.pi
        phi = math.sqrt(2.0) * np.sin(kpi * xa)
        dphi = math.sqrt(2.0) * kpi * np.cos(kpi * xa)
        frac = self.dcoef * ta ** (self.beta + self.alpha - 1.0)
        radial = (self.beta * ta ** (self.beta - 1.0)
                  + (self.kappa0 * self.lam + self.a0) * frac
                  + self.b0 * ta**self.beta)
        drift = self.F0 * frac + self.G0 * ta**self.beta
        return radial * phi + drift * dphi

    def g_mode(self, j: int, t: float) -> float:
        """<g(t), phi_j> in closed form (cross terms via the exact sine-cosine
        coupling coefficient)."""
        kpi = self.k * math.pi
        frac = self.dcoef * t ** (self.beta + self.alpha - 1.0)
        val = 0.0
        if j == self.k:
            val += (self.beta * t ** (self.beta - 1.0)
                    + (self.kappa0 * self.lam + self.a0) * frac
                    + self.b0 * t**self.beta)
        c = _sine_coupling(self.k, j)  # <phi_k', phi_j>
        if c != 0.0:
            val += (self.F0 * frac + self.G0 * t**self.beta) * c
        return val

    def source_bound(self, T: float) -> tuple[float, float]:
        """(eta, M) with ||g(t)|| <= M t^(eta-1) on (0, T]."""
        kpi = self.k * math.pi
        eta = self.beta
        M = (self.beta
             + (abs(self.kappa0) * self.lam + abs(self.a0)) * self.dcoef * T**self.alpha
             + abs(self.b0) * T
             + (abs(self.F0) * self.dcoef * T**self.alpha + abs(self.G0) * T) * kpi)
        return eta, M

    def as_problem(self, T: float, dim: Optional[int] = None) -> Problem:
        dim = dim if dim is not None else self.k
        eta, M = self.source_bound(T)
        coeffs = CoefficientSet.from_expressions(
            kappa=repr(self.kappa0), F=repr(self.F0), G=repr(self.G0),
            a=repr(self.a0), b=repr(self.b0),
        )
        source = SourceSpec(
            g=Coefficient.from_callable(self.g, depends_on_t=True),
            eta=eta, M_bound=M,
            u0=Coefficient.constant(0.0),
        )
        return Problem(alpha=self.alpha, T=T, coeffs=coeffs, source=source,
                       basis=BasisSpec("sine", dim))

    def validate(self, T: float, rng: np.random.Generator,
                 n_samples: int = 20, n_modes: int = 3) -> float:
        """Max defect of the integrated equation at random times, each side
        by direct quadrature / closed form.  Should sit at rounding level."""
        worst = 0.0
        for _ in range(n_samples):
            t = float(rng.uniform(0.05 * T, T))
            for j in range(1, n_modes + 1):
                dk = 1.0 if j == self.k else 0.0
                c = _sine_coupling(self.k, j)
                # <K1 phi_k, phi_j> = (kappa0 lam + a0) delta - F0 <phi_k, phi_j'>
                # and <phi_k, phi_j'> = -<phi_k', phi_j> = -c
                lhs = (t**self.beta * dk
                       + ((self.kappa0 * self.lam + self.a0) * dk + self.F0 * c)
                       * self.dcoef * t ** (self.beta + self.alpha) / (self.beta + self.alpha)
                       + (self.b0 * dk + self.G0 * c)
                       * t ** (self.beta + 1.0) / (self.beta + 1.0))
                rhs, _ = scipy.integrate.quad(lambda s: self.g_mode(j, s), 0.0, t,
                                              epsabs=1e-13, epsrel=1e-12, limit=200)
                worst = max(worst, abs(lhs - rhs))
        return worst


def _sine_coupling(k: int, j: int) -> float:
    """<phi_k', phi_j> for the orthonormal sine basis.

    2 k pi int_0^1 cos(k pi x) sin(j pi x) dx; zero when j+k is even.
    """
    if (j + k) % 2 == 0:
        return 0.0
    return 2.0 * k * math.pi * (2.0 * j / (math.pi * (j * j - k * k)))


def manufactured(alpha: float, beta: float = 1.0, k: int = 1, *,
                 kappa0: float = 1.0, F0: float = 0.0, a0: float = 0.0,
                 b0: float = 0.0, G0: float = 0.0) -> ManufacturedCase:
    """Build a constant-coefficient manufactured case.

    beta >= 1 keeps u' integrable so the integrated equation holds
    classically.  Non-constant coefficients are not supported here: use the
    scheme-vs-scheme and refinement cross-checks for those.
    """
    for name, v in dict(kappa0=kappa0, F0=F0, a0=a0, b0=b0, G0=G0).items():
        if not isinstance(v, (int, float)):
            raise UnsupportedCoefficientError(
                f"manufactured cases require constant coefficients; {name} is "
                f"{type(v).__name__}"
            )
    if beta < 1.0:
        raise ValueError(f"manufactured: beta must be >= 1, got {beta}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"manufactured: alpha must be in (0, 1], got {alpha}")
    if k < 1:
        raise ValueError(f"manufactured: mode index must be >= 1, got {k}")
    return ManufacturedCase(alpha=alpha, beta=float(beta), k=k,
                            kappa0=float(kappa0), F0=float(F0), a0=float(a0),
                            b0=float(b0), G0=float(G0))


# ---------------------------------------------------------------------------
# Refined-mesh reference
# ---------------------------------------------------------------------------


def refined_reference(problem: Problem, mesh: TimeMesh,
                      options: Optional[SolverOptions] = None) -> SolutionTrace:
    """solve_direct at 4x the nodes (same grading), restricted to the base
    nodes; the restriction is exact because T (n/N)^gamma = T (4n/4N)^gamma.

    Used as the convergence-order reference; costs 16x the base solve, so
    the base N is capped at 512.
    """
    if mesh.N > 512:
        raise ValueError(f"refined_reference: base N must be <= 512, got {mesh.N}")
    fine = TimeMesh(mesh.T, 4 * mesh.N, mesh.gamma)
    trace = solve_direct(problem, fine, options)
    sel = slice(None, None, 4)
    return dc_replace(
        trace,
        u=GridFunction(mesh, trace.u.values[sel]),
        frac_u=GridFunction(mesh, trace.frac_u.values[sel]),
        t_weighted=GridFunction(mesh, trace.t_weighted.values[sel]),
        residuals=trace.residuals[sel],
        f_X=GridFunction(mesh, trace.f_X.values[sel]),
        mesh=mesh,
        scaled_mesh=TimeMesh(trace.scaled_mesh.T, mesh.N, mesh.gamma),
    )

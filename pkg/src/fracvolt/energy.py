"""Discrete quadratic functionals and the executable inequality suite.

Q1 and Q2 are the two energies everything else is phrased in:

    Q1(mu, phi, t) = int_0^t <phi, I^mu phi> ds
    Q2(mu, phi, t) = int_0^t ||I^mu phi||^2 ds

Both sides of every inequality below are computed with the same discrete
I^mu (product integration) and the same composite trapezoid in time, so the
explicit constants carry over to the discrete level and a negative margin
flags a genuine violation rather than quadrature skew.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fracops import (
    GridFunction,
    TimeMesh,
    conv_weights,
    frac_integral,
    gamma_fn,
    mittag_leffler,
    omega,
    trap_weights,
)

__all__ = [
    "EnergyReport",
    "InequalityRecord",
    "b_op_apply",
    "check_inequalities",
    "diagnose_apriori",
    "gronwall_envelope",
    "plancherel_crosscheck",
    "q1",
    "q2",
    "random_pwl",
    "random_smooth",
]

# pass <=> margin >= -(TOL_ABS + TOL_REL * |rhs|)
TOL_ABS = 1e-12
TOL_REL = 1e-10

EPS_GRID = (0.1, 0.5, 1.0, 2.0)
MUNU_GRID = ((0.0, 0.25), (0.0, 0.5), (0.0, 1.0), (0.25, 0.5), (0.25, 0.75), (0.5, 1.0))


@dataclass(frozen=True)
class InequalityRecord:
    name: str
    lhs: float
    rhs: float
    params: dict

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return math.isfinite(self.margin) and self.margin >= -(TOL_ABS + TOL_REL * abs(self.rhs))

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "params": self.params,
        }


@dataclass
class EnergyReport:
    records: list[InequalityRecord] = field(default_factory=list)
    sections: dict = field(default_factory=dict)

    def add(self, name: str, lhs: float, rhs: float, **params) -> InequalityRecord:
        rec = InequalityRecord(name=name, lhs=float(lhs), rhs=float(rhs), params=params)
        self.records.append(rec)
        return rec

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def worst_margin(self) -> float:
        return min((r.margin for r in self.records), default=float("inf"))

    def failures(self) -> list[InequalityRecord]:
        return [r for r in self.records if not r.passed]

    def to_json_dict(self) -> dict:
        return {
            "records": [r.to_json_dict() for r in self.records],
            "sections": self.sections,
            "all_pass": self.all_pass,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


# ---------------------------------------------------------------------------
# Quadratic functionals
# ---------------------------------------------------------------------------


def _resolve_node(mesh: TimeMesh, n: Optional[int]) -> int:
    if n is None:
        return mesh.N
    if not 0 <= n <= mesh.N:
        raise ValueError(f"node index {n} outside 0..{mesh.N}")
    return n


def _cum_trapz(mesh: TimeMesh, integrand: np.ndarray) -> np.ndarray:
    h = mesh.h
    out = np.zeros(mesh.N + 1)
    out[1:] = np.cumsum(0.5 * h * (integrand[:-1] + integrand[1:]))
    return out


def q1_profile(mu: float, phi: GridFunction) -> np.ndarray:
    """Q1(mu, phi, t_n) for every node n."""
    psi = frac_integral(mu, phi)
    integrand = np.sum(phi.values * psi.values, axis=1)
    return _cum_trapz(phi.mesh, integrand)


def q2_profile(mu: float, phi: GridFunction) -> np.ndarray:
    """Q2(mu, phi, t_n) for every node n; coincides with q1 at mu = 0."""
    if mu == 0.0:
        return q1_profile(0.0, phi)
    psi = frac_integral(mu, phi)
    integrand = np.sum(psi.values**2, axis=1)
    return _cum_trapz(phi.mesh, integrand)


def q1(mu: float, phi: GridFunction, n: Optional[int] = None) -> float:
    """Q1(mu, phi, t_n); composite trapezoid of <phi, I^mu phi>."""
    return float(q1_profile(mu, phi)[_resolve_node(phi.mesh, n)])


def q2(mu: float, phi: GridFunction, n: Optional[int] = None) -> float:
    """Q2(mu, phi, t_n); at mu = 0 this is bitwise q1(0, phi, n)."""
    return float(q2_profile(mu, phi)[_resolve_node(phi.mesh, n)])


def _cross_q1(alpha: float, phi: GridFunction, psi: GridFunction) -> np.ndarray:
    """int_0^t <phi, I^alpha psi> ds profile under the shared quadrature."""
    ipsi = frac_integral(alpha, psi)
    integrand = np.sum(phi.values * ipsi.values, axis=1)
    return _cum_trapz(phi.mesh, integrand)


def b_op_apply(mu: float, psi: Callable[[float], float],
               psi_prime: Callable[[float], float],
               phi: GridFunction) -> GridFunction:
    """(B^mu_psi phi)(t) = psi(t) I^mu phi(t) - int_0^t psi'(s) I^mu phi(s) ds.

    psi and psi' are scalar time functions evaluable at the nodes; the
    integral uses the composite trapezoid.  Node 0 carries zero.
    """
    mesh = phi.mesh
    ip = frac_integral(mu, phi).values
    t = mesh.nodes
    psi_v = np.array([psi(tk) for tk in t])
    dpsi_v = np.array([psi_prime(tk) for tk in t])
    weighted = dpsi_v[:, None] * ip
    h = mesh.h
    integral = np.zeros_like(ip)
    integral[1:] = np.cumsum(0.5 * h[:, None] * (weighted[:-1] + weighted[1:]), axis=0)
    return phi.with_values(psi_v[:, None] * ip - integral)


# ---------------------------------------------------------------------------
# Inequality suite
# ---------------------------------------------------------------------------


def check_inequalities(phi: GridFunction, psi: GridFunction, alpha: float,
                       n: Optional[int] = None,
                       eps_grid: Sequence[float] = EPS_GRID,
                       munu_grid: Sequence[tuple[float, float]] = MUNU_GRID,
                       report: Optional[EnergyReport] = None,
                       tag: Optional[dict] = None) -> EnergyReport:
    """Run every explicit-constant estimate on the pair (phi, psi) at node n.

    The pointwise-bound record synthesizes its subject as I^1 phi (exact for
    piecewise-linear slopes) so the hypotheses value(0) = I^alpha slope(0) = 0
    hold; phi itself plays the derivative.  For alpha = 1 that bound is an
    identity and the record margin is zero to rounding.
    """
    if phi.mesh is not psi.mesh and not np.array_equal(phi.mesh.nodes, psi.mesh.nodes):
        raise ValueError("phi and psi must share a mesh")
    mesh = phi.mesh
    nn = _resolve_node(mesh, n)
    t = float(mesh.nodes[nn])
    rep = report if report is not None else EnergyReport()
    tag = tag or {}

    q1a_phi = q1_profile(alpha, phi)
    q1a_psi_n = q1(alpha, psi, nn)
    q0_phi_n = q1(0.0, phi, nn)
    cross = abs(float(_cross_q1(alpha, phi, psi)[nn]))

    if alpha < 1.0:
        for eps in eps_grid:
            rep.add("pair-bound-eps", cross,
                    q1a_phi[nn] / (4.0 * eps * (1.0 - alpha) ** 2) + eps * q1a_psi_n,
                    alpha=alpha, eps=eps, **tag)
            rep.add("pair-bound-q0-eps", cross,
                    t**alpha * q0_phi_n / (2.0 * eps * (1.0 - alpha) ** 2) + eps * q1a_psi_n,
                    alpha=alpha, eps=eps, **tag)
        rep.add("q2-by-q1", q2(alpha, phi, nn),
                (2.0 * t**alpha / (1.0 - alpha)) * q1a_phi[nn],
                alpha=alpha, **tag)
    rep.add("q1-by-q0", q1a_phi[nn], 2.0 * t**alpha * q0_phi_n, alpha=alpha, **tag)

    # convolution bound: Q2(a, phi, t) <= 2 int_0^t omega(a, t-s) Q1(a, phi, s) ds
    if nn >= 1:
        w = conv_weights(alpha, mesh, nn)
        rep.add("q2-by-convolved-q1", q2(alpha, phi, nn),
                2.0 * float(w @ q1a_phi[: nn + 1]), alpha=alpha, **tag)

    q2_cache: dict[float, float] = {}

    def q2_at(order: float) -> float:
        if order not in q2_cache:
            q2_cache[order] = q2(order, phi, nn)
        return q2_cache[order]

    for mu, nu in munu_grid:
        if not 0.0 <= mu <= nu <= 1.0:
            raise ValueError(f"order pair ({mu}, {nu}) outside 0 <= mu <= nu <= 1")
        rep.add("q2-order-comparison", q2_at(nu),
                2.0 * t ** (2.0 * (nu - mu)) * q2_at(mu),
                alpha=alpha, mu=mu, nu=nu, **tag)

    # pointwise bound with value = I^1 phi, slope = phi
    h = mesh.h
    value = np.zeros_like(phi.values)
    value[1:] = np.cumsum(0.5 * h[:, None] * (phi.values[:-1] + phi.values[1:]), axis=0)
    lhs_pw = float(np.sum(value[nn] ** 2))
    if nn >= 1:
        om = float(omega(2.0 - alpha, t)) if alpha < 1.0 or t > 0 else 1.0
        rep.add("pointwise-bound", lhs_pw, 2.0 * om * q1a_phi[nn], alpha=alpha, **tag)

    return rep


def q1_nonnegativity(phi: GridFunction, mu: float,
                     report: Optional[EnergyReport] = None,
                     tag: Optional[dict] = None) -> EnergyReport:
    """Q1(mu, phi, T) >= 0: discrete echo of the Plancherel positivity."""
    rep = report if report is not None else EnergyReport()
    rep.add("q1-nonnegative", 0.0, q1(mu, phi), mu=mu, **(tag or {}))
    return rep


# ---------------------------------------------------------------------------
# Gronwall envelope
# ---------------------------------------------------------------------------


def gronwall_envelope(a_fn: Callable[[float], float], b_fn: Callable[[float], float],
                      beta: float, mesh: TimeMesh) -> GridFunction:
    """Node-wise envelope a(t) E_beta(b(t) t^beta) of the fractional
    Gronwall bound; a and b must sample non-negative and non-decreasing."""
    if beta <= 0.0:
        raise ValueError(f"gronwall_envelope: beta must be positive, got {beta}")
    t = mesh.nodes
    av = np.array([a_fn(tk) for tk in t])
    bv = np.array([b_fn(tk) for tk in t])
    for name, v in (("a", av), ("b", bv)):
        if np.any(v < -1e-12):
            raise ValueError(f"gronwall_envelope: {name} must be non-negative")
        if np.any(np.diff(v) < -1e-12):
            raise ValueError(f"gronwall_envelope: {name} must be non-decreasing")
    env = np.array([av[k] * mittag_leffler(beta, bv[k] * t[k] ** beta)
                    for k in range(mesh.N + 1)])
    return GridFunction(mesh, env)


# ---------------------------------------------------------------------------
# A priori diagnostics
# ---------------------------------------------------------------------------


def diagnose_apriori(trace, f_X: Optional[GridFunction] = None,
                     delta_fraction: float = 0.125) -> EnergyReport:
    """Measured ratios for the a priori estimates, reported not asserted.

    Ratios are None ("not applicable") when the data is identically zero.
    The continuity-modulus table lists ||u(t2) - u(t1)|| / sqrt(t2 - t1)
    over dyadic pairs with t1 >= delta = delta_fraction * T.
    """
    from .spatial import KernelAssembly  # local import to avoid cycle at module load

    f = f_X if f_X is not None else trace.f_X
    mesh = trace.scaled_mesh
    u = GridFunction(mesh, trace.u.values)
    alpha = trace.problem.alpha
    T = mesh.nodes[-1]
    N = mesh.N
    asm = KernelAssembly(trace.scaled_problem.coeffs, trace.scaled_problem.basis,
                         trace.options.quad_points)
    M = asm.mass()
    S1 = asm.stiffness_plain()

    rep = EnergyReport()
    q0_f = q1(0.0, f)
    q1a_u = q1(alpha, u)
    q0_u = q1(0.0, u)
    uT = u.values[-1]
    l2_uT = float(uT @ (M @ uT))
    h1_uT = float(uT @ (S1 @ uT))
    u0 = f.values[0]
    l2_u0 = float(u0 @ (M @ u0))
    src = trace.problem.source
    data_sq = l2_u0 + src.M_bound**2 * T ** (2.0 * src.eta)

    def ratio(num, den):
        return None if den == 0.0 else num / den

    ratios = {
        "q1alpha_u_over_talpha_q0_f": ratio(q1a_u, T**alpha * q0_f),
        "q0_u_over_q0_f": ratio(q0_u, q0_f),
        "pointwise_energy_over_data": ratio(l2_uT + T**alpha * h1_uT, data_sq),
    }

    delta = delta_fraction * T
    holder = []
    k = 1
    while True:
        t2, t1 = T / 2 ** (k - 1), T / 2**k
        if t1 < delta - 1e-15:
            break
        n2 = int(round((t2 / T) ** (1.0 / mesh.gamma) * N))
        # snap t1 upward so the pair honors t1 >= delta
        n1 = int(math.ceil((t1 / T) ** (1.0 / mesh.gamma) * N - 1e-12))
        if n1 == n2:
            break
        d = u.values[n2] - u.values[n1]
        dt = mesh.nodes[n2] - mesh.nodes[n1]
        holder.append({
            "t1": float(mesh.nodes[n1]),
            "t2": float(mesh.nodes[n2]),
            "modulus": float(np.sqrt(max(d @ (M @ d), 0.0) / dt)),
        })
        k += 1

    rep.sections["apriori_ratios"] = ratios
    rep.sections["holder_table"] = holder
    rep.sections["zero_data"] = (q0_f == 0.0)
    return rep


# ---------------------------------------------------------------------------
# Plancherel cross-check
# ---------------------------------------------------------------------------


def _laplace_transform_pwl(phi: GridFunction, y: np.ndarray) -> np.ndarray:
    """phi-hat(iy) of the piecewise-linear interpolant, exactly per cell.

    Returns complex array of shape (len(y), m).
    """
    mesh = phi.mesh
    t = mesh.nodes
    h = mesh.h
    mid = 0.5 * (t[:-1] + t[1:])
    vm = 0.5 * (phi.values[:-1] + phi.values[1:])
    dv = phi.values[1:] - phi.values[:-1]
    z = 0.5 * np.outer(y, h)  # (ny, nc), y > 0 on the log grid
    # int_{-h/2}^{h/2} e^(-iy tau) dtau = h sinc(z/pi)
    zero_m = h[None, :] * np.sinc(z / np.pi)
    # int_{-h/2}^{h/2} tau e^(-iy tau) dtau = -2i (sin z - z cos z) / y^2
    small = np.abs(z) < 1e-4
    num = np.where(small, z**3 / 3.0 * (1.0 - z**2 / 10.0), np.sin(z) - z * np.cos(z))
    first_m = -2j * num / y[:, None] ** 2
    phase = np.exp(-1j * np.outer(y, mid))
    return (phase * zero_m) @ vm + (phase * first_m) @ (dv / h[:, None])


def plancherel_crosscheck(phi: GridFunction, mu: float, n_freq: int = 4000) -> dict:
    """Compare Q1(mu, phi, T) against its frequency-side expression

        (cos(pi mu / 2) / pi) int_0^inf y^(-mu) ||phi-hat(iy)||^2 dy

    with phi extended by zero past T.  The transform of the interpolant is
    exact per cell; the frequency integral is truncated to a log grid on
    (0, 1e3 N / T], so the comparison is a smoke test at ~1e-2, not a gate.
    """
    if not 0.0 <= mu < 1.0:
        raise ValueError(f"plancherel_crosscheck: need 0 <= mu < 1, got {mu}")
    mesh = phi.mesh
    T = mesh.nodes[-1]
    lhs = q1(mu, phi)
    y_max = 1e3 * mesh.N / T
    y_min = 1e-4 / T
    u = np.linspace(np.log(y_min), np.log(y_max), n_freq)
    y = np.exp(u)
    hat = _laplace_transform_pwl(phi, y)
    dens = y ** (-mu) * np.sum(np.abs(hat) ** 2, axis=1)
    integral = float(np.trapezoid(dens * y, x=u))  # dy = y du
    hat0 = np.sum(0.5 * mesh.h[:, None] * (phi.values[:-1] + phi.values[1:]), axis=0)
    head = float(np.sum(hat0**2)) * y_min ** (1.0 - mu) / (1.0 - mu)
    rhs = math.cos(math.pi * mu / 2.0) / math.pi * (integral + head)
    denom = max(abs(lhs), abs(rhs), 1e-300)
    return {"lhs": lhs, "rhs": rhs, "reldiff": abs(lhs - rhs) / denom}


# ---------------------------------------------------------------------------
# Random inputs for the seeded suites
# ---------------------------------------------------------------------------


def random_pwl(mesh: TimeMesh, dim: int, rng: np.random.Generator,
               scale: float = 1.0) -> GridFunction:
    """Random piecewise-linear grid function with standard normal nodes."""
    return GridFunction(mesh, scale * rng.standard_normal((mesh.N + 1, dim)))


def random_smooth(mesh: TimeMesh, dim: int, rng: np.random.Generator,
                  n_modes: int = 6) -> GridFunction:
    """Random low-frequency trigonometric sample, for checks that compare a
    trapezoid value against an exact integral (e.g. the Plancherel
    cross-check): white-noise nodes would measure interpolation error, not
    the identity."""
    t = mesh.nodes / mesh.T
    vals = np.zeros((mesh.N + 1, dim))
    for k in range(n_modes):
        amp = rng.standard_normal(dim) / (1.0 + k)
        phase = rng.uniform(0.0, 2.0 * np.pi, dim)
        vals += amp[None, :] * np.cos(2.0 * np.pi * k * t[:, None] + phase[None, :])
    return GridFunction(mesh, vals)

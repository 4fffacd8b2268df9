"""Command-line surface: run solves, verification suites, convergence studies.

    fracvolt run --config problem.toml [--out DIR] [--dump-config]
    fracvolt verify {lemmas|solver|oracle} [--seed S] [--alpha a1,a2,...]
    fracvolt convergence --config problem.toml --grid N1,N2,...

Configs are flat key-value TOML; unknown keys are hard errors.  Traces go
to CSV with 17 significant digits (so they re-read bitwise), reports to
JSON with the timestamp isolated in a single field so repeated runs with
the same seed are byte-identical otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import energy, oracle
from .coeffexpr import ExprError, parse_coeff_expr
from .fracops import GridFunction, TimeMesh, default_grading, mittag_leffler
from .spatial import BasisSpec, CoefficientSet, Problem, SourceSpec
from .volterra import (
    SolverError,
    SolverOptions,
    picard_scalar_partial_sums,
    solve_direct,
    solve_picard,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "build_problem",
    "dump_config",
    "main",
    "parse_config",
    "read_trace_csv",
    "write_trace_csv",
]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config error at key '{key}': {message}")
        self.key = key


# ---------------------------------------------------------------------------
# RunConfig
# ---------------------------------------------------------------------------

_EXPR_KEYS = ("kappa", "F", "G", "a", "b", "u0", "g",
              "F_prime", "G_prime", "a_prime", "b_prime")


@dataclass(frozen=True)
class RunConfig:
    alpha: float
    N: int
    T: float = 1.0
    gamma: Optional[float] = None
    basis: str = "sine"
    dim: int = 1
    kappa: str = "1"
    F: str = "0"
    G: str = "0"
    a: str = "0"
    b: str = "0"
    F_prime: Optional[str] = None
    G_prime: Optional[str] = None
    a_prime: Optional[str] = None
    b_prime: Optional[str] = None
    u0: str = "0"
    g: str = "0"
    eta: float = 1.0
    M_bound: float = 0.0
    scheme: str = "b_form"
    picard_depth: int = 8
    solve_tol: float = 1e-10
    quad_points: Optional[int] = None
    seed: int = 0
    trace_out: str = "trace.csv"
    summary_out: str = "summary.json"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_REQUIRED = ("alpha", "N")


def _check_type(key: str, value, kinds, desc: str):
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(key, f"expected {desc}, got {value!r}")
    return value


def parse_config_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    for req in _REQUIRED:
        if req not in raw:
            raise ConfigError(req, "required key missing")
    kw = {}
    for key, value in raw.items():
        f = _FIELDS[key]
        if key in _EXPR_KEYS:
            _check_type(key, value, str, "a coefficient expression string")
            try:
                parse_coeff_expr(value)
            except ExprError as e:
                raise ConfigError(key, f"bad expression: {e}") from None
            kw[key] = value
        elif f.type in ("float", "Optional[float]"):
            kw[key] = float(_check_type(key, value, (int, float), "a number"))
        elif f.type in ("int", "Optional[int]"):
            kw[key] = _check_type(key, value, int, "an integer")
        else:
            kw[key] = _check_type(key, value, str, "a string")
    cfg = RunConfig(**kw)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig):
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError("alpha", f"must lie in (0, 1], got {cfg.alpha}")
    if not 2 <= cfg.N <= 2**20:
        raise ConfigError("N", f"must lie in [2, 2^20], got {cfg.N}")
    if not 1 <= cfg.dim <= 256:
        raise ConfigError("dim", f"must lie in [1, 256], got {cfg.dim}")
    if cfg.T <= 0.0:
        raise ConfigError("T", f"must be positive, got {cfg.T}")
    if cfg.gamma is not None and cfg.gamma < 1.0:
        raise ConfigError("gamma", f"must be >= 1, got {cfg.gamma}")
    if cfg.basis not in ("sine", "p1"):
        raise ConfigError("basis", f"must be 'sine' or 'p1', got {cfg.basis!r}")
    if cfg.scheme not in ("b_form", "kernel_form", "picard"):
        raise ConfigError("scheme", f"must be b_form, kernel_form or picard, got {cfg.scheme!r}")
    if cfg.eta <= 0.0:
        raise ConfigError("eta", f"must be positive, got {cfg.eta}")
    if cfg.M_bound < 0.0:
        raise ConfigError("M_bound", f"must be >= 0, got {cfg.M_bound}")
    if cfg.picard_depth < 1:
        raise ConfigError("picard_depth", f"must be >= 1, got {cfg.picard_depth}")
    if cfg.solve_tol <= 0.0:
        raise ConfigError("solve_tol", f"must be positive, got {cfg.solve_tol}")
    if cfg.quad_points is not None and cfg.quad_points < 2:
        raise ConfigError("quad_points", f"must be >= 2, got {cfg.quad_points}")


def parse_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<syntax>", str(e)) from None
    return parse_config_dict(raw)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: RunConfig) -> str:
    """Normalized flat TOML; re-parses to an identical RunConfig."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def build_problem(cfg: RunConfig) -> tuple[Problem, TimeMesh, SolverOptions]:
    coeffs = CoefficientSet.from_expressions(
        kappa=cfg.kappa, F=cfg.F, G=cfg.G, a=cfg.a, b=cfg.b,
        F_prime=cfg.F_prime, G_prime=cfg.G_prime,
        a_prime=cfg.a_prime, b_prime=cfg.b_prime,
    )
    source = SourceSpec.from_expressions(g=cfg.g, eta=cfg.eta,
                                         M_bound=cfg.M_bound, u0=cfg.u0)
    problem = Problem(alpha=cfg.alpha, T=cfg.T, coeffs=coeffs, source=source,
                      basis=BasisSpec(cfg.basis, cfg.dim))
    gamma = cfg.gamma if cfg.gamma is not None else default_grading(cfg.alpha)
    mesh = TimeMesh(cfg.T, cfg.N, gamma)
    options = SolverOptions(scheme=cfg.scheme, picard_depth=cfg.picard_depth,
                            solve_tol=cfg.solve_tol, quad_points=cfg.quad_points)
    return problem, mesh, options


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------


def write_trace_csv(path: str | Path, mesh: TimeMesh, values: np.ndarray):
    m = values.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(f"u_{i+1}" for i in range(m)) + "\n")
        for tn, row in zip(mesh.nodes, values):
            fh.write(",".join(f"{v:.17g}" for v in (tn, *row)) + "\n")


def read_trace_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ValueError(f"{path}: not a trace CSV (header {header!r})")
        rows = [[float(tok) for tok in line.strip().split(",")]
                for line in fh if line.strip()]
    data = np.asarray(rows)
    return data[:, 0], data[:, 1:]


def _timestamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_json(path: str | Path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        cfg = parse_config(args.config)
    except ConfigError as e:
        print(f"fracvolt run: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    try:
        problem, mesh, options = build_problem(cfg)
    except (ConfigError, ValueError) as e:
        print(f"fracvolt run: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        solver = solve_picard if cfg.scheme == "picard" else solve_direct
        trace = solver(problem, mesh, options)
        diag = energy.diagnose_apriori(trace)
    except (SolverError, ValueError) as e:
        print(f"fracvolt run: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    out_dir = Path(args.out) if args.out else Path(".")
    summary = {
        "alpha": cfg.alpha,
        "N": cfg.N,
        "dim": cfg.dim,
        "scheme": trace.scheme,
        "residual_max": float(np.max(trace.residuals)),
        "wall_time_s": trace.wall_time_s,
        "flops": trace.flops,
        "rescale_sigma": trace.rescale_info.sigma,
        "picard_last_term_ratio": trace.picard_last_term_ratio,
        "diagnostics": diag.sections,
        "warnings": trace.warnings_,
        "timestamp": _timestamp(),
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trace_csv(out_dir / cfg.trace_out, mesh, trace.u.values)
        _write_json(out_dir / cfg.summary_out, summary)
    except OSError as e:
        print(f"fracvolt run: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {out_dir / cfg.trace_out} and {out_dir / cfg.summary_out} "
          f"(residual max {summary['residual_max']:.3e})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _thread_count() -> int:
    raw = os.environ.get("FRACVOLT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_cases(fn, items):
    """Evaluate independent cases, optionally threaded; output order fixed."""
    n = _thread_count()
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _check(name: str, passed: bool, **detail) -> dict:
    return {"name": name, "pass": bool(passed), "detail": detail}


def _suite_lemmas(seed: int, alphas: Sequence[float], draws: int = 100,
                  n_cells: int = 64) -> list[dict]:
    mesh = TimeMesh(1.0, n_cells, 1.0)
    checks = []

    def one_alpha(alpha):
        worst = math.inf
        failing = []
        for d in range(draws):
            rng_phi = np.random.default_rng(seed + d)
            rng_psi = np.random.default_rng(seed + 10_000 + d)
            rep = energy.check_inequalities(
                energy.random_pwl(mesh, 1, rng_phi),
                energy.random_pwl(mesh, 1, rng_psi),
                alpha, tag={"draw": d},
            )
            failing.extend(r.to_json_dict() for r in rep.failures())
            for r in rep.records:
                worst = min(worst, r.margin / max(abs(r.rhs), 1e-30))
        return alpha, worst, failing

    for alpha, worst, failing in _map_cases(one_alpha, list(alphas)):
        checks.append(_check(f"inequality-suite alpha={alpha:g}", not failing,
                             draws=draws, worst_relative_margin=worst,
                             failing_records=failing))

    def one_nonneg(d):
        rng = np.random.default_rng(seed + 20_000 + d)
        phi = energy.random_pwl(mesh, 1, rng)
        return min(energy.q1(a, phi) for a in (0.25, 0.5, 0.75))

    q1_min = min(_map_cases(one_nonneg, range(1000)))
    checks.append(_check("q1-nonnegativity-1000-draws", q1_min >= -1e-10,
                         min_value=q1_min))

    # alpha = 1 equality case of the pointwise bound, subject value(t) = t
    one = GridFunction.from_callable(mesh, lambda t: 1.0)
    rep = energy.check_inequalities(one, one, 1.0)
    pw = [r for r in rep.records if r.name == "pointwise-bound"][0]
    checks.append(_check("pointwise-bound-equality-alpha-1",
                         abs(pw.margin) <= 1e-12, margin=pw.margin))

    def one_planch(sd):
        rng = np.random.default_rng(seed + 30_000 + sd)
        phi = energy.random_smooth(TimeMesh(1.0, 128, 1.0), 1, rng)
        r1 = energy.plancherel_crosscheck(phi, 0.5)
        r2 = energy.plancherel_crosscheck(phi, 0.01)
        return max(r1["reldiff"], r2["reldiff"])

    planch_worst = max(_map_cases(one_planch, range(4)))
    checks.append(_check("plancherel-smoke", planch_worst <= 1e-2,
                         worst_reldiff=planch_worst))
    return checks


def _subdiffusion_problem(alpha: float, dim: int = 1, T: float = 1.0) -> Problem:
    u0 = "pow(2,0.5)*sin(3.141592653589793*x)"
    return Problem(alpha, T, CoefficientSet.from_expressions(),
                   SourceSpec.from_expressions(u0=u0), BasisSpec("sine", dim))


def _random_const_coeff_problem(rng: np.random.Generator, dim: int,
                                alpha: float, T: float = 1.0) -> Problem:
    """Random spatially-varying, time-constant coefficients from the grammar."""
    def rc():
        return f"{rng.uniform(-0.5, 0.5):.6f}+{rng.uniform(-0.5, 0.5):.6f}*x"
    coeffs = CoefficientSet.from_expressions(
        kappa=f"1+{rng.uniform(0.0, 1.0):.6f}*x", F=rc(), G=rc(), a=rc(), b=rc())
    source = SourceSpec.from_expressions(
        g=f"sin(3.141592653589793*x)*{rng.uniform(0.5, 1.5):.6f}",
        eta=1.0, M_bound=3.0, u0="pow(2,0.5)*sin(3.141592653589793*x)")
    return Problem(alpha, T, coeffs, source, BasisSpec("sine", dim))


def _suite_solver(seed: int, alphas: Sequence[float]) -> list[dict]:
    checks = []
    rng = np.random.default_rng(seed)
    # zero data forces the zero solution for every scheme and basis
    worst = 0.0
    for basis in ("sine", "p1"):
        for scheme in ("b_form", "kernel_form"):
            p = Problem(0.5, 1.0, CoefficientSet.from_expressions(a="0.3", b="0.1"),
                        SourceSpec.from_expressions(), BasisSpec(basis, 3))
            tr = solve_direct(p, TimeMesh(1.0, 32, 2.0), SolverOptions(scheme=scheme))
            worst = max(worst, tr.u.sup_norm())
    checks.append(_check("zero-data-uniqueness", worst <= 1e-12, sup=worst))

    # mode decoupling
    mesh = TimeMesh(1.0, 128, 4.0)
    tr_multi = solve_direct(_subdiffusion_problem(0.5, dim=4), mesh)
    tr_one = solve_direct(_subdiffusion_problem(0.5, dim=1), mesh)
    dec = float(np.max(np.abs(tr_multi.u.values[:, 0] - tr_one.u.values[:, 0])))
    off = float(np.max(np.abs(tr_multi.u.values[:, 1:])))
    checks.append(_check("mode-decoupling", dec <= 1e-12 and off <= 1e-12,
                         coord_diff=dec, other_modes=off))

    # scheme equivalence on a random constant-in-t coefficient problem
    p = _random_const_coeff_problem(rng, dim=8, alpha=0.5)
    mesh = TimeMesh(1.0, 256, 4.0)
    tb = solve_direct(p, mesh, SolverOptions(scheme="b_form"))
    tk = solve_direct(p, mesh, SolverOptions(scheme="kernel_form"))
    diff = float(np.max(np.abs(tb.u.values - tk.u.values)))
    checks.append(_check("scheme-equivalence", diff <= 1e-6, sup_diff=diff))

    # monotone decay of the pure subdiffusion mode
    for alpha in alphas:
        tr = solve_direct(_subdiffusion_problem(alpha), TimeMesh(1.0, 256, 4.0))
        vals = tr.u.values[:, 0]
        inc = float(np.max(np.diff(vals)))
        checks.append(_check(f"monotone-decay alpha={alpha:g}",
                             inc <= 1e-12 and float(vals.min()) > 0.0,
                             max_increase=inc))

    # picard agrees with the direct solve in the small-kernel regime
    coeffs = CoefficientSet.from_expressions(kappa="0.002", F="0.001*x",
                                             G="0.001", a="0.002", b="0.001")
    source = SourceSpec.from_expressions(g="0.5*sin(3.141592653589793*x)",
                                         eta=1.0, M_bound=1.0,
                                         u0="pow(2,0.5)*sin(3.141592653589793*x)")
    pp = Problem(0.5, 0.25, coeffs, source, BasisSpec("sine", 4))
    meshp = TimeMesh(0.25, 128, 4.0)
    td = solve_direct(pp, meshp)
    tp = solve_picard(pp, meshp, SolverOptions(scheme="picard", picard_depth=8))
    pdiff = float(np.max(np.abs(td.u.values - tp.u.values)))
    checks.append(_check("picard-vs-direct", pdiff <= 1e-6, sup_diff=pdiff,
                         last_term_ratio=tp.picard_last_term_ratio))

    # residuals definitional
    res = float(np.max(td.residuals))
    checks.append(_check("direct-residual-below-tolerance",
                         res <= td.options.solve_tol, residual_max=res))
    return checks


def _suite_oracle(seed: int, alphas: Sequence[float]) -> list[dict]:
    from scipy.special import erfcx

    checks = []
    # half-order identity: E_(1/2)(-x) equals the scaled complementary
    # error function; oracle path must match to 1e-9 on [0, 20]
    zs = np.linspace(0.01, 20.0, 41)
    worst = max(abs(oracle.separable_exact(0.5, z, 1.0) - erfcx(z)) / erfcx(z)
                for z in zs)
    checks.append(_check("half-order-identity", worst <= 1e-9, worst_rel=worst))

    # oracle vs solver-side evaluator across alpha (independent paths)
    worst = 0.0
    for alpha in alphas:
        if alpha >= 1.0:
            continue
        for lam in (1.0, 9.8696, 40.0):
            for t in (0.05, 0.4, 1.0):
                a = oracle.separable_exact(alpha, lam, t)
                b = mittag_leffler(alpha, -lam * t**alpha)
                worst = max(worst, abs(a - b) / abs(b))
    checks.append(_check("dual-path-mittag-leffler", worst <= 1e-9,
                         worst_rel=worst))

    # manufactured cases satisfy the integrated equation by direct quadrature
    rng = np.random.default_rng(seed)
    worst = 0.0
    for alpha in alphas:
        if alpha >= 1.0:
            continue
        case = oracle.manufactured(alpha, 1.0 + rng.uniform(0.0, 1.0),
                                   k=int(rng.integers(1, 3)),
                                   F0=rng.uniform(-1, 1), a0=rng.uniform(-1, 1),
                                   b0=rng.uniform(-1, 1), G0=rng.uniform(-1, 1))
        worst = max(worst, case.validate(1.0, rng))
    checks.append(_check("manufactured-case-defect", worst <= 1e-10,
                         worst_defect=worst))

    # refined reference: zero data stays zero; subdiffusion error drops
    pz = Problem(0.5, 1.0, CoefficientSet.from_expressions(),
                 SourceSpec.from_expressions(), BasisSpec("sine", 2))
    rz = oracle.refined_reference(pz, TimeMesh(1.0, 32, 2.0))
    checks.append(_check("refined-reference-zero-data",
                         rz.u.sup_norm() == 0.0, sup=rz.u.sup_norm()))
    ratios = []
    for alpha in alphas:
        if alpha < 0.5 or alpha >= 1.0:
            continue
        mesh = TimeMesh(1.0, 128, default_grading(alpha))
        p = _subdiffusion_problem(alpha)
        base = solve_direct(p, mesh)
        ref = oracle.refined_reference(p, mesh)
        ex = np.array([oracle.separable_exact(alpha, math.pi**2, t)
                       for t in mesh.nodes])
        eb = float(np.max(np.abs(base.u.values[:, 0] - ex)))
        er = float(np.max(np.abs(ref.u.values[:, 0] - ex)))
        ratios.append(eb / er)
    if ratios:
        checks.append(_check("refined-reference-error-ratio",
                             min(ratios) >= 2.0, ratios=ratios))

    # scalar resolvent partial sums = series truncations
    sums = picard_scalar_partial_sums(0.5, 2.0, 0.3, 8)
    from .fracops import gamma_fn
    x = 2.0 * 0.3**0.5
    trunc = np.array([sum((-x) ** j / gamma_fn(1.0 + 0.5 * j) for j in range(d + 1))
                      for d in range(9)])
    sdiff = float(np.max(np.abs(sums - trunc)))
    checks.append(_check("scalar-resolvent-series", sdiff <= 1e-14, sup_diff=sdiff))
    return checks


_SUITES = {"lemmas": _suite_lemmas, "solver": _suite_solver, "oracle": _suite_oracle}


def cmd_verify(args) -> int:
    alphas = _parse_alpha_list(args.alpha)
    if args.suite not in _SUITES:
        print(f"fracvolt verify: unknown suite {args.suite!r}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    checks = _SUITES[args.suite](args.seed, alphas)
    report = {
        "suite": args.suite,
        "seed": args.seed,
        "alphas": list(alphas),
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
        "timestamp": _timestamp(),
    }
    out = Path(args.report) if args.report else Path(f"verify_{args.suite}.json")
    try:
        _write_json(out, report)
    except OSError as e:
        print(f"fracvolt verify: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    status = "PASS" if report["all_pass"] else "FAIL"
    print(f"{status} suite={args.suite} checks={len(checks)} "
          f"({time.perf_counter() - t0:.1f}s) -> {out}")
    for c in checks:
        print(f"  [{'ok' if c['pass'] else 'FAIL'}] {c['name']}")
    return EXIT_OK if report["all_pass"] else EXIT_CHECK_FAILED


def _parse_alpha_list(text: Optional[str]) -> list[float]:
    if not text:
        return [0.25, 0.5, 0.75]
    try:
        alphas = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError("alpha", f"bad alpha list {text!r}") from None
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ConfigError("alpha", f"alpha {a} outside (0, 1]")
    return alphas


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


def cmd_convergence(args) -> int:
    try:
        cfg = parse_config(args.config)
        grid = [int(tok) for tok in args.grid.split(",") if tok.strip()]
    except (ConfigError, ValueError) as e:
        print(f"fracvolt convergence: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        print("fracvolt convergence: --grid needs >= 3 strictly increasing entries",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        problem, _, options = build_problem(cfg)
    except (ConfigError, ValueError) as e:
        print(f"fracvolt convergence: {e}", file=sys.stderr)
        return EXIT_CONFIG
    gamma = cfg.gamma if cfg.gamma is not None else default_grading(cfg.alpha)
    try:
        fine_mesh = TimeMesh(cfg.T, 4 * grid[-1], gamma)
        ref = solve_direct(problem, fine_mesh, options)
        errs = []
        for n in grid:
            mesh = TimeMesh(cfg.T, n, gamma)
            tr = solve_direct(problem, mesh, options)
            ref_on = np.column_stack([
                np.interp(mesh.nodes, fine_mesh.nodes, ref.u.values[:, d])
                for d in range(ref.u.dim)
            ])
            errs.append(float(np.max(np.abs(tr.u.values - ref_on))))
    except (SolverError, ValueError) as e:
        print(f"fracvolt convergence: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    orders = [math.log2(errs[i] / errs[i + 1]) / math.log2(grid[i + 1] / grid[i])
              for i in range(len(grid) - 1)]
    out = Path(args.out) if args.out else Path("convergence.csv")
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("N,sup_error,estimated_order\n")
            for i, n in enumerate(grid):
                order = "" if i == 0 else f"{orders[i - 1]:.17g}"
                fh.write(f"{n},{errs[i]:.17g},{order}\n")
    except OSError as e:
        print(f"fracvolt convergence: I/O failure: {e}", file=sys.stderr)
        return EXIT_IO
    ok = all(o >= 0.9 for o in orders)
    print(f"{'PASS' if ok else 'FAIL'} orders={['%.2f' % o for o in orders]} -> {out}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fracvolt",
        description="Volterra-form solver and verification bench for "
                    "time-fractional advection-diffusion-reaction problems",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a configured problem")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--dump-config", action="store_true",
                     help="print the normalized config and exit")
    run.set_defaults(fn=cmd_run)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite", choices=sorted(_SUITES))
    ver.add_argument("--seed", type=int, default=42)
    ver.add_argument("--alpha", default=None, help="comma-separated list")
    ver.add_argument("--report", default=None, help="report JSON path")
    ver.set_defaults(fn=cmd_verify)

    con = sub.add_parser("convergence", help="refinement study")
    con.add_argument("--config", required=True)
    con.add_argument("--grid", required=True, help="comma-separated N list")
    con.add_argument("--out", default=None, help="output CSV path")
    con.set_defaults(fn=cmd_convergence)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"fracvolt: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

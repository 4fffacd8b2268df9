"""fracvolt: product-integration solver and inequality test bench for linear
time-fractional advection-diffusion-reaction problems in integrated
Volterra form on the unit interval.

Quick start::

    from fracvolt import (TimeMesh, Problem, CoefficientSet, SourceSpec,
                          BasisSpec, solve_direct)

    problem = Problem(
        alpha=0.5, T=1.0,
        coeffs=CoefficientSet.from_expressions(),
        source=SourceSpec.from_expressions(
            u0="pow(2,0.5)*sin(3.141592653589793*x)"),
        basis=BasisSpec("sine", 1),
    )
    trace = solve_direct(problem, TimeMesh(1.0, 1024, 4.0))
"""

from .coeffexpr import (
    CoeffExpr,
    ExprError,
    ExprSyntaxError,
    UnknownIdentifierError,
    parse_coeff_expr,
)
from .fracops import (
    GridFunction,
    TimeMesh,
    conv_weights,
    default_grading,
    frac_integral,
    frac_integral_tmoment,
    gamma_fn,
    mittag_leffler,
    omega,
    rl_derivative,
)
from .spatial import (
    BasisSpec,
    Coefficient,
    CoefficientSet,
    KernelAssembly,
    Problem,
    RescaleInfo,
    SourceSpec,
    project_data,
    rescale_time,
)
from .volterra import (
    DivergenceError,
    KernelEval,
    SingularSystemError,
    SolutionTrace,
    SolverError,
    SolverOptions,
    picard_scalar_partial_sums,
    residual,
    solve_direct,
    solve_picard,
)
from . import energy, oracle

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "Coefficient",
    "CoefficientSet",
    "CoeffExpr",
    "DivergenceError",
    "ExprError",
    "ExprSyntaxError",
    "GridFunction",
    "KernelAssembly",
    "KernelEval",
    "Problem",
    "RescaleInfo",
    "SingularSystemError",
    "SolutionTrace",
    "SolverError",
    "SolverOptions",
    "SourceSpec",
    "TimeMesh",
    "UnknownIdentifierError",
    "conv_weights",
    "default_grading",
    "energy",
    "frac_integral",
    "frac_integral_tmoment",
    "gamma_fn",
    "mittag_leffler",
    "omega",
    "oracle",
    "parse_coeff_expr",
    "picard_scalar_partial_sums",
    "project_data",
    "rescale_time",
    "residual",
    "rl_derivative",
    "solve_direct",
    "solve_picard",
]

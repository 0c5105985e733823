"""Optimal control of semilinear parabolic and elliptic equations on uniform grids."""

from .core import (
    INF,
    BoundaryField,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    SolverDivergence,
    SolverError,
    SpaceTimeField,
    SpatialField,
    ValidationError,
    check_nonlinearity,
    lp_norm,
    truncate,
)
from .elliptic import EllipticProblem, solve_adjoint_elliptic, solve_state_elliptic
from .optimize import (
    OptimizeOptions,
    homotopy,
    optimality_report,
    solve_truncated,
    solve_unconstrained,
)
from .parabolic import ParabolicProblem, SolveOptions, solve_adjoint, solve_state

__all__ = [
    "INF",
    "BoundaryField",
    "EllipticCoefficients",
    "EllipticProblem",
    "GridSpec",
    "Nonlinearity",
    "OptimizeOptions",
    "ParabolicProblem",
    "SolveOptions",
    "SolverDivergence",
    "SolverError",
    "SpaceTimeField",
    "SpatialField",
    "ValidationError",
    "check_nonlinearity",
    "homotopy",
    "lp_norm",
    "optimality_report",
    "solve_adjoint",
    "solve_adjoint_elliptic",
    "solve_state",
    "solve_state_elliptic",
    "solve_truncated",
    "solve_unconstrained",
    "truncate",
]

"""Tracking-functional minimization for the parabolic and elliptic problems.

The control space carries the quadrature weights of the objective
(``tau * W`` on time levels 1..nt for the parabolic problem, boundary
trapezoid weights for the Neumann problem), so the Riesz gradient of the
discrete objective is ``phi + alpha u`` (resp. ``phi|_Gamma + alpha u``).
Time level 0 has zero weight and is not a degree of freedom.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import INF, BoundaryField, SolverDivergence, SpaceTimeField, SpatialField, truncate
from .elliptic import (
    EllipticProblem,
    linearized_adjoint_elliptic,
    linearized_state_elliptic,
    solve_adjoint_elliptic,
    solve_state_elliptic,
    trace,
)
from .parabolic import (
    DEFAULT_SOLVE,
    ParabolicProblem,
    SolveOptions,
    linearized_adjoint,
    linearized_state,
    solve_adjoint,
    solve_state,
)

# Armijo acceptance allows this much relative round-off in J.
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class OptimizeOptions:
    grad_tol: float = 1e-8
    max_iter: int = 500
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    M_schedule: tuple = tuple(2.0**k for k in range(11))
    rho: float | None = None
    fixed_point_damping: float = 1.0
    solve: SolveOptions = DEFAULT_SOLVE
    threads: int | None = None

    def __post_init__(self):
        sched = tuple(float(m) for m in self.M_schedule)
        object.__setattr__(self, "M_schedule", sched)
        if any(m <= 0 for m in sched) or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError(f"M_schedule must be positive and strictly increasing, got {sched}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.fixed_point_damping <= 1:
            raise ValueError("fixed_point_damping must lie in (0, 1]")
        if not (self.grad_tol > 0 and 0 < self.c1 < 1 and 0 < self.backtrack < 1):
            raise ValueError("invalid line-search parameters")
        if self.max_iter < 0 or self.max_backtracks < 1:
            raise ValueError("iteration caps must be nonnegative")


@dataclass(eq=False)
class OptimizationResult:
    u: object
    y: object
    phi: object
    J_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    iterations: int = 0
    status: str = "max_iter"
    M_active: bool = False
    ball_active: bool = False
    M: float | None = None
    distance: float | None = None
    detail: str = ""

    @property
    def J(self):
        return self.J_history[-1] if self.J_history else math.nan

    @property
    def converged(self):
        return self.status == "converged"


class _Model:
    """Uniform view of a parabolic or elliptic problem in control space."""

    def __init__(self, problem, solve_opts):
        self.problem = problem
        self.opts = solve_opts
        if isinstance(problem, ParabolicProblem):
            self.parabolic = True
            self.weights = problem.control_weights
            self.state_weights = problem.control_weights
        elif isinstance(problem, EllipticProblem):
            self.parabolic = False
            self.weights = problem.control_weights
            self.state_weights = problem.grid.weights
        else:
            raise TypeError(f"unsupported problem type {type(problem).__name__}")
        self.active = self.weights > 0
        # force shared caches before any threaded use
        _ = problem.operator

    def wrap(self, values):
        cls = SpaceTimeField if self.parabolic else BoundaryField
        return cls(self.problem.grid, values)

    def zeros(self):
        return np.zeros(self.weights.shape)

    def values(self, u):
        if u is None:
            return self.zeros()
        cls = SpaceTimeField if self.parabolic else BoundaryField
        if not isinstance(u, cls) or u.grid != self.problem.grid:
            raise ValueError(f"control must be a {cls.__name__} on the problem grid")
        return np.array(u.values, dtype=float)

    def dot(self, a, b):
        return float(np.sum(self.weights * a * b))

    def norm(self, a):
        return math.sqrt(max(self.dot(a, a), 0.0))

    def linf(self, a):
        return float(np.max(np.abs(a[self.active]), initial=0.0))

    def state(self, u):
        if self.parabolic:
            return solve_state(self.problem, self.wrap(u), self.opts)
        return solve_state_elliptic(self.problem, self.wrap(u), self.opts)

    def adjoint(self, y):
        if self.parabolic:
            return solve_adjoint(self.problem, y, "tracking", self.opts)
        return solve_adjoint_elliptic(self.problem, y, self.opts)

    def restrict(self, phi):
        return phi.values if self.parabolic else trace(phi).values

    def objective(self, y, u):
        r = y.values - self.problem.yd.values
        tracking = float(np.sum(self.state_weights * r * r))
        return 0.5 * tracking + 0.5 * self.problem.alpha * self.dot(u, u)

    def evaluate(self, u, with_gradient=True):
        y = self.state(u)
        J = self.objective(y, u)
        if not with_gradient:
            return J, None, y, None
        phi = self.adjoint(y)
        g = np.where(self.active, self.restrict(phi) + self.problem.alpha * u, 0.0)
        return J, g, y, phi


def objective(problem, u, opts=DEFAULT_SOLVE):
    """``J(u) = 1/2 ||y_u - y_d||^2 + alpha/2 ||u||^2`` in the discrete norms."""
    m = _Model(problem, opts)
    return m.evaluate(m.values(u), with_gradient=False)[0]


def gradient(problem, u, opts=DEFAULT_SOLVE):
    """Riesz gradient ``phi_u + alpha u`` (trace of ``phi_u`` for boundary control)."""
    m = _Model(problem, opts)
    return m.wrap(m.evaluate(m.values(u))[1])


def _project(v, M):
    return v if M == INF else np.clip(v, -M, M)


def _descent(model, u, fun, project, stationarity, opts, first_step):
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking.

    ``fun(u) -> (value, gradient, y, phi)``; ``stationarity(u, phi) -> residual``.
    """
    J, g, y, phi = fun(u)
    result = OptimizationResult(u=None, y=None, phi=None)
    t = first_step
    for it in range(opts.max_iter + 1):
        res = stationarity(u, g, phi)
        result.J_history.append(J)
        result.residual_history.append(res)
        result.iterations = it
        if res <= opts.grad_tol:
            result.status = "converged"
            break
        if it == opts.max_iter:
            result.status = "max_iter"
            break
        for _ in range(opts.max_backtracks):
            u_new = project(u - t * g)
            step = u_new - u
            try:
                J_new, g_new, y_new, phi_new = fun(u_new)
            except SolverDivergence:
                t *= opts.backtrack
                continue
            slack = _ROUNDOFF * max(1.0, abs(J))
            if J_new <= J + opts.c1 * model.dot(g, step) + slack:
                break
            t *= opts.backtrack
        else:
            result.status = "max_iter"
            result.detail = f"line search failed at iteration {it}"
            break
        s, dg = step, g_new - g
        sy = model.dot(s, dg)
        t = model.dot(s, s) / sy if sy > 0 else first_step
        u, J, g, y, phi = u_new, J_new, g_new, y_new, phi_new
    result.u, result.y, result.phi = model.wrap(u), y, phi
    return result


def solve_unconstrained(problem, u0=None, opts=OptimizeOptions()):
    """Minimize ``J`` without control constraints (steepest descent, BB + Armijo)."""
    model = _Model(problem, opts.solve)
    u = np.where(model.active, model.values(u0), 0.0)
    alpha = problem.alpha
    try:
        return _descent(
            model,
            u,
            model.evaluate,
            lambda v: np.where(model.active, v, 0.0),
            lambda v, g, phi: model.norm(g),
            opts,
            first_step=1.0 / (1.0 + alpha),
        )
    except SolverDivergence as exc:
        return OptimizationResult(model.wrap(u), None, None, status="diverged", detail=str(exc))


def vi_residual(u, phi, u_ref, M, alpha):
    """``|| u - P_M((u_ref - phi) / (1 + alpha)) ||`` in the weighted control norm.

    ``phi`` may be a full spatial adjoint for boundary controls; it is traced.
    """
    if isinstance(u, BoundaryField) and isinstance(phi, SpatialField):
        phi = trace(phi)
    target = (u_ref.values - phi.values) / (1.0 + alpha)
    proj = target if M == INF else truncate(target, M)
    diff = u.values - proj
    if isinstance(u, SpaceTimeField):
        w = u.grid.time_weights[:, None] * u.grid.weights[None, :]
    else:
        w = u.grid.boundary_weights
    return float(math.sqrt(np.sum(w * diff * diff)))


def solve_truncated(problem, u_ref, M, rho=None, opts=OptimizeOptions(), u_init=None):
    """Minimize ``J(u) + 1/2 ||u - u_ref||^2`` over ``|u| <= M``.

    Stationarity is the fixed-point identity ``u = P_M((u_ref - phi) / (1 + alpha))``.
    The ball ``||u - u_ref|| <= rho`` is only monitored and flagged.
    """
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    model = _Model(problem, opts.solve)
    ref = np.where(model.active, model.values(u_ref), 0.0)
    rho = opts.rho if rho is None else rho
    if rho is None:
        rho = 10.0 * (1.0 + model.norm(ref))
    if not rho > 0:
        raise ValueError("rho must be positive")
    alpha = problem.alpha
    start = ref if u_init is None else model.values(u_init)
    u = np.where(model.active, _project(start, M), 0.0)

    def fun(v):
        J, g, y, phi = model.evaluate(v)
        d = v - ref
        return J + 0.5 * model.dot(d, d), np.where(model.active, g + d, 0.0), y, phi

    def stationarity(v, g, phi):
        target = _project((ref - model.restrict(phi)) / (1.0 + alpha), M)
        return model.norm(np.where(model.active, v - target, 0.0))

    try:
        result = _descent(
            model,
            u,
            fun,
            lambda v: np.where(model.active, _project(v, M), 0.0),
            stationarity,
            opts,
            first_step=opts.fixed_point_damping / (1.0 + alpha),
        )
    except SolverDivergence as exc:
        return OptimizationResult(model.wrap(u), None, None, status="diverged", M=M, detail=str(exc))
    uv = result.u.values
    result.M = float(M)
    result.distance = model.norm(uv - ref)
    if M != INF:
        result.M_active = bool(np.any(np.abs(uv[model.active]) >= M * (1 - 1e-12)))
    result.ball_active = result.distance >= rho * (1 - 1e-8)
    if result.distance > rho:
        msg = f"ball constraint violated: ||u - u_ref|| = {result.distance:.6e} > rho = {rho:.6e}"
        result.detail = (result.detail + "; " if result.detail else "") + msg
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SEMICONTROL_THREADS")
    return max(1, int(env)) if env else 1


def homotopy(problem, u0=None, opts=OptimizeOptions(), threads=None):
    """Unconstrained minimizer followed by the box-truncated proximal problems.

    Returns ``[ubar_result, result_M1, result_M2, ...]``. Every truncated
    problem is warm-started from ``P_M(ubar)`` independently, so the
    schedule can run in parallel with bitwise-identical results.
    """
    if not opts.M_schedule:
        raise ValueError("M_schedule must not be empty")
    base = solve_unconstrained(problem, u0, opts)
    if base.status == "diverged":
        return [base]
    ubar = base.u

    def run(M):
        return solve_truncated(problem, ubar, M, opts.rho, opts)

    workers = _thread_count(threads if threads is not None else opts.threads)
    if workers == 1:
        rest = [run(M) for M in opts.M_schedule]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rest = list(pool.map(run, opts.M_schedule))
    return [base] + rest


@dataclass(frozen=True)
class OptimalityReport:
    J: float
    grad_norm: float
    u_linf: float
    y_linf: float
    phi_linf: float
    consistency: float
    iterations: int
    status: str
    M_active: bool
    ball_active: bool

    def as_dict(self):
        return {
            "J": self.J,
            "grad_norm": self.grad_norm,
            "iters": self.iterations,
            "u_linf": self.u_linf,
            "y_linf": self.y_linf,
            "M_active": self.M_active,
            "ball_active": self.ball_active,
            "status": self.status,
        }


def optimality_report(problem, result, opts=DEFAULT_SOLVE):
    """Recompute state and adjoint from ``result.u`` and measure the optimality system.

    ``consistency`` is ``||u + phi/alpha||_inf`` over the control nodes.
    """
    if not result.converged:
        raise ValueError(f"optimality_report needs a converged result, got status {result.status!r}")
    model = _Model(problem, opts)
    u = model.values(result.u)
    J, g, y, phi = model.evaluate(u)
    restricted = model.restrict(phi)
    return OptimalityReport(
        J=J,
        grad_norm=model.norm(g),
        u_linf=model.linf(u),
        y_linf=float(np.max(np.abs(y.values))),
        phi_linf=model.linf(restricted),
        consistency=model.linf(u + restricted / problem.alpha),
        iterations=result.iterations,
        status=result.status,
        M_active=result.M_active,
        ball_active=result.ball_active,
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tol: float
    values: tuple

    @property
    def passed(self):
        return bool(self.worst <= self.tol)


def gradient_check(problem, u, rng, directions=5, step=1e-5, tol=1e-5, opts=DEFAULT_SOLVE):
    """Relative error of ``<grad J(u), v>`` against central differences in random directions."""
    model = _Model(problem, opts)
    uv = model.values(u)
    g = model.evaluate(uv)[1]
    errors = []
    for _ in range(directions):
        v = np.where(model.active, rng.standard_normal(uv.shape), 0.0)
        jp = model.evaluate(uv + step * v, with_gradient=False)[0]
        jm = model.evaluate(uv - step * v, with_gradient=False)[0]
        fd = (jp - jm) / (2 * step)
        exact = model.dot(g, v)
        errors.append(abs(fd - exact) / max(abs(exact), abs(fd), np.finfo(float).tiny))
    return CheckResult("gradient", max(errors), tol, tuple(errors))


def transpose_check(problem, u, rng, pairs=10, tol=1e-12, opts=DEFAULT_SOLVE):
    """``|<L v, w> - <v, L* w>| / (||v|| ||w||)`` for the linearized control-to-state map ``L``."""
    model = _Model(problem, opts)
    y = model.state(model.values(u))
    grid = problem.grid
    errors = []
    for _ in range(pairs):
        v = np.where(model.active, rng.standard_normal(model.weights.shape), 0.0)
        if model.parabolic:
            w = rng.standard_normal((grid.nt + 1, grid.num_nodes))
            w[:, grid.boundary_index] = 0.0
            Lv = linearized_state(problem, y, model.wrap(v), opts).values
            Lsw = linearized_adjoint(problem, y, SpaceTimeField(grid, w), opts).values
        else:
            w = rng.standard_normal(grid.num_nodes)
            Lv = linearized_state_elliptic(problem, y, model.wrap(v), opts).values
            Lsw = trace(linearized_adjoint_elliptic(problem, y, SpatialField(grid, w), opts)).values
        lhs = float(np.sum(model.state_weights * Lv * w))
        rhs = model.dot(v, Lsw)
        scale = model.norm(v) * math.sqrt(float(np.sum(model.state_weights * w * w)))
        errors.append(abs(lhs - rhs) / scale)
    return CheckResult("transpose", max(errors), tol, tuple(errors))

"""Implicit-Euler solver for the semilinear heat-type state equation and its adjoint.

State:   (y^m - y^{m-1}) / tau + A_h y^m + f(y^m) = u^m,  m = 1..nt,  y^0 = y0,
with homogeneous Dirichlet values on the boundary nodes.

Adjoint: (phi^m - phi^{m+1}) / tau + A_h^* phi^m + f'(y^m) phi^m = s^m,
marched backwards from phi^{nt+1} = 0. With the right-endpoint time weights
this is the exact transpose of the linearized state map, so the gradient of
the discrete tracking functional is ``phi + alpha u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    INF,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    SolverDivergence,
    SolverError,
    SpaceTimeField,
    SpatialField,
    bochner_norm,
    corner_gradients,
    h1_seminorm_sq,
    lp_norm,
    truncate,
)


@dataclass(frozen=True)
class SolveOptions:
    newton_tol: float = 1e-10
    max_newton: int = 50
    linear_tol: float = 1e-12
    direct: bool = True
    max_halvings: int = 30

    def __post_init__(self):
        if not (self.newton_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_newton < 1 or self.max_halvings < 0:
            raise ValueError("iteration caps must be positive")


DEFAULT_SOLVE = SolveOptions()


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Finite-difference ``A_h`` restricted to the unknown nodes.

    ``stiffness`` is the weighted form ``K`` (``K[i, j] = B(e_j, e_i)``) and
    ``matrix = W^{-1} K`` is the nodal action. ``adjoint_matrix = W^{-1} K^T``
    is the transpose with respect to the trapezoid inner product.
    """

    bc: str
    nodes: np.ndarray
    stiffness: sp.csr_matrix
    weights: np.ndarray
    lambda_a: float

    @cached_property
    def matrix(self):
        return sp.diags(1.0 / self.weights) @ self.stiffness

    @cached_property
    def adjoint_matrix(self):
        return (sp.diags(1.0 / self.weights) @ self.stiffness.T).tocsr()


def stiffness_matrix(coeffs, grid):
    """Weighted bilinear form over all nodes (no boundary condition applied)."""
    coeffs.check_grid(grid)
    G, wt, corner_nodes = corner_gradients(grid)
    n = grid.n
    kind = coeffs.kind
    K = sp.csr_matrix((grid.num_nodes, grid.num_nodes))
    if kind == "matrix":
        for i in range(n):
            for j in range(n):
                if coeffs.a[i, j] != 0.0:
                    K = K + G[j].T @ sp.diags(wt * coeffs.a[i, j]) @ G[i]
    else:
        scale = coeffs.a[corner_nodes] if kind == "nodal" else float(coeffs.a)
        D = sp.diags(wt * scale)
        for i in range(n):
            K = K + G[i].T @ D @ G[i]
    K = K + sp.diags(grid.weights * coeffs.a0_nodal(grid))
    return K.tocsr()


def assemble_operator(coeffs, grid, bc="dirichlet"):
    """Second-order finite-difference discretization of ``A`` on the grid.

    Dirichlet: boundary rows and columns are eliminated (homogeneous data).
    Neumann: all nodes are unknowns; at boundary nodes the scheme coincides
    with ghost-node elimination of the conormal derivative.
    """
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
    K = stiffness_matrix(coeffs, grid)
    if bc == "neumann":
        nodes = np.arange(grid.num_nodes)
    else:
        nodes = grid.interior_index
        K = K[nodes][:, nodes].tocsr()
    return DiscreteOperator(bc, nodes, K, grid.weights[nodes], coeffs.lambda_a)


def linear_solve(matrix, rhs, opts=DEFAULT_SOLVE):
    if opts.direct:
        x = spla.spsolve(matrix.tocsc(), rhs)
    else:
        x, info = spla.gmres(matrix, rhs, rtol=opts.linear_tol, atol=0.0, restart=200, maxiter=50)
        if info != 0:
            raise SolverError(f"gmres failed to converge (info={info})")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")
    return x


def newton_solve(system, jacobian_diag, func, dfunc, rhs, guess, opts, stage=""):
    """Damped Newton for ``system @ y + jacobian_diag * func(y) = rhs``.

    ``jacobian_diag`` scales the nonlinearity (tau, or the quadrature
    weights). Step halving on the max-norm residual, at most
    ``opts.max_halvings`` halvings per step.
    """
    scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
    tol = opts.newton_tol * scale
    y = guess.copy()

    def residual(v):
        return system @ v + jacobian_diag * func(v) - rhs

    with np.errstate(over="ignore", invalid="ignore"):
        r = residual(y)
        rnorm = float(np.max(np.abs(r), initial=0.0))
        for _ in range(opts.max_newton + 1):
            if rnorm <= tol:
                return y
            if not math.isfinite(rnorm):
                break
            J = system + sp.diags(jacobian_diag * dfunc(y))
            step = linear_solve(J, -r, opts)
            t = 1.0
            for _ in range(opts.max_halvings + 1):
                trial = y + t * step
                r_trial = residual(trial)
                n_trial = float(np.max(np.abs(r_trial), initial=0.0))
                if math.isfinite(n_trial) and n_trial < rnorm:
                    break
                t *= 0.5
            else:
                raise SolverDivergence(
                    f"{stage}: line search failed, residual {rnorm:.3e}", residual=rnorm
                )
            y, r, rnorm = trial, r_trial, n_trial
    raise SolverDivergence(f"{stage}: Newton did not converge, residual {rnorm:.3e}", residual=rnorm)


@dataclass(frozen=True, eq=False)
class ParabolicProblem:
    grid: GridSpec
    coeffs: EllipticCoefficients
    f: Nonlinearity
    y0: SpatialField
    yd: SpaceTimeField
    alpha: float

    def __post_init__(self):
        if not self.grid.has_time:
            raise ValueError("parabolic problems need a grid with a time axis")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.y0.grid != self.grid or self.yd.grid != self.grid:
            raise ValueError("y0 and yd must live on the problem grid")
        if self.f.weight is not None and self.f.weight.size != self.grid.num_nodes:
            raise ValueError("nonlinearity weight needs one value per node")
        self.coeffs.check_grid(self.grid)

    @cached_property
    def operator(self):
        return assemble_operator(self.coeffs, self.grid, "dirichlet")

    @cached_property
    def step_matrix(self):
        """``I + tau A_h`` on interior nodes."""
        op = self.operator
        return (sp.identity(op.nodes.size, format="csr") + self.grid.tau * op.matrix).tocsr()

    @cached_property
    def adjoint_step_matrix(self):
        op = self.operator
        return (sp.identity(op.nodes.size, format="csr") + self.grid.tau * op.adjoint_matrix).tocsr()

    @property
    def control_weights(self):
        return self.grid.time_weights[:, None] * self.grid.weights[None, :]


def _as_values(field, grid, name):
    if not isinstance(field, SpaceTimeField) or field.grid != grid:
        raise ValueError(f"{name} must be a SpaceTimeField on the problem grid")
    return field.values


def _march(problem, u, func, dfunc, opts):
    grid = problem.grid
    nodes = problem.operator.nodes
    tau = grid.tau
    M = problem.step_matrix
    y = np.zeros((grid.nt + 1, grid.num_nodes))
    y[0] = problem.y0.values
    prev = y[0, nodes]
    linear = problem.f.is_zero
    lu = spla.splu(M.tocsc()) if (linear and opts.direct) else None
    for m in range(1, grid.nt + 1):
        rhs = prev + tau * u[m, nodes]
        if lu is not None:
            cur = lu.solve(rhs)
        else:
            try:
                cur = newton_solve(
                    M, tau, lambda v: func(v, nodes), lambda v: dfunc(v, nodes), rhs, prev, opts,
                    stage=f"state step {m}",
                )
            except SolverDivergence as exc:
                raise SolverDivergence(str(exc), step=m, residual=exc.residual) from None
        y[m, nodes] = cur
        prev = cur
    return SpaceTimeField(grid, y)


def solve_state(problem, u, opts=DEFAULT_SOLVE):
    """Solve the state equation for control ``u`` (levels 1..nt are used)."""
    u = _as_values(u, problem.grid, "u")
    return _march(problem, u, problem.f.value, problem.f.derivative, opts)


def truncated_nonlinearity(f, k):
    """``(f o P_k, f'(P_k(s)) 1{|s| <= k})`` as nodal callables."""

    def func(s, nodes=None):
        return f.value(truncate(s, k), nodes)

    def dfunc(s, nodes=None):
        return f.derivative(truncate(s, k), nodes) * (np.abs(s) <= k)

    return func, dfunc


def solve_state_truncated(problem, u, k, opts=DEFAULT_SOLVE):
    """State equation with ``f`` replaced by ``f o P_k``; needs ``k >= ||y0||_inf``."""
    if not k > 0:
        raise ValueError(f"truncation level must be positive, got {k}")
    y0max = lp_norm(problem.y0, INF)
    if k < y0max:
        raise ValueError(f"truncation level k={k} is below ||y0||_inf={y0max}")
    u = _as_values(u, problem.grid, "u")
    func, dfunc = truncated_nonlinearity(problem.f, k)
    return _march(problem, u, func, dfunc, opts)


def _potential(problem, y, m):
    nodes = problem.operator.nodes
    return problem.f.derivative(y[m, nodes], nodes)


def linearized_state(problem, y, v, opts=DEFAULT_SOLVE):
    """Derivative of the control-to-state map at state ``y`` in direction ``v``."""
    grid = problem.grid
    yv = _as_values(y, grid, "y")
    vv = _as_values(v, grid, "v")
    nodes = problem.operator.nodes
    tau = grid.tau
    out = np.zeros_like(vv)
    prev = np.zeros(nodes.size)
    for m in range(1, grid.nt + 1):
        J = problem.step_matrix + sp.diags(tau * _potential(problem, yv, m))
        prev = linear_solve(J, prev + tau * vv[m, nodes], opts)
        out[m, nodes] = prev
    return SpaceTimeField(grid, out)


def linearized_adjoint(problem, y, source, opts=DEFAULT_SOLVE):
    """Backward adjoint march with an arbitrary source; transpose of ``linearized_state``."""
    grid = problem.grid
    yv = _as_values(y, grid, "y")
    sv = _as_values(source, grid, "source")
    nodes = problem.operator.nodes
    tau = grid.tau
    out = np.zeros_like(sv)
    nxt = np.zeros(nodes.size)
    for m in range(grid.nt, -1, -1):
        J = problem.adjoint_step_matrix + sp.diags(tau * _potential(problem, yv, m))
        nxt = linear_solve(J, nxt + tau * sv[m, nodes], opts)
        out[m, nodes] = nxt
    return SpaceTimeField(grid, out)


def solve_adjoint(problem, y, rhs_mode="tracking", opts=DEFAULT_SOLVE):
    """Adjoint state with source ``y - yd`` (tracking), ``y`` or ``yd``.

    Level 0 is filled by one more backward step; it carries zero weight in
    the objective and does not enter the gradient.
    """
    yv = _as_values(y, problem.grid, "y")
    if rhs_mode == "tracking":
        src = yv - problem.yd.values
    elif rhs_mode == "state_only":
        src = yv
    elif rhs_mode == "target_only":
        src = problem.yd.values
    else:
        raise ValueError(f"unknown rhs_mode {rhs_mode!r}")
    return linearized_adjoint(problem, y, SpaceTimeField(problem.grid, src), opts)


def energy_ratio(problem, u, opts=DEFAULT_SOLVE):
    """Ratio of the discrete energy norm of ``y_u`` (plus ``||f(y_u)||``) to the data size.

    numerator: ``||y||_{L^inf(L^2)} + ||grad y||_{L^2(L^2)} + ||f(y)||_{L^2(Q)}``;
    denominator: ``||u||_{L^2(Q)} + ||y0||_inf``.
    """
    grid = problem.grid
    denom = lp_norm(u, 2) + lp_norm(problem.y0, INF)
    if denom == 0:
        raise ValueError("energy_ratio needs ||u|| + ||y0|| > 0")
    y = solve_state(problem, u, opts)
    l2_levels = np.sqrt(np.sum(grid.weights * y.values**2, axis=1))
    grad = np.sqrt(np.sum(grid.time_weights * h1_seminorm_sq(y.values, grid)))
    fy = SpaceTimeField(grid, problem.f.value(y.values))
    return float((l2_levels.max() + grad + lp_norm(fy, 2)) / denom)


def linf_scaling_check(problem, u, lambdas, sigma=INF, gamma=INF, opts=DEFAULT_SOLVE):
    """Table of ``(lam, ||y_{lam u}||_inf / (lam ||u||_{sigma,gamma} + ||y0||_inf))``."""
    n = problem.grid.n
    for e in (sigma, gamma):
        if not (e == INF or e >= 2):
            raise ValueError(f"exponents must lie in [2, inf], got {e}")
    if not (1.0 / sigma + n / (2.0 * gamma) < 1.0):
        raise ValueError(f"exponents must satisfy 1/sigma + n/(2 gamma) < 1, got sigma={sigma}, gamma={gamma}")
    unorm = bochner_norm(u, sigma, gamma)
    y0max = lp_norm(problem.y0, INF)
    table = []
    for lam in lambdas:
        y = solve_state(problem, SpaceTimeField(problem.grid, lam * u.values), opts)
        denom = lam * unorm + y0max
        if denom == 0:
            raise ValueError("scaling check needs lam ||u|| + ||y0|| > 0")
        table.append((float(lam), lp_norm(y, INF) / denom))
    return table

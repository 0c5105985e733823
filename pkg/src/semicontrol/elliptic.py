"""Semilinear elliptic state equation with Neumann boundary control.

Discrete weak form on all grid nodes:

    K y + W f(., y) = W g + E^T W_G u,

with ``K`` the stiffness of ``B``, ``W`` the trapezoid weights, ``W_G`` the
boundary trapezoid weights and ``E`` the restriction to boundary nodes.
Dividing by ``W`` gives the ghost-node finite-difference scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .core import (
    BoundaryField,
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    SpatialField,
    ValidationError,
    check_nonlinearity,
    h1_seminorm_sq,
)
from .parabolic import (
    DEFAULT_SOLVE,
    assemble_operator,
    linear_solve,
    newton_solve,
    stiffness_matrix,
)


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """Neumann boundary control problem.

    A nonzero ``f.offset`` (so that ``f(., 0) != 0``) is moved into the source:
    ``g <- g - f(., 0)`` and the offset is dropped.
    """

    grid: GridSpec
    coeffs: EllipticCoefficients
    f: Nonlinearity
    g: SpatialField
    yd: SpatialField
    alpha: float

    def __post_init__(self):
        if self.grid.has_time:
            raise ValueError("elliptic problems take a grid without a time axis")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.g.grid != self.grid or self.yd.grid != self.grid:
            raise ValueError("g and yd must live on the problem grid")
        self.coeffs.check_grid(self.grid)
        if not self.coeffs.a0_nonzero:
            raise ValidationError("a0 must not vanish identically for the Neumann problem")
        f = self.f
        if f.weight is not None and f.weight.size != self.grid.num_nodes:
            raise ValueError("nonlinearity weight needs one value per node")
        if f.offset != 0.0:
            f0 = f.value(np.zeros(self.grid.num_nodes))
            object.__setattr__(self, "g", SpatialField(self.grid, self.g.values - f0))
            f = Nonlinearity(f.name, f.coef, f.lam, 0.0, f.weight, f.lambda_f)
            object.__setattr__(self, "f", f)
        if f.lambda_f != 0.0:
            raise ValidationError(f"elliptic nonlinearity must be monotone, got lambda_f={f.lambda_f}")
        check_nonlinearity(f, R=10.0, samples=201)

    @cached_property
    def operator(self):
        return assemble_operator(self.coeffs, self.grid, "neumann")

    @property
    def control_weights(self):
        return self.grid.boundary_weights

    def boundary_load(self, u):
        load = np.zeros(self.grid.num_nodes)
        load[self.grid.boundary_index] = self.grid.boundary_weights * u
        return load


def bilinear_form(y, z, coeffs, grid):
    """Discrete ``B(y, z) = int sum a_ij d_i y d_j z + a0 y z``."""
    if y.grid != grid or z.grid != grid:
        raise ValueError("fields must live on the given grid")
    K = stiffness_matrix(coeffs, grid)
    return float(z.values @ (K @ y.values))


def h1_norm_sq(y):
    """Discrete ``||y||_{H^1}^2 = ||grad y||^2 + ||y||^2``."""
    grid = y.grid
    return float(h1_seminorm_sq(y.values, grid) + np.sum(grid.weights * y.values**2))


def coercivity_constant(coeffs, grid):
    """Largest ``L`` with ``B(y, y) >= L ||y||_{H^1}^2`` on the grid (generalized eigenvalue)."""
    import scipy.linalg as sla

    K = stiffness_matrix(coeffs, grid)
    unit = EllipticCoefficients(1.0, 1.0)
    H = stiffness_matrix(unit, grid)
    Ks = 0.5 * (K + K.T)
    if grid.num_nodes <= 2500:
        return float(sla.eigh(Ks.toarray(), H.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0])
    import scipy.sparse.linalg as spla

    vals = spla.eigsh(Ks.tocsc(), k=1, M=H.tocsc(), sigma=0.0, which="LM", return_eigenvectors=False)
    return float(vals.min())


def _control_values(problem, u):
    if not isinstance(u, BoundaryField) or u.grid != problem.grid:
        raise ValueError("u must be a BoundaryField on the problem grid")
    return u.values


def solve_state_elliptic(problem, u, opts=DEFAULT_SOLVE, guess=None):
    """Solve the Neumann problem for boundary control ``u`` by damped Newton."""
    grid = problem.grid
    uv = _control_values(problem, u)
    W = grid.weights
    # nodal form: W^{-1} K y + f(y) = g + W^{-1} E^T W_G u
    system = problem.operator.matrix
    rhs = problem.g.values + problem.boundary_load(uv) / W
    y_init = np.zeros(grid.num_nodes) if guess is None else np.array(guess.values, dtype=float)
    if problem.f.is_zero:
        y = linear_solve(system, rhs, opts)
    else:
        y = newton_solve(
            system, 1.0, problem.f.value, problem.f.derivative, rhs, y_init, opts, stage="elliptic state"
        )
    return SpatialField(grid, y)


def _adjoint_matrix(problem, y):
    op = problem.operator
    return op.adjoint_matrix + sp.diags(problem.f.derivative(y.values))


def solve_adjoint_elliptic(problem, y, opts=DEFAULT_SOLVE):
    """Adjoint with source ``y - yd`` and homogeneous conormal condition."""
    return linearized_adjoint_elliptic(problem, y, SpatialField(problem.grid, y.values - problem.yd.values), opts)


def linearized_adjoint_elliptic(problem, y, source, opts=DEFAULT_SOLVE):
    phi = linear_solve(_adjoint_matrix(problem, y), source.values, opts)
    return SpatialField(problem.grid, phi)


def linearized_state_elliptic(problem, y, v, opts=DEFAULT_SOLVE):
    """Derivative of ``u -> y_u`` at state ``y`` in boundary direction ``v``."""
    op = problem.operator
    J = op.matrix + sp.diags(problem.f.derivative(y.values))
    rhs = problem.boundary_load(_control_values(problem, v)) / problem.grid.weights
    return SpatialField(problem.grid, linear_solve(J, rhs, opts))


def trace(field):
    """Restriction to boundary nodes, in global lexicographic node order."""
    return BoundaryField(field.grid, field.values[field.grid.boundary_index])


def solve_distributed_dirichlet(grid, coeffs, f, u, opts=DEFAULT_SOLVE):
    """``A y + f(., y) = u`` with ``y = 0`` on the boundary (distributed control)."""
    op = assemble_operator(coeffs, grid, "dirichlet")
    nodes = op.nodes
    y = np.zeros(grid.num_nodes)
    y[nodes] = newton_solve(
        op.matrix,
        1.0,
        lambda v: f.value(v, nodes),
        lambda v: f.derivative(v, nodes),
        u.values[nodes],
        np.zeros(nodes.size),
        opts,
        stage="distributed elliptic state",
    )
    return SpatialField(grid, y)

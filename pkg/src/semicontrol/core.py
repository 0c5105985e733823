"""Grids, nodal fields, quadrature, truncation and the nonlinearity catalog.

Everything here is immutable after construction. Nodes of a grid are numbered
lexicographically (C order, first axis slowest); space-time fields are stored
time-major with shape ``(nt + 1, num_nodes)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

INF = math.inf

_MAX_VALUES = 2**31


class ValidationError(ValueError):
    """A structural assumption (ellipticity, sign of f', ...) failed a check."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SolverError(RuntimeError):
    """A linear solve failed."""


class SolverDivergence(SolverError):
    """Newton iteration did not reach tolerance."""

    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


def _trapezoid_1d(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on ``prod(0, L_i)``, optionally with a time axis."""

    lengths: tuple
    nx: tuple
    nt: int | None = None
    T: float | None = None

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        nx = tuple(int(v) for v in self.nx)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "nx", nx)
        if not 1 <= len(lengths) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(lengths)}")
        if len(nx) != len(lengths):
            raise ValueError("lengths and nx must have the same number of axes")
        if any(v <= 0 or not math.isfinite(v) for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if any(v < 3 for v in nx):
            raise ValueError(f"need at least 3 nodes per axis, got {nx}")
        if (self.nt is None) != (self.T is None):
            raise ValueError("nt and T must be given together")
        if self.nt is not None:
            object.__setattr__(self, "nt", int(self.nt))
            object.__setattr__(self, "T", float(self.T))
            if self.nt < 1:
                raise ValueError(f"nt must be >= 1, got {self.nt}")
            if not self.T > 0:
                raise ValueError(f"T must be positive, got {self.T}")
        total = math.prod(nx) * ((self.nt or 0) + 1)
        if total > _MAX_VALUES:
            raise ValueError(f"grid has {total} values, above the supported {_MAX_VALUES}")

    @property
    def n(self):
        return len(self.lengths)

    @property
    def shape(self):
        return self.nx

    @property
    def spacing(self):
        return tuple(L / (m - 1) for L, m in zip(self.lengths, self.nx))

    @property
    def num_nodes(self):
        return math.prod(self.nx)

    @property
    def has_time(self):
        return self.nt is not None

    @property
    def tau(self):
        if self.nt is None:
            raise ValueError("grid has no time axis")
        return self.T / self.nt

    @cached_property
    def times(self):
        return np.linspace(0.0, self.T, self.nt + 1)

    @cached_property
    def time_weights(self):
        """Right-endpoint rectangle weights: 0 at t=0, tau afterwards."""
        w = np.full(self.nt + 1, self.tau)
        w[0] = 0.0
        return w

    @cached_property
    def axes(self):
        return tuple(np.linspace(0.0, L, m) for L, m in zip(self.lengths, self.nx))

    @cached_property
    def coords(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def weights(self):
        """Composite trapezoid weights, one per node."""
        w = _trapezoid_1d(self.nx[0], self.spacing[0])
        for m, h in zip(self.nx[1:], self.spacing[1:]):
            w = np.multiply.outer(w, _trapezoid_1d(m, h))
        return np.asarray(w).ravel()

    @cached_property
    def boundary_mask(self):
        idx = np.indices(self.nx).reshape(self.n, -1)
        last = np.array(self.nx).reshape(-1, 1) - 1
        return np.any((idx == 0) | (idx == last), axis=0)

    @cached_property
    def boundary_index(self):
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def interior_index(self):
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary_weights(self):
        """Trapezoid weights on the boundary faces, summed where faces meet."""
        wfull = np.zeros(self.nx)
        one_d = [_trapezoid_1d(m, h) for m, h in zip(self.nx, self.spacing)]
        for axis in range(self.n):
            face = np.ones(())
            for j in range(self.n):
                if j != axis:
                    face = np.multiply.outer(face, one_d[j])
            for side in (0, self.nx[axis] - 1):
                sl = [slice(None)] * self.n
                sl[axis] = side
                wfull[tuple(sl)] += face
        return wfull.ravel()[self.boundary_index]

    def edge_weights(self, axis):
        """Weights of the edges along ``axis`` for the discrete Dirichlet energy."""
        one_d = [_trapezoid_1d(m, h) for m, h in zip(self.nx, self.spacing)]
        one_d[axis] = np.full(self.nx[axis] - 1, self.spacing[axis])
        w = one_d[0]
        for v in one_d[1:]:
            w = np.multiply.outer(w, v)
        return np.asarray(w)


def _frozen(values, shape, what):
    v = np.array(values, dtype=float)
    if v.size != math.prod(shape):
        raise ValueError(f"{what} needs {math.prod(shape)} values, got {v.size}")
    v = v.reshape(shape)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} has non-finite values")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class SpatialField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, (self.grid.num_nodes,), "SpatialField"))

    @classmethod
    def from_function(cls, grid, func):
        """Evaluate ``func(*coords)`` at every node."""
        return cls(grid, np.broadcast_to(func(*grid.coords.T), (grid.num_nodes,)))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.num_nodes))


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.grid.nt is None:
            raise ValueError("SpaceTimeField needs a grid with a time axis")
        shape = (self.grid.nt + 1, self.grid.num_nodes)
        object.__setattr__(self, "values", _frozen(self.values, shape, "SpaceTimeField"))

    @classmethod
    def from_function(cls, grid, func):
        """Evaluate ``func(t, *coords)`` at every (time level, node)."""
        t = grid.times[:, None]
        x = [c[None, :] for c in grid.coords.T]
        return cls(grid, np.broadcast_to(func(t, *x), (grid.nt + 1, grid.num_nodes)))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.nt + 1, grid.num_nodes)))

    def level(self, m):
        return SpatialField(self.grid, self.values[m])


@dataclass(frozen=True, eq=False)
class BoundaryField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        shape = (self.grid.boundary_index.size,)
        object.__setattr__(self, "values", _frozen(self.values, shape, "BoundaryField"))

    @classmethod
    def from_function(cls, grid, func):
        x = grid.coords[grid.boundary_index]
        return cls(grid, np.broadcast_to(func(*x.T), (x.shape[0],)))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.boundary_index.size))

    @property
    def coords(self):
        return self.grid.coords[self.grid.boundary_index]


def quadrature_weights(field):
    """Weights matching ``field.values`` in shape (broadcastable)."""
    grid = field.grid
    if isinstance(field, SpaceTimeField):
        return grid.time_weights[:, None] * grid.weights[None, :]
    if isinstance(field, BoundaryField):
        return grid.boundary_weights
    if isinstance(field, SpatialField):
        return grid.weights
    raise TypeError(f"not a field: {type(field).__name__}")


def _check_p(p):
    if not (p == INF or (isinstance(p, (int, float)) and p >= 1)):
        raise ValueError(f"exponent must be in [1, inf], got {p}")


def _weighted_lp(values, weights, p):
    if p == INF:
        return float(np.max(np.abs(values), initial=0.0))
    return float(np.sum(weights * np.abs(values) ** p) ** (1.0 / p))


def lp_norm(field, p, normalized=False):
    """Discrete ``L^p`` norm: trapezoid in space, right-endpoint rule in time.

    ``p = INF`` returns the nodal maximum over all stored values. With
    ``normalized=True`` the measure is rescaled to total mass one.
    """
    _check_p(p)
    w = np.broadcast_to(quadrature_weights(field), field.values.shape)
    if normalized:
        w = w / w.sum()
    return _weighted_lp(field.values, w, p)


def inner(a, b):
    """Weighted discrete ``L^2`` inner product of two fields of the same kind."""
    if type(a) is not type(b) or a.grid != b.grid:
        raise ValueError("inner product needs two fields of the same kind on one grid")
    return float(np.sum(quadrature_weights(a) * a.values * b.values))


def bochner_norm(field, sigma, gamma):
    """``|| t -> ||field(., t)||_{L^gamma} ||_{L^sigma(0, T)}``."""
    _check_p(sigma)
    _check_p(gamma)
    if not isinstance(field, SpaceTimeField):
        raise TypeError("bochner_norm needs a SpaceTimeField")
    grid = field.grid
    per_level = np.array([_weighted_lp(v, grid.weights, gamma) for v in field.values])
    return _weighted_lp(per_level[1:], grid.time_weights[1:], sigma)


def h1_seminorm_sq(values, grid):
    """Discrete Dirichlet energy ``sum_i ||D_i y||^2`` from forward differences.

    ``values`` may carry leading batch axes; the result has those axes.
    """
    v = np.asarray(values).reshape(values.shape[:-1] + grid.nx)
    lead = v.ndim - grid.n
    total = 0.0
    for i, h in enumerate(grid.spacing):
        d = np.diff(v, axis=lead + i) / h
        total = total + np.sum(grid.edge_weights(i) * d**2, axis=tuple(range(lead, v.ndim)))
    return total


def truncate(s, k):
    """Pointwise clamp ``P_k(s) = min(max(-k, s), k)``."""
    if not k > 0:
        raise ValueError(f"truncation level must be positive, got {k}")
    out = np.clip(s, -k, k)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# nonlinearities

CATALOG = ("zero", "cubic", "cubic_minus_linear", "expm1")


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``f(x, s) = w(x) * (base(s) + offset)`` for a closed catalog of bases.

    zero: 0; cubic: c s^3; cubic_minus_linear: c s^3 - lam s; expm1: c (e^s - 1).
    ``lambda_f`` defaults to the exact lower bound of ``w * base'``.
    """

    name: str = "zero"
    coef: float = 1.0
    lam: float = 0.0
    offset: float = 0.0
    weight: np.ndarray | None = None
    lambda_f: float | None = None

    def __post_init__(self):
        if self.name not in CATALOG:
            raise ValueError(f"unknown nonlinearity {self.name!r}; choose from {CATALOG}")
        if self.coef < 0:
            raise ValueError("coef must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.weight is not None:
            w = np.array(self.weight, dtype=float).ravel()
            if not np.all(np.isfinite(w)):
                raise ValueError("weight has non-finite values")
            if np.any(w < 0):
                i = int(np.argmin(w))
                raise ValidationError(f"spatial weight negative at node {i}: {w[i]}", witness=i)
            w.setflags(write=False)
            object.__setattr__(self, "weight", w)
        if self.lambda_f is None:
            natural = self.lam if self.name == "cubic_minus_linear" else 0.0
            if self.weight is not None:
                natural *= float(self.weight.max(initial=0.0))
            object.__setattr__(self, "lambda_f", natural)
        elif self.lambda_f < 0:
            raise ValueError("lambda_f must be nonnegative")

    @property
    def is_zero(self):
        return self.name == "zero" and self.offset == 0.0

    def base(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "zero":
            return np.zeros_like(s)
        if self.name == "cubic":
            return self.coef * s**3
        if self.name == "cubic_minus_linear":
            return self.coef * s**3 - self.lam * s
        return self.coef * np.expm1(s)

    def base_derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "zero":
            return np.zeros_like(s)
        if self.name == "cubic":
            return 3.0 * self.coef * s**2
        if self.name == "cubic_minus_linear":
            return 3.0 * self.coef * s**2 - self.lam
        return self.coef * np.exp(s)

    def _w(self, nodes):
        if self.weight is None:
            return 1.0
        return self.weight if nodes is None else self.weight[nodes]

    def value(self, s, nodes=None):
        """Evaluate at nodal values ``s`` (last axis indexes ``nodes``)."""
        return self._w(nodes) * (self.base(s) + self.offset)

    def derivative(self, s, nodes=None):
        return self._w(nodes) * self.base_derivative(s)

    __call__ = value


@dataclass(frozen=True)
class NonlinearityReport:
    f_at_zero: float
    min_slope: float
    min_sign_pairing: float
    lambda_f: float
    R: float
    samples: int


def check_nonlinearity(f, R, samples, tol=1e-12):
    """Check ``f(0) = 0``, ``f' >= -lambda_f`` and ``f(s) s >= -lambda_f s^2`` on ``[-R, R]``.

    Raises ValidationError naming the violated bound and the witness ``s``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    s = np.union1d(np.linspace(-R, R, samples), [0.0])
    w = np.array([1.0]) if f.weight is None else f.weight
    wmin, wmax = float(w.min(initial=0.0)), float(w.max(initial=0.0))

    f0 = np.abs(w * (f.base(0.0) + f.offset))
    if np.any(f0 != 0.0):
        raise ValidationError(f"f(0) = {float(f0.max())} != 0", witness=0.0)

    def extreme(v):
        # min over nodes of w * v for w in [wmin, wmax]; 0 * inf counts as 0
        pos = np.zeros_like(v) if wmin == 0.0 else wmin * v
        return np.where(v < 0, wmax * v, pos)

    with np.errstate(over="ignore", invalid="ignore"):
        slope = extreme(f.base_derivative(s))
        pairing = extreme(f.base(s) * s) + f.lambda_f * s**2
    i = int(np.argmin(slope))
    if slope[i] < -f.lambda_f - tol:
        raise ValidationError(
            f"f'(s) >= -lambda_f violated: f'({s[i]}) = {slope[i]} < -{f.lambda_f}", witness=float(s[i])
        )
    j = int(np.argmin(pairing))
    if pairing[j] < -tol * max(1.0, s[j] ** 2):
        raise ValidationError(
            f"f(s) s >= -lambda_f s^2 violated at s = {s[j]}", witness=float(s[j])
        )
    return NonlinearityReport(
        f_at_zero=0.0,
        min_slope=float(slope[i]),
        min_sign_pairing=float(pairing[j]),
        lambda_f=f.lambda_f,
        R=float(R),
        samples=int(samples),
    )


# --------------------------------------------------------------------------
# operator coefficients


@dataclass(frozen=True, eq=False)
class EllipticCoefficients:
    """Coefficients of ``Ay = -div(a grad y) + a0 y``.

    ``a`` is a scalar (constant isotropic), an ``(n, n)`` constant matrix, or a
    nodal array for ``a(x) I``. ``a0`` is a scalar or a nodal array.
    """

    a: float | np.ndarray = 1.0
    a0: float | np.ndarray = 0.0

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a0 = np.array(self.a0, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(a0))):
            raise ValueError("coefficients must be finite")
        a.setflags(write=False)
        a0.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a0", a0)
        if np.any(a0 < 0):
            raise ValidationError("a0 must be nonnegative", witness=int(np.argmin(a0)))
        if self.lambda_a <= 0:
            raise ValidationError(f"ellipticity constant must be positive, got {self.lambda_a}")

    @property
    def kind(self):
        if self.a.ndim == 0:
            return "scalar"
        if self.a.ndim == 2 and self.a.shape[0] == self.a.shape[1]:
            return "matrix"
        if self.a.ndim == 1:
            return "nodal"
        raise ValueError(f"unsupported coefficient shape {self.a.shape}")

    @cached_property
    def lambda_a(self):
        """Largest ``L`` with ``xi^T a xi >= L |xi|^2`` at every node."""
        kind = self.kind
        if kind == "scalar":
            return float(self.a)
        if kind == "nodal":
            return float(self.a.min())
        sym = 0.5 * (self.a + self.a.T)
        return float(np.linalg.eigvalsh(sym)[0])

    @property
    def a0_nonzero(self):
        return bool(np.any(self.a0 > 0))

    def a0_nodal(self, grid):
        return np.broadcast_to(self.a0, (grid.num_nodes,)).astype(float)

    def check_grid(self, grid):
        kind = self.kind
        if kind == "matrix" and self.a.shape != (grid.n, grid.n):
            raise ValueError(f"coefficient matrix must be {grid.n}x{grid.n}, got {self.a.shape}")
        if kind == "nodal" and self.a.shape != (grid.num_nodes,):
            raise ValueError("nodal coefficient a needs one value per node")
        if self.a0.ndim and self.a0.shape != (grid.num_nodes,):
            raise ValueError("nodal coefficient a0 needs one value per node")


def corner_gradients(grid):
    """Sparse difference matrices ``G_i`` and weights of the cell-corner gradients.

    Each cell contributes one row per corner; at a corner, ``G_i`` is the
    difference quotient along the cell edge in direction ``i`` that touches
    that corner. Returns ``(G, weights, corner_nodes)``.
    """
    import scipy.sparse as sp

    n = grid.n
    cells = np.indices(tuple(m - 1 for m in grid.nx)).reshape(n, -1)
    ncell = cells.shape[1]
    vol = math.prod(grid.spacing)
    corners = list(itertools.product((0, 1), repeat=n))
    rows_per = ncell
    nrows = rows_per * len(corners)
    mats = []
    for i in range(n):
        rows, cols, vals = [], [], []
        for c, delta in enumerate(corners):
            lo = np.array(delta)
            lo[i] = 0
            hi = lo.copy()
            hi[i] = 1
            node_lo = np.ravel_multi_index(tuple(cells + lo[:, None]), grid.nx)
            node_hi = np.ravel_multi_index(tuple(cells + hi[:, None]), grid.nx)
            r = np.arange(c * rows_per, (c + 1) * rows_per)
            rows += [r, r]
            cols += [node_hi, node_lo]
            h = grid.spacing[i]
            vals += [np.full(rows_per, 1.0 / h), np.full(rows_per, -1.0 / h)]
        mats.append(
            sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(nrows, grid.num_nodes),
            )
        )
    corner_nodes = np.concatenate(
        [np.ravel_multi_index(tuple(cells + np.array(d)[:, None]), grid.nx) for d in corners]
    )
    weights = np.full(nrows, vol / 2**n)
    return mats, weights, corner_nodes

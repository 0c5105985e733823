"""Small problem fixtures shared by the test modules."""

import numpy as np

from semicontrol import (
    EllipticCoefficients,
    EllipticProblem,
    GridSpec,
    Nonlinearity,
    ParabolicProblem,
    SpaceTimeField,
    SpatialField,
)


def sinsin(*x):
    return np.prod([np.sin(np.pi * c) for c in x], axis=0)


def parabolic(f="zero", alpha=0.1, nx=9, nt=8, scale=20.0, y0=None):
    grid = GridSpec((1.0, 1.0), (nx, nx), nt=nt, T=1.0)
    yd = SpaceTimeField.from_function(grid, lambda t, x, y: scale * sinsin(x, y) + 0 * t)
    y0f = SpatialField.zeros(grid) if y0 is None else SpatialField.from_function(grid, y0)
    return ParabolicProblem(grid, EllipticCoefficients(), Nonlinearity(f), y0f, yd, alpha)


def parabolic_1d(f="zero", alpha=1.0, nx=17, nt=16):
    grid = GridSpec((1.0,), (nx,), nt=nt, T=0.5)
    yd = SpaceTimeField.from_function(grid, lambda t, x: 4 * np.sin(np.pi * x) * (1 + t) + 0.3 * x)
    y0 = SpatialField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
    return ParabolicProblem(grid, EllipticCoefficients(), Nonlinearity(f), y0, yd, alpha)


def elliptic(f="zero", alpha=0.01, nx=9, lengths=(1.0, 1.0)):
    grid = GridSpec(lengths, (nx, nx))
    g = SpatialField.from_function(grid, lambda x, y: 1.0 + 0 * x)
    yd = SpatialField.from_function(grid, lambda x, y: 2.0 + 3.0 * x * y)
    return EllipticProblem(grid, EllipticCoefficients(1.0, 1.0), Nonlinearity(f), g, yd, alpha)


def random_control(problem, rng, scale=1.0):
    from semicontrol import BoundaryField

    shape = problem.control_weights.shape
    cls = SpaceTimeField if isinstance(problem, ParabolicProblem) else BoundaryField
    return cls(problem.grid, scale * rng.standard_normal(shape))

"""Observed convergence orders of the semilinear heat solver on manufactured solutions.

Spatial refinement uses y = t sin(pi x) sin(pi y), for which backward
differences in time are exact. Temporal refinement uses
y = sin(pi t) 16 x(1-x) y(1-y), which the 5-point stencil reproduces exactly.
"""

import argparse
import math

import numpy as np

from semicontrol import (
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    ParabolicProblem,
    SpaceTimeField,
    SpatialField,
    lp_norm,
    solve_state,
)

PI = np.pi


def sinsin(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def quad(x, y):
    return 16 * x * (1 - x) * y * (1 - y)


CASES = {
    "space": (
        lambda t, x, y: t * sinsin(x, y),
        lambda t, x, y: sinsin(x, y) + 0 * t,
        lambda t, x, y: -2 * PI**2 * t * sinsin(x, y),
    ),
    "time": (
        lambda t, x, y: np.sin(PI * t) * quad(x, y),
        lambda t, x, y: PI * np.cos(PI * t) * quad(x, y),
        lambda t, x, y: -32 * np.sin(PI * t) * (x * (1 - x) + y * (1 - y)),
    ),
}


def error(nx, nt, case, nonlinearity):
    ys, ys_t, lap = CASES[case]
    f = Nonlinearity(nonlinearity)
    grid = GridSpec((1.0, 1.0), (nx, nx), nt=nt, T=1.0)
    u = SpaceTimeField.from_function(grid, lambda t, x, y: ys_t(t, x, y) - lap(t, x, y) + f.base(ys(t, x, y)))
    y0 = SpatialField.from_function(grid, lambda x, y: ys(0.0, x, y))
    problem = ParabolicProblem(grid, EllipticCoefficients(), f, y0, SpaceTimeField.zeros(grid), 1.0)
    y = solve_state(problem, u)
    exact = SpaceTimeField.from_function(grid, ys)
    return lp_norm(SpaceTimeField(grid, y.values - exact.values), 2)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--levels", type=int, default=3, help="number of refinements")
    parser.add_argument("--nonlinearity", default="cubic")
    args = parser.parse_args(argv)

    print("spatial refinement (nt = 4)")
    print(f"{'nx':>5} {'error':>12} {'ratio':>8}")
    prev = None
    for j in range(args.levels):
        nx = 8 * 2**j + 1
        e = error(nx, 4, "space", args.nonlinearity)
        ratio = f"{prev / e:8.3f}" if prev else " " * 8
        print(f"{nx:5d} {e:12.4e} {ratio}")
        prev = e

    print("\ntemporal refinement (nx = 9)")
    print(f"{'nt':>5} {'error':>12} {'order':>8}")
    prev = None
    for j in range(args.levels):
        nt = 16 * 2**j
        e = error(9, nt, "time", args.nonlinearity)
        order = f"{math.log2(prev / e):8.3f}" if prev else " " * 8
        print(f"{nt:5d} {e:12.4e} {order}")
        prev = e


if __name__ == "__main__":
    main()

"""Truncation homotopy for a distributed parabolic control problem.

Solves the unconstrained problem, then the box-truncated proximal problems
for a schedule of levels M, and prints the distance to the unconstrained
minimizer for each level.
"""

import argparse

import numpy as np

from semicontrol import (
    EllipticCoefficients,
    GridSpec,
    Nonlinearity,
    OptimizeOptions,
    ParabolicProblem,
    SpaceTimeField,
    SpatialField,
    homotopy,
)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nx", type=int, default=9)
    parser.add_argument("--nt", type=int, default=8)
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--scale", type=float, default=20.0, help="amplitude of the target")
    parser.add_argument("--nonlinearity", default="cubic")
    parser.add_argument("--levels", type=int, default=8, help="schedule M = 2^0 .. 2^(levels-1)")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    grid = GridSpec((1.0, 1.0), (args.nx, args.nx), nt=args.nt, T=1.0)
    yd = SpaceTimeField.from_function(
        grid, lambda t, x, y: args.scale * np.sin(np.pi * x) * np.sin(np.pi * y) + 0 * t
    )
    problem = ParabolicProblem(
        grid, EllipticCoefficients(), Nonlinearity(args.nonlinearity), SpatialField.zeros(grid), yd, args.alpha
    )
    opts = OptimizeOptions(grad_tol=1e-9, max_iter=2000, M_schedule=tuple(2.0**k for k in range(args.levels)))
    base, *rest = homotopy(problem, None, opts, threads=args.threads)
    print(f"unconstrained: J = {base.J:.8e}  iters = {base.iterations}  |u|_inf = {np.max(np.abs(base.u.values)):.4f}")
    print(f"{'M':>8} {'distance':>12} {'J':>14} {'iters':>6} {'M_active':>9}")
    for r in rest:
        print(f"{r.M:8g} {r.distance:12.4e} {r.J:14.8e} {r.iterations:6d} {str(r.M_active):>9}")


if __name__ == "__main__":
    main()

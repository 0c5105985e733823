"""Semilinear Dirichlet problem -div(a grad y) + f(y) = u with a distributed source.

Compares the linear and semilinear solutions for a Gaussian source and
prints their extrema; monotone f can only pull the solution towards zero.
"""

import argparse

import numpy as np

from semicontrol import EllipticCoefficients, GridSpec, Nonlinearity, SpatialField
from semicontrol.elliptic import solve_distributed_dirichlet


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--nx", type=int, default=33)
    parser.add_argument("--amplitude", type=float, default=200.0)
    parser.add_argument("--width", type=float, default=20.0, help="Gaussian decay rate")
    args = parser.parse_args(argv)

    grid = GridSpec((1.0, 1.0), (args.nx, args.nx))
    u = SpatialField.from_function(
        grid, lambda x, y: args.amplitude * np.exp(-args.width * ((x - 0.5) ** 2 + (y - 0.5) ** 2))
    )
    coeffs = EllipticCoefficients()
    for name in ("zero", "cubic", "expm1"):
        y = solve_distributed_dirichlet(grid, coeffs, Nonlinearity(name), u)
        print(f"f = {name:6s}  max y = {np.max(y.values):.6f}  min y = {np.min(y.values):.6f}")


if __name__ == "__main__":
    main()

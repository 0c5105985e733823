"""Growth of the dyadic bump series: center values and squared-norm partial sums.

The partial sums y_K = sum_{k<=K} k^-1 phi(2^k x, 4^k (t-1)) grow like the
harmonic numbers at the center, while the L^2 norms of y_t and D^2 y stay
bounded for n = 2, 3.
"""

import argparse

import numpy as np

from semicontrol import analysis
from semicontrol.cli import growth_table


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=3, choices=(2, 3))
    parser.add_argument("--K", type=int, default=8)
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--control-norm", action="store_true", help="also integrate ||u|| (slower)")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'m':>3} {'min y':>10} {'H_m':>10}")
    for m, low, h in growth_table(args.n, args.K, args.samples, rng):
        print(f"{m:3d} {low:10.6f} {h:10.6f}")

    print(f"\n{'K':>3} {'S_dt':>12} {'S_dxx':>12} {'S_heat':>12}" + (f" {'||u||':>12}" if args.control_norm else ""))
    for K in range(1, 2 * args.K + 1):
        row = [analysis.counterexample_norm_series(K, args.n, w) for w in ("dt", "dxx", "heat")]
        line = f"{K:3d} " + " ".join(f"{v:12.6e}" for v in row)
        if args.control_norm:
            line += f" {analysis.counterexample_control_norm(K, args.n):12.6e}"
        print(line)


if __name__ == "__main__":
    main()

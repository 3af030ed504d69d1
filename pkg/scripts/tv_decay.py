"""Print the TV(X, X^(n)) table for a standard normal sample."""

import argparse

import numpy as np

from knockoffs.discretization import tv_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-draws", type=int, default=100_000)
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--bins", type=int, default=20)
    ap.add_argument("--levels", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.n_draws, args.p))
    print(f"{'n':>5}  {'tv':>8}  {'se':>8}  {'max|x-xk|':>10}")
    for row in tv_decay(x, args.levels, args.bins, seed=rng):
        print(f"{row.n:>5}  {row.tv:8.5f}  {row.se:8.5f}  {row.max_cell_gap:10.2e}")


if __name__ == "__main__":
    main()

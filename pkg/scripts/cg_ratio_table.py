"""Two-term and k-term CG error ratios for a seeded random SPD matrix.

    python3 scripts/cg_ratio_table.py --n 25 --cond 1000 --seed 7 > ratios.csv
"""
import argparse
import sys

import numpy as np

from krylovlab.convergence import cg_ratio_table, write_ratio_csv
from krylovlab.linalg import random_spd


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=25)
    ap.add_argument("--cond", type=float, default=1e3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    a = random_spd(args.n, args.cond, args.seed)
    b = np.random.default_rng([args.seed, 1]).standard_normal(args.n)
    table = cg_ratio_table(a, b)
    sys.stdout.write(write_ratio_csv(table))
    print(
        f"two-term bound ok: {table.two_term_ok}, k-term bound ok: {table.k_term_ok}, "
        f"ratio2 > ratioK somewhere: {table.overshoot}",
        file=sys.stderr,
    )


if __name__ == "__main__":
    main()

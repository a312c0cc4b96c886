"""Worst per-step iterate deviation from CG for each formulation over a grid of sizes and seeds.

    python3 scripts/equivalence_sweep.py --cond 1000 --seeds 5
"""
import argparse
import itertools
import sys

import numpy as np

from krylovlab.cg import cg_solve
from krylovlab.equivalence import bfgs_quadratic_solve, max_iterate_deviation, subspace2d_solve
from krylovlab.lanczos import lanczos_cholesky_solve
from krylovlab.linalg import random_spd
from krylovlab.report import write_csv

SOLVERS = {
    "subspace2d": lambda a, b: subspace2d_solve(a, b).xs,
    "bfgs": lambda a, b: bfgs_quadratic_solve(a, b).xs,
    "lanczos": lambda a, b: lanczos_cholesky_solve(a, b).xs,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", default="2,5,10,20")
    ap.add_argument("--cond", type=float, default=1e3)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    rows = []
    for n, seed in itertools.product([int(t) for t in args.ns.split(",")], range(args.seeds)):
        a = random_spd(n, args.cond, seed)
        b = np.random.default_rng([seed, 1]).standard_normal(n)
        ref = cg_solve(a, b).xs
        rows.append([n, seed] + [max_iterate_deviation(ref, solve(a, b)) for solve in SOLVERS.values()])
    write_csv(["n", "seed"] + [f"dev_cg_{name}" for name in SOLVERS], rows, sys.stdout)


if __name__ == "__main__":
    main()

"""L2 error under dyadic mesh refinement, plus the PCG versus operator-CG trace comparison.

    python3 scripts/fem_refinement.py --n 7 --levels 5 --c 1
"""
import argparse
import sys

import numpy as np

from krylovlab.fem import (
    assemble_1d,
    operator_cg_solve,
    pcg_solve,
    refinement_study,
    riesz_apply,
    trace_deviation,
    write_refinement_csv,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=7)
    ap.add_argument("--levels", type=int, default=5)
    ap.add_argument("--c", type=float, default=0.0)
    ap.add_argument("--load", default="sin-benchmark", choices=("const1", "sin-benchmark"))
    args = ap.parse_args()
    rows = refinement_study(args.n, args.c, args.load, args.levels, parallel=True)
    sys.stdout.write(write_refinement_csv(rows))
    for r in rows:
        fem = assemble_1d(r.n, args.c)
        F = np.random.default_rng(r.n).standard_normal(r.n)
        dev = trace_deviation(pcg_solve(fem.a, F, lambda v: riesz_apply(fem, v)), operator_cg_solve(fem, F))
        worst = max(v for k, v in dev.items() if k != "steps")
        print(f"n={r.n}: PCG vs operator CG max deviation {worst:.2e}", file=sys.stderr)


if __name__ == "__main__":
    main()

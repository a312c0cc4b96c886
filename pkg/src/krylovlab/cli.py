"""Command line entry point: ``krylovlab {equivalence,lanczos,polys,rates,fem} ...``.

Exit status: 0 when every check passes, 1 on a threshold breach or an
iteration breakdown, 2 on usage or input errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .errors import BreakdownError, KrylovError
from .experiments import RUNNERS, ExperimentConfig
from .report import write_csv

EXIT_OK, EXIT_BREACH, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, matrix: bool = True) -> None:
    if matrix:
        src = p.add_argument_group("matrix source (exactly one)")
        src.add_argument("--spectrum", help="comma-separated eigenvalues, rotated by a seeded orthogonal basis")
        src.add_argument("--matrix-file", help="order n, then n lower-triangle rows")
        src.add_argument("--n", type=int, help="order of a seeded random SPD matrix")
        p.add_argument("--cond", type=float, default=100.0, help="condition number for --n (default 100)")
        p.add_argument("--seeds", type=int, default=1, help="consecutive seeds to run from --seed (random source only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--parallel", action="store_true", help="run independent seeds or mesh levels concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="krylovlab", description="CG equivalence and convergence experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(sub.add_parser("equivalence", help="CG vs plane search, BFGS, conjugate directions and Lanczos"))
    _common(sub.add_parser("lanczos", help="CG/Lanczos correspondence, beta product and determinant"))
    p = sub.add_parser("polys", help="residual and conjugate polynomial checks")
    _common(p)
    p.add_argument("--dump", help="also write the polynomials (degree then ascending coefficients) here")
    p = sub.add_parser("rates", help="two-term and k-term error ratios with bounds")
    _common(p)
    p.add_argument("--method", choices=("cg", "sd"), default="cg")
    p.add_argument("--rhs", choices=("auto", "random", "worst"), default="auto",
                   help="right-hand side; auto is (phi_1 + phi_n)/sqrt(2) for --spectrum/--matrix-file, random for --n")
    p = sub.add_parser("fem", help="1D FEM with PCG and the operator-level CG")
    _common(p, matrix=False)
    p.add_argument("--n", type=int, default=15, help="interior nodes (default 15)")
    p.add_argument("--c", type=float, default=0.0, help="reaction coefficient c >= 0")
    p.add_argument("--load", choices=("const1", "sin-benchmark"), default="sin-benchmark")
    p.add_argument("--refine", type=int, help="number of dyadic mesh levels for an L2 error study")
    p.add_argument("--compare-operator", action="store_true", help="compare PCG(R) with operator-level CG")
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    fields = {k: v for k, v in vars(args).items() if v is not None}
    return ExperimentConfig(**fields)


def _setup_logging() -> None:
    level = os.environ.get("KRYLOV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config(args)
        if cfg.command == "fem" and cfg.n < 1:
            raise KrylovError("--n must be at least 1")
        report = RUNNERS[cfg.command](cfg)
    except BreakdownError as exc:
        print(f"krylovlab: breakdown: {exc}", file=sys.stderr)
        return EXIT_BREACH
    except (KrylovError, ValueError) as exc:
        print(f"krylovlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if cfg.out is None:
            sys.stdout.write(write_csv(report.header, report.rows))
        else:
            write_csv(report.header, report.rows, cfg.out)
    except OSError as exc:
        print(f"krylovlab: cannot write {cfg.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (limit {c.threshold:.1e})", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())

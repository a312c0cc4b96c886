"""Piecewise-linear FEM for -u'' + c u = f on (0, 1) with u(0) = u(1) = 0, solved
by PCG with the discrete Riesz map and by CG written at operator level."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .cg import RESIDUAL_REFRESH, _vec
from .errors import BreakdownError, InvalidInputError
from .linalg import LdlFactors, Tridiag, ldlt_factor, ldlt_solve, matvec
from .report import Target, write_csv

# 3-point Gauss rule mapped to [0, 1]
_GX, _GW = np.polynomial.legendre.leggauss(3)
GAUSS_X = 0.5 * (_GX + 1.0)
GAUSS_W = 0.5 * _GW


@dataclass(frozen=True, eq=False)
class FemSystem:
    n: int
    h: float
    c: float
    stiffness: Tridiag
    mass: Tridiag
    a: Tridiag
    riesz_factors: LdlFactors  # LDL^T of K + M

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return self.h * np.arange(1, self.n + 1)


def assemble_1d(n_interior: int, c: float = 0.0) -> FemSystem:
    """Element-by-element assembly on the uniform mesh with ``n_interior`` interior nodes."""
    if int(n_interior) != n_interior or n_interior < 1:
        raise InvalidInputError(f"n_interior must be a positive integer, got {n_interior}")
    if not c >= 0:
        raise InvalidInputError(f"reaction coefficient must be nonnegative, got {c}")
    n = int(n_interior)
    h = 1.0 / (n + 1)
    # local matrices on one element; hats are (1 - s, s) on the reference element
    shapes = np.vstack([1.0 - GAUSS_X, GAUSS_X])
    local_m = h * (shapes * GAUSS_W) @ shapes.T
    local_k = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h

    kd, kf = np.zeros(n), np.zeros(max(n - 1, 0))
    md, mf = np.zeros(n), np.zeros(max(n - 1, 0))
    for e in range(n + 1):
        # element e joins global nodes e and e + 1; interior index is node - 1
        left, right = e - 1, e
        for diag, off, loc in ((kd, kf, local_k), (md, mf, local_m)):
            if left >= 0:
                diag[left] += loc[0, 0]
            if right < n:
                diag[right] += loc[1, 1]
            if left >= 0 and right < n:
                off[left] += loc[0, 1]
    k_mat, m_mat = Tridiag(kd, kf), Tridiag(md, mf)
    a_mat = Tridiag(kd + c * md, kf + c * mf)
    riesz = ldlt_factor(Tridiag(kd + md, kf + mf))
    return FemSystem(n, h, float(c), k_mat, m_mat, a_mat, riesz)


def load_vector(f: Callable, sys: FemSystem) -> np.ndarray:
    """F_i = integral of f phi_i, by 3-point Gauss quadrature on each element."""
    F = np.zeros(sys.n)
    for e in range(sys.n + 1):
        xq = (e + GAUSS_X) * sys.h
        fq = np.asarray(f(xq), dtype=float) * np.ones_like(xq) * GAUSS_W * sys.h
        if e - 1 >= 0:
            F[e - 1] += fq @ (1.0 - GAUSS_X)
        if e < sys.n:
            F[e] += fq @ GAUSS_X
    return F


def riesz_apply(sys: FemSystem, r) -> np.ndarray:
    """(K + M)^{-1} r."""
    return ldlt_solve(sys.riesz_factors, _vec(r, sys.n, "r"))


@dataclass(frozen=True, eq=False)
class PcgStep:
    """``beta`` is beta_{k-1} (the coefficient that built ``p``); ``z`` is the preconditioned residual."""

    k: int
    u: np.ndarray
    r: np.ndarray
    z: np.ndarray
    p: Optional[np.ndarray]
    alpha: Optional[float]
    beta: Optional[float]
    r_norm: float


@dataclass(frozen=True, eq=False)
class PcgTrace:
    steps: tuple
    converged: bool

    @property
    def u(self) -> np.ndarray:
        return self.steps[-1].u

    @property
    def iterations(self) -> int:
        return sum(1 for s in self.steps if s.p is not None)

    @property
    def us(self) -> np.ndarray:
        return np.array([s.u for s in self.steps])

    @property
    def rs(self) -> np.ndarray:
        return np.array([s.r for s in self.steps])

    @property
    def zs(self) -> np.ndarray:
        return np.array([s.z for s in self.steps])

    @property
    def ps(self) -> np.ndarray:
        return np.array([s.p for s in self.steps if s.p is not None])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.steps if s.alpha is not None])

    @property
    def betas(self) -> np.ndarray:
        return np.array([s.beta for s in self.steps if s.p is not None and s.beta is not None])


def _identity(r: np.ndarray) -> np.ndarray:
    return r


def pcg_solve(
    a,
    F,
    precond: Optional[Callable] = None,
    u0=None,
    rel_tol: float = 1e-10,
    max_iter: Optional[int] = None,
    beta_form: str = "conjugacy",
) -> PcgTrace:
    """Preconditioned CG with ``z = precond(r)`` and alpha = r^T z / p^T A p.

    ``beta_form="conjugacy"`` uses beta = -p^T A z_new / p^T A p.
    ``beta_form="ratio"`` uses r_new^T z_new / r^T z; with ``precond=None`` it
    performs exactly the floating-point operations of :func:`krylovlab.cg.cg_solve`.
    """
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    if beta_form not in ("conjugacy", "ratio"):
        raise InvalidInputError(f"unknown beta_form {beta_form!r}")
    n = a.shape[0]
    F = _vec(F, n, "F")
    u = np.zeros(n) if u0 is None else _vec(u0, n, "u0")
    apply = _identity if precond is None else precond
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(F)

    r = F - matvec(a, u)
    z = apply(r)
    rr = float(r @ r)
    rz = float(r @ z)
    p = ap = pap = None
    beta = None
    steps = []
    converged = False
    for k in itertools.count():
        r_norm = float(np.sqrt(rr))
        if k > 0:
            if beta_form == "ratio":
                rz_old, rz = rz, float(r @ z)
                beta = rz / rz_old
            else:
                rz = float(r @ z)
                beta = -float(ap @ z) / pap
        if r_norm <= threshold or not np.any(r):
            steps.append(PcgStep(k, u, r, z, None, None, beta, r_norm))
            converged = True
            break
        if k >= max_iter:
            steps.append(PcgStep(k, u, r, z, None, None, beta, r_norm))
            break
        p = z.copy() if k == 0 else z + beta * p
        ap = matvec(a, p)
        pap = float(p @ ap)
        if not pap > 0:
            raise BreakdownError(f"p^T A p = {pap} at step {k}")
        alpha = rz / pap
        steps.append(PcgStep(k, u, r, z, p, alpha, beta, r_norm))
        u = u + alpha * p
        if (k + 1) % RESIDUAL_REFRESH == 0:
            r = F - matvec(a, u)
        else:
            r = r - alpha * ap
        z = apply(r)
        rr = float(r @ r)
    return PcgTrace(tuple(steps), converged)


def operator_cg_solve(
    sys: FemSystem,
    F,
    u0=None,
    rel_tol: float = 1e-10,
    max_iter: Optional[int] = None,
    riesz: Optional[Callable] = None,
    alpha_form: str = "dual",
) -> PcgTrace:
    """CG in function space carried out on coefficient representations.

    Residuals are dual representations (r_i = <r_h, phi_i>), directions are
    primal ones, so the pairing <r_h, p_h> is r^T p and the Riesz map carries
    r to the primal space. ``riesz`` overrides (K + M)^{-1}.
    ``alpha_form="table"`` uses (R r)^T p instead of r^T p, for the discrepancy report.
    """
    if alpha_form not in ("dual", "table"):
        raise InvalidInputError(f"unknown alpha_form {alpha_form!r}")
    n = sys.n
    F = _vec(F, n, "F")
    u = np.zeros(n) if u0 is None else _vec(u0, n, "u0")
    to_primal = (lambda r: riesz_apply(sys, r)) if riesz is None else riesz
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(F)
    a = sys.a

    r = F - matvec(a, u)
    rep = to_primal(r)
    p = ap = pap = None
    beta = None
    steps = []
    converged = False
    for k in itertools.count():
        r_norm = float(np.linalg.norm(r))
        if k > 0:
            beta = -float(ap @ rep) / pap
        if r_norm <= threshold or not np.any(r):
            steps.append(PcgStep(k, u, r, rep, None, None, beta, r_norm))
            converged = True
            break
        if k >= max_iter:
            steps.append(PcgStep(k, u, r, rep, None, None, beta, r_norm))
            break
        p = rep.copy() if k == 0 else rep + beta * p
        ap = matvec(a, p)
        pap = float(p @ ap)
        if not pap > 0:
            raise BreakdownError(f"<A p, p> = {pap} at step {k}")
        pairing = float(r @ p) if alpha_form == "dual" else float(rep @ p)
        alpha = pairing / pap
        steps.append(PcgStep(k, u, r, rep, p, alpha, beta, r_norm))
        u = u + alpha * p
        r = r - alpha * ap
        rep = to_primal(r)
    return PcgTrace(tuple(steps), converged)


def trace_deviation(ta: PcgTrace, tb: PcgTrace) -> dict:
    """Max deviation per field over shared steps, relative to that field's largest magnitude.

    Every field, vector or scalar, is scaled by the largest value it reaches
    in either trace: late residuals sit at the rounding floor of r_0, so a
    per-step relative measure would only report eps ||r_0|| / ||r_k||.
    ``steps`` is 1.0 when the traces have different lengths.
    """
    m = min(len(ta.steps), len(tb.steps))
    out = {"steps": 0.0 if len(ta.steps) == len(tb.steps) else 1.0}
    for name in ("u", "r", "z", "p", "alpha", "beta"):
        pairs = []
        for sa, sb in zip(ta.steps[:m], tb.steps[:m]):
            x, y = getattr(sa, name), getattr(sb, name)
            if x is None or y is None or (name == "beta" and (sa.p is None or sb.p is None)):
                continue
            pairs.append((np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
        scale = max((max(np.linalg.norm(x), np.linalg.norm(y)) for x, y in pairs), default=0.0)
        out[name] = 0.0 if scale == 0 else max(float(np.linalg.norm(x - y)) / scale for x, y in pairs)
    return out


def trace_deviation_per_step(ta: PcgTrace, tb: PcgTrace, name: str) -> np.ndarray:
    """|x_k - y_k| / max(|x_k|, |y_k|) for one field at every shared step that has it."""
    out = []
    for sa, sb in zip(ta.steps, tb.steps):
        x, y = getattr(sa, name), getattr(sb, name)
        if x is None or y is None:
            continue
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        scale = max(np.linalg.norm(x), np.linalg.norm(y))
        out.append(0.0 if scale == 0 else float(np.linalg.norm(x - y)) / scale)
    return np.array(out)


def preconditioned_orthogonality(trace: PcgTrace, pairwise: bool = False) -> float:
    """max_{i != j} |r_i^T z_j| over non-terminal steps, relative to max_k r_k^T z_k.

    With ``pairwise=True`` each entry is scaled by sqrt(r_i^T z_i r_j^T z_j)
    instead, which exposes the usual floating-point loss of orthogonality
    between r_0 and residuals near the stopping tolerance.
    """
    steps = [s for s in trace.steps if s.p is not None]
    if len(steps) < 2:
        return 0.0
    r = np.array([s.r for s in steps])
    z = np.array([s.z for s in steps])
    g = r @ z.T
    d = np.abs(np.diag(g))
    g = np.abs(g) / (np.sqrt(np.outer(d, d)) if pairwise else d.max())
    np.fill_diagonal(g, 0.0)
    return float(np.max(g))


@dataclass(frozen=True)
class AlphaDiscrepancy:
    """How far (R r)^T p departs from the dual pairing r^T p along a PCG run."""

    max_rel_gap: float
    iterate_deviation: float
    steps_dual: int
    steps_table: int


def table_alpha_discrepancy(sys: FemSystem, F, rel_tol: float = 1e-10) -> AlphaDiscrepancy:
    dual = operator_cg_solve(sys, F, rel_tol=rel_tol)
    gap = 0.0
    for s in dual.steps:
        if s.p is None:
            continue
        ref = float(s.r @ s.p)
        gap = max(gap, abs(float(s.z @ s.p) - ref) / abs(ref))
    table = operator_cg_solve(sys, F, rel_tol=rel_tol, alpha_form="table", max_iter=10 * sys.n)
    m = min(len(dual.steps), len(table.steps))
    scale = max(np.linalg.norm(s.u) for s in dual.steps)
    dev = max(float(np.linalg.norm(dual.steps[k].u - table.steps[k].u)) / scale for k in range(m))
    return AlphaDiscrepancy(gap, dev, dual.iterations, table.iterations)


def l2_error(sys: FemSystem, U, u_exact: Callable) -> float:
    """L2 norm of u_h - u_exact, with u_h the piecewise-linear interpolant of U (zero at both ends)."""
    U = _vec(U, sys.n, "U")
    vals = np.concatenate(([0.0], U, [0.0]))
    total = 0.0
    for e in range(sys.n + 1):
        xq = (e + GAUSS_X) * sys.h
        uh = vals[e] * (1.0 - GAUSS_X) + vals[e + 1] * GAUSS_X
        diff = uh - np.asarray(u_exact(xq), dtype=float)
        total += sys.h * float(GAUSS_W @ (diff * diff))
    return float(np.sqrt(total))


@dataclass(frozen=True)
class Load:
    name: str
    f: Callable
    exact: Callable  # exact(c) -> u(x)


def _const1_exact(c: float) -> Callable:
    if c == 0:
        return lambda x: 0.5 * x * (1.0 - x)
    s = np.sqrt(c)
    return lambda x: (1.0 - np.cosh(s * (x - 0.5)) / np.cosh(0.5 * s)) / c


def _sin_exact(c: float) -> Callable:
    return lambda x: np.pi**2 / (np.pi**2 + c) * np.sin(np.pi * x)


LOADS = {
    "const1": Load("const1", lambda x: np.ones_like(x), _const1_exact),
    "sin-benchmark": Load("sin-benchmark", lambda x: np.pi**2 * np.sin(np.pi * x), _sin_exact),
}


def get_load(name: str) -> Load:
    try:
        return LOADS[name]
    except KeyError:
        raise InvalidInputError(f"unknown load {name!r}; choose from {sorted(LOADS)}") from None


def fem_solve(n: int, c: float, load: str, rel_tol: float = 1e-12) -> tuple:
    """Assemble and solve with PCG(R); returns (system, PCG trace)."""
    sys = assemble_1d(n, c)
    F = load_vector(get_load(load).f, sys)
    trace = pcg_solve(sys.a, F, lambda r: riesz_apply(sys, r), rel_tol=rel_tol)
    return sys, trace


def write_solution_csv(sys: FemSystem, U, u_exact: Callable, target: Target = None) -> str:
    """Columns x, u_h, u_exact, error over all nodes including the boundary."""
    x = sys.h * np.arange(sys.n + 2)
    uh = np.concatenate(([0.0], _vec(U, sys.n, "U"), [0.0]))
    ue = np.asarray(u_exact(x), dtype=float)
    rows = [(xi, a, b, a - b) for xi, a, b in zip(x, uh, ue)]
    return write_csv(["x", "u_h", "u_exact", "error"], rows, target)


@dataclass(frozen=True)
class RefinementRow:
    n: int
    h: float
    l2_error: float
    ratio: Optional[float]
    iterations: int


def _level(args) -> tuple:
    n, c, load, rel_tol = args
    sys, trace = fem_solve(n, c, load, rel_tol)
    return n, sys.h, l2_error(sys, trace.u, get_load(load).exact(c)), trace.iterations


def refinement_study(n0: int, c: float, load: str, levels: int, rel_tol: float = 1e-12, parallel: bool = False) -> tuple:
    """Dyadic refinement n -> 2(n + 1) - 1; ``ratio`` is the previous error over this one."""
    if levels < 1:
        raise InvalidInputError("levels must be at least 1")
    get_load(load)
    ns = [n0]
    for _ in range(levels - 1):
        ns.append(2 * (ns[-1] + 1) - 1)
    jobs = [(n, c, load, rel_tol) for n in ns]
    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(_level, jobs))
    else:
        results = [_level(j) for j in jobs]
    rows = []
    for i, (n, h, err, its) in enumerate(results):
        ratio = results[i - 1][2] / err if i > 0 else None
        rows.append(RefinementRow(n, h, err, ratio, its))
    return tuple(rows)


def write_refinement_csv(rows, target: Target = None) -> str:
    return write_csv(
        ["n", "h", "l2_error", "ratio", "iterations"],
        [(r.n, r.h, r.l2_error, r.ratio, r.iterations) for r in rows],
        target,
    )

"""Reference conjugate gradient solver with a complete per-iteration trace."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BreakdownError, DegenerateDirectionError, DimensionMismatchError, IncompleteBasisError, InvalidInputError
from .linalg import MatrixLike, SymMatrix, a_norm, as_array, matvec
from .report import Target, write_csv

# the recursively updated residual is replaced by b - A x this often
RESIDUAL_REFRESH = 50


@dataclass(frozen=True, eq=False)
class CgStep:
    """State at iteration ``k``.

    ``beta`` is beta_{k-1} (None at k = 0). ``p`` and ``alpha`` are None on the
    terminal step, where no further direction is taken.
    """

    k: int
    x: np.ndarray
    r: np.ndarray
    p: Optional[np.ndarray]
    alpha: Optional[float]
    beta: Optional[float]
    r_norm: float


@dataclass(frozen=True, eq=False)
class CgTrace:
    steps: tuple
    converged: bool
    n: int
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)

    @property
    def x(self) -> np.ndarray:
        return self.steps[-1].x

    @property
    def iterations(self) -> int:
        """Number of directions actually marched along."""
        return sum(1 for s in self.steps if s.p is not None)

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    @property
    def rs(self) -> np.ndarray:
        return np.array([s.r for s in self.steps])

    @property
    def ps(self) -> np.ndarray:
        return np.array([s.p for s in self.steps if s.p is not None])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.steps if s.alpha is not None])

    @property
    def betas(self) -> np.ndarray:
        """beta_0, beta_1, ... for every step that has one."""
        return np.array([s.beta for s in self.steps if s.beta is not None])

    @property
    def r_norms(self) -> np.ndarray:
        return np.array([s.r_norm for s in self.steps])


def _vec(v, n: int, name: str) -> np.ndarray:
    v = np.array(v, dtype=float).ravel()
    if v.shape != (n,):
        raise DimensionMismatchError(f"{name} has length {v.size}, expected {n}")
    return v


def objective(a: MatrixLike, b, x) -> float:
    """J(x) = x^T A x / 2 - b^T x."""
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ matvec(a, x) - np.dot(b, x))


@dataclass(frozen=True)
class LineSearch:
    alpha: float
    x_next: np.ndarray
    j_drop: float


def line_search_step(a: MatrixLike, x, d, b) -> LineSearch:
    """Exact minimization of J along ``d`` from ``x``."""
    n = a.shape[0]
    x, d, b = _vec(x, n, "x"), _vec(d, n, "d"), _vec(b, n, "b")
    if not np.any(d):
        raise DegenerateDirectionError("search direction is zero")
    r = b - matvec(a, x)
    rd = float(r @ d)
    dad = float(d @ matvec(a, d))
    alpha = rd / dad
    return LineSearch(alpha, x + alpha * d, rd * rd / (2.0 * dad))


def cg_solve(a: MatrixLike, b, x0=None, rel_tol: float = 1e-10, max_iter: Optional[int] = None) -> CgTrace:
    """Conjugate gradients; stops when ||r_k|| <= rel_tol ||b||, r_k == 0, or after max_iter steps."""
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(b)

    r = b - matvec(a, x)
    rr = float(r @ r)
    rr_old = None
    p = None
    steps = []
    converged = False
    for k in itertools.count():
        r_norm = float(np.sqrt(rr))
        beta = None if k == 0 else rr / rr_old
        if r_norm <= threshold or not np.any(r):
            steps.append(CgStep(k, x, r, None, None, beta, r_norm))
            converged = True
            break
        if k >= max_iter:
            steps.append(CgStep(k, x, r, None, None, beta, r_norm))
            break
        p = r.copy() if k == 0 else r + beta * p
        ap = matvec(a, p)
        pap = float(p @ ap)
        if not pap > 0:
            raise BreakdownError(f"p^T A p = {pap} at step {k}; matrix is not positive definite")
        alpha = rr / pap
        steps.append(CgStep(k, x, r, p, alpha, beta, r_norm))
        x = x + alpha * p
        if (k + 1) % RESIDUAL_REFRESH == 0:
            r = b - matvec(a, x)
        else:
            r = r - alpha * ap
        rr_old, rr = rr, float(r @ r)
    return CgTrace(tuple(steps), converged, n)


def _max_pairwise_rel(values: Sequence[float]) -> float:
    worst = 0.0
    for u, v in itertools.combinations(values, 2):
        scale = max(abs(u), abs(v))
        if scale > 0:
            worst = max(worst, abs(u - v) / scale)
    return worst


def coefficient_diagnostics(trace: CgTrace, a: MatrixLike, b=None) -> dict:
    """Worst pairwise relative spread among the equivalent alpha and beta formulas.

    ``beta`` compares the four beta_{k-1} forms, ``alpha`` compares
    r^T r / p^T A p with p^T r / p^T A p, and ``alpha_r0`` compares
    p^T r_0 / p^T A p with the canonical form. The r_0 form relies on global
    orthogonality, so its floating-point error grows like ||r_0|| / ||r_k||.
    """
    if not trace.steps:
        raise InvalidInputError("empty trace")
    steps = [s for s in trace.steps if s.p is not None]
    r0 = trace.steps[0].r
    beta_dev = alpha_dev = alpha_r0_dev = 0.0
    for k, s in enumerate(steps):
        ap = matvec(a, s.p)
        pap = float(s.p @ ap)
        canonical = s.r @ s.r / pap
        alpha_dev = max(alpha_dev, _max_pairwise_rel([canonical, s.p @ s.r / pap]))
        alpha_r0_dev = max(alpha_r0_dev, _max_pairwise_rel([canonical, s.p @ r0 / pap]))
        if k == 0:
            continue
        prev = steps[k - 1]
        ap_prev = matvec(a, prev.p)
        dr = prev.r - s.r
        forms = [
            -(ap_prev @ s.r) / (ap_prev @ prev.p),
            -(ap_prev @ s.r) / (ap_prev @ prev.r),
            -(dr @ s.r) / (dr @ prev.r),
            (s.r @ s.r) / (prev.r @ prev.r),
        ]
        beta_dev = max(beta_dev, _max_pairwise_rel(forms))
    return {"beta": float(beta_dev), "alpha": float(alpha_dev), "alpha_r0": float(alpha_r0_dev)}


def conjugacy_defect(a: MatrixLike, dirs) -> float:
    """max_{i != j} |d_i^T A d_j| / sqrt(d_i^T A d_i d_j^T A d_j)."""
    d = np.atleast_2d(np.asarray(dirs, dtype=float))
    if d.shape[0] < 2:
        return 0.0
    g = d @ as_array(a) @ d.T
    s = np.sqrt(np.diag(g))
    g = np.abs(g) / np.outer(s, s)
    np.fill_diagonal(g, 0.0)
    return float(np.max(g))


def orthogonality_defect(vectors) -> float:
    """max_{i != j} |v_i^T v_j| / (||v_i|| ||v_j||), ignoring zero vectors."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(v, axis=1)
    v = v[norms > 0] / norms[norms > 0, None]
    if v.shape[0] < 2:
        return 0.0
    g = np.abs(v @ v.T)
    np.fill_diagonal(g, 0.0)
    return float(np.max(g))


def explicit_inverse(a: MatrixLike, conjugate_dirs, tol: float = 1e-8) -> SymMatrix:
    """sum_i p_i p_i^T / (p_i^T A p_i) over a complete set of A-conjugate directions."""
    n = a.shape[0]
    dirs = np.atleast_2d(np.asarray(conjugate_dirs, dtype=float))
    if dirs.shape != (n, n):
        raise IncompleteBasisError(f"need {n} conjugate directions of length {n}, got array of shape {dirs.shape}")
    defect = conjugacy_defect(a, dirs)
    if defect > tol:
        raise IncompleteBasisError(f"directions are not A-conjugate (defect {defect:.3e})")
    curv = np.einsum("ij,ij->i", dirs @ as_array(a), dirs)
    m = (dirs.T / curv) @ dirs
    return SymMatrix.from_dense(0.5 * (m + m.T))


def write_trace_csv(trace: CgTrace, target: Target = None, a: Optional[MatrixLike] = None, x_star=None) -> str:
    """Columns k, rNorm, alpha, beta, aNormError (the last only when ``a`` and ``x_star`` are given)."""
    rows = []
    for s in trace.steps:
        err = a_norm(a, s.x - x_star) if a is not None and x_star is not None else None
        rows.append((s.k, s.r_norm, s.alpha, s.beta, err))
    return write_csv(["k", "rNorm", "alpha", "beta", "aNormError"], rows, target)

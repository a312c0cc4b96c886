"""Optimization-side formulations that reproduce the CG iterates.

Each solver here is written from its own defining principle (plane
minimization, quasi-Newton update, marching along given conjugate directions)
and never calls :func:`krylovlab.cg.cg_solve`, so agreement with CG is a real
cross-check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cg import CgStep, CgTrace, _vec, conjugacy_defect
from .errors import CurvatureError, InvalidInputError, PreconditionError
from .linalg import MatrixLike, SymMatrix, matvec
from .report import Target, write_csv


@dataclass(frozen=True, eq=False)
class Subspace2dStep:
    x_next: np.ndarray
    p_tilde: np.ndarray
    xi: float
    eta: float


def _plane_step(a: MatrixLike, r: np.ndarray, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> Subspace2dStep:
    """Minimize J over x + span{u, v} via the 2x2 normal equations (u, v independent)."""
    au, av = matvec(a, u), matvec(a, v)
    uau, uav, vav = float(u @ au), float(u @ av), float(v @ av)
    ru, rv = float(r @ u), float(r @ v)
    if ru == 0.0 and rv == 0.0:
        return Subspace2dStep(x.copy(), u.copy(), 0.0, 0.0)
    # eliminate eta from the second normal equation
    xi = (ru - uav * rv / vav) / (uau - uav * uav / vav)
    eta = (rv - uav * xi) / vav
    p_tilde = u + (eta / xi) * v if xi != 0.0 else v.copy()
    return Subspace2dStep(x + xi * u + eta * v, p_tilde, xi, eta)


def subspace2d_step_general(a: MatrixLike, b, x, u, v, orth_tol: float = 1e-10) -> Subspace2dStep:
    """Exact minimizer of J over the plane ``x + span{u, v}`` for orthogonal ``u``, ``v``.

    With ``u`` the current residual and ``v`` orthogonal to it, the result
    satisfies eta/xi = -u^T A v / v^T A v and xi = u^T u / p~^T A p~, the new
    residual is orthogonal to both ``u`` and ``v``, and p~ is A-conjugate to ``v``.
    If neither ``u`` nor ``v`` sees the residual the point is stationary and
    is returned unchanged with xi = eta = 0.
    """
    n = a.shape[0]
    b, x, u, v = (_vec(t, n, name) for t, name in ((b, "b"), (x, "x"), (u, "u"), (v, "v")))
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise PreconditionError("plane directions must be nonzero")
    if abs(u @ v) > orth_tol * nu * nv:
        raise PreconditionError(f"plane directions are not orthogonal (u^T v = {u @ v:.3e})")
    return _plane_step(a, b - matvec(a, x), x, u, v)


def _plane_solver(a, b, x0, rel_tol, max_iter, second_direction: str) -> CgTrace:
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(b)

    steps = []
    residuals = []
    converged = False
    prev_r = prev_p = None
    for k in itertools.count():
        r = b - matvec(a, x)
        residuals.append(r)
        r_norm = float(np.linalg.norm(r))
        if r_norm <= threshold or not np.any(r):
            steps.append(CgStep(k, x, r, None, None, None, r_norm))
            converged = True
            break
        if k >= max_iter:
            steps.append(CgStep(k, x, r, None, None, None, r_norm))
            break
        if k == 0:
            alpha = float(r @ r) / float(r @ matvec(a, r))
            steps.append(CgStep(k, x, r, r.copy(), alpha, None, r_norm))
            x_next, p = x + alpha * r, r.copy()
        else:
            v = prev_p if second_direction == "p" else prev_r
            st = _plane_step(a, r, x, r, v)
            if st.xi == 0.0 and st.eta == 0.0:
                steps.append(CgStep(k, x, r, None, None, None, r_norm))
                converged = True
                break
            steps.append(CgStep(k, x, r, st.p_tilde, st.xi, st.eta / st.xi if st.xi else None, r_norm))
            x_next, p = st.x_next, st.p_tilde
        prev_r, prev_p, x = r, p, x_next
    diagnostics = {}
    if second_direction == "r":
        diagnostics["lost_orthogonality"] = [
            abs(residuals[j] @ residuals[j - 3]) / (np.linalg.norm(residuals[j]) * np.linalg.norm(residuals[j - 3]))
            for j in range(3, len(residuals))
            if np.any(residuals[j])
        ]
    return CgTrace(tuple(steps), converged, n, diagnostics)


def subspace2d_solve(a: MatrixLike, b, x0=None, rel_tol: float = 1e-10, max_iter: Optional[int] = None) -> CgTrace:
    """Minimize J over x_k + span{r_k, p~_{k-1}} each step; the first step is steepest descent.

    Trace fields: ``p`` is p~_k, ``alpha`` is xi and ``beta`` is eta/xi.
    """
    return _plane_solver(a, b, x0, rel_tol, max_iter, "p")


def subspace2d_solve_rr_variant(a: MatrixLike, b, x0=None, rel_tol: float = 1e-10, max_iter: Optional[int] = None) -> CgTrace:
    """Same as :func:`subspace2d_solve` but with planes x_k + span{r_k, r_{k-1}}.

    ``diagnostics["lost_orthogonality"]`` lists |r_{k}^T r_{k-3}| / (||r_k|| ||r_{k-3}||)
    for k >= 3, which CG keeps at zero and this variant does not.
    """
    return _plane_solver(a, b, x0, rel_tol, max_iter, "r")


@dataclass(frozen=True, eq=False)
class BfgsStep:
    k: int
    x: np.ndarray
    g: np.ndarray
    d: Optional[np.ndarray]
    alpha: Optional[float]
    h: np.ndarray  # inverse-Hessian approximation used at this step


@dataclass(frozen=True, eq=False)
class BfgsTrace:
    steps: tuple
    final_h: SymMatrix
    converged: bool

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    @property
    def x(self) -> np.ndarray:
        return self.steps[-1].x


def bfgs_quadratic_solve(a: MatrixLike, b, x0=None, rel_tol: float = 1e-10, max_iter: Optional[int] = None) -> BfgsTrace:
    """Full BFGS with H_0 = I and exact line search on J(x) = x^T A x / 2 - b^T x."""
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(b)

    h = np.eye(n)
    g = matvec(a, x) - b
    steps = []
    converged = False
    for k in itertools.count():
        if np.linalg.norm(g) <= threshold or not np.any(g):
            converged = True
            break
        if k >= max_iter:
            break
        d = -h @ g
        ad = matvec(a, d)
        alpha = -float(g @ d) / float(d @ ad)
        steps.append(BfgsStep(k, x, g, d, alpha, h))
        x_next = x + alpha * d
        g_next = matvec(a, x_next) - b
        s, y = x_next - x, g_next - g
        sy = float(s @ y)
        if not sy > 0:
            raise CurvatureError(f"s^T y = {sy} at step {k}")
        hy = h @ y
        h = h + (1.0 + float(y @ hy) / sy) * np.outer(s, s) / sy - (np.outer(s, hy) + np.outer(hy, s)) / sy
        x, g = x_next, g_next
    steps.append(BfgsStep(len(steps), x, g, None, None, h))
    return BfgsTrace(tuple(steps), SymMatrix.from_dense(0.5 * (h + h.T)), converged)


def conjugate_direction_solve(a: MatrixLike, b, x0, dirs: Sequence, conj_tol: float = 1e-8) -> CgTrace:
    """March x_{k+1} = x_k + alpha_k d_k with exact line search along given A-conjugate directions."""
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    dirs = [np.asarray(d, dtype=float) for d in dirs]
    if dirs:
        defect = conjugacy_defect(a, np.array(dirs))
        if defect > conj_tol:
            raise PreconditionError(f"directions are not A-conjugate (defect {defect:.3e})")
    steps = []
    r = b - matvec(a, x)
    for k, d in enumerate(dirs):
        alpha = float(r @ d) / float(d @ matvec(a, d))
        steps.append(CgStep(k, x, r, d, alpha, None, float(np.linalg.norm(r))))
        x = x + alpha * d
        r = b - matvec(a, x)
    r_norm = float(np.linalg.norm(r))
    steps.append(CgStep(len(dirs), x, r, None, None, None, r_norm))
    return CgTrace(tuple(steps), r_norm <= 1e-8 * np.linalg.norm(b), n)


def iterate_deviation(xa: np.ndarray, xb: np.ndarray) -> float:
    """||xa - xb|| / max(||xa||, ||xb||), zero when both vanish."""
    scale = max(np.linalg.norm(xa), np.linalg.norm(xb))
    return 0.0 if scale == 0 else float(np.linalg.norm(xa - xb) / scale)


def max_iterate_deviation(xs_a: Sequence[np.ndarray], xs_b: Sequence[np.ndarray]) -> float:
    m = min(len(xs_a), len(xs_b))
    return max((iterate_deviation(xs_a[k], xs_b[k]) for k in range(m)), default=0.0)


def write_equivalence_csv(cg: CgTrace, sub: CgTrace, bfgs: BfgsTrace, target: Target = None) -> str:
    """Columns k, dev_cg_subspace, dev_cg_bfgs, dev_subspace_bfgs over the shared steps."""
    xs = [cg.xs, sub.xs, bfgs.xs]
    m = min(len(x) for x in xs)
    rows = [
        (k, iterate_deviation(xs[0][k], xs[1][k]), iterate_deviation(xs[0][k], xs[2][k]), iterate_deviation(xs[1][k], xs[2][k]))
        for k in range(m)
    ]
    return write_csv(["k", "dev_cg_subspace", "dev_cg_bfgs", "dev_subspace_bfgs"], rows, target)

"""Lanczos tridiagonalization, the incrementally factored projected solve, and the
identities linking both to the CG trace."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cg import CgTrace, _vec
from .errors import BreakdownError, InvalidInputError
from .linalg import LdlFactors, MatrixLike, Tridiag, as_array, det_from_ldlt, ldlt_factor, matvec
from .report import Target, write_csv

# tau <= BREAKDOWN_RTOL * max|a_ij| is an exact (invariant-subspace) breakdown
BREAKDOWN_RTOL = 1e-12


def _scale(a: MatrixLike) -> float:
    return float(np.max(np.abs(as_array(a))))


@dataclass(frozen=True, eq=False)
class LanczosData:
    """Lanczos vectors v_0..v_k, the k x k matrix T_k, tau_0 = ||r_0|| and tau_k.

    ``v`` has k + 1 entries unless the process broke down at step k, in which
    case v_k does not exist and ``breakdown_at == k``.
    """

    v: tuple
    t: Tridiag
    tau0: float
    tau_next: float
    breakdown_at: Optional[int]

    @property
    def k(self) -> int:
        return self.t.n

    @property
    def basis(self) -> np.ndarray:
        """V_k as an n x k array."""
        return np.column_stack(self.v[: self.k])

    def relation_residual(self, a: MatrixLike) -> float:
        """max |A V_k - V_k T_k - tau_k v_k e_k^T|."""
        vk = self.basis
        res = as_array(a) @ vk - vk @ self.t.dense
        if len(self.v) > self.k:
            res[:, -1] -= self.tau_next * self.v[self.k]
        return float(np.max(np.abs(res)))


def _reorthogonalize(w: np.ndarray, vs: list) -> np.ndarray:
    basis = np.column_stack(vs)
    for _ in range(2):
        w = w - basis @ (basis.T @ w)
    return w


def lanczos_process(a: MatrixLike, r0, k_max: Optional[int] = None, reorthogonalize: bool = False) -> LanczosData:
    n = a.shape[0]
    r0 = _vec(r0, n, "r0")
    tau0 = float(np.linalg.norm(r0))
    if tau0 == 0:
        raise InvalidInputError("Lanczos needs a nonzero starting vector")
    k_max = n if k_max is None else k_max
    tol = BREAKDOWN_RTOL * _scale(a)

    vs = [r0 / tau0]
    sigmas, taus = [], []
    breakdown = None
    for j in range(k_max):
        av = matvec(a, vs[j])
        sigma = float(vs[j] @ av)
        w = av - sigma * vs[j]
        if j > 0:
            w -= taus[j - 1] * vs[j - 1]
        if reorthogonalize:
            w = _reorthogonalize(w, vs)
        tau = float(np.linalg.norm(w))
        sigmas.append(sigma)
        taus.append(tau)
        if tau <= tol:
            breakdown = j + 1
            break
        vs.append(w / tau)
    return LanczosData(tuple(vs), Tridiag(sigmas, taus[:-1]), tau0, taus[-1], breakdown)


@dataclass(frozen=True, eq=False)
class LanczosSolveTrace:
    """Iterates of the Lanczos + LDL^T solver.

    x_bar[k + 1] = x_bar[k] + alpha_bar[k] * p_bar[k]; ``factors`` holds
    l_{k,k-1} and delta_k of T_k = L_k D_k L_k^T, and ``alpha_bar`` is w_k.
    """

    x_bar: tuple
    p_bar: tuple
    alpha_bar: np.ndarray
    factors: LdlFactors
    lanczos: Optional[LanczosData]
    converged: bool

    @property
    def xs(self) -> np.ndarray:
        return np.array(self.x_bar)

    @property
    def w_bar(self) -> np.ndarray:
        return np.column_stack(self.p_bar) if self.p_bar else np.zeros((0, 0))


def lanczos_cholesky_solve(
    a: MatrixLike,
    b,
    x0=None,
    rel_tol: float = 1e-10,
    max_iter: Optional[int] = None,
    reorthogonalize: bool = False,
) -> LanczosSolveTrace:
    """Solve T_k z = ||r_0|| e_1 with L_k, D_k, W_k and w_k each extended by one entry per step."""
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    max_iter = 10 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(b)
    tol = BREAKDOWN_RTOL * _scale(a)

    r0 = b - matvec(a, x)
    tau0 = float(np.linalg.norm(r0))
    xs = [x]
    if tau0 <= threshold or tau0 == 0:
        return LanczosSolveTrace(tuple(xs), (), np.zeros(0), LdlFactors(np.zeros(0), np.zeros(0)), None, True)

    vs = [r0 / tau0]
    sigmas, taus = [], []
    ls, deltas, pbars, abars = [], [], [], []
    y = tau0
    breakdown = None
    converged = False
    for j in range(max_iter):
        v = vs[j]
        av = matvec(a, v)
        sigma = float(v @ av)
        w = av - sigma * v
        if j > 0:
            w -= taus[j - 1] * vs[j - 1]
        if reorthogonalize:
            w = _reorthogonalize(w, vs)
        sigmas.append(sigma)

        if j == 0:
            delta, pbar = sigma, v.copy()
        else:
            l = taus[j - 1] / deltas[j - 1]
            delta = sigma - l * taus[j - 1]
            pbar = v - l * pbars[j - 1]
            y = -l * y
            ls.append(l)
        if not delta > 0:
            raise BreakdownError(f"nonpositive pivot delta_{j} = {delta}")
        deltas.append(delta)
        pbars.append(pbar)
        abars.append(y / delta)
        x = x + abars[j] * pbar
        xs.append(x)

        tau = float(np.linalg.norm(w))
        taus.append(tau)
        if tau <= tol:
            breakdown = j + 1
        else:
            vs.append(w / tau)

        if np.linalg.norm(b - matvec(a, x)) <= threshold:
            converged = True
            break
        if breakdown is not None:
            if breakdown < n:
                raise BreakdownError(f"Lanczos broke down at step {breakdown} with a nonzero residual")
            break

    data = LanczosData(tuple(vs), Tridiag(sigmas, taus[:-1]), tau0, taus[-1], breakdown)
    factors = LdlFactors(np.array(ls), np.array(deltas))
    return LanczosSolveTrace(tuple(xs), tuple(pbars), np.array(abars), factors, data, converged)


def correspondence_deviations(cg: CgTrace, lz: LanczosSolveTrace, lz_data: Optional[LanczosData] = None) -> dict:
    """Per-k relative deviations for the seven CG <-> Lanczos identities (0-based k)."""
    data = lz.lanczos if lz_data is None else lz_data
    steps = [s for s in cg.steps if s.p is not None]
    if data is None or not steps:
        return {name: np.zeros(0) for name in ("v", "p_bar", "alpha_bar", "sigma", "tau", "l", "delta")}
    r0 = steps[0].r
    if np.linalg.norm(r0 - data.tau0 * data.v[0]) > 1e-12 * np.linalg.norm(r0):
        raise InvalidInputError("CG and Lanczos runs do not share the same starting residual")
    m = min(len(steps), len(lz.p_bar), data.k)

    def rel(x, ref):
        ref_norm = np.linalg.norm(ref)
        return float(np.linalg.norm(np.asarray(x) - ref) / ref_norm) if ref_norm else float(np.linalg.norm(x))

    out = {name: [] for name in ("v", "p_bar", "alpha_bar", "sigma", "tau", "l", "delta")}
    for k in range(m):
        s = steps[k]
        sign = -1.0 if k % 2 else 1.0
        out["v"].append(rel(data.v[k], sign * s.r / s.r_norm))
        out["p_bar"].append(rel(lz.p_bar[k], sign * s.p / s.r_norm))
        out["alpha_bar"].append(rel(lz.alpha_bar[k], sign * s.r_norm * s.alpha))
        out["delta"].append(rel(lz.factors.diag[k], 1.0 / s.alpha))
        if k == 0:
            out["sigma"].append(rel(data.t.diag[0], 1.0 / s.alpha))
            continue
        prev = steps[k - 1]
        out["sigma"].append(rel(data.t.diag[k], 1.0 / s.alpha + s.beta / prev.alpha))
        out["tau"].append(rel(data.t.off[k - 1], np.sqrt(s.beta) / prev.alpha))
        out["l"].append(rel(lz.factors.lower[k - 1], s.r_norm / prev.r_norm))
    return {name: np.array(v) for name, v in out.items()}


def verify_correspondence(cg: CgTrace, lz: LanczosSolveTrace, lz_data: Optional[LanczosData] = None) -> dict:
    """Max relative deviation of each identity: v, p_bar, alpha_bar, sigma, tau, l, delta."""
    devs = correspondence_deviations(cg, lz, lz_data)
    return {name: float(np.max(v, initial=0.0)) for name, v in devs.items()}


def write_correspondence_csv(cg: CgTrace, lz: LanczosSolveTrace, target: Target = None) -> str:
    devs = correspondence_deviations(cg, lz)
    rows = []
    for name, values in devs.items():
        first = 1 if name in ("tau", "l") else 0
        rows.extend((name, first + i, v) for i, v in enumerate(values))
    return write_csv(["identity", "k", "deviation"], rows, target)


@dataclass(frozen=True)
class DeterminantCheck:
    prod_inv_alpha: float
    det_oracle: float
    rel_dev: float
    applicable: bool


def determinant_identity(cg: CgTrace, a: MatrixLike) -> DeterminantCheck:
    """Compare prod 1/alpha_k over n full steps with det(A) from LDL^T.

    Not applicable (``applicable=False``) when CG stopped before n steps,
    i.e. r_0 does not excite every eigenvalue.
    """
    n = a.shape[0]
    det = det_from_ldlt(ldlt_factor(a))
    alphas = cg.alphas
    if alphas.size < n:
        return DeterminantCheck(float("nan"), det, float("nan"), False)
    prod = float(np.prod(1.0 / alphas[:n]))
    return DeterminantCheck(prod, det, abs(prod - det) / abs(det), True)


def beta_product_identity(cg: CgTrace) -> float:
    """max_k |prod_{i<k} beta_i - ||r_k||^2/||r_0||^2| relative to the right-hand side."""
    r_norms = cg.r_norms
    betas = cg.betas
    worst = 0.0
    prod = 1.0
    for k in range(1, min(len(r_norms), betas.size + 1)):
        prod *= betas[k - 1]
        ref = (r_norms[k] / r_norms[0]) ** 2
        if ref == 0:
            dev = abs(prod)
        else:
            dev = abs(prod - ref) / ref
        worst = max(worst, dev)
    return float(worst)

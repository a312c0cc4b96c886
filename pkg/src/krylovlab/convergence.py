"""Steepest descent, Kantorovich factors, and two-term versus k-term error ratios."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cg import _vec, cg_solve
from .errors import InvalidInputError
from .linalg import MatrixLike, a_norm, as_array, matvec, solve_spd
from .report import Target, write_csv

# x_k - x_* carries absolute error ~eps ||x_*||; below this fraction of ||e_0||_A
# the ratios lose the ten digits the bound checks need
ERROR_FLOOR_RTOL = 1e-6
# one-step identities are checked while ||e_k||_A stays above this fraction of ||e_0||_A
IDENTITY_RTOL = 1e-6
TRIALS_PER_CHUNK = 1000
# absolute rounding allowance, as a fraction of ||e_0||_A, for the k-step bounds
BOUND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SdStep:
    k: int
    x: np.ndarray
    r: np.ndarray
    alpha: Optional[float]


@dataclass(frozen=True, eq=False)
class SdTrace:
    steps: tuple
    a_errors: Optional[np.ndarray]
    converged: bool

    @property
    def x(self) -> np.ndarray:
        return self.steps[-1].x

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])


def steepest_descent_solve(
    a: MatrixLike, b, x0=None, rel_tol: float = 1e-10, max_iter: Optional[int] = None, x_star=None
) -> SdTrace:
    """x_{k+1} = x_k + (r^T r / r^T A r) r; A-norm errors are recorded when ``x_star`` is given."""
    if not rel_tol > 0:
        raise InvalidInputError("rel_tol must be positive")
    n = a.shape[0]
    b = _vec(b, n, "b")
    x = np.zeros(n) if x0 is None else _vec(x0, n, "x0")
    max_iter = 1000 * n if max_iter is None else max_iter
    threshold = rel_tol * np.linalg.norm(b)
    steps = []
    converged = False
    for k in itertools.count():
        r = b - matvec(a, x)
        if np.linalg.norm(r) <= threshold or not np.any(r):
            converged = True
            break
        if k >= max_iter:
            break
        ar = matvec(a, r)
        alpha = float(r @ r) / float(r @ ar)
        steps.append(SdStep(k, x, r, alpha))
        x = x + alpha * r
    steps.append(SdStep(len(steps), x, r, None))
    errors = None
    if x_star is not None:
        x_star = _vec(x_star, n, "x_star")
        errors = np.array([a_norm(a, s.x - x_star) for s in steps])
    return SdTrace(tuple(steps), errors, converged)


def _positive_errors(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise InvalidInputError("no errors given")
    if np.any(e <= 0):
        raise InvalidInputError("errors must be strictly positive; drop the converged tail")
    return e


def two_term_ratios(errors_a: Sequence[float]) -> np.ndarray:
    """e_k / e_{k-1} for k = 1..len-1."""
    e = _positive_errors(errors_a)
    return e[1:] / e[:-1]


def k_term_mean(errors_a: Sequence[float], k: int) -> float:
    """(e_k / e_0)^(1/k)."""
    e = _positive_errors(errors_a)
    if not 1 <= k < e.size:
        raise InvalidInputError(f"k must lie in [1, {e.size - 1}]")
    return float((e[k] / e[0]) ** (1.0 / k))


def kantorovich_factor(lambda_min: float, lambda_max: float) -> float:
    """(lambda_n - lambda_1) / (lambda_n + lambda_1)."""
    if not 0 < lambda_min <= lambda_max:
        raise InvalidInputError("need 0 < lambda_min <= lambda_max")
    return (lambda_max - lambda_min) / (lambda_max + lambda_min)


def sqrt_kantorovich_factor(lambda_min: float, lambda_max: float) -> float:
    """(sqrt(lambda_n) - sqrt(lambda_1)) / (sqrt(lambda_n) + sqrt(lambda_1))."""
    return kantorovich_factor(np.sqrt(lambda_min), np.sqrt(lambda_max))


def kantorovich_max(lambda_min: float, lambda_max: float) -> float:
    """Closed-form maximum of (sum lambda_i t_i)(sum t_i / lambda_i) over the simplex."""
    return 0.25 * (lambda_min + lambda_max) * (1.0 / lambda_min + 1.0 / lambda_max)


def _eigenvalues(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float) if isinstance(a, (list, tuple, np.ndarray)) else None
    if arr is not None and arr.ndim == 1:
        lams = np.sort(arr)
    else:
        lams = np.linalg.eigvalsh(as_array(a))
    if lams.size == 0 or lams[0] <= 0:
        raise InvalidInputError("eigenvalues must be positive")
    return lams


def _simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All t with t_i = c_i / resolution, c_i >= 0 integers summing to resolution."""
    if n == 1:
        return np.ones((1, 1))
    # stars and bars: bar positions among resolution + n - 1 slots
    bars = np.array(list(itertools.combinations(range(resolution + n - 1), n - 1)))
    edges = np.hstack([np.full((bars.shape[0], 1), -1), bars, np.full((bars.shape[0], 1), resolution + n - 1)])
    return (np.diff(edges, axis=1) - 1) / resolution


@dataclass(frozen=True, eq=False)
class KantorovichResult:
    max_product: float
    argmax_weights: np.ndarray
    pair_max: float
    pair_weights: np.ndarray
    grid_max: Optional[float]
    grid_weights: Optional[np.ndarray]
    closed_form: float


GRID_MAX_N = 4


def kantorovich_brute(a, grid_resolution: int = 200) -> KantorovichResult:
    """Maximize (sum lambda_i t_i)(sum t_i / lambda_i) over the simplex by brute force.

    Pair enumeration with t_i = t_j = 1/2 runs for every n; the dense grid
    oracle runs only for n <= 4. ``a`` may be a matrix or a vector of eigenvalues.
    """
    if grid_resolution < 2:
        raise InvalidInputError("grid_resolution must be at least 2")
    lams = _eigenvalues(a)
    n = lams.size
    pair_max, pair_weights = 1.0, np.eye(n)[0]
    for i, j in itertools.combinations(range(n), 2):
        val = 0.25 * (lams[i] + lams[j]) * (1.0 / lams[i] + 1.0 / lams[j])
        if val > pair_max:
            pair_max = val
            pair_weights = np.zeros(n)
            pair_weights[[i, j]] = 0.5
    grid_max = grid_weights = None
    if n <= GRID_MAX_N:
        t = _simplex_grid(n, grid_resolution)
        vals = (t @ lams) * (t @ (1.0 / lams))
        idx = int(np.argmax(vals))
        grid_max, grid_weights = float(vals[idx]), t[idx]
    if grid_max is not None and grid_max > pair_max:
        best, weights = grid_max, grid_weights
    else:
        best, weights = pair_max, pair_weights
    return KantorovichResult(best, weights, pair_max, pair_weights, grid_max, grid_weights, kantorovich_max(lams[0], lams[-1]))


@dataclass(frozen=True)
class LemmaC:
    sqrt_holds: bool
    plain_holds: bool
    c12: float
    c23: float
    c13: float


def _c(li: float, lj: float) -> float:
    return (np.sqrt(lj / li) - np.sqrt(li / lj)) ** 2


def lemma_c_inequality(l1: float, l2: float, l3: float) -> LemmaC:
    """Check sqrt(c12) + sqrt(c23) < sqrt(c13) and c12 + c23 < c13 for 0 < l1 < l2 < l3."""
    if not 0 < l1 < l2 < l3:
        raise InvalidInputError("need 0 < l1 < l2 < l3")
    c12, c23, c13 = _c(l1, l2), _c(l2, l3), _c(l1, l3)
    return LemmaC(
        bool(np.sqrt(c12) + np.sqrt(c23) < np.sqrt(c13)),
        bool(c12 + c23 < c13),
        float(c12),
        float(c23),
        float(c13),
    )


def sd_one_step_ratio(a: MatrixLike, direction) -> float:
    """||e_1||_A / ||e_0||_A for one actual SD step whose starting residual is ``direction``.

    Uses b = 0 (so x_* = 0) and x_0 = -A^{-1} direction.
    """
    n = a.shape[0]
    d = _vec(direction, n, "direction")
    if not np.any(d):
        raise InvalidInputError("direction must be nonzero")
    x0 = -solve_spd(a, d)
    r = -matvec(a, x0)
    alpha = float(r @ r) / float(r @ matvec(a, r))
    x1 = x0 + alpha * r
    return a_norm(a, x1) / a_norm(a, x0)


def _batch_ratios(a: np.ndarray, a_inv: np.ndarray, seed: int, chunk: int, count: int) -> float:
    rng = np.random.default_rng([seed, chunk])
    r = rng.standard_normal((count, a.shape[0]))
    rr = np.einsum("ij,ij->i", r, r)
    rar = np.einsum("ij,ij->i", r @ a, r)
    rair = np.einsum("ij,ij->i", r @ a_inv, r)
    return float(np.sqrt(np.max(np.clip(1.0 - rr * rr / (rar * rair), 0.0, None))))


@dataclass(frozen=True)
class WorstCase:
    sampled_max: float
    candidate_ratio: float
    bound: float


def sd_worst_case_ratio(a: MatrixLike, trials: int = 10_000, seed: int = 0, parallel: bool = False) -> WorstCase:
    """Largest one-step SD contraction over random residual directions and over (phi_1 + phi_n)/sqrt(2).

    Trials run in chunks seeded by (seed, chunk index), so the result does not
    depend on ``parallel``.
    """
    if trials < 1:
        raise InvalidInputError("trials must be at least 1")
    dense = as_array(a)
    lams, phi = np.linalg.eigh(dense)
    a_inv = np.linalg.inv(dense)
    sizes = [min(TRIALS_PER_CHUNK, trials - s) for s in range(0, trials, TRIALS_PER_CHUNK)]
    jobs = [(dense, a_inv, seed, i, c) for i, c in enumerate(sizes)]
    if parallel:
        with ThreadPoolExecutor() as pool:
            sampled = max(pool.map(lambda job: _batch_ratios(*job), jobs))
    else:
        sampled = max(_batch_ratios(*job) for job in jobs)
    candidate = sd_one_step_ratio(a, (phi[:, 0] + phi[:, -1]) / np.sqrt(2.0))
    return WorstCase(sampled, candidate, kantorovich_factor(lams[0], lams[-1]))


@dataclass(frozen=True)
class RatioRow:
    k: int
    ratio2: float
    ratio_k: float
    bound_rhs: float


@dataclass(frozen=True, eq=False)
class RatioTable:
    """Error ratios of one run; ``bound_rhs`` is the k-step bound for the method used."""

    rows: tuple
    errors: np.ndarray
    q_bound: float
    sqrt_q_bound: float
    method: str

    @property
    def two_term_ok(self) -> bool:
        return all(r.ratio2 <= self.q_bound + 1e-10 for r in self.rows)

    @property
    def k_term_ok(self) -> bool:
        return self.bound_excess <= BOUND_SLACK

    @property
    def bound_excess(self) -> float:
        """max_k (e_k - bound_k) / e_0; at most BOUND_SLACK when the k-step bound holds."""
        return max(((self.errors[r.k] - r.bound_rhs) / self.errors[0] for r in self.rows), default=-np.inf)

    @property
    def overshoot(self) -> bool:
        """Some two-term ratio strictly exceeds the concurrent k-term mean."""
        return any(r.ratio2 > r.ratio_k for r in self.rows)


def _ratio_rows(errors: np.ndarray, rhs) -> tuple:
    e0 = errors[0]
    rows = []
    for k in range(1, errors.size):
        if errors[k - 1] <= ERROR_FLOOR_RTOL * e0:
            break
        ratio_k = (errors[k] / e0) ** (1.0 / k) if errors[k] > 0 else 0.0
        rows.append(RatioRow(k, float(errors[k] / errors[k - 1]), float(ratio_k), float(rhs(k))))
    return tuple(rows)


def cg_ratio_table(a: MatrixLike, b, x0=None, max_iter: Optional[int] = None) -> RatioTable:
    """Run CG to the rounding floor and tabulate two-term and k-term A-norm error ratios.

    ``bound_rhs`` is 2 ((sqrt(lambda_n) - sqrt(lambda_1)) / (sqrt(lambda_n) + sqrt(lambda_1)))^k ||e_0||_A.
    """
    n = a.shape[0]
    lams = np.linalg.eigvalsh(as_array(a))
    x_star = solve_spd(a, _vec(b, n, "b"))
    trace = cg_solve(a, b, x0, rel_tol=1e-15, max_iter=n if max_iter is None else max_iter)
    errors = np.array([a_norm(a, x - x_star) for x in trace.xs])
    sq = sqrt_kantorovich_factor(lams[0], lams[-1])
    rows = _ratio_rows(errors, lambda k: 2.0 * sq**k * errors[0])
    return RatioTable(rows, errors, kantorovich_factor(lams[0], lams[-1]), sq, "cg")


def sd_ratio_table(a: MatrixLike, b, x0=None, max_iter: Optional[int] = None) -> RatioTable:
    """Same table for steepest descent; ``bound_rhs`` is Q^k ||e_0||_A with Q the Kantorovich factor."""
    n = a.shape[0]
    lams = np.linalg.eigvalsh(as_array(a))
    x_star = solve_spd(a, _vec(b, n, "b"))
    trace = steepest_descent_solve(a, b, x0, rel_tol=1e-15, max_iter=max_iter, x_star=x_star)
    q = kantorovich_factor(lams[0], lams[-1])
    errors = trace.a_errors
    rows = _ratio_rows(errors, lambda k: q**k * errors[0])
    return RatioTable(rows, errors, q, sqrt_kantorovich_factor(lams[0], lams[-1]), "sd")


def write_ratio_csv(table: RatioTable, target: Target = None) -> str:
    rows = [(r.k, r.ratio2, r.ratio_k, table.q_bound, table.sqrt_q_bound, r.bound_rhs) for r in table.rows]
    return write_csv(["k", "ratio2", "ratioK", "q_bound", "sqrt_q_bound", "textbook_bound_rhs"], rows, target)


def one_step_identity_defect(a: MatrixLike, xs, rs, ds, x_star) -> float:
    """max_k |e_{k+1}^2/e_k^2 - (1 - (r_k^T d_k)^2 / (d_k^T A d_k r_k^T A^{-1} r_k))| over exact line-search steps.

    Steps whose A-norm error has fallen below IDENTITY_RTOL of the initial one
    are skipped: there the measured ratio is dominated by rounding in x_*.
    """
    x_star = np.asarray(x_star, dtype=float)
    errs = [a_norm(a, x - x_star) for x in xs]
    worst = 0.0
    for k, (r, d) in enumerate(zip(rs, ds)):
        if k + 1 >= len(errs) or errs[k] <= IDENTITY_RTOL * errs[0]:
            break
        predicted = 1.0 - float(r @ d) ** 2 / (float(d @ matvec(a, d)) * float(r @ solve_spd(a, r)))
        worst = max(worst, abs((errs[k + 1] / errs[k]) ** 2 - predicted))
    return worst


def sd_identity_defect(a: MatrixLike, b, x0=None, max_iter: Optional[int] = None) -> float:
    x_star = solve_spd(a, _vec(b, a.shape[0], "b"))
    tr = steepest_descent_solve(a, b, x0, rel_tol=1e-14, max_iter=max_iter)
    moves = [s for s in tr.steps if s.alpha is not None]
    return one_step_identity_defect(a, tr.xs, [s.r for s in moves], [s.r for s in moves], x_star)


def cg_identity_defect(a: MatrixLike, b, x0=None) -> float:
    x_star = solve_spd(a, _vec(b, a.shape[0], "b"))
    tr = cg_solve(a, b, x0, rel_tol=1e-14)
    moves = [s for s in tr.steps if s.p is not None]
    return one_step_identity_defect(a, tr.xs, [s.r for s in moves], [s.p for s in moves], x_star)

"""Dense symmetric matrices, LDL^T factorizations and Sturm-sequence bisection.

Everything here is desk scale: matrices are stored densely (lower triangle only)
and tridiagonal matrices as a pair of diagonals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, InvalidInputError, NotPositiveDefiniteError

__all__ = [
    "SymMatrix",
    "SpdMatrix",
    "Tridiag",
    "LdlFactors",
    "as_array",
    "matvec",
    "spd_from_spectrum",
    "random_spectrum",
    "random_spd",
    "ldlt_factor",
    "ldlt_solve",
    "solve_spd",
    "sturm_count",
    "tridiag_eigenvalues",
    "a_norm",
    "det_from_ldlt",
    "parse_matrix_text",
    "format_matrix_text",
    "parse_spectrum",
]

# pivot <= PIVOT_RTOL * (largest leading diagonal seen so far) counts as "not SPD"
PIVOT_RTOL = 1e-13


def _packed_index(i: int, j: int) -> int:
    return i * (i + 1) // 2 + j


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Symmetric matrix holding only its lower triangle (row-major, packed)."""

    n: int
    lower: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        if self.n < 1:
            raise InvalidInputError("matrix order must be >= 1")
        if lower.size != self.n * (self.n + 1) // 2:
            raise DimensionMismatchError(
                f"packed lower triangle of order {self.n} needs {self.n * (self.n + 1) // 2} entries, got {lower.size}"
            )
        if not np.all(np.isfinite(lower)):
            raise InvalidInputError("matrix entries must be finite")
        lower.flags.writeable = False
        object.__setattr__(self, "lower", lower)

    @classmethod
    def from_dense(cls, a, rtol: float = 1e-12):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
        scale = max(np.max(np.abs(a)), 1.0)
        if np.max(np.abs(a - a.T)) > rtol * scale:
            raise InvalidInputError("matrix is not symmetric")
        rows, cols = np.tril_indices(a.shape[0])
        return cls(a.shape[0], a[rows, cols])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]):
        """Build from lower-triangle rows; row ``i`` must have ``i + 1`` entries."""
        for i, row in enumerate(rows):
            if len(row) != i + 1:
                raise DimensionMismatchError(f"row {i} has {len(row)} entries, expected {i + 1}")
        return cls(len(rows), np.concatenate([np.asarray(r, dtype=float) for r in rows]))

    @cached_property
    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        rows, cols = np.tril_indices(self.n)
        a[rows, cols] = self.lower
        a[cols, rows] = self.lower
        a.flags.writeable = False
        return a

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def __getitem__(self, ij):
        i, j = ij
        if j > i:
            i, j = j, i
        return self.lower[_packed_index(i, j)]

    def __matmul__(self, other):
        return self.dense @ other

    def __array__(self, dtype=None, copy=None):
        return self.dense if dtype is None else self.dense.astype(dtype)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.lower)))


@dataclass(frozen=True, eq=False)
class SpdMatrix(SymMatrix):
    """Symmetric matrix certified positive definite by a successful LDL^T."""

    factors: "LdlFactors" = field(init=False, repr=False)

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "factors", ldlt_factor(self))

    @classmethod
    def certify(cls, m: SymMatrix) -> "SpdMatrix":
        return m if isinstance(m, SpdMatrix) else cls(m.n, m.lower)


@dataclass(frozen=True, eq=False)
class Tridiag:
    """Symmetric tridiagonal matrix: ``diag`` (length k) and ``off`` (length k-1)."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        d = np.array(self.diag, dtype=float).ravel()
        e = np.array(self.off, dtype=float).ravel()
        if d.size < 1:
            raise InvalidInputError("tridiagonal matrix needs at least one diagonal entry")
        if e.size != d.size - 1:
            raise DimensionMismatchError(f"off-diagonal must have length {d.size - 1}, got {e.size}")
        d.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", e)

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def __array__(self, dtype=None, copy=None):
        return self.dense if dtype is None else self.dense.astype(dtype)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.diag)), np.max(np.abs(self.off), initial=0.0)))


@dataclass(frozen=True, eq=False)
class LdlFactors:
    """Unit lower triangular ``L`` and diagonal ``D`` with ``A = L D L^T``.

    ``lower`` holds the subdiagonal ``l[k, k-1]`` (1-D) for tridiagonal input
    and the full unit lower triangle (2-D) for dense input.
    """

    lower: np.ndarray
    diag: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def is_tridiagonal(self) -> bool:
        return self.lower.ndim == 1

    def l_matrix(self) -> np.ndarray:
        if self.is_tridiagonal:
            return np.eye(self.n) + np.diag(self.lower, -1)
        return np.array(self.lower)

    def reconstruct(self) -> np.ndarray:
        L = self.l_matrix()
        return (L * self.diag) @ L.T


MatrixLike = Union[SymMatrix, Tridiag, np.ndarray]


def as_array(a: MatrixLike) -> np.ndarray:
    if isinstance(a, (SymMatrix, Tridiag)):
        return a.dense
    return np.asarray(a, dtype=float)


def matvec(a: MatrixLike, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if a.shape[1] != v.shape[0]:
        raise DimensionMismatchError(f"matrix of order {a.shape[1]} applied to vector of length {v.shape[0]}")
    if isinstance(a, Tridiag):
        return a @ v
    return as_array(a) @ v


def random_spectrum(n: int, cond: float, kind: str = "linear", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Eigenvalues in ``[1, cond]`` with both endpoints present.

    ``linear`` spaces them evenly (deterministic); ``log`` draws them
    log-uniformly from ``rng``. Log spectra isolate the small eigenvalues,
    which makes floating-point CG lose global orthogonality within a few steps.
    """
    if n < 1 or not cond >= 1:
        raise InvalidInputError("need n >= 1 and cond >= 1")
    if n == 1:
        return np.array([1.0])
    if kind == "linear":
        return np.linspace(1.0, cond, n)
    if kind == "log":
        rng = np.random.default_rng() if rng is None else rng
        u = np.sort(rng.uniform(0.0, 1.0, n))
        u[0], u[-1] = 0.0, 1.0
        return cond**u
    raise InvalidInputError(f"unknown spectrum kind {kind!r}")


def _orthogonal(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def spd_from_spectrum(eigenvalues: Sequence[float], seed: int) -> SpdMatrix:
    """Return ``Q diag(eigenvalues) Q^T`` with ``Q`` a seeded random orthogonal matrix."""
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size < 1:
        raise InvalidInputError("spectrum is empty")
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise InvalidInputError("all eigenvalues must be finite and positive")
    q = _orthogonal(lam.size, seed)
    a = (q * lam) @ q.T
    return SpdMatrix.from_dense(0.5 * (a + a.T))


def random_spd(n: int, cond: float, seed: int, kind: str = "linear") -> SpdMatrix:
    """Seeded test matrix: spectrum from :func:`random_spectrum`, eigenbasis from ``seed``."""
    return spd_from_spectrum(random_spectrum(n, cond, kind, np.random.default_rng(seed)), seed)


def _ldlt_tridiag(t: Tridiag) -> LdlFactors:
    k = t.n
    d = np.empty(k)
    l = np.empty(k - 1)
    lead = abs(t.diag[0])
    for i in range(k):
        lead = max(lead, abs(t.diag[i]))
        piv = t.diag[i] if i == 0 else t.diag[i] - l[i - 1] * t.off[i - 1]
        if not piv > PIVOT_RTOL * lead:
            raise NotPositiveDefiniteError(i, float(piv))
        d[i] = piv
        if i < k - 1:
            l[i] = t.off[i] / piv
    return LdlFactors(l, d)


def _ldlt_dense(a: np.ndarray) -> LdlFactors:
    n = a.shape[0]
    L = np.eye(n)
    d = np.empty(n)
    lead = 0.0
    for j in range(n):
        lead = max(lead, abs(a[j, j]))
        piv = a[j, j] - np.dot(L[j, :j] ** 2, d[:j])
        if not piv > PIVOT_RTOL * lead:
            raise NotPositiveDefiniteError(j, float(piv))
        d[j] = piv
        L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ (L[j, :j] * d[:j])) / piv
    return LdlFactors(L, d)


def ldlt_factor(m: MatrixLike) -> LdlFactors:
    """LDL^T without pivoting. Raises NotPositiveDefiniteError on a nonpositive pivot."""
    if isinstance(m, Tridiag):
        return _ldlt_tridiag(m)
    a = as_array(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return _ldlt_dense(a)


def ldlt_solve(f: LdlFactors, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (f.n,):
        raise DimensionMismatchError(f"factors of order {f.n} cannot solve rhs of shape {rhs.shape}")
    if f.is_tridiagonal:
        y = rhs.copy()
        for i in range(1, f.n):
            y[i] -= f.lower[i - 1] * y[i - 1]
        y /= f.diag
        for i in range(f.n - 2, -1, -1):
            y[i] -= f.lower[i] * y[i + 1]
        return y
    y = solve_triangular(f.lower, rhs, lower=True, unit_diagonal=True)
    return solve_triangular(f.lower, y / f.diag, lower=True, trans="T", unit_diagonal=True)


def solve_spd(a: MatrixLike, b) -> np.ndarray:
    """Direct solve via LDL^T; the reference answer every iterative method is checked against."""
    f = a.factors if isinstance(a, SpdMatrix) else ldlt_factor(a)
    return ldlt_solve(f, b)


def _pivmin(t: Tridiag) -> float:
    return np.finfo(float).tiny * max(1.0, float(np.max(t.off**2, initial=0.0)))


def _sturm_counts(t: Tridiag, shifts: np.ndarray) -> np.ndarray:
    """Number of eigenvalues strictly below each shift (vectorized over shifts)."""
    shifts = np.asarray(shifts, dtype=float)
    pivmin = _pivmin(t)
    e2 = t.off**2
    q = t.diag[0] - shifts
    q = np.where(np.abs(q) < pivmin, -pivmin, q)
    count = (q < 0).astype(int)
    for i in range(1, t.n):
        q = t.diag[i] - shifts - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, -pivmin, q)
        count += q < 0
    return count


def sturm_count(t: Tridiag, mu: float) -> int:
    return int(_sturm_counts(t, np.array([mu]))[0])


def tridiag_eigenvalues(t: Tridiag) -> np.ndarray:
    """All eigenvalues of ``t`` in ascending order, by Sturm-count bisection."""
    n = t.n
    if n == 1:
        return np.array([t.diag[0]])
    radius = np.zeros(n)
    radius[:-1] += np.abs(t.off)
    radius[1:] += np.abs(t.off)
    lo_bound = float(np.min(t.diag - radius))
    hi_bound = float(np.max(t.diag + radius))
    spread = max(abs(lo_bound), abs(hi_bound), np.finfo(float).tiny)
    lo_bound -= 2 * np.finfo(float).eps * spread + _pivmin(t)
    hi_bound += 2 * np.finfo(float).eps * spread + _pivmin(t)

    index = np.arange(n)
    lo = np.full(n, lo_bound)
    hi = np.full(n, hi_bound)
    # invariant: count(lo) <= i < count(hi)
    for _ in range(200):
        width = hi - lo
        tol = 4 * np.finfo(float).eps * np.maximum(np.abs(lo), np.abs(hi)) + 1e-300
        active = width > tol
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        below = _sturm_counts(t, mid) > index
        hi = np.where(active & below, mid, hi)
        lo = np.where(active & ~below, mid, lo)
    return 0.5 * (lo + hi)


def a_norm(a: MatrixLike, v) -> float:
    v = np.asarray(v, dtype=float)
    val = float(v @ matvec(a, v))
    return float(np.sqrt(max(val, 0.0)))


def det_from_ldlt(f: LdlFactors) -> float:
    return float(np.prod(f.diag))


def parse_matrix_text(text: str) -> SymMatrix:
    """Parse ``n`` followed by ``n`` lower-triangle rows (row ``i`` has ``i + 1`` numbers)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError("empty matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise InvalidInputError(f"first line must be the matrix order, got {lines[0]!r}") from None
    if n < 1 or len(lines) != n + 1:
        raise InvalidInputError(f"expected {n} lower-triangle rows, got {len(lines) - 1}")
    try:
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidInputError(f"bad matrix entry: {exc}") from None
    return SymMatrix.from_rows(rows)


def format_matrix_text(m: SymMatrix) -> str:
    rows = [str(m.n)]
    for i in range(m.n):
        row = m.lower[_packed_index(i, 0) : _packed_index(i, i) + 1]
        rows.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(rows) + "\n"


def parse_spectrum(text: str) -> np.ndarray:
    try:
        lam = np.array([float(tok) for tok in text.split(",") if tok.strip()])
    except ValueError as exc:
        raise InvalidInputError(f"bad spectrum: {exc}") from None
    if lam.size == 0 or np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise InvalidInputError("spectrum must be a nonempty list of positive decimals")
    return lam

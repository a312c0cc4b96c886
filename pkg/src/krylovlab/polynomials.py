"""Residual and conjugate polynomials of a CG run, their roots, and the
discrete spectral measure under which they are orthogonal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DimensionMismatchError, InvalidInputError
from .lanczos import lanczos_process
from .linalg import LdlFactors, MatrixLike, Tridiag, as_array, matvec, tridiag_eigenvalues

# eigenvalues closer than this (relative) are merged into one abscissa
MERGE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Recurrence:
    """CG coefficients that generate R_k (``kind="R"``) or P_k (``kind="P"``)."""

    kind: str
    k: int
    alphas: np.ndarray
    betas: np.ndarray

    def values(self, lam: np.ndarray) -> np.ndarray:
        # coupled value recurrence; stable where monomial Horner cancels badly
        r = np.ones_like(lam)
        p = np.ones_like(lam)
        steps = self.k if self.kind == "P" else self.k - 1
        for j in range(max(steps, 0)):
            r = r - self.alphas[j] * lam * p
            p = r + self.betas[j] * p
        if self.kind == "P" or self.k == 0:
            return p if self.kind == "P" else r
        return r - self.alphas[self.k - 1] * lam * p


@dataclass(frozen=True, eq=False)
class PolyCoeffs:
    """Monomial coefficients c_0..c_d in ascending degree.

    Polynomials built from CG coefficients also keep their ``recurrence``,
    which :func:`poly_eval` prefers: monomial Horner evaluation loses about
    kappa^k / |p| relative accuracy on [lambda_1, lambda_n].
    """

    coefficients: np.ndarray
    recurrence: Optional[Recurrence] = None

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coefficients)
        return int(nz[-1]) if nz.size else 0

    def __call__(self, lam):
        return poly_eval(self, lam)

    def times_lambda(self) -> "PolyCoeffs":
        return PolyCoeffs(np.concatenate(([0.0], self.coefficients)))

    def __eq__(self, other):
        if not isinstance(other, PolyCoeffs):
            return NotImplemented
        return np.array_equal(_trim(self.coefficients), _trim(other.coefficients))


def _trim(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:1]


def _padd(*terms) -> np.ndarray:
    """Sum of (scale, coefficient array) pairs."""
    size = max(c.size for _, c in terms)
    out = np.zeros(size)
    for s, c in terms:
        out[: c.size] += s * c
    return out


def _lam(c: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], c))


def horner(p: PolyCoeffs, lam):
    """Horner evaluation of the monomial coefficients; ``lam`` may be a scalar or an array."""
    lam = np.asarray(lam, dtype=float)
    acc = np.zeros_like(lam)
    for c in p.coefficients[::-1]:
        acc = acc * lam + c
    return float(acc) if acc.ndim == 0 else acc


def poly_eval(p: PolyCoeffs, lam):
    """p(lam) through the generating recurrence when known, else by Horner."""
    if p.recurrence is None:
        return horner(p, lam)
    lam = np.asarray(lam, dtype=float)
    out = p.recurrence.values(lam)
    return float(out) if out.ndim == 0 else out


def poly_apply(a: MatrixLike, p: PolyCoeffs, v) -> np.ndarray:
    """p(A) v by Horner's scheme with matrix-vector products."""
    v = np.asarray(v, dtype=float)
    acc = np.zeros_like(v)
    for c in p.coefficients[::-1]:
        acc = matvec(a, acc) + c * v
    return acc


def _check_coeffs(alphas, betas, n_alpha: int, n_beta: int):
    alphas = np.asarray(alphas, dtype=float).ravel()
    betas = np.asarray(betas, dtype=float).ravel()
    if alphas.size < n_alpha or betas.size < n_beta:
        raise InvalidInputError(
            f"need {n_alpha} alphas and {n_beta} betas, got {alphas.size} and {betas.size}"
        )
    return alphas, betas


def residual_polys(alphas: Sequence[float], betas: Sequence[float], k_max: int) -> list:
    """R_0..R_{k_max} from the three-term recurrence."""
    alphas, betas = _check_coeffs(alphas, betas, k_max, max(k_max - 1, 0))
    polys = [np.ones(1)]
    if k_max >= 1:
        polys.append(np.array([1.0, -alphas[0]]))
    for k in range(1, k_max):
        g = alphas[k] / alphas[k - 1] * betas[k - 1]
        nxt = _padd((1.0 + g, polys[k]), (-alphas[k], _lam(polys[k])), (-g, polys[k - 1]))
        nxt[0] = 1.0  # (1 + g) - g is 1 algebraically but not always in floating point
        polys.append(nxt)
    return [PolyCoeffs(c, Recurrence("R", k, alphas, betas)) for k, c in enumerate(polys)]


def conjugate_polys(alphas: Sequence[float], betas: Sequence[float], k_max: int) -> list:
    """P_0..P_{k_max} from P_{k+1} = (1 + beta_k - alpha_k lam) P_k - beta_{k-1} P_{k-1}."""
    alphas, betas = _check_coeffs(alphas, betas, k_max, k_max)
    polys = [np.ones(1)]
    prev = np.zeros(1)
    for k in range(k_max):
        back = betas[k - 1] if k > 0 else 0.0
        nxt = _padd((1.0 + betas[k], polys[k]), (-alphas[k], _lam(polys[k])), (-back, prev))
        prev = polys[k]
        polys.append(nxt)
    return [PolyCoeffs(c, Recurrence("P", k, alphas, betas)) for k, c in enumerate(polys)]


def coupled_polys(alphas: Sequence[float], betas: Sequence[float], k_max: int) -> tuple:
    """(R_0..R_{k_max}, P_0..P_{k_max}) from R_{k+1} = R_k - alpha_k lam P_k, P_{k+1} = R_{k+1} + beta_k P_k."""
    alphas, betas = _check_coeffs(alphas, betas, k_max, k_max)
    rs, ps = [np.ones(1)], [np.ones(1)]
    for k in range(k_max):
        rs.append(_padd((1.0, rs[k]), (-alphas[k], _lam(ps[k]))))
        ps.append(_padd((1.0, rs[k + 1]), (betas[k], ps[k])))
    return [PolyCoeffs(c) for c in rs], [PolyCoeffs(c) for c in ps]  # coefficients only: a cross-check


def tk_from_cg(alphas: Sequence[float], betas: Sequence[float]) -> Tridiag:
    """T_k rebuilt from CG coefficients; k = len(alphas)."""
    alphas = np.asarray(alphas, dtype=float).ravel()
    betas = np.asarray(betas, dtype=float).ravel()
    k = alphas.size
    if k == 0:
        raise InvalidInputError("need at least one alpha")
    if betas.size < k - 1:
        raise InvalidInputError(f"need {k - 1} betas, got {betas.size}")
    if np.any(alphas <= 0) or np.any(betas[: k - 1] <= 0):
        raise InvalidInputError("CG coefficients must be positive")
    b = betas[: k - 1]
    diag = 1.0 / alphas
    diag[1:] += b / alphas[:-1]
    return Tridiag(diag, np.sqrt(b) / alphas[:-1])


def residual_poly_roots(t: Tridiag) -> np.ndarray:
    """Roots of R_k: the eigenvalues of T_k."""
    return tridiag_eigenvalues(t)


def conjugate_poly_roots(alphas: Sequence[float], betas: Sequence[float], factors: LdlFactors) -> np.ndarray:
    """Roots of P_k: eigenvalues of D^{1/2} L^T L D^{1/2} with beta_{k-1}/alpha_{k-1} added to the last diagonal.

    ``factors`` are the tridiagonal LDL^T factors of T_k (k = len(factors.diag)).
    """
    if not factors.is_tridiagonal:
        raise InvalidInputError("factors must come from a tridiagonal matrix")
    k = factors.n
    alphas, betas = _check_coeffs(alphas, betas, k, k)
    if k == 0:
        return np.zeros(0)
    d, l = factors.diag, factors.lower
    if l.size != k - 1:
        raise DimensionMismatchError(f"factors have {l.size} multipliers for order {k}")
    diag = d.copy()
    diag[:-1] *= 1.0 + l * l
    diag[-1] += betas[k - 1] / alphas[k - 1]
    off = np.sqrt(d[:-1] * d[1:]) * l
    return tridiag_eigenvalues(Tridiag(diag, off))


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Point masses ``weights`` at sorted ``abscissae``; weights sum to one."""

    abscissae: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _merge(lams: np.ndarray, weights: np.ndarray) -> SpectralMeasure:
    order = np.argsort(lams)
    lams, weights = lams[order], weights[order]
    xs, ws = [lams[0]], [weights[0]]
    for lam, w in zip(lams[1:], weights[1:]):
        if lam - xs[-1] <= MERGE_RTOL * abs(lam):
            ws[-1] += w
        else:
            xs.append(lam)
            ws.append(w)
    ws = np.array(ws)
    return SpectralMeasure(np.array(xs), ws / ws.sum())


def spectral_measure(a: MatrixLike, r0, method: str = "lanczos") -> SpectralMeasure:
    """Masses (phi_i^T r_0)^2 / ||r_0||^2 at the eigenvalues of A.

    ``method="lanczos"`` runs fully reorthogonalized Lanczos from r_0 and takes
    the Ritz values of the final T with squared first eigenvector components as
    masses; eigenvalues that r_0 does not excite carry zero mass and are absent.
    ``method="eigh"`` diagonalizes A densely and is kept as an oracle.
    """
    n = a.shape[0]
    r0 = np.asarray(r0, dtype=float).ravel()
    if r0.shape != (n,):
        raise DimensionMismatchError(f"r0 has length {r0.size}, expected {n}")
    norm = np.linalg.norm(r0)
    if norm == 0:
        raise InvalidInputError("r0 must be nonzero")
    if method == "eigh":
        lams, phi = np.linalg.eigh(as_array(a))
        weights = (phi.T @ r0 / norm) ** 2
        keep = weights > 0
        return _merge(lams[keep], weights[keep])
    if method != "lanczos":
        raise InvalidInputError(f"unknown method {method!r}")
    data = lanczos_process(a, r0, reorthogonalize=True)
    t = data.t
    if t.n == 1:
        return SpectralMeasure(t.diag.copy(), np.ones(1))
    lams, s = eigh_tridiagonal(t.diag, t.off)
    return _merge(lams, s[0] ** 2)


def stieltjes_inner(m: SpectralMeasure, f: PolyCoeffs, g: PolyCoeffs, weight_by_lambda: bool = False) -> float:
    """sum_i w_i f(lam_i) g(lam_i), with an extra factor lam_i when flagged."""
    vals = poly_eval(f, m.abscissae) * poly_eval(g, m.abscissae)
    if weight_by_lambda:
        vals = vals * m.abscissae
    return m.integrate(vals)


def dump_polys(polys: Sequence[PolyCoeffs]) -> str:
    """One line per polynomial: degree, then ascending coefficients."""
    lines = []
    for p in polys:
        c = p.coefficients[: p.degree + 1]
        lines.append(" ".join([str(p.degree)] + [f"{x:.17g}" for x in c]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_polys(text: str) -> list:
    polys = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        try:
            degree = int(fields[0])
            coeffs = [float(x) for x in fields[1:]]
        except ValueError as exc:
            raise InvalidInputError(f"line {lineno}: {exc}") from None
        if len(coeffs) != degree + 1:
            raise InvalidInputError(f"line {lineno}: degree {degree} needs {degree + 1} coefficients")
        polys.append(PolyCoeffs(coeffs))
    return polys


def spectrum_scale(p: PolyCoeffs, lo: float, hi: float, samples: int = 2001) -> float:
    """max |p| on [lo, hi], sampled; the reference scale for root residuals."""
    grid = np.linspace(lo, hi, samples)
    return float(np.max(np.abs(poly_eval(p, grid))))

"""Experiment drivers behind the command line: each returns CSV rows plus pass/fail checks."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import convergence, fem, lanczos, polynomials
from .cg import cg_solve
from .equivalence import bfgs_quadratic_solve, conjugate_direction_solve, iterate_deviation, subspace2d_solve
from .errors import BreakdownError, InvalidInputError
from .linalg import SpdMatrix, ldlt_factor, parse_matrix_text, parse_spectrum, random_spd, spd_from_spectrum

log = logging.getLogger("krylovlab")

ITERATE_TOL = 1e-7
LADDER_TOL = 1e-6
DETERMINANT_TOL = 1e-6
BETA_PRODUCT_TOL = 1e-8
DUALITY_TOL = 1e-8
R_ROOT_TOL = 1e-8
P_ROOT_TOL = 1e-7
MATRIX_POLY_TOL = 1e-7
FEM_TRACE_TOL = 1e-10
REFINE_RATIO = (3.5, 4.5)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    spectrum: Optional[str] = None
    matrix_file: Optional[str] = None
    n: Optional[int] = None
    cond: float = 100.0
    seed: int = 0
    seeds: int = 1
    tol: float = 1e-10
    max_iter: Optional[int] = None
    out: Optional[str] = None
    parallel: bool = False
    # rates
    method: str = "cg"
    rhs: str = "auto"
    # fem
    c: float = 0.0
    load: str = "sin-benchmark"
    refine: Optional[int] = None
    compare_operator: bool = False
    dump: Optional[str] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidInputError("--tol must be positive")
        if self.command != "fem":
            sources = [self.spectrum is not None, self.matrix_file is not None, self.n is not None]
            if sum(sources) != 1:
                raise InvalidInputError("give exactly one matrix source: --spectrum, --matrix-file or --n")
            if self.n is not None and self.n < 1:
                raise InvalidInputError("--n must be positive")
            if not self.cond >= 1:
                raise InvalidInputError("--cond must be at least 1")
        if self.seeds < 1:
            raise InvalidInputError("--seeds must be positive")

    @property
    def random_source(self) -> bool:
        return self.n is not None


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)


@dataclass(frozen=True)
class Report:
    header: tuple
    rows: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def load_matrix(cfg: ExperimentConfig, seed: int) -> SpdMatrix:
    if cfg.spectrum is not None:
        return spd_from_spectrum(parse_spectrum(cfg.spectrum), seed)
    if cfg.matrix_file is not None:
        try:
            text = Path(cfg.matrix_file).read_text()
        except OSError as exc:
            raise InvalidInputError(f"cannot read {cfg.matrix_file}: {exc.strerror}") from None
        return SpdMatrix.certify(parse_matrix_text(text))
    return random_spd(cfg.n, cfg.cond, seed)


def _rhs(a: SpdMatrix, seed: int, kind: str = "random") -> np.ndarray:
    if kind == "worst":
        _, phi = np.linalg.eigh(a.dense)
        return (phi[:, 0] + phi[:, -1]) / np.sqrt(2.0)
    return np.random.default_rng([seed, 1]).standard_normal(a.n)


def _seeds(cfg: ExperimentConfig) -> list:
    count = cfg.seeds if cfg.random_source else 1
    return [cfg.seed + i for i in range(count)]


def _map(cfg: ExperimentConfig, fn, items) -> list:
    if cfg.parallel and len(items) > 1:
        with ThreadPoolExecutor() as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _worst(checks: list) -> list:
    """Collapse repeated check names to their largest value."""
    merged = {}
    for c in checks:
        if c.name not in merged or c.value > merged[c.name].value:
            merged[c.name] = c
    return list(merged.values())


def _attempt(seed: int, name: str, solve, tol: float, checks: list):
    """Run ``solve``; a breakdown becomes a failed check instead of aborting the report."""
    try:
        return solve()
    except BreakdownError as exc:
        log.warning("seed %d: %s broke down: %s", seed, name, exc)
        checks.append(Check(f"{name}_breakdown", float("inf"), tol))
        return None


def _equivalence_one(args) -> tuple:
    cfg, seed = args
    a = load_matrix(cfg, seed)
    b = _rhs(a, seed)
    log.info("equivalence: n=%d seed=%d", a.n, seed)
    cg = cg_solve(a, b, rel_tol=cfg.tol, max_iter=cfg.max_iter)
    kw = dict(rel_tol=cfg.tol, max_iter=cfg.max_iter)
    rows, checks = [], []
    solvers = {
        "x_subspace2d": lambda: subspace2d_solve(a, b, **kw).xs,
        "x_bfgs": lambda: bfgs_quadratic_solve(a, b, **kw).xs,
        "x_conjugate_directions": lambda: conjugate_direction_solve(a, b, None, cg.ps, conj_tol=np.inf).xs,
        "x_lanczos": lambda: lanczos.lanczos_cholesky_solve(a, b, **kw),
    }
    lz = None
    for name, solve in solvers.items():
        out = _attempt(seed, name, solve, ITERATE_TOL, checks)
        if out is None:
            continue
        if name == "x_lanczos":
            lz, out = out, out.xs
        m = min(len(out), len(cg.xs))
        devs = [iterate_deviation(cg.xs[k], out[k]) for k in range(m)]
        rows.extend((seed, name, k, d) for k, d in enumerate(devs))
        checks.append(Check(name, max(devs, default=0.0), ITERATE_TOL))
    if lz is not None:
        l_rows, l_checks = _ladder(seed, a, cg, lz)
        rows += l_rows
        checks += l_checks
    return rows, checks


def _ladder(seed, a, cg, lz) -> tuple:
    rows, checks = [], []
    for name, values in lanczos.correspondence_deviations(cg, lz).items():
        first = 1 if name in ("tau", "l") else 0
        rows.extend((seed, name, first + i, v) for i, v in enumerate(values))
        checks.append(Check(name, float(np.max(values, initial=0.0)), LADDER_TOL))
    bp = lanczos.beta_product_identity(cg)
    rows.append((seed, "beta_product", len(cg.steps) - 1, bp))
    checks.append(Check("beta_product", bp, BETA_PRODUCT_TOL))
    det = lanczos.determinant_identity(cg, a)
    if det.applicable:
        rows.append((seed, "determinant", a.n, det.rel_dev))
        checks.append(Check("determinant", det.rel_dev, DETERMINANT_TOL))
    return rows, checks


def run_equivalence(cfg: ExperimentConfig) -> Report:
    """x-iterate deviations of every formulation from CG, plus the Lanczos ladder."""
    results = _map(cfg, _equivalence_one, [(cfg, s) for s in _seeds(cfg)])
    rows = [r for res in results for r in res[0]]
    checks = _worst([c for res in results for c in res[1]])
    return Report(("seed", "identity", "k", "deviation"), rows, checks)


def _lanczos_one(args) -> tuple:
    cfg, seed = args
    a = load_matrix(cfg, seed)
    b = _rhs(a, seed)
    cg = cg_solve(a, b, rel_tol=cfg.tol, max_iter=cfg.max_iter)
    checks = []
    lz = _attempt(seed, "lanczos", lambda: lanczos.lanczos_cholesky_solve(a, b, rel_tol=cfg.tol, max_iter=cfg.max_iter), LADDER_TOL, checks)
    if lz is None:
        return [], checks
    rows, ladder_checks = _ladder(seed, a, cg, lz)
    data = lz.lanczos
    rel = data.relation_residual(a) / a.max_abs() if data is not None else 0.0
    rows.append((seed, "lanczos_relation", data.k if data is not None else 0, rel))
    return rows, checks + ladder_checks


def run_lanczos(cfg: ExperimentConfig) -> Report:
    """The seven CG/Lanczos identities, the beta product and the determinant identity."""
    results = _map(cfg, _lanczos_one, [(cfg, s) for s in _seeds(cfg)])
    rows = [r for res in results for r in res[0]]
    checks = _worst([c for res in results for c in res[1]])
    return Report(("seed", "identity", "k", "deviation"), rows, checks)


def _polys_one(args) -> tuple:
    cfg, seed = args
    a = load_matrix(cfg, seed)
    b = _rhs(a, seed)
    dense = a.dense
    cg = cg_solve(a, b, rel_tol=min(cfg.tol, 1e-14), max_iter=cfg.max_iter or a.n)
    k_max = cg.iterations
    alphas, betas = cg.alphas, cg.betas
    rp = polynomials.residual_polys(alphas, betas, k_max)
    pp = polynomials.conjugate_polys(alphas, betas, k_max)
    measure = polynomials.spectral_measure(a, b)
    r0sq = float(b @ b)
    rs, ps = cg.rs, cg.ps
    rows, checks = [], []

    duality = 0.0
    for i in range(k_max + 1):
        for j in range(i, k_max + 1):
            d = abs(polynomials.stieltjes_inner(measure, rp[i], rp[j]) - rs[i] @ rs[j] / r0sq)
            rows.append((seed, "duality_R", i, j, d))
            duality = max(duality, d)
    for i in range(k_max):
        for j in range(i, k_max):
            d = abs(polynomials.stieltjes_inner(measure, pp[i], pp[j], True) - ps[i] @ dense @ ps[j] / r0sq)
            rows.append((seed, "duality_P", i, j, d))
            duality = max(duality, d)
    checks.append(Check("duality", duality, DUALITY_TOL))

    lo, hi = measure.abscissae[0], measure.abscissae[-1]
    r_root = p_root = 0.0
    for k in range(1, k_max + 1):
        t = polynomials.tk_from_cg(alphas[:k], betas)
        roots = polynomials.residual_poly_roots(t)
        dev = float(np.max(np.abs(rp[k](roots)))) / polynomials.spectrum_scale(rp[k], lo, hi)
        rows.append((seed, "root_R", k, "", dev))
        r_root = max(r_root, dev)
        roots = polynomials.conjugate_poly_roots(alphas, betas, ldlt_factor(t))
        dev = float(np.max(np.abs(pp[k](roots)))) / polynomials.spectrum_scale(pp[k], lo, hi)
        rows.append((seed, "root_P", k, "", dev))
        p_root = max(p_root, dev)
    checks += [Check("root_R", r_root, R_ROOT_TOL), Check("root_P", p_root, P_ROOT_TOL)]

    scale = np.sqrt(r0sq)
    mat = 0.0
    for k in range(k_max + 1):
        d = float(np.linalg.norm(polynomials.poly_apply(a, rp[k], b) - rs[k])) / scale
        rows.append((seed, "matrix_R", k, "", d))
        mat = max(mat, d)
    for k in range(k_max):
        d = float(np.linalg.norm(polynomials.poly_apply(a, pp[k], b) - ps[k])) / scale
        rows.append((seed, "matrix_P", k, "", d))
        mat = max(mat, d)
    checks.append(Check("matrix_polynomial", mat, MATRIX_POLY_TOL))
    return rows, checks, rp + pp


def run_polys(cfg: ExperimentConfig) -> Report:
    """Duality, root and matrix-polynomial checks for R_k and P_k."""
    results = _map(cfg, _polys_one, [(cfg, s) for s in _seeds(cfg)])
    rows = [r for res in results for r in res[0]]
    checks = _worst([c for res in results for c in res[1]])
    if cfg.dump is not None:
        Path(cfg.dump).write_text(polynomials.dump_polys([p for res in results for p in res[2]]))
    return Report(("seed", "check", "i", "j", "deviation"), rows, checks)


def run_rates(cfg: ExperimentConfig) -> Report:
    """Two-term and k-term error ratios with the Kantorovich and textbook bounds as checks."""
    if cfg.method not in ("cg", "sd"):
        raise InvalidInputError(f"unknown method {cfg.method!r}")
    a = load_matrix(cfg, cfg.seed)
    kind = cfg.rhs
    if kind == "auto":
        kind = "random" if cfg.random_source else "worst"
    if kind not in ("random", "worst"):
        raise InvalidInputError(f"unknown rhs {cfg.rhs!r}")
    b = _rhs(a, cfg.seed, kind)
    if cfg.method == "cg":
        table = convergence.cg_ratio_table(a, b, max_iter=cfg.max_iter)
    else:
        table = convergence.sd_ratio_table(a, b, max_iter=cfg.max_iter)
    log.info("rates: %d rows, overshoot=%s", len(table.rows), table.overshoot)
    worst2 = max((r.ratio2 - table.q_bound for r in table.rows), default=-np.inf)
    checks = [
        Check("two_term_bound_excess", worst2, 1e-10),
        Check("k_term_bound_excess", table.bound_excess, convergence.BOUND_SLACK),
    ]
    rows = [(r.k, r.ratio2, r.ratio_k, table.q_bound, table.sqrt_q_bound, r.bound_rhs) for r in table.rows]
    return Report(("k", "ratio2", "ratioK", "q_bound", "sqrt_q_bound", "textbook_bound_rhs"), rows, checks)


def run_fem(cfg: ExperimentConfig) -> Report:
    """Solution table by default; refinement study or operator comparison when requested."""
    n = 15 if cfg.n is None else cfg.n
    load = fem.get_load(cfg.load)
    if cfg.refine is not None:
        rows = fem.refinement_study(n, cfg.c, cfg.load, cfg.refine, rel_tol=min(cfg.tol, 1e-12), parallel=cfg.parallel)
        ratios = [r.ratio for r in rows if r.ratio is not None]
        lo, hi = REFINE_RATIO
        miss = max((max(lo - x, x - hi) for x in ratios), default=-np.inf)
        return Report(
            ("n", "h", "l2_error", "ratio", "iterations"),
            [(r.n, r.h, r.l2_error, r.ratio, r.iterations) for r in rows],
            [Check("refinement_ratio_outside", miss, 0.0)],
        )
    sys = fem.assemble_1d(n, cfg.c)
    F = fem.load_vector(load.f, sys)
    if cfg.compare_operator:
        pcg = fem.pcg_solve(sys.a, F, lambda r: fem.riesz_apply(sys, r), rel_tol=cfg.tol, max_iter=cfg.max_iter)
        op = fem.operator_cg_solve(sys, F, rel_tol=cfg.tol, max_iter=cfg.max_iter)
        devs = fem.trace_deviation(pcg, op)
        disc = fem.table_alpha_discrepancy(sys, F, rel_tol=cfg.tol)
        rows = [(name, v) for name, v in devs.items()]
        rows += [("table_alpha_gap", disc.max_rel_gap), ("table_alpha_iterate_deviation", disc.iterate_deviation)]
        return Report(("field", "deviation"), rows, [Check("operator_vs_pcg", max(devs.values()), FEM_TRACE_TOL)])
    trace = fem.pcg_solve(sys.a, F, lambda r: fem.riesz_apply(sys, r), rel_tol=cfg.tol, max_iter=cfg.max_iter)
    exact = load.exact(cfg.c)
    x = sys.h * np.arange(n + 2)
    uh = np.concatenate(([0.0], trace.u, [0.0]))
    ue = np.asarray(exact(x), dtype=float)
    rows = [(xi, a, b, a - b) for xi, a, b in zip(x, uh, ue)]
    resid = float(np.linalg.norm(F - sys.a @ trace.u) / np.linalg.norm(F)) if np.any(F) else 0.0
    return Report(("x", "u_h", "u_exact", "error"), rows, [Check("relative_residual", resid, max(cfg.tol, 1e-10) * 10)])


RUNNERS = {
    "equivalence": run_equivalence,
    "lanczos": run_lanczos,
    "polys": run_polys,
    "rates": run_rates,
    "fem": run_fem,
}

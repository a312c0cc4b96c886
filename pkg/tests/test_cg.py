import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from krylovlab.cg import (
    cg_solve,
    coefficient_diagnostics,
    conjugacy_defect,
    explicit_inverse,
    line_search_step,
    objective,
    orthogonality_defect,
    write_trace_csv,
)
from krylovlab.errors import DegenerateDirectionError, IncompleteBasisError, InvalidInputError
from krylovlab.linalg import a_norm, random_spd, solve_spd, spd_from_spectrum

from conftest import random_system


class TestLineSearch:
    def test_identity(self):
        ls = line_search_step(np.eye(2), [0, 0], [1, 0], [1, 0])
        assert ls.alpha == 1.0
        assert ls.x_next.tolist() == [1.0, 0.0]
        assert ls.j_drop == 0.5

    def test_hand_case(self):
        ls = line_search_step(np.diag([1.0, 3.0]), [0, 0], [1, 1], [1, 1])
        assert ls.alpha == 0.5
        np.testing.assert_allclose(ls.x_next, [0.5, 0.5])
        assert ls.j_drop == 0.5

    def test_orthogonal_direction(self):
        ls = line_search_step(np.diag([1.0, 3.0]), [0, 0], [1, -1], [1, 1])
        assert ls.alpha == 0.0
        assert ls.j_drop == 0.0

    def test_zero_direction(self):
        with pytest.raises(DegenerateDirectionError):
            line_search_step(np.eye(2), [0, 0], [0, 0], [1, 1])

    def test_drop_matches_objective(self):
        a, b = random_system(6, 50, 3)
        x = np.ones(6)
        d = np.arange(6.0)
        ls = line_search_step(a, x, d, b)
        assert objective(a, b, x) - objective(a, b, ls.x_next) == pytest.approx(ls.j_drop, rel=1e-10)


class TestCgSolve:
    def test_identity_one_step(self):
        tr = cg_solve(np.eye(2), [1, 2])
        assert tr.iterations == 1
        assert tr.steps[0].alpha == 1.0
        np.testing.assert_allclose(tr.x, [1, 2])

    def test_hand_trace(self, hand_system):
        a, b = hand_system
        tr = cg_solve(a, b)
        s0, s1, s2 = tr.steps
        assert s0.alpha == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(s1.x, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(s1.r, [0.5, -0.5], atol=1e-12)
        assert s1.beta == pytest.approx(0.25, abs=1e-12)
        np.testing.assert_allclose(s1.p, [0.75, -0.25], atol=1e-12)
        assert s1.alpha == pytest.approx(2 / 3, abs=1e-12)
        np.testing.assert_allclose(s2.x, [1, 1 / 3], atol=1e-12)
        np.testing.assert_allclose(s2.r, [0, 0], atol=1e-12)
        assert s2.p is None and tr.converged
        np.testing.assert_allclose(s2.x, solve_spd(a, b), atol=1e-12)

    def test_three_eigenvalues_three_steps(self):
        a = spd_from_spectrum([1, 3, 10], seed=42)
        b = np.random.default_rng(1).standard_normal(3)
        tr = cg_solve(a, b)
        assert tr.converged and tr.iterations <= 3
        np.testing.assert_allclose(tr.x, solve_spd(a, b), atol=1e-8)

    def test_zero_rhs(self):
        tr = cg_solve(np.eye(3), np.zeros(3))
        assert tr.converged and tr.iterations == 0

    def test_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            cg_solve(np.eye(2), [1, 1], rel_tol=0)
        with pytest.raises(InvalidInputError):
            cg_solve(np.eye(2), [1, 1, 1])

    def test_max_iter_stops(self):
        a, b = random_system(20, 1e3, 0)
        tr = cg_solve(a, b, max_iter=3)
        assert tr.iterations == 3 and not tr.converged

    def test_residual_invariant(self):
        a, b = random_system(20, 100, 2)
        for s in cg_solve(a, b).steps:
            assert np.linalg.norm(b - a.dense @ s.x - s.r) <= 1e-10 * np.linalg.norm(b)

    def test_trace_csv(self, hand_system):
        a, b = hand_system
        text = write_trace_csv(cg_solve(a, b), a=a, x_star=solve_spd(a, b))
        lines = text.splitlines()
        assert lines[0] == "k,rNorm,alpha,beta,aNormError"
        assert len(lines) == 4


class TestCgProperties:
    @given(st.integers(2, 30), st.floats(1, 1e4), st.integers(0, 10_000))
    def test_orthogonality_and_conjugacy(self, n, cond, seed):
        a, b = random_system(n, cond, seed)
        tr = cg_solve(a, b, max_iter=n)
        assert orthogonality_defect(tr.rs[:-1]) <= 1e-6
        assert conjugacy_defect(a, tr.ps) <= 1e-6

    @given(st.integers(1, 40), st.floats(1, 100), st.integers(0, 10_000))
    def test_finite_termination(self, n, cond, seed):
        a, b = random_system(n, cond, seed)
        tr = cg_solve(a, b, rel_tol=1e-10)
        assert tr.converged and tr.iterations <= n

    @given(st.integers(2, 25), st.floats(1, 1e3), st.integers(0, 10_000))
    def test_monotone_a_norm_error(self, n, cond, seed):
        a, b = random_system(n, cond, seed)
        x_star = solve_spd(a, b)
        tr = cg_solve(a, b, rel_tol=1e-8)
        errs = [a_norm(a, s.x - x_star) for s in tr.steps]
        for k, s in enumerate(tr.steps[:-1]):
            if s.r_norm > 0:
                assert errs[k + 1] < errs[k]

    @given(st.integers(1, 25), st.integers(0, 10_000))
    def test_solution_is_sum_of_steps(self, n, seed):
        a, b = random_system(n, 100, seed)
        tr = cg_solve(a, b)
        total = sum(s.alpha * s.p for s in tr.steps if s.p is not None)
        x_star = solve_spd(a, b)
        assert np.linalg.norm(tr.x - total) <= 1e-9 * np.linalg.norm(x_star)


class TestDiagnostics:
    def test_identity(self):
        d = coefficient_diagnostics(cg_solve(np.eye(3), [1, 2, 3]), np.eye(3))
        assert all(v == 0 for v in d.values())

    def test_hand_case(self, hand_system):
        a, b = hand_system
        d = coefficient_diagnostics(cg_solve(a, b), a, b)
        assert max(d.values()) <= 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_random(self, seed):
        a, b = random_system(30, 100, seed)
        d = coefficient_diagnostics(cg_solve(a, b), a, b)
        assert d["beta"] <= 1e-6 and d["alpha"] <= 1e-6

    @pytest.mark.parametrize("seed", range(10))
    def test_r0_form_small_n(self, seed):
        # the r_0 form loses digits as ||r_k|| / ||r_0|| shrinks, so it is checked at small n
        a, b = random_system(10, 100, seed)
        assert coefficient_diagnostics(cg_solve(a, b), a, b)["alpha_r0"] <= 1e-6


class TestExplicitInverse:
    def test_identity(self):
        np.testing.assert_allclose(explicit_inverse(np.eye(3), np.eye(3)).dense, np.eye(3))

    def test_hand_case(self, hand_system):
        a, b = hand_system
        m = explicit_inverse(a, cg_solve(a, b).ps)
        np.testing.assert_allclose(m.dense, np.diag([1, 1 / 3]), atol=1e-14)

    def test_random(self):
        a, b = random_system(10, 100, 5)
        m = explicit_inverse(a, cg_solve(a, b).ps)
        assert np.max(np.abs(m.dense @ a.dense - np.eye(10))) <= 1e-7

    def test_incomplete(self):
        with pytest.raises(IncompleteBasisError):
            explicit_inverse(np.eye(3), np.eye(3)[:2])
        with pytest.raises(IncompleteBasisError):
            explicit_inverse(np.eye(2), [[1, 0], [1, 1]])

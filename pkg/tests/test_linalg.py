import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from krylovlab.errors import DimensionMismatchError, InvalidInputError, NotPositiveDefiniteError
from krylovlab.lanczos import lanczos_process
from krylovlab.linalg import (
    LdlFactors,
    SpdMatrix,
    SymMatrix,
    Tridiag,
    a_norm,
    det_from_ldlt,
    format_matrix_text,
    ldlt_factor,
    ldlt_solve,
    parse_matrix_text,
    parse_spectrum,
    random_spd,
    solve_spd,
    spd_from_spectrum,
    sturm_count,
    tridiag_eigenvalues,
)


class TestSpdFromSpectrum:
    def test_one_by_one(self):
        assert spd_from_spectrum([5.0], seed=3).dense.tolist() == [[5.0]]

    def test_identity_spectrum(self):
        np.testing.assert_allclose(spd_from_spectrum([1, 1, 1], seed=7).dense, np.eye(3), atol=1e-14)

    def test_round_trip_through_lanczos(self):
        a = spd_from_spectrum([1, 3, 10], seed=42)
        r0 = np.random.default_rng(0).standard_normal(3)
        data = lanczos_process(a, r0)
        np.testing.assert_allclose(tridiag_eigenvalues(data.t), [1, 3, 10], atol=1e-8)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            spd_from_spectrum([1.0, 0.0], seed=0)

    def test_deterministic(self):
        assert np.array_equal(spd_from_spectrum([1, 2, 5], 9).dense, spd_from_spectrum([1, 2, 5], 9).dense)

    @pytest.mark.parametrize("seed", range(5))
    def test_eigenvalues_recovered(self, seed):
        lam = np.sort(np.random.default_rng(seed).uniform(0.5, 50, 8))
        a = spd_from_spectrum(lam, seed)
        np.testing.assert_allclose(np.linalg.eigvalsh(a.dense), lam, rtol=1e-8)


class TestLdlt:
    def test_one_by_one(self):
        f = ldlt_factor(SymMatrix.from_dense([[4.0]]))
        assert f.l_matrix().tolist() == [[1.0]]
        assert f.diag.tolist() == [4.0]

    def test_tridiag_hand(self):
        f = ldlt_factor(Tridiag([2, 2], [1]))
        assert f.lower.tolist() == [0.5]
        np.testing.assert_allclose(f.diag, [2, 1.5])

    def test_not_positive_definite_pivot_index(self):
        with pytest.raises(NotPositiveDefiniteError) as info:
            ldlt_factor(SymMatrix.from_dense([[1.0, 2.0], [2.0, 1.0]]))
        assert info.value.pivot_index == 1

    def test_solve_identity(self):
        f = ldlt_factor(SymMatrix.from_dense(np.eye(2)))
        np.testing.assert_allclose(ldlt_solve(f, [3, 4]), [3, 4])

    def test_solve_diagonal(self):
        f = ldlt_factor(SymMatrix.from_dense(np.diag([2.0, 5.0])))
        np.testing.assert_allclose(ldlt_solve(f, [2, 5]), [1, 1])

    def test_solve_tridiag(self):
        f = ldlt_factor(Tridiag([2, 2], [1]))
        np.testing.assert_allclose(ldlt_solve(f, [1, 0]), [2 / 3, -1 / 3], atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("n", [1, 5, 20])
    def test_reconstruct(self, n, seed):
        a = random_spd(n, 1e3, seed)
        f = ldlt_factor(a)
        assert np.max(np.abs(f.reconstruct() - a.dense)) <= 1e-10 * a.max_abs()

    def test_solve_matches_numpy(self):
        a = random_spd(12, 100, 4)
        b = np.arange(12.0)
        np.testing.assert_allclose(solve_spd(a, b), np.linalg.solve(a.dense, b), rtol=1e-10)


class TestDeterminant:
    def test_values(self):
        assert det_from_ldlt(LdlFactors(np.zeros(0), np.array([4.0]))) == 4.0
        assert det_from_ldlt(ldlt_factor(SymMatrix.from_dense(np.diag([2.0, 5.0])))) == 10.0
        assert det_from_ldlt(ldlt_factor(Tridiag([2, 2], [1]))) == pytest.approx(3.0)


class TestTridiagEigenvalues:
    def test_examples(self):
        np.testing.assert_allclose(tridiag_eigenvalues(Tridiag([2], [])), [2])
        np.testing.assert_allclose(tridiag_eigenvalues(Tridiag([2, 2], [1])), [1, 3], atol=1e-14)
        np.testing.assert_allclose(tridiag_eigenvalues(Tridiag([0, 0, 0], [1, 1])), [-np.sqrt(2), 0, np.sqrt(2)], atol=1e-14)

    @given(
        st.lists(st.floats(-10, 10), min_size=1, max_size=12),
        st.integers(0, 2**31),
        st.floats(-12, 12),
    )
    def test_sturm_count_matches(self, diag, seed, mu):
        off = np.random.default_rng(seed).uniform(-3, 3, len(diag) - 1)
        t = Tridiag(diag, off)
        lam = tridiag_eigenvalues(t)
        if np.min(np.abs(lam - mu), initial=np.inf) < 1e-9:
            return
        assert sturm_count(t, mu) == int(np.sum(lam < mu))

    def test_agrees_with_numpy(self):
        rng = np.random.default_rng(1)
        t = Tridiag(rng.standard_normal(30), rng.standard_normal(29))
        np.testing.assert_allclose(tridiag_eigenvalues(t), np.linalg.eigvalsh(t.dense), atol=1e-12)


class TestANorm:
    def test_examples(self):
        assert a_norm(np.eye(2), [3, 4]) == 5.0
        assert a_norm(np.diag([1.0, 3.0]), [1, 1]) == 2.0
        assert a_norm(random_spd(4, 10, 0), np.zeros(4)) == 0.0


class TestTextFormats:
    def test_matrix_round_trip(self):
        a = random_spd(4, 10, 2)
        back = parse_matrix_text(format_matrix_text(a))
        assert np.array_equal(back.dense, a.dense)

    def test_matrix_text(self):
        m = parse_matrix_text("2\n4\n1 3\n")
        assert m.dense.tolist() == [[4, 1], [1, 3]]

    @pytest.mark.parametrize("text", ["", "x\n1\n", "2\n1\n", "2\n1\n1 2 3\n", "1\nabc\n"])
    def test_malformed_matrix(self, text):
        with pytest.raises((InvalidInputError, DimensionMismatchError)):
            parse_matrix_text(text)

    def test_certify_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            SpdMatrix.certify(parse_matrix_text("2\n1\n2 1\n"))

    def test_spectrum(self):
        np.testing.assert_allclose(parse_spectrum("1, 3,1e2"), [1, 3, 100])
        for bad in ["", "1,-2", "1,x", "0"]:
            with pytest.raises(InvalidInputError):
                parse_spectrum(bad)

    def test_nonsymmetric_rejected(self):
        with pytest.raises(InvalidInputError):
            SymMatrix.from_dense([[1.0, 2.0], [0.0, 1.0]])

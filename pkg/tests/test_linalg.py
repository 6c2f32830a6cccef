import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mfsoc.errors import NotSchurError, RankDeficientError
from mfsoc.linalg import (
    duplication_matrix,
    is_invertible,
    lsq_solve,
    min_eig_sym,
    smat,
    solve_stein,
    spectral_radius,
    svec,
    symmetrize,
)

from helpers import eig2_sym, random_schur, stein_series_oracle

BENCH_A = np.array([[0.08, 0.63], [0.39, 0.26]])
BENCH_Q = np.array([[2.00, -1.54], [-1.54, -0.12]])


def finite_floats(lo=-10.0, hi=10.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


packed_vectors = st.integers(min_value=1, max_value=5).flatmap(
    lambda n: hnp.arrays(float, n * (n + 1) // 2, elements=finite_floats())
)


class TestSvecSmat:
    def test_identity_packing(self):
        assert np.array_equal(svec(np.eye(2)), [1.0, 0.0, 1.0])
        assert svec(np.eye(3)).shape == (6,)

    @given(packed_vectors)
    def test_round_trip_is_bit_exact(self, packed):
        m = smat(packed)
        assert np.array_equal(m, m.T)
        assert np.array_equal(svec(m), packed)
        assert np.array_equal(smat(svec(m)), m)

    def test_symmetrize_option(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.array_equal(
            smat(svec(m, symmetrize_input=True)), [[0.0, 0.5], [0.5, 0.0]]
        )

    def test_rejects_asymmetric_without_flag(self):
        with pytest.raises(ValueError, match="not symmetric"):
            svec(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_non_square_and_non_finite(self):
        with pytest.raises(ValueError):
            svec(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            svec(np.array([[np.nan, 0.0], [0.0, 0.0]]))

    def test_smat_rejects_non_triangular_length(self):
        with pytest.raises(ValueError, match="triangular"):
            smat(np.zeros(4))

    @given(st.integers(min_value=1, max_value=5))
    def test_duplication_matrix_expands_packed_form(self, n):
        rng = np.random.default_rng(n)
        m = symmetrize(rng.uniform(-1, 1, (n, n)))
        d = duplication_matrix(n)
        assert np.array_equal(d @ svec(m), m.ravel())


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(4)) == pytest.approx(1.0, abs=1e-12)

    def test_nilpotent(self):
        assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) <= 1e-12

    def test_benchmark_matrix_against_quadratic_formula(self):
        # characteristic polynomial of BENCH_A: x^2 - 0.34 x - 0.2249
        root = (0.34 + np.sqrt(0.34**2 + 4 * 0.2249)) / 2
        assert spectral_radius(BENCH_A) == pytest.approx(root, rel=1e-12)
        assert spectral_radius(BENCH_A) == pytest.approx(0.6738, abs=5e-5)

    @given(
        hnp.arrays(float, (3, 3), elements=finite_floats()),
        st.floats(min_value=-4.0, max_value=4.0, allow_nan=False),
    )
    def test_scaling_homogeneity(self, m, alpha):
        base = spectral_radius(m)
        scaled = spectral_radius(alpha * m)
        assert scaled == pytest.approx(abs(alpha) * base, rel=1e-8, abs=1e-8)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            spectral_radius(np.array([[np.inf, 0.0], [0.0, 0.0]]))


class TestSolveStein:
    def test_zero_dynamics_returns_forcing(self):
        s = symmetrize(np.arange(9.0).reshape(3, 3))
        assert np.allclose(solve_stein(np.zeros((3, 3)), s), s, atol=1e-14)

    def test_scalar_geometric_series(self):
        p = solve_stein(np.array([[0.5]]), np.array([[1.0]]))
        assert p[0, 0] == pytest.approx(4.0 / 3.0, rel=1e-13)

    def test_benchmark_closed_loop_matches_series_oracle(self):
        k0 = np.array([[0.05, -0.91]])
        b = np.array([[0.10], [0.16]])
        acl = BENCH_A - b @ k0
        s = k0.T @ np.array([[-1.74]]) @ k0 + BENCH_Q
        p = solve_stein(acl, s)
        assert np.allclose(p, stein_series_oracle(acl, s), atol=1e-10)
        frozen = np.array(
            [[1.44504877355, -2.617142016482], [-2.617142016482, -2.801234808923]]
        )
        assert np.allclose(p, frozen, atol=1e-9)

    def test_hundred_random_cases_satisfy_equation_and_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 6))
            a = random_schur(rng, n, radius=float(rng.uniform(0.1, 0.95)))
            s = symmetrize(rng.uniform(-2, 2, (n, n)))
            p = solve_stein(a, s)
            assert np.abs(p - a.T @ p @ a - s).max() <= 1e-10 * max(
                1.0, np.abs(p).max()
            )
            assert np.abs(p - stein_series_oracle(a, s)).max() <= 1e-9

    def test_against_scipy_bilinear_solver(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            a = random_schur(rng, n, radius=0.9)
            s = symmetrize(rng.uniform(-1, 1, (n, n)))
            ours = solve_stein(a, s)
            ref = scipy.linalg.solve_discrete_lyapunov(a.T, s, method="bilinear")
            assert np.abs(ours - ref).max() <= 1e-9

    def test_refuses_non_schur(self):
        with pytest.raises(NotSchurError):
            solve_stein(np.eye(2), np.eye(2))

    def test_symmetry_of_result(self):
        rng = np.random.default_rng(3)
        a = random_schur(rng, 4, radius=0.8)
        s = symmetrize(rng.uniform(-1, 1, (4, 4)))
        p = solve_stein(a, s)
        assert np.array_equal(p, p.T)


class TestEigsAndRank:
    def test_min_eig_identity(self):
        assert min_eig_sym(np.eye(3)) == pytest.approx(1.0, abs=1e-12)

    def test_min_eig_singular_diag(self):
        assert min_eig_sym(np.diag([1.0, 0.0])) == pytest.approx(0.0, abs=1e-14)

    def test_min_eig_benchmark_weight_matrix(self):
        # quadratic-formula oracle for the bundled indefinite state weight
        lo, hi = eig2_sym(2.00, -1.54, -0.12)
        assert min_eig_sym(BENCH_Q) == pytest.approx(lo, rel=1e-12)
        assert min_eig_sym(BENCH_Q) == pytest.approx(-0.9295453992882869, rel=1e-12)
        # the sign-flipped variant is the one with the often-quoted -0.7442
        lo_flip, _ = eig2_sym(2.00, -1.54, 0.12)
        assert lo_flip == pytest.approx(-0.7442172818150258, rel=1e-12)

    def test_is_invertible(self):
        assert is_invertible(np.eye(3))
        assert not is_invertible(np.diag([1.0, 0.0]))
        assert not is_invertible(np.zeros((2, 2)))
        assert is_invertible(np.diag([1.0, 1e-6]), tol=1e-9)
        assert not is_invertible(np.diag([1.0, 1e-12]), tol=1e-9)


class TestLsqSolve:
    def test_identity_system(self):
        b = np.array([1.0, -2.0, 3.0])
        x, resid = lsq_solve(np.eye(3), b)
        assert np.allclose(x, b, atol=1e-14)
        assert resid <= 1e-12

    def test_stacked_consistent_overdetermined(self):
        a = np.vstack([np.eye(2), np.eye(2)])
        b = np.array([1.0, 2.0, 1.0, 2.0])
        x, resid = lsq_solve(a, b)
        assert np.allclose(x, [1.0, 2.0], atol=1e-13)
        assert resid <= 1e-12

    def test_recovers_planted_solution(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(-1, 1, (20, 6))
        x_true = rng.uniform(-1, 1, 6)
        x, _ = lsq_solve(a, a @ x_true)
        assert np.abs(x - x_true).max() <= 1e-10

    @settings(max_examples=25)
    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10**6))
    def test_square_nonsingular_equals_direct_solve(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 1, (n, n)) + 2 * np.eye(n)
        b = rng.uniform(-1, 1, n)
        x, _ = lsq_solve(a, b)
        assert np.abs(x - np.linalg.solve(a, b)).max() <= 1e-9

    def test_rank_deficiency_reports_numerical_rank(self):
        a = np.zeros((5, 3))
        a[:, 0] = 1.0
        a[:, 1] = 1.0  # duplicate column
        a[:, 2] = np.arange(5.0)
        with pytest.raises(RankDeficientError) as err:
            lsq_solve(a, np.ones(5))
        assert err.value.rank == 2
        assert err.value.needed == 3

    def test_fewer_rows_than_unknowns_is_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            lsq_solve(np.ones((2, 4)), np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            lsq_solve(np.eye(3), np.ones(2))

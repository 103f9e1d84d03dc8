from fractions import Fraction

import numpy as np
import pytest

from ukan.bspline import (basis_matrix, basis_row, bspline_basis,
                          cox_de_boor_oracle, eval_segment, locate, monomials)
from ukan.errors import DomainError


class TestBasisMatrix:
    def test_degree3_exact(self):
        M = basis_matrix(3)
        expected = [
            [1, 4, 1, 0],
            [-3, 0, 3, 0],
            [3, -6, 3, 0],
            [-1, 3, -3, 1],
        ]
        for i in range(4):
            for j in range(4):
                assert M.rational[i][j] == Fraction(expected[i][j], 6)

    def test_degree0(self):
        assert basis_matrix(0).rational == ((Fraction(1),),)

    def test_degree1(self):
        M = basis_matrix(1)
        assert M.rational == ((Fraction(1), Fraction(0)), (Fraction(-1), Fraction(1)))

    def test_degree2(self):
        M = basis_matrix(2)
        expected = [[1, 1, 0], [-2, 2, 0], [1, -2, 1]]
        for i in range(3):
            for j in range(3):
                assert M.rational[i][j] == Fraction(expected[i][j], 2)

    @pytest.mark.parametrize("k", range(8))
    def test_low_degrees_match_oracle_fit(self, k):
        # fit segment polynomials of the recursive oracle at K+1 points and
        # compare monomial coefficients with the matrix columns
        K = k + 1
        us = np.linspace(0.05, 0.95, K)
        V = np.vander(us, K, increasing=True)
        M = basis_matrix(k).floats
        for col in range(K):
            j = col - k  # basis index whose restriction to [0,1) is this column
            samples = np.array([bspline_basis(u, j, k) for u in us])
            fit = np.linalg.solve(V, samples)
            np.testing.assert_allclose(fit, M[:, col], atol=1e-9)

    def test_row_sums(self):
        for k in range(11):
            M = basis_matrix(k)
            sums = [sum(row) for row in M.rational]
            assert sums[0] == 1
            assert all(s == 0 for s in sums[1:])

    def test_float_rendering_matches_rationals(self):
        for k in range(11):
            M = basis_matrix(k)
            exact = np.array([[float(c) for c in row] for row in M.rational])
            np.testing.assert_array_equal(M.floats, exact)

    def test_unsupported_degree(self):
        with pytest.raises(DomainError):
            basis_matrix(11)


class TestLocate:
    def test_basic(self):
        loc = locate(2.5, 1.0)
        assert loc.g_id == 2 and loc.u == 0.5

    def test_negative_floor(self):
        loc = locate(-0.25, 0.5)
        assert loc.g_id == -1 and loc.u == 0.5

    def test_wide_cell(self):
        loc = locate(7.0, 2.0)
        assert loc.g_id == 3 and loc.u == 0.5

    def test_knot_belongs_right(self):
        loc = locate(3.0, 1.0)
        assert loc.g_id == 3 and loc.u == 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            locate(float("nan"), 1.0)
        with pytest.raises(DomainError):
            locate(1.0, 0.0)
        with pytest.raises(DomainError):
            locate(1.0, -2.0)


class TestBasisRow:
    def test_degree3_at_zero(self):
        row = basis_row(0.0, basis_matrix(3))
        np.testing.assert_allclose(row, np.array([1, 4, 1, 0]) / 6.0, rtol=1e-15)

    def test_partition_of_unity(self, rng):
        for k in range(8):
            M = basis_matrix(k)
            for u in rng.uniform(0, 1, 200):
                assert abs(basis_row(float(u), M).sum() - 1.0) < 1e-12

    def test_nonnegative(self, rng):
        for k in range(8):
            M = basis_matrix(k)
            for u in rng.uniform(0, 1, 100):
                assert basis_row(float(u), M).min() >= -1e-15

    def test_derivative_matches_fd(self):
        M = basis_matrix(3)
        u, h = 0.3, 1e-6
        fd = (basis_row(u + h, M) - basis_row(u - h, M)) / (2 * h)
        d1 = basis_row(u, M, d=1)
        assert np.max(np.abs(d1 - fd)) / np.max(np.abs(fd)) < 1e-7

    def test_derivative_exhausted(self):
        assert np.all(basis_row(0.5, basis_matrix(2), d=3) == 0.0)

    def test_u_out_of_range(self):
        with pytest.raises(DomainError):
            basis_row(1.0, basis_matrix(3))
        with pytest.raises(DomainError):
            basis_row(-0.1, basis_matrix(3))


class TestEvalSegment:
    def test_constant_reproduction(self, rng):
        for k in range(6):
            M = basis_matrix(k)
            for u in rng.uniform(0, 1, 20):
                assert abs(eval_segment(float(u), np.full(k + 1, 2.5), M) - 2.5) < 1e-12

    def test_degree3_first_row_weight(self):
        assert eval_segment(0.0, [0.0, 6.0, 0.0, 0.0], basis_matrix(3)) == pytest.approx(4.0)

    def test_matches_oracle_random(self, rng):
        for _ in range(1000):
            k = int(rng.integers(0, 6))
            dg = float(rng.uniform(0.1, 3.0))
            x = float(rng.uniform(-10, 10))
            loc = locate(x, dg)
            c = rng.normal(size=k + 1)
            cmap = {loc.g_id - k + i: c[i] for i in range(k + 1)}
            a = eval_segment(loc.u, c, basis_matrix(k))
            b = cox_de_boor_oracle(x, dg, cmap, k)
            assert abs(a - b) < 1e-10


class TestOracle:
    def test_hat_function(self):
        # degree 1, single unit coefficient at j=0: hat peaking at x=delta
        for dg in (1.0, 0.5):
            coeffs = {-1: 0.0, 0: 1.0, 1: 0.0}
            assert cox_de_boor_oracle(0.5 * dg, dg, coeffs, 1) == pytest.approx(0.5)
            assert cox_de_boor_oracle(1.0 * dg, dg, coeffs, 1) == pytest.approx(1.0)
            assert cox_de_boor_oracle(1.5 * dg, dg, coeffs, 1) == pytest.approx(0.5)

    def test_constant_coefficients(self, rng):
        for k in range(5):
            coeffs = {j: 3.0 for j in range(-20, 20)}
            for x in rng.uniform(-5, 5, 20):
                assert cox_de_boor_oracle(float(x), 0.7, coeffs, k) == pytest.approx(3.0)

    def test_missing_coefficient(self):
        with pytest.raises(IndexError):
            cox_de_boor_oracle(0.5, 1.0, {0: 1.0}, 2)


class TestSplineInvariants:
    def test_continuity_across_cells(self, rng):
        # value and derivatives up to k-1 agree at the shared knot
        for k in range(1, 8):
            M = basis_matrix(k)
            coeffs = rng.normal(size=k + 2)
            left_w, right_w = coeffs[:-1], coeffs[1:]
            for d in range(k):
                U1 = monomials(1.0, k, d)
                left = float(U1 @ M.floats @ left_w)
                right = eval_segment(0.0, right_w, M, d)
                assert abs(left - right) < 1e-9

    def test_translation_invariance(self, rng):
        k, dg = 3, 0.75
        coeffs = rng.normal(size=12)
        for x in rng.uniform(0.0, (12 - k - 1) * dg - dg, 30):
            loc = locate(float(x), dg)
            shifted = locate(float(x) + dg, dg)
            assert shifted.g_id == loc.g_id + 1
            assert shifted.u == pytest.approx(loc.u, abs=1e-9)
            w = coeffs[loc.g_id:loc.g_id + k + 1]
            a = eval_segment(loc.u, w, basis_matrix(k))
            b = eval_segment(shifted.u, coeffs[shifted.g_id:shifted.g_id + k + 1],
                             basis_matrix(k))
            # shifting the window by one cell at x+dg uses the same u and matrix
            np.testing.assert_allclose(
                basis_row(loc.u, basis_matrix(k)),
                basis_row(shifted.u, basis_matrix(k)), atol=1e-12)

    def test_linear_precision_greville(self, rng):
        # coefficients at the Greville abscissae reproduce f(x) = x
        for k in range(1, 6):
            dg = 0.6
            greville = {j: dg * (j + (k + 1) / 2.0) for j in range(-30, 30)}
            for x in rng.uniform(-5, 5, 50):
                loc = locate(float(x), dg)
                w = [greville[loc.g_id - k + i] for i in range(k + 1)]
                assert abs(eval_segment(loc.u, w, basis_matrix(k)) - x) < 1e-10

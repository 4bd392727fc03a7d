"""Masked least squares and the smallest-singular-value estimate."""
import numpy as np
import pytest

from aap.lsq import RANK_RTOL, RankDeficient, estimate_sigma_min, qr_masked_solve

from oracles import lstsq_normal_equations, sigma_min_svd


class TestQrMaskedSolve:
    def test_unmasked_matches_normal_equations(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            l1 = rng.integers(4, 30)
            cols = int(rng.integers(1, min(l1, 8) + 1))
            window = np.zeros((l1, 10), order="F")
            window[:, :cols] = rng.standard_normal((l1, cols))
            rhs = rng.standard_normal(l1)
            alpha, r = qr_masked_solve(window, rhs, None, cols)
            expected = lstsq_normal_equations(window[:, :cols], rhs)
            np.testing.assert_allclose(alpha, expected, rtol=1e-9, atol=1e-11)
            assert r.shape == (cols, cols)

    def test_masked_matches_restricted_normal_equations(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            l1 = int(rng.integers(8, 30))
            cols = int(rng.integers(1, 5))
            rows = np.sort(
                rng.choice(l1, size=int(rng.integers(cols, l1 + 1)), replace=False)
            )
            window = rng.standard_normal((l1, cols))
            rhs = rng.standard_normal(l1)
            alpha, _ = qr_masked_solve(window, rhs, rows, cols)
            expected = lstsq_normal_equations(window[rows][:, :cols], rhs[rows])
            np.testing.assert_allclose(alpha, expected, rtol=1e-9, atol=1e-11)

    def test_window_not_modified(self):
        rng = np.random.default_rng(2)
        window = rng.standard_normal((12, 4))
        copy = window.copy()
        qr_masked_solve(window, rng.standard_normal(12), None, 3)
        np.testing.assert_array_equal(window, copy)

    def test_r_factor_is_upper_triangular(self):
        rng = np.random.default_rng(3)
        window = rng.standard_normal((15, 5))
        _, r = qr_masked_solve(window, rng.standard_normal(15), None, 5)
        np.testing.assert_array_equal(r, np.triu(r))

    def test_exact_solution_when_rhs_in_range(self):
        rng = np.random.default_rng(4)
        window = rng.standard_normal((10, 3))
        coeff = np.array([1.5, -2.0, 0.25])
        rhs = window @ coeff
        alpha, _ = qr_masked_solve(window, rhs, None, 3)
        np.testing.assert_allclose(alpha, coeff, rtol=1e-12, atol=1e-12)

    def test_duplicate_column_raises(self):
        rng = np.random.default_rng(5)
        col = rng.standard_normal(10)
        window = np.column_stack([col, col])
        with pytest.raises(RankDeficient):
            qr_masked_solve(window, rng.standard_normal(10), None, 2)

    def test_near_duplicate_column_raises(self):
        rng = np.random.default_rng(6)
        col = rng.standard_normal(10)
        window = np.column_stack([col, col * (1.0 + 1e-16)])
        with pytest.raises(RankDeficient):
            qr_masked_solve(window, rng.standard_normal(10), None, 2)

    def test_fewer_rows_than_columns_rejected(self):
        window = np.ones((5, 3))
        with pytest.raises(ValueError):
            qr_masked_solve(window, np.ones(5), np.array([0, 1]), 3)

    def test_cols_out_of_range(self):
        window = np.ones((5, 3))
        with pytest.raises(ValueError):
            qr_masked_solve(window, np.ones(5), None, 0)
        with pytest.raises(ValueError):
            qr_masked_solve(window, np.ones(5), None, 4)


class TestEstimateSigmaMin:
    def test_diagonal_factor_is_exact(self):
        r = np.diag([4.0, 2.0, 0.5])
        # On a diagonal matrix inverse iteration locks onto the smallest
        # entry; three sweeps are plenty for a 8x spectral gap.
        est = estimate_sigma_min(r, 3)
        assert est == pytest.approx(0.5, rel=1e-5)

    def test_estimate_is_upper_bound(self):
        rng = np.random.default_rng(7)
        for trial in range(50):
            c = int(rng.integers(1, 8))
            mat = rng.standard_normal((20, c))
            r = np.linalg.qr(mat, mode="reduced")[1]
            truth = sigma_min_svd(r)
            for sweeps in (1, 2, 3, 4, 5):
                est = estimate_sigma_min(r, sweeps)
                assert est >= truth * (1.0 - 1e-10)

    def test_estimate_nonincreasing_in_sweeps(self):
        rng = np.random.default_rng(8)
        for trial in range(20):
            mat = rng.standard_normal((20, 6))
            r = np.linalg.qr(mat, mode="reduced")[1]
            values = [estimate_sigma_min(r, s) for s in (1, 2, 3, 4, 5)]
            for lo, hi in zip(values[1:], values[:-1]):
                assert lo <= hi * (1.0 + 1e-12)

    def test_accurate_under_spectral_gap(self):
        # With sigma_min separated from the rest of the spectrum
        # (sigma_min / sigma_2nd <= 0.5) three inverse-power sweeps land
        # within 10% of the SVD value in at least 95 of 100 seeded cases.
        rng = np.random.default_rng(9)
        hits = 0
        for trial in range(100):
            svals = np.sort(rng.uniform(1.0, 5.0, size=10))[::-1]
            svals[-1] = svals[-2] * rng.uniform(0.1, 0.5)
            u = np.linalg.qr(rng.standard_normal((10, 10)))[0]
            v = np.linalg.qr(rng.standard_normal((10, 10)))[0]
            r = np.linalg.qr((u * svals) @ v.T, mode="reduced")[1]
            truth = sigma_min_svd(r)
            est = estimate_sigma_min(r, 3)
            if abs(est - truth) <= 0.1 * truth:
                hits += 1
        assert hits >= 95

    def test_singular_factor_raises(self):
        r = np.diag([1.0, 0.0])
        with pytest.raises(RankDeficient):
            estimate_sigma_min(r, 3)

    def test_threshold_scales_with_magnitude(self):
        r = np.diag([1.0, RANK_RTOL / 10.0])
        with pytest.raises(RankDeficient):
            estimate_sigma_min(r, 3)

    def test_sweep_count_validated(self):
        r = np.eye(2)
        with pytest.raises(ValueError):
            estimate_sigma_min(r, 0)
        with pytest.raises(ValueError):
            estimate_sigma_min(r, 6)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            estimate_sigma_min(np.ones((3, 2)), 2)

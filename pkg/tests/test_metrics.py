import math
import warnings

import numpy as np
import pytest

from reheatlab import (
    GaussianFit,
    ParameterError,
    fit_gaussian,
    frechet_distance,
    linear_slope_fit,
    paired_stats,
    penalty,
    powerlaw_fit,
    ssc,
)

# Matched quality scores of the same eight (method, budget) cells measured
# at two sample sizes; used as frozen inputs for the paired statistics.
SCORES_LARGE_N = [38.97, 21.88, 17.33, 15.28, 59.13, 29.40, 20.54, 15.80]
SCORES_SMALL_N = [39.79, 22.60, 18.09, 16.02, 59.93, 29.91, 20.89, 16.38]


class TestFitGaussian:
    def test_constant_samples_zero_covariance(self):
        fit = fit_gaussian(np.tile([2.0, -1.0], (50, 1)))
        assert np.allclose(fit.cov, 0.0, atol=1e-15)
        assert np.allclose(fit.mean, [2.0, -1.0])

    def test_standard_normal_mean_bound(self):
        rng = np.random.default_rng(0)
        fit = fit_gaussian(rng.standard_normal((100_000, 2)))
        assert np.all(np.abs(fit.mean) < 0.02)
        assert np.allclose(fit.cov, np.eye(2), atol=0.02)

    def test_affine_covariance(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5000, 2))
        A = np.array([[2.0, 0.5], [0.0, 1.5]])
        b = np.array([1.0, -3.0])
        base = fit_gaussian(x)
        moved = fit_gaussian(x @ A.T + b)
        assert np.allclose(moved.mean, A @ base.mean + b, atol=1e-12)
        assert np.allclose(moved.cov, A @ base.cov @ A.T, atol=1e-12)

    def test_insufficient_data(self):
        with pytest.raises(ParameterError):
            fit_gaussian(np.zeros((2, 2)))


def fit_1d(mu, var):
    return GaussianFit(mean=np.array([mu]), cov=np.array([[var]]), n=1000)


class TestFrechetDistance:
    def test_identical_fits_zero(self):
        a = fit_1d(0.3, 2.0)
        assert frechet_distance(a, a) == 0.0

    def test_1d_mean_shift(self):
        # closed form sqrt((mu1-mu2)^2 + (s1-s2)^2) = 1
        assert frechet_distance(fit_1d(0, 1), fit_1d(1, 1)) == pytest.approx(1.0, abs=1e-12)

    def test_1d_scale_gap(self):
        # stds 1 vs 2: distance |1-2| = 1
        assert frechet_distance(fit_1d(0, 1), fit_1d(0, 4)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = fit_gaussian(rng.standard_normal((500, 3)))
        b = fit_gaussian(rng.standard_normal((500, 3)) @ np.diag([1.0, 2.0, 0.5]) + 0.3)
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-10)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(3)
        xa = rng.standard_normal((2000, 2)) @ np.array([[1.5, 0.2], [0.0, 0.7]])
        xb = rng.standard_normal((2000, 2)) + np.array([0.5, -0.2])
        q, r = np.linalg.qr(rng.standard_normal((2, 2)))
        q = q * np.sign(np.diag(r))
        d0 = frechet_distance(fit_gaussian(xa), fit_gaussian(xb))
        d1 = frechet_distance(fit_gaussian(xa @ q.T), fit_gaussian(xb @ q.T))
        assert d0 == pytest.approx(d1, rel=1e-9)

    def test_dimension_mismatch(self):
        a = fit_1d(0, 1)
        b = fit_gaussian(np.random.default_rng(0).standard_normal((50, 2)))
        with pytest.raises(ParameterError):
            frechet_distance(a, b)


class TestPenalty:
    def test_reference_difference(self):
        assert penalty(16.59, 15.28) == pytest.approx(1.31, abs=1e-12)

    def test_equal_inputs(self):
        assert penalty(3.0, 3.0) == 0.0

    def test_negative_penalty_passes_through(self):
        assert penalty(3.16, 3.16 + 0.003) == pytest.approx(-0.003, abs=1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(ParameterError):
            penalty(math.nan, 1.0)


class TestSsc:
    def test_reference_ratio(self):
        report = ssc(1.314, 0.717)
        assert report.ssc == pytest.approx(1.83, abs=0.01)

    def test_negative_numerator_clips_to_zero(self):
        assert ssc(-0.003, 0.150).ssc == 0.0

    def test_zero_over_zero(self):
        report = ssc(0.0, 0.0)
        assert report.ssc == 0.0 and not report.degenerate

    def test_positive_over_zero_reports_sentinel(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = ssc(0.5, -0.1)
        assert math.isinf(report.ssc) and report.degenerate
        assert report.to_dict()["ssc"] == "inf"

    def test_scale_covariance(self):
        a = ssc(1.2, 0.4).ssc
        b = ssc(1.2 * 7.5, 0.4 * 7.5).ssc
        assert a == pytest.approx(b, rel=1e-12)
        assert a >= 0.0


class TestPowerlawFit:
    def test_reference_decay_exponent(self):
        fit = powerlaw_fit([10, 25, 50, 100], [33.34, 7.30, 2.96, 1.31])
        assert fit.b == pytest.approx(1.40, abs=0.02)
        assert fit.n_used == 4

    def test_exact_inverse_square(self):
        nfe = np.array([10.0, 20.0, 40.0, 80.0])
        fit = powerlaw_fit(nfe, nfe**-2)
        assert fit.b == pytest.approx(2.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_floor_clamped_shallow_tail(self):
        # Near-zero penalties clamped to their magnitude floor before the fit.
        fit = powerlaw_fit([10, 25, 50, 100], [1.15, 0.07, 0.002, 0.003])
        assert fit.b == pytest.approx(2.83, abs=0.3)

    def test_nonpositive_entries_excluded_with_warning(self):
        with pytest.warns(UserWarning):
            fit = powerlaw_fit([10, 25, 50, 100], [1.15, 0.07, 0.0, -0.003])
        assert fit.n_used == 2 and fit.n_excluded == 2
        assert fit.b == pytest.approx(3.05, abs=0.01)

    def test_planted_exponent_recovery(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            b = float(rng.uniform(0.5, 3.0))
            amp = float(rng.uniform(0.5, 20.0))
            nfe = np.array([10.0, 20.0, 50.0, 100.0, 200.0])
            exact = amp * nfe**-b
            fit = powerlaw_fit(nfe, exact)
            assert fit.b == pytest.approx(b, abs=1e-10)
            noisy = exact * np.exp(rng.normal(0.0, 0.05, size=nfe.size))
            noisy_fit = powerlaw_fit(nfe, noisy)
            # 3 SE of the log-log slope under 5% multiplicative noise
            lx = np.log(nfe)
            se = 0.05 / math.sqrt(np.sum((lx - lx.mean()) ** 2))
            assert abs(noisy_fit.b - b) <= 3 * se

    def test_too_few_positive_points(self):
        with pytest.warns(UserWarning):
            with pytest.raises(ParameterError):
                powerlaw_fit([10, 25, 50], [1.0, -1.0, -2.0])


class TestLinearSlopeFit:
    def test_exact_line(self):
        deltas = np.array([0.05, 0.1, 0.2, 0.3])
        fit = linear_slope_fit(deltas, 2.0 + 3.0 * deltas)
        assert fit.intercept == pytest.approx(2.0, abs=1e-12)
        assert fit.slope == pytest.approx(3.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_constant_response(self):
        fit = linear_slope_fit([0.1, 0.2, 0.3], [5.0, 5.0, 5.0])
        assert fit.slope == 0.0 and fit.r2 == 0.0

    def test_degenerate_abscissa(self):
        with pytest.raises(ParameterError):
            linear_slope_fit([0.1, 0.1, 0.1], [1.0, 2.0, 3.0])


class TestPairedStats:
    def test_reference_pairs(self):
        out = paired_stats(SCORES_LARGE_N, SCORES_SMALL_N)
        assert out["mean_offset"] == pytest.approx(0.66, abs=0.01)
        assert out["offset_std"] == pytest.approx(0.16, abs=0.01)
        assert out["spearman"] == 1.0
        assert out["pearson"] > 0.999

    def test_identical_lists(self):
        out = paired_stats([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert out["pearson"] == pytest.approx(1.0)
        assert out["mean_offset"] == 0.0

    def test_reversed_ranks(self):
        out = paired_stats([1.0, 2.0, 3.0, 4.0], [9.0, 7.0, 5.0, 1.0])
        assert out["spearman"] == -1.0

    def test_translation_invariance_of_correlations(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal(12)
        b = a + rng.normal(0, 0.1, 12)
        base = paired_stats(a, b)
        moved = paired_stats(a + 100.0, b + 100.0)
        assert base["pearson"] == pytest.approx(moved["pearson"], rel=1e-12)
        assert base["spearman"] == pytest.approx(moved["spearman"], rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            paired_stats([1.0, 2.0], [1.0, 2.0, 3.0])

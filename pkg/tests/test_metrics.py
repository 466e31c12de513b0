"""Norms and the Gaussian-moment Bhattacharyya distance."""

import math

import numpy as np
import pytest

from polydrop.exceptions import ZeroVarianceError
from polydrop.metrics import (
    GaussianMoments,
    bhattacharyya,
    evaluate,
    gaussian_moments,
    l1_norm,
    l2_norm,
)


class TestL2Norm:
    def test_perfect_prediction_is_zero(self):
        y = np.array([1.0, -2.0, 3.5])
        assert l2_norm(y, y) == (0.0, 0.0, 0.0)

    def test_hand_computed_values(self):
        """Errors (3, 4) give sum 25, root 5, rmse sqrt(12.5)."""
        pred = np.array([3.0, 4.0])
        y = np.zeros(2)
        l2, l2_raw, rmse = l2_norm(pred, y)
        assert l2_raw == 25.0
        assert l2 == 5.0
        np.testing.assert_allclose(rmse, math.sqrt(12.5), rtol=1e-15)

    def test_homogeneity(self):
        """Scaling errors by c scales l2 by c and l2_raw by c^2."""
        rng = np.random.default_rng(11)
        for _ in range(50):
            err = rng.normal(size=rng.integers(1, 30))
            c = float(rng.uniform(0, 5))
            l2_a, raw_a, _ = l2_norm(err, np.zeros_like(err))
            l2_b, raw_b, _ = l2_norm(c * err, np.zeros_like(err))
            np.testing.assert_allclose(l2_b, c * l2_a, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(raw_b, c * c * raw_a, rtol=1e-12, atol=1e-12)

    def test_algebraic_relations(self):
        """l2_raw = N * rmse^2 and l2 = sqrt(N) * rmse for random inputs."""
        rng = np.random.default_rng(12)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            pred = rng.normal(size=n)
            y = rng.normal(size=n)
            l2, l2_raw, rmse = l2_norm(pred, y)
            np.testing.assert_allclose(l2_raw, n * rmse**2, rtol=1e-12)
            np.testing.assert_allclose(l2, math.sqrt(n) * rmse, rtol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            l2_norm(np.ones(3), np.ones(4))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            l2_norm(np.array([]), np.array([]))


class TestL1Norm:
    def test_perfect_prediction_is_zero(self):
        y = np.array([1.0, 2.0])
        assert l1_norm(y, y) == 0.0

    def test_absolute_values(self):
        """Errors (1, -1) average to 1."""
        assert l1_norm(np.array([1.0, -1.0]), np.zeros(2)) == 1.0

    def test_hand_computed_mean(self):
        """Errors (1, 2, 3) average to 2."""
        assert l1_norm(np.array([1.0, 2.0, 3.0]), np.zeros(3)) == 2.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            l1_norm(np.ones(2), np.ones(3))


class TestGaussianMoments:
    def test_two_point_sample(self):
        """(0, 2) has mean 1 and unbiased variance 2."""
        m = gaussian_moments(np.array([0.0, 2.0]))
        assert m.mean == 1.0
        assert m.variance == 2.0
        assert m.count == 2

    def test_constant_sample_rejected(self):
        with pytest.raises(ZeroVarianceError):
            gaussian_moments(np.full(10, 3.25))

    def test_single_sample_rejected(self):
        with pytest.raises(ValueError):
            gaussian_moments(np.array([1.0]))

    def test_large_sample_recovers_truth(self):
        draws = np.random.default_rng(13).normal(0.0, 1.0, size=1_000_000)
        m = gaussian_moments(draws)
        assert abs(m.mean) < 0.005
        assert abs(m.variance - 1.0) < 0.005


class TestBhattacharyya:
    def test_identical_moments_give_exactly_zero(self):
        p = GaussianMoments(mean=0.7, variance=2.3, count=10)
        assert bhattacharyya(p, p) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            p1 = GaussianMoments(rng.normal(), float(rng.uniform(0.1, 5)), 10)
            p2 = GaussianMoments(rng.normal(), float(rng.uniform(0.1, 5)), 10)
            a = bhattacharyya(p1, p2)
            b = bhattacharyya(p2, p1)
            assert abs(a - b) <= 1e-12

    def test_equal_variance_closed_form(self):
        """With equal variances the distance reduces to delta^2/(8 sigma^2)."""
        rng = np.random.default_rng(15)
        for _ in range(100):
            delta = float(rng.uniform(-10, 10))
            var = float(rng.uniform(0.05, 9))
            p1 = GaussianMoments(0.0, var, 10)
            p2 = GaussianMoments(delta, var, 10)
            expected = delta * delta / (8.0 * var)
            assert abs(bhattacharyya(p1, p2) - expected) <= 1e-12 * (1 + expected)

    def test_non_negative(self):
        rng = np.random.default_rng(16)
        for _ in range(200):
            p1 = GaussianMoments(rng.normal(), float(rng.uniform(0.01, 20)), 5)
            p2 = GaussianMoments(rng.normal(), float(rng.uniform(0.01, 20)), 5)
            assert bhattacharyya(p1, p2) >= 0.0

    def test_monotone_in_mean_separation(self):
        """With variances held fixed, larger mean gaps strictly increase it."""
        var = 1.7
        gaps = [0.0, 0.5, 1.0, 2.0, 4.0]
        values = [
            bhattacharyya(
                GaussianMoments(0.0, var, 5), GaussianMoments(g, var, 5)
            )
            for g in gaps
        ]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_zero_variance_rejected(self):
        good = GaussianMoments(0.0, 1.0, 5)
        bad = GaussianMoments(0.0, 0.0, 5)
        with pytest.raises(ZeroVarianceError):
            bhattacharyya(good, bad)


class TestEvaluate:
    def test_residuals_matching_noise_give_small_distance(self):
        """If the model exactly strips the signal, residuals are the noise
        itself (up to sign) and the fitted moments nearly coincide."""
        rng = np.random.default_rng(17)
        noise = rng.normal(0.0, 0.5, size=10_000)
        y = np.zeros_like(noise)
        pred = noise  # residual pred - y equals the injected noise
        record = evaluate(pred, y, noise)
        assert record.bd is not None
        assert record.bd < 0.01

    def test_constant_bias_matches_closed_form(self):
        """A unit bias on unit-variance noise costs about 1/8."""
        rng = np.random.default_rng(18)
        noise = rng.normal(0.0, 1.0, size=200_000)
        pred = noise + 1.0
        record = evaluate(pred, np.zeros_like(noise), noise)
        np.testing.assert_allclose(record.bd, 1.0 / 8.0, atol=0.01)

    def test_perfect_noiseless_prediction_degenerates(self):
        """All norms are zero and the distance has no defined value."""
        y = np.linspace(-1, 1, 50)
        record = evaluate(y, y, np.zeros_like(y))
        assert record.l1 == 0.0
        assert record.l2 == 0.0
        assert record.l2_raw == 0.0
        assert record.rmse == 0.0
        assert record.bd is None

    def test_round_trips_through_dict(self):
        rng = np.random.default_rng(19)
        noise = rng.normal(0.0, 1.0, size=100)
        record = evaluate(rng.normal(size=100), rng.normal(size=100), noise)
        from polydrop.metrics import MetricsRecord

        again = MetricsRecord.from_dict(record.to_dict())
        assert again == record

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            evaluate(np.ones(3), np.ones(4), np.ones(3))

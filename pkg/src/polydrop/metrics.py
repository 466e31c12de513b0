"""Prediction-skill norms and the Gaussian Bhattacharyya distance.

The Bhattacharyya distance here is the closed form for two Gaussians
parameterized by (mean, variance).  It is applied to the moments of the
prediction residuals and of the injected noise, which quantifies how much
of the noise distribution the model has absorbed as bias versus passed
through to its residuals.  The closed form is used for every noise family,
including the asymmetric ones; only the first two moments enter.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import ZeroVarianceError
from .validation import check_same_length, check_vector

__all__ = [
    "GaussianMoments",
    "MetricsRecord",
    "l1_norm",
    "l2_norm",
    "gaussian_moments",
    "bhattacharyya",
    "evaluate",
]


@dataclass(frozen=True)
class GaussianMoments:
    """Sample mean and unbiased sample variance of a batch of draws."""

    mean: float
    variance: float
    count: int


@dataclass(frozen=True)
class MetricsRecord:
    """Bundle of all evaluation metrics for one prediction batch.

    ``l2_raw`` is the plain sum of squared errors, ``l2`` its square root,
    ``rmse`` the root mean squared error; all three are persisted because
    downstream consumers disagree about which normalization they want.
    ``bd`` is None when either the residuals or the noise are constant, so
    degenerate cells stay distinguishable from genuinely zero distance.
    """

    l1: float
    l2: float
    l2_raw: float
    rmse: float
    bd: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(
            l1=d["l1"], l2=d["l2"], l2_raw=d["l2_raw"], rmse=d["rmse"], bd=d["bd"]
        )


def l1_norm(pred, y) -> float:
    """Mean absolute error between predictions and targets."""
    pred = check_vector(pred, "pred")
    y = check_vector(y, "y")
    check_same_length(pred=pred, y=y)
    return float(np.mean(np.abs(pred - y)))


def l2_norm(pred, y) -> tuple[float, float, float]:
    """Sum-of-squares error in three normalizations.

    Returns (l2, l2_raw, rmse) where l2_raw = sum((pred-y)^2),
    l2 = sqrt(l2_raw), and rmse = sqrt(l2_raw / n).
    """
    pred = check_vector(pred, "pred")
    y = check_vector(y, "y")
    check_same_length(pred=pred, y=y)
    l2_raw = float(np.sum((pred - y) ** 2))
    l2 = math.sqrt(l2_raw)
    rmse = math.sqrt(l2_raw / pred.size)
    return l2, l2_raw, rmse


def gaussian_moments(samples) -> GaussianMoments:
    """Fit (mean, unbiased variance) to a sample.

    Raises ZeroVarianceError for constant samples: a zero variance would
    make the Bhattacharyya distance undefined, and we want that failure
    typed rather than surfacing as a NaN later.
    """
    samples = check_vector(samples, "samples")
    if samples.size < 2:
        raise ValueError(f"need at least 2 samples, got {samples.size}")
    mean = float(np.mean(samples))
    variance = float(np.var(samples, ddof=1))
    if variance == 0.0:
        raise ZeroVarianceError("samples are constant (zero variance)")
    return GaussianMoments(mean=mean, variance=variance, count=samples.size)


def bhattacharyya(p1: GaussianMoments, p2: GaussianMoments) -> float:
    """Closed-form Bhattacharyya distance between two Gaussians.

    BD = 1/4 * ln(1/4 * (v1/v2 + v2/v1 + 2)) + 1/4 * (m2 - m1)^2 / (v1 + v2)

    Symmetric in its arguments and zero iff the moments coincide exactly.
    """
    if p1.variance <= 0 or p2.variance <= 0:
        raise ZeroVarianceError(
            f"variances must be positive, got {p1.variance} and {p2.variance}"
        )
    v1, v2 = p1.variance, p2.variance
    ratio_term = 0.25 * math.log(0.25 * (v1 / v2 + v2 / v1 + 2.0))
    mean_term = 0.25 * (p2.mean - p1.mean) ** 2 / (v1 + v2)
    return ratio_term + mean_term


def evaluate(pred, y, noise_samples) -> MetricsRecord:
    """Compute all norms plus the residual-vs-noise Bhattacharyya distance.

    The residual is pred - y; its moments are compared against the moments
    of the noise that was injected into the same split of the dataset.
    """
    pred = check_vector(pred, "pred")
    y = check_vector(y, "y")
    noise_samples = check_vector(noise_samples, "noise_samples")
    check_same_length(pred=pred, y=y, noise_samples=noise_samples)

    l1 = l1_norm(pred, y)
    l2, l2_raw, rmse = l2_norm(pred, y)
    try:
        noise_moments = gaussian_moments(noise_samples)
        residual_moments = gaussian_moments(pred - y)
        bd = bhattacharyya(noise_moments, residual_moments)
    except ZeroVarianceError:
        bd = None
    return MetricsRecord(l1=l1, l2=l2, l2_raw=l2_raw, rmse=rmse, bd=bd)

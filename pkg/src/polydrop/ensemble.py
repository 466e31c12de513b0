"""Monte-Carlo dropout ensembles over a single trained network.

An "ensemble member" is one stochastic forward pass with its own dropout
masks; the ensemble prediction is the plain average of m members.  Member
i's masks are derived from SeedSequence(mask_seed, spawn_key=(i,)), so
member i is the same network realization no matter how large m is:
growing the ensemble extends the member set instead of reshuffling it,
which keeps comparisons across m paired.
"""

from dataclasses import dataclass

import numpy as np

from .network import Mlp, forward_with_cache, sample_masks
from .validation import check_vector

__all__ = [
    "EnsemblePrediction",
    "ErrorDecomposition",
    "mc_predict",
    "decompose_error",
    "ensemble_residuals",
]


@dataclass(frozen=True)
class EnsemblePrediction:
    """Member outputs (m, n), their mean, and the per-point spread."""

    member_outputs: np.ndarray
    mean: np.ndarray
    predictive_variance: np.ndarray
    m: int
    mask_seed: int


def _member_masks(mask_seed: int, i: int, batch: int, mlp: Mlp):
    rng = np.random.default_rng(np.random.SeedSequence(mask_seed, spawn_key=(i,)))
    return sample_masks(rng, batch, mlp.width, mlp.depth, mlp.dropout_rate)


def mc_predict(mlp: Mlp, x, m: int, mask_seed: int) -> EnsemblePrediction:
    """m stochastic passes averaged into one prediction.

    With dropout_rate 0 every member collapses to the deterministic pass.
    """
    x = check_vector(x, "x")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    members = np.empty((m, len(x)))
    for i in range(m):
        masks = _member_masks(mask_seed, i, len(x), mlp)
        out, _, _ = forward_with_cache(mlp, x, masks)
        members[i] = out
    mean = members.mean(axis=0)
    variance = members.var(axis=0)
    return EnsemblePrediction(
        member_outputs=members,
        mean=mean,
        predictive_variance=variance,
        m=m,
        mask_seed=mask_seed,
    )


@dataclass(frozen=True)
class ErrorDecomposition:
    """Pointwise split of squared ensemble error into average member error
    minus member disagreement; every field is a length-n vector."""

    total: np.ndarray
    avg_member_error: np.ndarray
    ambiguity: np.ndarray

    @property
    def identity_residual(self) -> np.ndarray:
        """total - (avg_member_error - ambiguity); zero up to rounding."""
        return self.total - (self.avg_member_error - self.ambiguity)

    @property
    def total_mean(self) -> float:
        return float(np.mean(self.total))

    @property
    def avg_member_error_mean(self) -> float:
        return float(np.mean(self.avg_member_error))

    @property
    def ambiguity_mean(self) -> float:
        return float(np.mean(self.ambiguity))


def _member_matrix(pred) -> np.ndarray:
    if isinstance(pred, EnsemblePrediction):
        return pred.member_outputs
    members = np.asarray(pred, dtype=np.float64)
    if members.ndim == 1:
        members = members.reshape(1, -1)
    if members.ndim != 2:
        raise ValueError(f"member outputs must be 1-D or 2-D, got shape {members.shape}")
    return members


def decompose_error(y, pred) -> ErrorDecomposition:
    """Exact identity (y - f̄)² = (1/m)Σ(y - f_i)² - (1/m)Σ(f_i - f̄)².

    ``pred`` is an EnsemblePrediction or a raw (m, n) member matrix; all
    three returned terms are per-point vectors, so the identity can be
    checked element-wise.
    """
    members = _member_matrix(pred)
    y = check_vector(y, "y")
    if members.shape[1] != y.size:
        raise ValueError(
            f"member outputs cover {members.shape[1]} points but y has {y.size}"
        )
    mean = members.mean(axis=0)
    total = (y - mean) ** 2
    avg_member_error = np.mean((y - members) ** 2, axis=0)
    ambiguity = np.mean((members - mean) ** 2, axis=0)
    return ErrorDecomposition(
        total=total, avg_member_error=avg_member_error, ambiguity=ambiguity
    )


def ensemble_residuals(y, pred) -> np.ndarray:
    """Signed errors mean - y, the quantity whose moments are compared
    against the injected noise distribution.

    ``pred`` is an EnsemblePrediction or a raw (m, n) member matrix.
    """
    y = check_vector(y, "y")
    if isinstance(pred, EnsemblePrediction):
        mean = pred.mean
    else:
        mean = _member_matrix(pred).mean(axis=0)
    if mean.size != y.size:
        raise ValueError(f"prediction covers {mean.size} points but y has {y.size}")
    return mean - y

"""Scikit-learn style front door for the dropout-ensemble regressor.

The estimator owns hyperparameters only; fitted state lives in trailing-
underscore attributes, and all the numerics stay in network/ensemble so
the sweep harness can drive them without this wrapper.
"""

import numbers

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .ensemble import EnsemblePrediction, mc_predict
from .network import (
    Activation,
    NetworkConfig,
    TrainConfig,
    forward,
    init_network,
    train_arrays,
)

__all__ = ["MCDropoutMLPRegressor"]


def _as_1d(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(
            f"this regressor models a single scalar input; got shape {arr.shape}"
        )
    if arr.size == 0:
        raise ValueError("X must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("X contains non-finite values")
    return arr


class MCDropoutMLPRegressor(BaseEstimator, RegressorMixin):
    """MLP regressor whose predictions can be averaged over dropout masks.

    fit() trains a single network with inverted dropout; predict() is the
    deterministic maskless pass, and predict_mc() averages ensemble_size
    stochastic passes and also exposes the per-member outputs.
    """

    def __init__(
        self,
        width=30,
        depth=2,
        ensemble_size=10,
        activation="relu",
        dropout_rate=0.1,
        epochs=200,
        batch_size=64,
        learning_rate=1e-3,
        optimizer="adam",
        beta1=0.9,
        beta2=0.999,
        epsilon=1e-8,
        early_stop_patience=20,
        validation_fraction=0.2,
        random_state=None,
    ):
        self.width = width
        self.depth = depth
        self.ensemble_size = ensemble_size
        self.activation = activation
        self.dropout_rate = dropout_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _seeds(self):
        if self.random_state is None:
            entropy = np.random.SeedSequence().entropy
        elif isinstance(self.random_state, numbers.Integral):
            entropy = int(self.random_state)
        else:
            raise ValueError(
                f"random_state must be an int or None, got {self.random_state!r}"
            )
        init_seed, train_seed, split_seed, mask_seed = [
            int(c.generate_state(1)[0])
            for c in np.random.SeedSequence(entropy).spawn(4)
        ]
        return init_seed, train_seed, split_seed, mask_seed

    def fit(self, X, y):
        x = _as_1d(X)
        targets = _as_1d(y)
        if len(x) != len(targets):
            raise ValueError(
                f"X and y disagree on length: {len(x)} vs {len(targets)}"
            )
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must lie in (0, 1), got {self.validation_fraction}"
            )

        init_seed, train_seed, split_seed, mask_seed = self._seeds()
        net_cfg = NetworkConfig(
            width=self.width,
            depth=self.depth,
            ensemble_size=self.ensemble_size,
            activation=Activation(self.activation),
            dropout_rate=self.dropout_rate,
            init_seed=init_seed,
        )
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            early_stop_patience=self.early_stop_patience,
            train_seed=train_seed,
        )

        n = len(x)
        n_val = max(1, int(round(n * self.validation_fraction)))
        if n_val >= n:
            raise ValueError(
                f"validation_fraction {self.validation_fraction} leaves no training data"
                f" for {n} samples"
            )
        perm = np.random.default_rng(split_seed).permutation(n)
        val_idx, fit_idx = perm[:n_val], perm[n_val:]

        net = init_network(net_cfg)
        self.model_, self.history_ = train_arrays(
            net, x[fit_idx], targets[fit_idx], x[val_idx], targets[val_idx], train_cfg
        )
        self.mask_seed_ = mask_seed
        self.n_features_in_ = 1
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this MCDropoutMLPRegressor instance is not fitted yet"
            )

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        return forward(self.model_, _as_1d(X))

    def predict_mc(self, X, m: int | None = None) -> EnsemblePrediction:
        self._check_fitted()
        if m is None:
            m = self.ensemble_size
        return mc_predict(self.model_, _as_1d(X), m, self.mask_seed_)

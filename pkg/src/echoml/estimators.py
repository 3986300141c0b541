"""scikit-learn style wrappers around :mod:`echoml.neural`.

These let the hand-written networks sit inside pipelines, ``clone`` and
``GridSearchCV`` like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import neural


def minmax_normalize(windows) -> np.ndarray:
    """Scale each row to [0, 1]; constant rows map to zeros."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    lo = windows.min(axis=1, keepdims=True)
    span = windows.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (windows - lo) / safe, 0.0)


class _NetworkEstimator(BaseEstimator):
    def _train_config(self) -> neural.TrainConfig:
        return neural.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
            optimizer=self.optimizer, seed=self.random_state,
            validation_fraction=self.validation_fraction,
        )

    @classmethod
    def from_network(cls, network: neural.DenseNetwork, **params):
        """Wrap an already trained network (e.g. loaded from disk)."""
        est = cls(**params)
        est.network_ = network
        est.n_features_in_ = network.n_inputs
        est.report_ = None
        return est

    def _check_input(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X


class EchoClassifier(ClassifierMixin, _NetworkEstimator):
    """Echo vs. noise classifier on raw trace windows.

    Windows are min-max normalized internally, so ``X`` holds raw samples.
    ``classes_`` is ``[0, 1]`` (noise, echo); ``predict_proba`` columns follow it.
    """

    def __init__(self, hidden_layer_sizes=(32, 16), epochs=100, batch_size=32,
                 learning_rate=1e-3, optimizer="adam", validation_fraction=0.2,
                 random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.array([0, 1])
        net = neural.classifier_network(X.shape[1], tuple(self.hidden_layer_sizes),
                                        seed=self.random_state)
        self.network_, self.report_ = neural.train(
            net, minmax_normalize(X), neural.one_hot_labels(y), self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def echo_probability(self, X) -> np.ndarray:
        X = self._check_input(X)
        return neural.predict_batch(self.network_, minmax_normalize(X))[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        p_e = self.echo_probability(X)
        return np.column_stack([1.0 - p_e, p_e])

    def predict(self, X) -> np.ndarray:
        return (self.echo_probability(X) > 0.5).astype(int)


def joint_normalize(windows) -> np.ndarray:
    """Divide each row by its largest absolute value, keeping the I/Q ratio."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    peak = np.abs(windows).max(axis=1, keepdims=True)
    return np.where(peak > 0, windows / np.where(peak > 0, peak, 1.0), 0.0)


def encode_phase(degrees) -> np.ndarray:
    rad = np.deg2rad(np.asarray(degrees, dtype=float))
    return np.column_stack([np.cos(rad), np.sin(rad)])


def decode_phase(pairs) -> np.ndarray:
    pairs = np.atleast_2d(pairs)
    return np.rad2deg(np.arctan2(pairs[:, 1], pairs[:, 0])) % 360.0


def angular_error(a, b) -> np.ndarray:
    """Absolute wrap-aware difference in degrees, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


class PhaseRegressor(RegressorMixin, _NetworkEstimator):
    """Echo phase (degrees) from concatenated I and Q windows.

    Each row (I samples followed by Q samples) is divided by its joint peak
    magnitude before entering the network.

    The target is learned as ``(cos, sin)`` and decoded with ``arctan2``, so
    predictions live in [0, 360) without a seam at 0/360. ``score`` is the
    negative mean angular error, so larger is better.
    """

    def __init__(self, hidden_layer_sizes=(64, 32), epochs=1500, batch_size=32,
                 learning_rate=1e-3, optimizer="adam", validation_fraction=0.1,
                 random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        net = neural.regressor_network(X.shape[1], tuple(self.hidden_layer_sizes),
                                       seed=self.random_state)
        self.network_, self.report_ = neural.train(net, joint_normalize(X), encode_phase(y),
                                                   self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = self._check_input(X)
        return decode_phase(neural.predict_batch(self.network_, joint_normalize(X)))

    def score(self, X, y, sample_weight=None):
        err = angular_error(self.predict(X), y)
        return -float(np.average(err, weights=sample_weight))

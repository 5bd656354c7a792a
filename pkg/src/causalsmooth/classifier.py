"""Soft-label classifier for the judgment-outcome task."""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._optim import TrainConfig, full_batch_descent
from .exceptions import ConfigurationError, InputError, ReportIOError
from .smoothing import SoftLabel, soft_cross_entropy_logits, softmax

ARCHITECTURES = ("logistic", "one_hidden_layer")


def _forward(params, X, architecture):
    if architecture == "logistic":
        W, b = params
        return X @ W + b, X
    W1, b1, W2, b2 = params
    hidden = X @ W1
    hidden += b1
    np.tanh(hidden, out=hidden)
    return hidden @ W2 + b2, hidden


def _loss_and_grad(params, X, targets, architecture):
    logits, hidden = _forward(params, X, architecture)
    loss, d_logits = soft_cross_entropy_logits(logits, targets, normalized=True)
    ones = np.ones(X.shape[0])
    if architecture == "logistic":
        return loss, [X.T @ d_logits, ones @ d_logits]
    W1, b1, W2, b2 = params
    slope = np.square(hidden)
    np.subtract(1.0, slope, out=slope)
    d_pre = d_logits @ W2.T
    d_pre *= slope
    return loss, [X.T @ d_pre, ones @ d_pre, hidden.T @ d_logits, ones @ d_logits]


def _as_targets(y, n_classes=None):
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        k = n_classes or int(y.max()) + 1
        classes = y.astype(int)
        if np.any(classes != y) or classes.min() < 0:
            raise InputError("hard labels must be non-negative integers")
        out = np.zeros((y.size, max(k, 2)))
        out[np.arange(y.size), classes] = 1.0
        return out
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("soft targets must be probability distributions (rows summing to 1)")
    return y


class SoftLabelClassifier(ClassifierMixin, BaseEstimator):
    """Logistic or one-hidden-layer (tanh) classifier trained on soft targets.

    ``fit`` accepts either integer labels or a ``(n, K)`` matrix of target
    distributions and minimises the mean soft cross-entropy by full-batch
    gradient descent with halve-on-increase step control.

    Parameters
    ----------
    architecture : {"logistic", "one_hidden_layer"}
    hidden_width : int
        Units in the hidden layer (ignored for ``logistic``).
    epochs, learning_rate, seed, init_scale
        Optimisation settings; ``seed`` fixes the weight initialisation.
    threshold : float
        Positive-class probability cut-off used by ``predict`` when K = 2.
    """

    def __init__(self, architecture="one_hidden_layer", hidden_width=16, epochs=300, learning_rate=0.5, seed=0,
                 init_scale=0.1, threshold=0.5):
        self.architecture = architecture
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.init_scale = init_scale
        self.threshold = threshold

    def _init_params(self, n_features, n_classes):
        rng = np.random.default_rng(self.seed)
        if self.architecture == "logistic":
            return [self.init_scale * rng.standard_normal((n_features, n_classes)), np.zeros(n_classes)]
        w = self.hidden_width
        return [
            self.init_scale * rng.standard_normal((n_features, w)),
            np.zeros(w),
            self.init_scale * rng.standard_normal((w, n_classes)),
            np.zeros(n_classes),
        ]

    def _validate(self, X):
        X = check_array(X)
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def initialize(self, n_features, n_classes=2):
        """Set seeded initial parameters without training."""
        self.params_ = self._init_params(n_features, n_classes)
        self.loss_curve_ = []
        self.final_learning_rate_ = self.learning_rate
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = n_features
        return self

    def fit(self, X, y):
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate, hidden_width=self.hidden_width,
                    threshold=self.threshold)
        X = check_array(X)
        targets = _as_targets(y)
        if targets.shape[0] != X.shape[0]:
            raise InputError(f"{targets.shape[0]} targets for {X.shape[0]} rows")
        n_classes = targets.shape[1]
        params, curve, lr = full_batch_descent(
            lambda p: _loss_and_grad(p, X, targets, self.architecture),
            self._init_params(X.shape[1], n_classes),
            self.epochs,
            self.learning_rate,
        )
        self.params_ = params
        self.loss_curve_ = curve
        self.final_learning_rate_ = lr
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        return _forward(self.params_, self._validate(X), self.architecture)[0]

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        proba = self.predict_proba(X)
        if proba.shape[1] == 2:
            return (proba[:, 1] >= self.threshold).astype(int)
        return proba.argmax(axis=1)

    def hidden_representation(self, X):
        """Activations of the last hidden layer (the inputs for ``logistic``)."""
        check_is_fitted(self)
        return _forward(self.params_, self._validate(X), self.architecture)[1]

    def loss_gradient(self, X, targets):
        check_is_fitted(self)
        return _loss_and_grad(self.params_, self._validate(X), _as_targets(targets, len(self.classes_)),
                              self.architecture)

    def gradient_check(self, X, targets, step=1e-5):
        """Largest relative discrepancy between analytic and central-difference gradients.

        For each parameter tensor the error is ``max|analytic - numeric|``
        divided by the larger of the two gradients' max-norms.
        """
        if step <= 0:
            raise InputError("finite-difference step must be > 0")
        if np.asarray(X).shape[0] == 0:
            raise InputError("gradient check needs a non-empty batch")
        X = self._validate(X)
        targets = _as_targets(targets, len(self.classes_))
        _, analytic = _loss_and_grad(self.params_, X, targets, self.architecture)
        worst = 0.0
        for idx, param in enumerate(self.params_):
            numeric = np.zeros_like(param)
            for pos in np.ndindex(param.shape):
                shifted = [p.copy() for p in self.params_]
                shifted[idx][pos] = param[pos] + step
                up = _loss_and_grad(shifted, X, targets, self.architecture)[0]
                shifted[idx][pos] = param[pos] - step
                down = _loss_and_grad(shifted, X, targets, self.architecture)[0]
                numeric[pos] = (up - down) / (2.0 * step)
            scale = max(np.abs(analytic[idx]).max(), np.abs(numeric).max(), 1e-12)
            worst = max(worst, float(np.abs(analytic[idx] - numeric).max() / scale))
        return worst

    @property
    def training_meta(self):
        check_is_fitted(self)
        return {"epochs": self.epochs, "learning_rate": self.learning_rate, "seed": self.seed,
                "final_learning_rate": self.final_learning_rate_, "loss_curve": list(self.loss_curve_)}

    def to_dict(self):
        check_is_fitted(self)
        return {"params": self.get_params(), "weights": [p.tolist() for p in self.params_],
                "n_classes": len(self.classes_), "loss_curve": list(self.loss_curve_)}

    @classmethod
    def from_dict(cls, values):
        model = cls(**values["params"])
        model.params_ = [np.asarray(p, dtype=float) for p in values["weights"]]
        model.classes_ = np.arange(values["n_classes"])
        model.loss_curve_ = list(values.get("loss_curve", []))
        model.final_learning_rate_ = model.learning_rate
        model.n_features_in_ = model.params_[0].shape[0]
        return model

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh)
        except OSError as exc:
            raise ReportIOError(f"cannot write model to {path}: {exc}") from exc


def train_classifier(data, targets, config):
    """Fit a classifier on ``data.features`` against per-row soft targets."""
    if isinstance(targets, (list, tuple)) and targets and isinstance(targets[0], SoftLabel):
        targets = np.vstack([t.distribution for t in targets])
    targets = np.asarray(targets, dtype=float)
    if len(targets) != len(data):
        raise InputError(f"{len(targets)} targets for {len(data)} records")
    model = SoftLabelClassifier(architecture=config.architecture, hidden_width=config.hidden_width,
                                epochs=config.epochs, learning_rate=config.learning_rate, seed=config.seed,
                                init_scale=config.init_scale, threshold=config.threshold)
    return model.fit(data.features, targets)


def predict_proba(model, features):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        return model.predict_proba(features.reshape(1, -1))[0]
    return model.predict_proba(features)


def hidden_representation(model, features):
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        return model.hidden_representation(features.reshape(1, -1))[0]
    return model.hidden_representation(features)


def gradient_check(model, batch, step=1e-5):
    """``batch`` is ``(features, targets)``; see :meth:`SoftLabelClassifier.gradient_check`."""
    X, targets = batch
    return model.gradient_check(X, targets, step)

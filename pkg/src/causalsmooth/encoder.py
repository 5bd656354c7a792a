"""Linear multi-label law-article model whose probabilities serve as instruments."""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._optim import TrainConfig, full_batch_descent
from .exceptions import InputError, ReportIOError
from .smoothing import zlpr_loss_and_grad

INSTRUMENT_REPRESENTATION = "per-article sigmoid probabilities"


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LawArticleEncoder(TransformerMixin, BaseEstimator):
    """Multi-label linear scorer trained with the ZLPR loss.

    ``transform`` returns per-article probabilities ``sigmoid(X W + b)``,
    which the pipeline writes into each record's instrument field.

    Parameters
    ----------
    epochs : int
        Full-batch gradient steps.
    learning_rate : float
        Initial step size; halved whenever a step would raise the loss.
    seed : int
        Seed of the weight initialisation.
    init_scale : float
        Standard deviation of the initial weights.
    """

    def __init__(self, epochs=200, learning_rate=2.0, seed=0, init_scale=0.01):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.init_scale = init_scale

    def _loss_and_grad(self, X, Y):
        def fn(params):
            W, b = params
            loss, g = zlpr_loss_and_grad(X @ W + b, Y)
            return loss, [X.T @ g, g.sum(axis=0)]

        return fn

    def fit(self, X, y):
        X, Y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = Y.reshape(len(Y), -1)
        if not np.all((Y == 0) | (Y == 1)):
            raise InputError("law labels must be multi-hot")
        TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate)
        rng = np.random.default_rng(self.seed)
        W0 = self.init_scale * rng.standard_normal((X.shape[1], Y.shape[1]))
        b0 = np.zeros(Y.shape[1])
        (W, b), curve, lr = full_batch_descent(self._loss_and_grad(X, Y), [W0, b0], self.epochs, self.learning_rate)
        self.coef_, self.intercept_ = W, b
        self.loss_curve_ = curve
        self.final_learning_rate_ = lr
        self.n_features_in_ = X.shape[1]
        self.n_articles_ = Y.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_

    def transform(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        """Multi-hot prediction; ZLPR places the decision threshold at score 0."""
        return (self.decision_function(X) > 0).astype(float)

    def subset_accuracy(self, X, Y):
        return float(np.mean(np.all(self.predict(X) == np.asarray(Y), axis=1)))

    def loss_gradient(self, X, Y):
        """Mean ZLPR loss and its gradient wrt ``(coef_, intercept_)``."""
        check_is_fitted(self)
        return self._loss_and_grad(np.asarray(X, float), np.asarray(Y, float))([self.coef_, self.intercept_])

    @property
    def training_meta(self):
        check_is_fitted(self)
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "final_loss": self.loss_curve_[-1],
            "seed": self.seed,
        }

    def to_dict(self):
        return {
            "params": self.get_params(),
            "weights": self.coef_.tolist(),
            "bias": self.intercept_.tolist(),
            "meta": self.training_meta,
            "loss_curve": self.loss_curve_,
        }

    @classmethod
    def from_dict(cls, values):
        model = cls(**values["params"])
        model.coef_ = np.asarray(values["weights"], dtype=float)
        model.intercept_ = np.asarray(values["bias"], dtype=float)
        model.loss_curve_ = list(values.get("loss_curve", [values["meta"]["final_loss"]]))
        model.n_features_in_, model.n_articles_ = model.coef_.shape
        return model

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.to_dict(), fh)
        except OSError as exc:
            raise ReportIOError(f"cannot write encoder to {path}: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_encoder(data, config=None):
    """Fit a :class:`LawArticleEncoder` on a dataset's features and law labels."""
    config = config or TrainConfig(learning_rate=2.0, init_scale=0.01)
    if data.law_labels.shape[1] == 0:
        raise InputError("dataset has no law_labels")
    model = LawArticleEncoder(epochs=config.epochs, learning_rate=config.learning_rate, seed=config.seed,
                              init_scale=config.init_scale)
    return model.fit(data.features, data.law_labels)


def encode(model, features):
    """Instrument vector(s) for one feature vector or a feature matrix."""
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        return model.transform(features.reshape(1, -1))[0]
    return model.transform(features)


def with_instruments(data, model):
    """Copy of ``data`` whose instrument columns are the encoder's outputs."""
    return data.replace(instrument=model.transform(data.features))

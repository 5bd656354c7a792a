from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, TrainingError

MAX_HALVINGS = 40


@dataclass
class TrainConfig:
    """Settings shared by the encoder and classifier trainers."""

    epochs: int = 200
    learning_rate: float = 1.0
    seed: int = 0
    architecture: str = "one_hidden_layer"
    hidden_width: int = 16
    threshold: float = 0.5
    init_scale: float = 0.1

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hidden_width < 1:
            raise ConfigurationError("hidden_width must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError(f"threshold must be in (0, 1), got {self.threshold}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown training keys: {sorted(unknown)}")
        return cls(**values)


def full_batch_descent(loss_and_grad, params, epochs, learning_rate):
    """Full-batch gradient descent with halve-on-increase step control.

    A step is accepted only if it does not increase the loss; otherwise the
    learning rate is halved and the step retried. The returned loss curve
    (one value per epoch) is therefore non-increasing.

    Returns ``(params, loss_curve, final_learning_rate)``.
    """
    params = [p.copy() for p in params]
    loss, grads = loss_and_grad(params)
    if not math.isfinite(loss):
        raise TrainingError("initial training loss is not finite")
    lr = float(learning_rate)
    curve = []
    for _ in range(int(epochs)):
        for _ in range(MAX_HALVINGS):
            trial = [p - lr * g for p, g in zip(params, grads)]
            trial_loss, trial_grads = loss_and_grad(trial)
            if math.isfinite(trial_loss) and trial_loss <= loss:
                params, loss, grads = trial, trial_loss, trial_grads
                break
            lr *= 0.5
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingError("parameters became non-finite")
        curve.append(float(loss))
    return params, curve, lr

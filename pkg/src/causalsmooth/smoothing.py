"""Soft targets (label smoothing, causal smoothing) and the losses that use them.

Smoothing writes the off-class mass as ``eps / K`` and the true-class mass as
``1 - (K - 1) * eps / K``; this equals ``(1 - eps) * y + eps / K`` and keeps
the vector summing to one in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, InputError, NumericError

PROB_FLOOR = 1e-12
DEFAULT_EPSILON = 0.1
DEFAULT_OMEGA = 0.1
DEFAULT_EPSILON_MAX = 0.5
SMOOTHING_MODES = ("none", "label", "causal")


@dataclass(frozen=True)
class SoftLabel:
    distribution: np.ndarray
    source: str = "hard"
    epsilon: float = 0.0

    def __post_init__(self):
        dist = np.asarray(self.distribution, dtype=float)
        if dist.ndim != 1 or np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise InputError(f"not a probability distribution: {dist}")
        object.__setattr__(self, "distribution", dist)

    def __len__(self):
        return self.distribution.size


@dataclass(frozen=True)
class SmoothingConfig:
    mode: str = "none"
    n_classes: int = 2
    epsilon: float = DEFAULT_EPSILON
    omega: float = DEFAULT_OMEGA
    epsilon_max: float = DEFAULT_EPSILON_MAX

    def __post_init__(self):
        if self.mode not in SMOOTHING_MODES:
            raise ConfigurationError(f"smoothing mode must be one of {SMOOTHING_MODES}, got {self.mode!r}")
        if self.n_classes < 2:
            raise ConfigurationError("need K >= 2 classes")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.omega < 0:
            raise ConfigurationError(f"omega must be >= 0, got {self.omega}")
        if not 0.0 < self.epsilon_max <= 0.5:
            raise ConfigurationError(f"epsilon_max must be in (0, 0.5], got {self.epsilon_max}")


@dataclass(frozen=True)
class MultiLabelTarget:
    positives: frozenset
    negatives: frozenset

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(int(i) for i in self.positives))
        object.__setattr__(self, "negatives", frozenset(int(i) for i in self.negatives))
        if self.positives & self.negatives:
            raise InputError("positive and negative label sets overlap")
        labels = self.positives | self.negatives
        if labels != set(range(len(labels))):
            raise InputError("positive and negative sets must partition 0..L-1")

    @classmethod
    def from_multi_hot(cls, labels):
        labels = np.asarray(labels)
        return cls(frozenset(np.flatnonzero(labels == 1).tolist()), frozenset(np.flatnonzero(labels == 0).tolist()))

    def mask(self):
        out = np.zeros(len(self.positives) + len(self.negatives))
        out[list(self.positives)] = 1.0
        return out


def _check_one_hot(y, n_classes):
    y = np.asarray(y, dtype=float)
    if y.shape != (n_classes,) or not np.all((y == 0) | (y == 1)) or y.sum() != 1:
        raise InputError(f"expected a one-hot vector of length {n_classes}, got {y}")
    return int(np.argmax(y))


def smooth_targets(classes, epsilon, n_classes):
    """Smoothed target matrix ``(n, K)`` for integer class labels.

    ``epsilon`` is a scalar (label smoothing) or a per-sample vector (causal
    smoothing).
    """
    classes = np.asarray(classes, dtype=int).reshape(-1)
    if classes.size and (classes.min() < 0 or classes.max() >= n_classes):
        raise InputError(f"class labels must lie in 0..{n_classes - 1}")
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), classes.shape)
    if np.any(eps < 0) or np.any(eps >= 1):
        raise InputError("smoothing epsilon must lie in [0, 1)")
    off = eps / n_classes
    out = np.repeat(off[:, None], n_classes, axis=1)
    out[np.arange(classes.size), classes] = 1.0 - (n_classes - 1) * off
    return out


def label_smooth(y, epsilon, n_classes):
    """Uniform label smoothing of a one-hot vector."""
    if not 0.0 <= epsilon < 1.0:
        raise InputError(f"epsilon must be in [0, 1), got {epsilon}")
    cls = _check_one_hot(y, n_classes)
    return SoftLabel(smooth_targets([cls], epsilon, n_classes)[0], "label_smoothed", float(epsilon))


def causal_smooth(y, epsilon_i, n_classes):
    """Label smoothing with a per-sample epsilon from :func:`causal_epsilon`."""
    if not 0.0 <= epsilon_i < 1.0:
        raise InputError(f"epsilon must be in [0, 1), got {epsilon_i}")
    cls = _check_one_hot(y, n_classes)
    return SoftLabel(smooth_targets([cls], epsilon_i, n_classes)[0], "causal_smoothed", float(epsilon_i))


def causal_epsilon(treatments, table, omega=DEFAULT_OMEGA, epsilon_max=DEFAULT_EPSILON_MAX):
    """``clamp(omega * sum_j ATE(t_j, 0), 0, epsilon_max)`` for one sample."""
    treatments = np.asarray(treatments, dtype=float).reshape(1, -1)
    return float(causal_epsilons(treatments, table, omega, epsilon_max)[0][0])


def causal_epsilons(treatments, table, omega=DEFAULT_OMEGA, epsilon_max=DEFAULT_EPSILON_MAX):
    """Per-sample epsilons for a treatment matrix, plus counts of clamped samples."""
    raw = omega * table.lookup_many(treatments).sum(axis=1)
    eps = np.clip(raw, 0.0, epsilon_max)
    clamped = {"below_zero": int((raw < 0).sum()), "above_max": int((raw > epsilon_max).sum())}
    return eps, clamped


def _log1p_sum_exp(rest, top):
    """``log(exp(-top) + rest) + top``, using ``log1p`` when ``top`` is 0."""
    safe = np.where(top == 0.0, 1.0, top)
    return np.where(top == 0.0, np.log1p(rest), top + np.log(np.exp(-safe) + rest))


def zlpr_loss_and_grad(logits, labels):
    """Mean ZLPR loss over rows and its gradient wrt ``logits``.

    ``labels`` is multi-hot with the same shape as ``logits``; 1 marks the
    positive set of that row. Each of the two log-sum-exp terms is shifted by
    ``max(0, largest exponent in its set)`` so nothing overflows.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if logits.shape != labels.shape:
        raise InputError(f"logits {logits.shape} and labels {labels.shape} differ in shape")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    squeeze = logits.ndim == 1
    logits, labels = np.atleast_2d(logits), np.atleast_2d(labels)
    # labels-major layout: reductions over the (few) labels become elementwise ops
    pos = np.ascontiguousarray(labels.T) == 1
    # exponent -out_i on positives, +out_j on negatives
    expo = np.array(logits.T, order="C")
    np.negative(expo, out=expo, where=pos)
    top_pos = np.maximum(np.where(pos, expo, -np.inf).max(axis=0), 0.0)
    top_neg = np.maximum(np.where(pos, -np.inf, expo).max(axis=0), 0.0)
    e = np.exp(expo - np.where(pos, top_pos, top_neg))
    rest_pos = np.where(pos, e, 0.0).sum(axis=0)
    rest_neg = e.sum(axis=0) - rest_pos
    loss_rows = _log1p_sum_exp(rest_pos, top_pos) + _log1p_sum_exp(rest_neg, top_neg)
    denom = np.where(pos, np.exp(-top_pos) + rest_pos, np.exp(-top_neg) + rest_neg)
    n = logits.shape[0]
    # d/d out: -w on positives, +w on negatives, w the softmax weight within the set
    np.negative(e, out=e, where=pos)
    e /= denom
    e /= n
    grad = e.T
    loss = float(loss_rows.mean())
    return loss, grad[0] if squeeze else grad


def zlpr_loss(logits, target):
    """ZLPR multi-label loss for one sample.

    ``target`` is a :class:`MultiLabelTarget` or a multi-hot vector.
    """
    labels = target.mask() if isinstance(target, MultiLabelTarget) else np.asarray(target, dtype=float)
    return zlpr_loss_and_grad(logits, labels)[0]


def zlpr_grad(logits, target):
    labels = target.mask() if isinstance(target, MultiLabelTarget) else np.asarray(target, dtype=float)
    return zlpr_loss_and_grad(logits, labels)[1]


def soft_cross_entropy(predicted_probs, soft):
    """``-sum_k soft_k log(pred_k)`` with predictions floored at 1e-12."""
    target = soft.distribution if isinstance(soft, SoftLabel) else np.asarray(soft, dtype=float)
    pred = np.asarray(predicted_probs, dtype=float)
    if pred.shape != target.shape:
        raise InputError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    return float(-(target * np.log(np.maximum(pred, PROB_FLOOR))).sum())


def log_softmax(logits):
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def soft_cross_entropy_logits(logits, targets, normalized=False):
    """Mean soft cross-entropy of ``softmax(logits)`` and its gradient wrt ``logits``.

    ``normalized=True`` asserts every target row already sums to one, which
    skips a reduction in the gradient.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if logits.shape != targets.shape:
        raise InputError(f"logits {logits.shape} and targets {targets.shape} differ in shape")
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = -float(np.vdot(targets, logp)) / n
    prob = np.exp(logp)
    if not normalized:
        prob *= targets.sum(axis=1, keepdims=True)
    prob -= targets
    prob /= n
    return loss, prob


def entropy(distribution):
    p = np.asarray(distribution, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def build_targets(classes, config, treatments=None, table=None):
    """Soft target matrix for a whole split under ``config``.

    Returns ``(targets, epsilons, info)``; ``info`` reports how many causal
    epsilons were clamped.
    """
    classes = np.asarray(classes, dtype=int)
    if config.mode == "none":
        eps = np.zeros(classes.size)
        info = {}
    elif config.mode == "label":
        eps = np.full(classes.size, config.epsilon)
        info = {}
    else:
        if treatments is None or table is None:
            raise ConfigurationError("causal smoothing needs treatments and an ATE table")
        eps, info = causal_epsilons(treatments, table, config.omega, config.epsilon_max)
        info = {"clamped": info}
    targets = smooth_targets(classes, eps, config.n_classes)
    info.update({"mean_epsilon": float(eps.mean()), "max_epsilon": float(eps.max()) if eps.size else 0.0})
    return targets, eps, info


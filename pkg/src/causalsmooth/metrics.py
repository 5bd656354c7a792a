"""Binary confusion metrics and class-dispersion statistics of representations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InputError


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self):
        return asdict(self)


def confusion_metrics(predictions, truths, positive_class=1):
    """Precision, recall, F1 and accuracy with ``positive_class`` as positive.

    Precision (recall) is 0 when nothing is predicted (present) positive, and
    F1 is 0 when precision + recall is 0.
    """
    pred = np.asarray(predictions).reshape(-1)
    true = np.asarray(truths).reshape(-1)
    if pred.shape != true.shape:
        raise InputError(f"{pred.size} predictions for {true.size} truths")
    if pred.size == 0:
        raise InputError("cannot score empty predictions")
    p_pos, t_pos = pred == positive_class, true == positive_class
    tp = int(np.sum(p_pos & t_pos))
    fp = int(np.sum(p_pos & ~t_pos))
    fn = int(np.sum(~p_pos & t_pos))
    tn = int(np.sum(~p_pos & ~t_pos))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(precision, recall, f1, (tp + tn) / pred.size, tp, fp, tn, fn)


@dataclass(frozen=True)
class DispersionReport:
    mean_intra_class_distance: dict
    inter_centroid_distance: float
    separation_ratio: float | None

    def to_dict(self):
        return {
            "mean_intra_class_distance": {str(k): v for k, v in self.mean_intra_class_distance.items()},
            "inter_centroid_distance": self.inter_centroid_distance,
            "separation_ratio": self.separation_ratio,
        }


def dispersion(representations, labels):
    """Per-class mean distance to the class centroid and distance between centroids.

    With more than two classes the inter-centroid distance is the mean over
    all centroid pairs. ``separation_ratio`` (inter / mean intra) is ``None``
    when every class has zero spread.
    """
    reps = np.asarray(representations, dtype=float)
    labels = np.asarray(labels).reshape(-1)
    if reps.ndim != 2 or reps.shape[0] != labels.size:
        raise InputError("need one representation row per label")
    classes = np.unique(labels)
    if classes.size < 2:
        raise InputError("dispersion needs at least two classes")
    intra, centroids = {}, []
    for c in classes:
        members = reps[labels == c]
        if members.shape[0] < 2:
            raise InputError(f"class {c} has fewer than two points")
        centroid = members.mean(axis=0)
        centroids.append(centroid)
        key = c.item() if hasattr(c, "item") else c
        intra[key] = float(np.linalg.norm(members - centroid, axis=1).mean())
    pairs = [np.linalg.norm(a - b) for i, a in enumerate(centroids) for b in centroids[i + 1:]]
    inter = float(np.mean(pairs))
    mean_intra = float(np.mean(list(intra.values())))
    ratio = inter / mean_intra if mean_intra > 0 and math.isfinite(inter / mean_intra) else None
    return DispersionReport(intra, inter, ratio)

"""Observational dataset container and JSON-Lines ingestion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, InputError, OutcomeLeakageError, ReportIOError, SchemaError

RECORD_KEYS = ("features", "instrument", "treatments", "outcome", "law_labels")
_VECTOR_KEYS = ("features", "instrument", "treatments", "law_labels")

BINARY = "binary_threshold"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Record:
    features: tuple
    instrument: tuple
    treatments: tuple
    outcome: float
    law_labels: tuple

    def to_dict(self):
        return {
            "features": list(self.features),
            "instrument": list(self.instrument),
            "treatments": list(self.treatments),
            "outcome": self.outcome,
            "law_labels": list(self.law_labels),
        }


def infer_kind(values):
    values = np.asarray(values, dtype=float)
    if values.size and np.all((values == 0.0) | (values == 1.0)):
        return BINARY
    return CONTINUOUS


@dataclass
class Dataset:
    """Column-oriented table of observational records.

    Arrays are row-aligned: ``features`` is ``(n, p)``, ``instrument`` is
    ``(n, d)``, ``treatments`` is ``(n, m)``, ``outcome`` is ``(n,)`` and
    ``law_labels`` is ``(n, L)`` multi-hot.
    """

    features: np.ndarray
    instrument: np.ndarray
    treatments: np.ndarray
    outcome: np.ndarray
    law_labels: np.ndarray
    treatment_kind: str = CONTINUOUS
    outcome_kind: str = CONTINUOUS
    provenance: dict = field(default_factory=lambda: {"kind": "in_memory"})

    def __post_init__(self):
        self.features = _as_2d(self.features, "features")
        self.instrument = _as_2d(self.instrument, "instrument")
        self.treatments = _as_2d(self.treatments, "treatments")
        self.law_labels = _as_2d(self.law_labels, "law_labels")
        self.outcome = np.asarray(self.outcome, dtype=float).reshape(-1)
        n = self.outcome.shape[0]
        if n == 0:
            raise DataError("dataset is empty")
        for key in _VECTOR_KEYS:
            if getattr(self, key).shape[0] != n:
                raise SchemaError(f"column '{key}' has {getattr(self, key).shape[0]} rows, expected {n}")
        if not np.all((self.law_labels == 0.0) | (self.law_labels == 1.0)):
            raise SchemaError("law_labels must be multi-hot (entries in {0, 1})")

    def __len__(self):
        return self.outcome.shape[0]

    @property
    def n_treatments(self):
        return self.treatments.shape[1]

    @property
    def schema(self):
        return {
            "features": ("real", self.features.shape[1]),
            "instrument": ("real", self.instrument.shape[1]),
            "treatments": (self.treatment_kind, self.treatments.shape[1]),
            "outcome": (self.outcome_kind, 1),
            "law_labels": ("multi_hot", self.law_labels.shape[1]),
        }

    def take(self, indices):
        indices = np.asarray(indices)
        return self.replace(
            features=self.features[indices],
            instrument=self.instrument[indices],
            treatments=self.treatments[indices],
            outcome=self.outcome[indices],
            law_labels=self.law_labels[indices],
        )

    def replace(self, **columns):
        values = {key: getattr(self, key) for key in RECORD_KEYS}
        values.update(columns)
        return Dataset(
            treatment_kind=columns.pop("treatment_kind", self.treatment_kind),
            outcome_kind=columns.pop("outcome_kind", self.outcome_kind),
            provenance=dict(self.provenance),
            **{key: values[key] for key in RECORD_KEYS},
        )

    @property
    def records(self):
        return [self.record(i) for i in range(len(self))]

    def record(self, i):
        return Record(
            features=tuple(float(v) for v in self.features[i]),
            instrument=tuple(float(v) for v in self.instrument[i]),
            treatments=tuple(float(v) for v in self.treatments[i]),
            outcome=float(self.outcome[i]),
            law_labels=tuple(int(v) for v in self.law_labels[i]),
        )

    @classmethod
    def from_records(cls, records, provenance=None):
        records = list(records)
        if not records:
            raise DataError("dataset is empty")
        cols = {key: [getattr(r, key) for r in records] for key in RECORD_KEYS}
        treatments = np.asarray(cols["treatments"], dtype=float)
        outcome = np.asarray(cols["outcome"], dtype=float)
        return cls(
            features=np.asarray(cols["features"], dtype=float),
            instrument=np.asarray(cols["instrument"], dtype=float),
            treatments=treatments,
            outcome=outcome,
            law_labels=np.asarray(cols["law_labels"], dtype=float),
            treatment_kind=infer_kind(treatments),
            outcome_kind=infer_kind(outcome),
            provenance=provenance or {"kind": "in_memory"},
        )

    def equals(self, other):
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in RECORD_KEYS)

    def to_jsonl(self):
        return "".join(json.dumps(self.record(i).to_dict()) + "\n" for i in range(len(self)))


def _as_2d(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise SchemaError(f"column '{name}' must be a matrix, got {arr.ndim} dimensions")
    return arr


def save_dataset(data, path):
    path = Path(path)
    try:
        path.write_text(data.to_jsonl(), encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write dataset to {path}: {exc}") from exc


def _check_vector(value, key, lineno, expected_len):
    if not isinstance(value, list):
        raise SchemaError(f"line {lineno}: key '{key}' must be a list of numbers")
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(f"line {lineno}: key '{key}' contains a non-numeric or non-finite value {v!r}")
    if expected_len is not None and len(value) != expected_len:
        raise SchemaError(f"line {lineno}: key '{key}' has length {len(value)}, expected {expected_len}")


def load_dataset(path):
    """Read and validate a JSON-Lines dataset.

    Each line is one record with keys ``features``, ``instrument``,
    ``treatments``, ``outcome`` and ``law_labels``. Vector lengths are fixed
    by the first record. Errors cite the 1-based line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot read dataset {path}: {exc}") from exc

    records = []
    lengths = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(row, dict):
            raise DataError(f"line {lineno}: expected a JSON object")
        for key in RECORD_KEYS:
            if key not in row:
                raise SchemaError(f"line {lineno}: missing required key '{key}'")
        for key in _VECTOR_KEYS:
            _check_vector(row[key], key, lineno, lengths.get(key))
            lengths.setdefault(key, len(row[key]))
        if any(v not in (0, 1) for v in row["law_labels"]):
            raise SchemaError(f"line {lineno}: key 'law_labels' must be multi-hot")
        y = row["outcome"]
        if isinstance(y, bool) or not isinstance(y, (int, float)) or not math.isfinite(y):
            raise SchemaError(f"line {lineno}: key 'outcome' must be a finite number")
        records.append(
            Record(
                features=tuple(row["features"]),
                instrument=tuple(row["instrument"]),
                treatments=tuple(row["treatments"]),
                outcome=float(y),
                law_labels=tuple(int(v) for v in row["law_labels"]),
            )
        )
    if not records:
        raise DataError(f"{path}: no records")
    return Dataset.from_records(records, provenance={"kind": "ingested", "path": str(path)})


class OutcomeGuard:
    """Read-only view of a dataset that logs (and optionally forbids) outcome reads.

    Every other column passes straight through. While ``locked`` any access to
    ``outcome`` is logged with the current stage name and raises
    :class:`OutcomeLeakageError`.
    """

    def __init__(self, data, stage="init", locked=True):
        self._data = data
        self.stage = stage
        self.locked = locked
        self.access_log = []

    def __getattr__(self, name):
        if name == "outcome":
            self.access_log.append(self.stage)
            if self.locked:
                raise OutcomeLeakageError(f"outcome column read during stage '{self.stage}'")
            return self._data.outcome
        if name in ("take", "replace", "records", "record", "to_jsonl", "equals"):
            raise InputError(f"'{name}' would expose the outcome column through an OutcomeGuard")
        return getattr(self._data, name)

    def __len__(self):
        return len(self._data)

    def unlock(self, stage):
        self.stage = stage
        self.locked = False
        return self._data

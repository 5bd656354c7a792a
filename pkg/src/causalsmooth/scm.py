"""Synthetic observational data from a linear (optionally thresholded) SCM.

Causal structure, for each row::

    Z_j ~ Uniform(-1, 1)                 j = 1..m   (exogenous instrument)
    U   ~ Normal(0, 1)                              (unobserved confounder)
    T_j = s * Z_j + a_t * U + sigma_t * e_tj        (thresholded at 0 if binary)
    Y   = sum_j delta_j * T_j + a_y * U + sigma_y * e_y   (thresholded if binary)

Case features are ``[Z_1..Z_m, U + e_proxy, noise...]``: they contain the
instrument, a noisy proxy of the confounder (a direct fact -> outcome path),
and irrelevant uniform columns. Law-article labels are thresholded linear
functions of the instrument block only (see :func:`law_article_rule`), so a
model trained to predict them extracts the exogenous part of the features.

Seed policy: every noise stream draws from
``SeedSequence(master_seed, spawn_key=(offset,))`` with the fixed offsets in
``STREAM_OFFSETS``. Streams are independent of each other and of other master
seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import BINARY, CONTINUOUS, Dataset
from .exceptions import ConfigurationError, InputError, ReportIOError

STREAM_OFFSETS = {
    "instrument": 1,
    "confounder": 2,
    "noise_t": 3,
    "noise_y": 4,
    "proxy": 5,
    "irrelevant": 6,
}
SEED_POLICY = "SeedSequence(master_seed, spawn_key=(offset,)); offsets " + ", ".join(
    f"{k}={v}" for k, v in STREAM_OFFSETS.items()
)
KINDS = (BINARY, CONTINUOUS)
MIN_LAW_ARTICLES = 4
LAW_THRESHOLD_SPAN = 0.6


@dataclass
class SCMConfig:
    n_features: int = 6
    instrument_strength: float = 1.0
    confounder_strength_t: float = 1.0
    treatment_effects: list = field(default_factory=lambda: [2.0])
    confounder_strength_y: float = 1.0
    noise_scale_t: float = 1.0
    noise_scale_y: float = 1.0
    treatment_kind: str = CONTINUOUS
    outcome_kind: str = CONTINUOUS
    seed_policy: str = SEED_POLICY

    def __post_init__(self):
        self.treatment_effects = [float(v) for v in np.atleast_1d(self.treatment_effects)]
        self.validate()

    @property
    def n_treatments(self):
        return len(self.treatment_effects)

    @property
    def n_law_articles(self):
        return max(MIN_LAW_ARTICLES, self.n_treatments)

    def validate(self):
        m = len(self.treatment_effects)
        if m < 1:
            raise ConfigurationError("treatment_effects must contain at least one coefficient")
        if self.n_features < m + 1:
            raise ConfigurationError(
                f"n_features={self.n_features} too small: need the {m} instrument columns plus a confounder proxy"
            )
        if self.noise_scale_t < 0 or self.noise_scale_y < 0:
            raise ConfigurationError("noise scales must be >= 0")
        for name in ("treatment_kind", "outcome_kind"):
            if getattr(self, name) not in KINDS:
                raise ConfigurationError(f"{name} must be one of {KINDS}, got {getattr(self, name)!r}")
        values = [self.instrument_strength, self.confounder_strength_t, self.confounder_strength_y,
                  self.noise_scale_t, self.noise_scale_y, *self.treatment_effects]
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError("SCM coefficients must be finite")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(f"unknown SCMConfig keys: {sorted(unknown)}")
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


def _stream(master_seed, name):
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(STREAM_OFFSETS[name],)))


def law_article_rule(config):
    """Return ``(weights, bias)`` of the published law-article labelling rule.

    Article ``k`` fires when ``Z_a + 0.5 * Z_b > c_k`` with ``a = k mod m``,
    ``b = (k + 1) mod m`` and thresholds ``c_k`` evenly spaced on
    ``[-0.6, 0.6]``. Weights are zero outside the instrument block.
    """
    m = config.n_treatments
    n_articles = config.n_law_articles
    weights = np.zeros((config.n_features, n_articles))
    for k in range(n_articles):
        weights[k % m, k] += 1.0
        weights[(k + 1) % m, k] += 0.5
    bias = -np.linspace(-LAW_THRESHOLD_SPAN, LAW_THRESHOLD_SPAN, n_articles)
    return weights, bias


def _latent_outcome(config, treatments, confounder, noise_y):
    return treatments @ np.asarray(config.treatment_effects) + config.confounder_strength_y * confounder + (
        config.noise_scale_y * noise_y
    )


def _threshold(latent, kind):
    return (latent > 0).astype(float) if kind == BINARY else latent


def generate_dataset(config, n, seed):
    """Draw ``n`` rows from the SCM described by ``config``."""
    if not isinstance(config, SCMConfig):
        raise ConfigurationError("config must be an SCMConfig")
    config.validate()
    if int(n) < 1:
        raise InputError(f"n must be >= 1, got {n}")
    n = int(n)
    m = config.n_treatments

    z = _stream(seed, "instrument").uniform(-1.0, 1.0, size=(n, m))
    u = _stream(seed, "confounder").standard_normal(n)
    e_t = _stream(seed, "noise_t").standard_normal((n, m))
    e_y = _stream(seed, "noise_y").standard_normal(n)
    proxy = u + _stream(seed, "proxy").standard_normal(n)
    irrelevant = _stream(seed, "irrelevant").uniform(-1.0, 1.0, size=(n, config.n_features - m - 1))

    latent_t = config.instrument_strength * z + config.confounder_strength_t * u[:, None] + config.noise_scale_t * e_t
    treatments = _threshold(latent_t, config.treatment_kind)
    outcome = _threshold(_latent_outcome(config, treatments, u, e_y), config.outcome_kind)

    features = np.column_stack([z, proxy, irrelevant])
    weights, bias = law_article_rule(config)
    law_labels = (features @ weights + bias > 0).astype(float)

    return Dataset(
        features=features,
        instrument=z.copy(),
        treatments=treatments,
        outcome=outcome,
        law_labels=law_labels,
        treatment_kind=config.treatment_kind,
        outcome_kind=config.outcome_kind,
        provenance={"kind": "synthetic", "config": config.to_dict(), "seed": int(seed), "n": n},
    )


def true_ate_with_se(config, treatment_index, a, b, n_samples=1_000_000, seed=0):
    """Interventional contrast ``E[Y | do(T_j=a)] - E[Y | do(T_j=b)]`` and its standard error.

    Continuous outcomes are linear in the treatments, so the contrast is
    ``delta_j * (a - b)`` with zero error. Thresholded outcomes are estimated
    by Monte-Carlo: all exogenous noise is resampled once and shared by both
    arms, the other treatments follow their structural equations.
    """
    if not 0 <= treatment_index < config.n_treatments:
        raise InputError(f"treatment_index {treatment_index} out of range for m={config.n_treatments}")
    if a == b:
        return 0.0, 0.0
    if config.outcome_kind == CONTINUOUS:
        return config.treatment_effects[treatment_index] * (a - b), 0.0

    m = config.n_treatments
    z = _stream(seed, "instrument").uniform(-1.0, 1.0, size=(n_samples, m))
    u = _stream(seed, "confounder").standard_normal(n_samples)
    e_t = _stream(seed, "noise_t").standard_normal((n_samples, m))
    e_y = _stream(seed, "noise_y").standard_normal(n_samples)
    latent_t = config.instrument_strength * z + config.confounder_strength_t * u[:, None] + config.noise_scale_t * e_t
    treatments = _threshold(latent_t, config.treatment_kind)

    arms = []
    for value in (a, b):
        forced = treatments.copy()
        forced[:, treatment_index] = value
        arms.append(_threshold(_latent_outcome(config, forced, u, e_y), BINARY))
    diff = arms[0] - arms[1]
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(n_samples))


def true_ate(config, treatment_index, a, b, n_samples=1_000_000, seed=0):
    return true_ate_with_se(config, treatment_index, a, b, n_samples=n_samples, seed=seed)[0]


def load_scm_config(path):
    """Read an SCMConfig from a ``.toml`` or ``.json`` file."""
    from .config import read_config_file

    values = read_config_file(path)
    values = values.get("scm", values)
    return SCMConfig.from_dict(values)


def save_scm_config(config, path):
    path = Path(path)
    try:
        if path.suffix == ".toml":
            import tomli_w

            path.write_text(tomli_w.dumps(config.to_dict()), encoding="utf-8")
        else:
            path.write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write config to {path}: {exc}") from exc

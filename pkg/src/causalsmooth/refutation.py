"""Bootstrap, placebo-treatment and data-subset refutation of an effect estimate.

Replicate ``r`` draws from ``default_rng([seed, r])`` so results do not
depend on evaluation order; ``n_jobs > 1`` evaluates replicates in parallel
with identical output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .dataset import BINARY
from .estimation import estimate
from .exceptions import ConfigurationError, EstimationError, InputError, RefutationError

MAX_FAILED_FRACTION = 0.10
BAND_WIDTH = 2.0
PLACEBO_MODES = ("treatment", "instrument")


@dataclass
class RefutationReport:
    method: str
    original_ate: float
    replicate_ates: list
    replicate_mean: float
    replicate_std: float
    n_reps: int
    verdict: str
    seed: int
    subset_fraction: float | None = None
    failed_replicates: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        out = asdict(self)
        out["replicate_ates"] = [None if v is None or math.isnan(v) else v for v in self.replicate_ates]
        return out

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        values["replicate_ates"] = [float("nan") if v is None else v for v in values["replicate_ates"]]
        return cls(**values)


def _resolve_estimator(estimator, tol_weak):
    if callable(estimator):
        return estimator
    return lambda data, query: estimate(data, query, estimator, tol_weak)


def _summarise(values):
    ok = values[~np.isnan(values)]
    if ok.size and np.all(ok == ok[0]):
        return float(ok[0]), 0.0
    return float(ok.mean()), float(ok.std(ddof=1))


def _run(method, data, query, estimator, n_reps, seed, perturb, tol_weak, n_jobs, **extra):
    if int(n_reps) < 2:
        raise InputError(f"n_reps must be >= 2, got {n_reps}")
    fit = _resolve_estimator(estimator, tol_weak)
    original = fit(data, query).ate

    def one(r):
        rng = np.random.default_rng([int(seed), r])
        try:
            return fit(perturb(rng), query).ate
        except EstimationError:
            return float("nan")

    if n_jobs in (None, 1):
        ates = [one(r) for r in range(n_reps)]
    else:
        ates = Parallel(n_jobs=n_jobs)(delayed(one)(r) for r in range(n_reps))
    ates = np.asarray(ates, dtype=float)
    failed = np.flatnonzero(np.isnan(ates)).tolist()
    if len(failed) > MAX_FAILED_FRACTION * n_reps:
        raise RefutationError(f"{method}: {len(failed)} of {n_reps} replicates failed to estimate")
    mean, std = _summarise(ates)
    return dict(method=method, original_ate=float(original), replicate_ates=ates.tolist(),
                replicate_mean=mean, replicate_std=std, n_reps=int(n_reps), seed=int(seed),
                failed_replicates=failed, **extra)


def _within_band(center, mean, std, width=BAND_WIDTH):
    return abs(mean - center) <= width * std


def bootstrap_refute(data, query, estimator="two_stage_ls", n_reps=100, seed=0, tol_weak=1e-6, n_jobs=None):
    """Re-estimate on with-replacement resamples of the full size.

    Passes when the replicate mean is within two replicate standard
    deviations of the original estimate.
    """
    n = len(data)
    out = _run("bootstrap", data, query, estimator, n_reps, seed,
               lambda rng: data.take(rng.integers(0, n, size=n)), tol_weak, n_jobs)
    verdict = _within_band(out["original_ate"], out["replicate_mean"], out["replicate_std"])
    return RefutationReport(verdict="pass" if verdict else "fail", **out)


def _placebo_treatment(data, query, estimator, rng):
    j = query.treatment_index
    treatments = data.treatments.copy()
    if estimator == "naive":
        col = treatments[:, j]
        if data.treatment_kind == BINARY:
            treatments[:, j] = (rng.random(col.size) < col.mean()).astype(float)
        else:
            treatments[:, j] = rng.permutation(col)
        return data.replace(treatments=treatments)
    # IV estimators: treatments move together with their instruments so the
    # first stage survives while both become independent of the outcome.
    order = rng.permutation(len(data))
    return data.replace(treatments=data.treatments[order], instrument=data.instrument[order])


def placebo_refute(data, query, estimator="two_stage_ls", n_reps=100, seed=0, mode="treatment",
                   placebo_tol=None, tol_weak=1e-6, n_jobs=None):
    """Replace the treatment (or, with ``mode="instrument"``, the instrument) by independent noise.

    In ``treatment`` mode an IV estimator sees the treatment and instrument
    rows permuted jointly against the outcome; the naive estimator sees the
    treatment alone replaced (Bernoulli at the empirical rate when binary,
    a permutation otherwise). ``instrument`` mode permutes only the
    instrument.

    Passes when zero lies within two replicate standard deviations of the
    replicate mean and ``|replicate_mean| <= placebo_tol``, which defaults to
    ``0.05 * max(1, |original_ate|)``.
    """
    if mode not in PLACEBO_MODES:
        raise ConfigurationError(f"placebo mode must be one of {PLACEBO_MODES}, got {mode!r}")
    if mode == "treatment":
        def perturb(rng):
            return _placebo_treatment(data, query, estimator, rng)
    else:
        def perturb(rng):
            return data.replace(instrument=data.instrument[rng.permutation(len(data))])

    out = _run("placebo", data, query, estimator, n_reps, seed, perturb, tol_weak, n_jobs)
    tol = 0.05 * max(1.0, abs(out["original_ate"])) if placebo_tol is None else float(placebo_tol)
    passed = _within_band(0.0, out["replicate_mean"], out["replicate_std"]) and abs(out["replicate_mean"]) <= tol
    return RefutationReport(verdict="pass" if passed else "fail", details={"mode": mode, "placebo_tol": tol}, **out)


def subset_refute(data, query, estimator="two_stage_ls", fraction=0.8, n_reps=100, seed=0, tol_weak=1e-6,
                  n_jobs=None):
    """Re-estimate on uniformly drawn subsets of ``floor(fraction * n)`` rows.

    Row order is preserved within each subset, so ``fraction=1`` reproduces
    the original estimate exactly.
    """
    fraction = float(fraction)
    if not 0.0 < fraction <= 1.0:
        raise ConfigurationError(f"subset fraction must be in (0, 1], got {fraction}")
    n = len(data)
    size = math.floor(fraction * n)
    if size < 2:
        raise ConfigurationError(f"subset of {fraction} x {n} rows leaves fewer than 2 rows")
    out = _run("subset", data, query, estimator, n_reps, seed,
               lambda rng: data.take(np.sort(rng.choice(n, size=size, replace=False))), tol_weak, n_jobs,
               subset_fraction=fraction)
    verdict = _within_band(out["original_ate"], out["replicate_mean"], out["replicate_std"])
    return RefutationReport(verdict="pass" if verdict else "fail", **out)


def refute_all(data, query, estimator="two_stage_ls", n_reps=100, fraction=0.8, seed=0, tol_weak=1e-6,
               n_jobs=None):
    return [
        bootstrap_refute(data, query, estimator, n_reps, seed, tol_weak, n_jobs),
        placebo_refute(data, query, estimator, n_reps, seed, tol_weak=tol_weak, n_jobs=n_jobs),
        subset_refute(data, query, estimator, fraction, n_reps, seed, tol_weak, n_jobs),
    ]


def format_refutation_table(reports):
    header = f"{'method':<10} {'original':>10} {'rep_mean':>10} {'rep_std':>10} {'n_reps':>7}  verdict"
    lines = [header, "-" * len(header)]
    for rep in reports:
        lines.append(
            f"{rep.method:<10} {rep.original_ate:>10.4f} {rep.replicate_mean:>10.4f} "
            f"{rep.replicate_std:>10.4f} {rep.n_reps:>7d}  {rep.verdict}"
        )
    return "\n".join(lines)

"""Average treatment effects by instrumental variables, with a naive baseline.

All estimators assume the outcome is linear in the treatment, so a per-unit
effect ``delta`` gives ``ATE(a, b) = delta * (a - b)`` for any contrast.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .dataset import BINARY
from .exceptions import (
    AteLookupError,
    ConfigurationError,
    EstimationError,
    IdentificationError,
    InputError,
    SingularDesignError,
    StratumError,
    WeakInstrumentError,
)

TOL_WEAK = 1e-6
ESTIMATORS = ("wald", "covariance_iv", "two_stage_ls", "naive")
EXOGENEITY_FLAG = 0.1


@dataclass(frozen=True)
class CausalQuery:
    """Which treatment to estimate, which instrument columns identify it, and the contrast.

    ``instrument_columns=None`` selects every instrument column.
    ``instrument_values`` (z_a, z_b) or ``instrument_split`` define the two
    strata for the Wald estimator when the instrument is not two-valued.
    """

    treatment_index: int = 0
    instrument_columns: tuple | None = None
    contrast: tuple = (1.0, 0.0)
    instrument_values: tuple | None = None
    instrument_split: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "contrast", tuple(float(v) for v in self.contrast))
        if len(self.contrast) != 2:
            raise ConfigurationError("contrast must be a pair (a, b)")
        if self.instrument_columns is not None:
            object.__setattr__(self, "instrument_columns", tuple(int(c) for c in self.instrument_columns))
        if self.instrument_values is not None:
            object.__setattr__(self, "instrument_values", tuple(float(v) for v in self.instrument_values))

    def resolve_instruments(self, data):
        width = data.instrument.shape[1]
        cols = tuple(range(width)) if self.instrument_columns is None else self.instrument_columns
        if not cols:
            raise ConfigurationError("instrument selector resolves to no columns")
        bad = [c for c in cols if not 0 <= c < width]
        if bad:
            raise ConfigurationError(f"instrument columns {bad} not in dataset (width {width})")
        if not 0 <= self.treatment_index < data.treatments.shape[1]:
            raise ConfigurationError(
                f"treatment_index {self.treatment_index} not in dataset (m={data.treatments.shape[1]})"
            )
        return cols

    def with_contrast(self, a, b):
        return CausalQuery(self.treatment_index, self.instrument_columns, (a, b),
                           self.instrument_values, self.instrument_split)

    def to_dict(self):
        out = asdict(self)
        for key in ("instrument_columns", "contrast", "instrument_values"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, values):
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigurationError(f"invalid causal query {values}: {exc}") from exc


@dataclass
class CausalEstimate:
    ate: float
    std_error: float
    estimator: str
    treatment_index: int
    contrast: tuple
    n_used: int
    first_stage_strength: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def effect_per_unit(self):
        return self.diagnostics["effect_per_unit"]

    def to_dict(self):
        out = asdict(self)
        out["contrast"] = list(self.contrast)
        return out

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        values["contrast"] = tuple(values["contrast"])
        return cls(**values)


def _make_estimate(delta, se_delta, estimator, query, n, strength, **diagnostics):
    a, b = query.contrast
    scale = a - b
    return CausalEstimate(
        ate=float(delta * scale),
        std_error=float(se_delta * abs(scale)),
        estimator=estimator,
        treatment_index=query.treatment_index,
        contrast=query.contrast,
        n_used=int(n),
        first_stage_strength=float(strength),
        diagnostics={"effect_per_unit": float(delta), "se_per_unit": float(se_delta), **diagnostics},
    )


def _columns(data, query):
    cols = query.resolve_instruments(data)
    if len(data) < 2:
        raise InputError("need at least 2 rows to estimate an effect")
    return cols, data.treatments[:, query.treatment_index], np.asarray(data.outcome, dtype=float)


def _var(x):
    return float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def wald_ate(data, query, tol_weak=TOL_WEAK):
    """Ratio of instrument-stratum mean differences in outcome and treatment.

    The strata default to the two values of a two-valued instrument (larger
    value first); ``query.instrument_values`` or ``query.instrument_split``
    override this. Standard error by the delta method.
    """
    cols, t, y = _columns(data, query)
    if len(cols) != 1:
        raise InputError(f"wald_ate needs a single instrument column, got {len(cols)}")
    z = data.instrument[:, cols[0]]

    if query.instrument_values is not None:
        za, zb = query.instrument_values
        in_a, in_b = z == za, z == zb
    elif query.instrument_split is not None:
        in_a = z > query.instrument_split
        in_b = ~in_a
    else:
        levels = np.unique(z)
        if levels.size == 1:
            raise WeakInstrumentError("instrument column is constant")
        if levels.size != 2:
            raise StratumError(
                f"instrument takes {levels.size} values; supply instrument_values or instrument_split"
            )
        in_a, in_b = z == levels[1], z == levels[0]

    n_a, n_b = int(in_a.sum()), int(in_b.sum())
    if n_a == 0 or n_b == 0:
        raise StratumError(f"empty instrument stratum (sizes {n_a}, {n_b})")

    ya, yb, ta, tb = y[in_a], y[in_b], t[in_a], t[in_b]
    numerator = ya.mean() - yb.mean()
    denominator = ta.mean() - tb.mean()
    if abs(denominator) < tol_weak:
        raise WeakInstrumentError(f"first-stage difference {denominator:.3g} below tolerance {tol_weak:g}")
    delta = numerator / denominator

    def _cov(u, v):
        return float(np.cov(u, v, ddof=1)[0, 1]) if u.size > 1 else 0.0

    var_num = _var(ya) / n_a + _var(yb) / n_b
    var_den = _var(ta) / n_a + _var(tb) / n_b
    cov_nd = _cov(ya, ta) / n_a + _cov(yb, tb) / n_b
    var_delta = (var_num - 2.0 * delta * cov_nd + delta**2 * var_den) / denominator**2
    return _make_estimate(delta, math.sqrt(max(var_delta, 0.0)), "wald", query, n_a + n_b,
                          abs(denominator), strata_sizes=[n_a, n_b])


def covariance_iv(data, query, tol_weak=TOL_WEAK):
    """Cov(Y, Z) / Cov(T, Z) for one instrument column and one treatment."""
    cols, t, y = _columns(data, query)
    if len(cols) != 1:
        raise InputError(f"covariance_iv needs a single instrument column, got {len(cols)}")
    z = data.instrument[:, cols[0]]
    n = z.size
    zc, tc, yc = z - z.mean(), t - t.mean(), y - y.mean()
    cov_tz = float(tc @ zc) / (n - 1)
    if abs(cov_tz) < tol_weak:
        raise WeakInstrumentError(f"Cov(T, Z) = {cov_tz:.3g} below tolerance {tol_weak:g}")
    delta = (float(yc @ zc) / (n - 1)) / cov_tz
    resid = yc - delta * tc
    sigma2 = float(resid @ resid) / (n - 2) if n > 2 else 0.0
    se = math.sqrt(sigma2 * float(zc @ zc)) / abs(float(tc @ zc))
    return _make_estimate(delta, se, "covariance_iv", query, n, abs(cov_tz))


class TwoStageLeastSquares(RegressorMixin, BaseEstimator):
    """Linear IV regression by two-stage least squares.

    Both stages include an intercept. Standard errors are the classical
    (homoskedastic) ones, using structural residuals ``y - [1, X] beta``.

    Parameters
    ----------
    tol_weak : float
        Minimum norm of each treatment's first-stage coefficients on the
        instruments.
    """

    def __init__(self, tol_weak=TOL_WEAK):
        self.tol_weak = tol_weak

    def fit(self, X, y, Z):
        X = check_array(X, ensure_2d=False, dtype=float)
        Z = check_array(Z, ensure_2d=False, dtype=float)
        X = X.reshape(len(X), -1)
        Z = Z.reshape(len(Z), -1)
        y = np.asarray(y, dtype=float).reshape(-1)
        check_consistent_length(X, y, Z)
        n, m = X.shape
        k = Z.shape[1]
        if k < m:
            raise IdentificationError(f"{k} instrument columns cannot identify {m} treatments")
        if n < m + 2:
            raise InputError(f"need more than {m + 1} rows, got {n}")

        Zc = np.column_stack([np.ones(n), Z])
        if np.linalg.matrix_rank(Zc) < k + 1:
            raise SingularDesignError("instrument design matrix (with intercept) is rank deficient")
        gamma = np.linalg.lstsq(Zc, X, rcond=None)[0]
        strength = np.linalg.norm(gamma[1:], axis=0)
        weak = np.flatnonzero(strength < self.tol_weak)
        if weak.size:
            raise WeakInstrumentError(
                f"first-stage coefficients for treatments {weak.tolist()} below tolerance {self.tol_weak:g}"
            )
        X_hat = Zc @ gamma
        Xh = np.column_stack([np.ones(n), X_hat])
        if np.linalg.matrix_rank(Xh) < m + 1:
            raise SingularDesignError("fitted treatments are collinear; second stage is rank deficient")
        beta = np.linalg.lstsq(Xh, y, rcond=None)[0]

        resid = y - np.column_stack([np.ones(n), X]) @ beta
        sigma2 = float(resid @ resid) / (n - m - 1)
        cov = sigma2 * np.linalg.inv(Xh.T @ Xh)

        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.stderr_ = np.sqrt(np.clip(np.diag(cov)[1:], 0.0, None))
        self.first_stage_coef_ = gamma
        self.first_stage_strength_ = strength
        self.n_samples_ = n
        self.n_features_in_ = m
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_2d=False, dtype=float).reshape(-1, self.n_features_in_)
        return self.intercept_ + X @ self.coef_

    def residuals(self, X, y):
        return np.asarray(y, dtype=float) - self.predict(X)


def two_stage_least_squares(data, instrument_columns, treatment_columns, contrast=(1.0, 0.0), tol_weak=TOL_WEAK):
    """Joint 2SLS of the outcome on several treatments; one estimate per treatment."""
    instrument_columns = tuple(int(c) for c in instrument_columns)
    treatment_columns = tuple(int(c) for c in treatment_columns)
    if not treatment_columns:
        raise ConfigurationError("no treatment columns given")
    if len(instrument_columns) < len(treatment_columns):
        raise IdentificationError(
            f"{len(instrument_columns)} instrument columns cannot identify {len(treatment_columns)} treatments"
        )
    for j in treatment_columns:
        CausalQuery(j, instrument_columns).resolve_instruments(data)
    model = TwoStageLeastSquares(tol_weak=tol_weak).fit(
        data.treatments[:, list(treatment_columns)], data.outcome, data.instrument[:, list(instrument_columns)]
    )
    out = []
    for pos, j in enumerate(treatment_columns):
        query = CausalQuery(j, instrument_columns, contrast)
        out.append(
            _make_estimate(model.coef_[pos], model.stderr_[pos], "two_stage_ls", query, model.n_samples_,
                           model.first_stage_strength_[pos], intercept=model.intercept_,
                           joint_treatments=list(treatment_columns))
        )
    return out


def naive_ate(data, query):
    """Conditional contrast ``E[Y | T=a] - E[Y | T=b]`` ignoring confounding.

    When the treatment never takes the contrast values exactly (continuous
    treatment), the conditional slope of Y on T is used instead.
    """
    query.resolve_instruments(data)
    t = data.treatments[:, query.treatment_index]
    y = np.asarray(data.outcome, dtype=float)
    a, b = query.contrast
    in_a, in_b = t == a, t == b
    n_a, n_b = int(in_a.sum()), int(in_b.sum())

    if n_a and n_b:
        ate = y[in_a].mean() - y[in_b].mean()
        dof = n_a + n_b - 2
        if dof > 0:
            pooled = (((y[in_a] - y[in_a].mean()) ** 2).sum() + ((y[in_b] - y[in_b].mean()) ** 2).sum()) / dof
        else:
            pooled = 0.0
        se = math.sqrt(pooled * (1.0 / n_a + 1.0 / n_b))
        per_unit = (ate / (a - b), se / abs(a - b)) if a != b else (0.0, 0.0)
        return CausalEstimate(
            ate=float(ate), std_error=float(se), estimator="naive", treatment_index=query.treatment_index,
            contrast=query.contrast, n_used=n_a + n_b if a != b else n_a, first_stage_strength=1.0,
            diagnostics={"effect_per_unit": float(per_unit[0]), "se_per_unit": float(per_unit[1]),
                         "mode": "strata", "strata_sizes": [n_a, n_b]},
        )

    if np.unique(t).size <= 2:
        raise StratumError(f"treatment stratum empty for contrast ({a:g}, {b:g}): sizes {n_a}, {n_b}")
    tc, yc = t - t.mean(), y - y.mean()
    slope = float(tc @ yc) / float(tc @ tc)
    resid = yc - slope * tc
    se = math.sqrt(float(resid @ resid) / (t.size - 2) / float(tc @ tc))
    return _make_estimate(slope, se, "naive", query, t.size, 1.0, mode="slope")


def estimate(data, query, estimator="two_stage_ls", tol_weak=TOL_WEAK):
    """Dispatch a query to one of :data:`ESTIMATORS`.

    For ``two_stage_ls`` the fit is joint over every treatment column when the
    selected instruments can identify them all, so that omitted treatments do
    not bias the one queried.
    """
    if estimator == "wald":
        return wald_ate(data, query, tol_weak)
    if estimator == "covariance_iv":
        return covariance_iv(data, query, tol_weak)
    if estimator == "naive":
        return naive_ate(data, query)
    if estimator == "two_stage_ls":
        cols = query.resolve_instruments(data)
        m = data.treatments.shape[1]
        treatments = tuple(range(m)) if len(cols) >= m else (query.treatment_index,)
        estimates = two_stage_least_squares(data, cols, treatments, query.contrast, tol_weak)
        return estimates[treatments.index(query.treatment_index)]
    raise ConfigurationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


@dataclass
class AteTable:
    """Lookup of ``ATE(t, 0)`` per treatment.

    Binary treatments resolve ``t in {0, 1}``; continuous treatments resolve
    any ``t`` through the linear effect ``effect_per_unit * t``.
    """

    estimator: str
    treatment_kind: str
    effects: dict
    std_errors: dict = field(default_factory=dict)
    failed: dict = field(default_factory=dict)

    def lookup(self, treatment_index, value):
        j = int(treatment_index)
        if j in self.failed:
            raise AteLookupError(f"treatment {j} has no estimate: {self.failed[j]}")
        if j not in self.effects:
            raise AteLookupError(f"treatment {j} not in the ATE table")
        if value == 0:
            return 0.0
        if self.treatment_kind == BINARY and value != 1:
            raise AteLookupError(f"binary treatment {j} has no entry for value {value!r}")
        return self.effects[j] * value

    def lookup_many(self, treatments):
        """Vectorised ``ATE(t_ij, 0)`` for a treatment matrix ``(n, m)``."""
        treatments = np.asarray(treatments, dtype=float)
        out = np.empty_like(treatments)
        for j in range(treatments.shape[1]):
            col = treatments[:, j]
            if self.treatment_kind == BINARY and not np.all((col == 0) | (col == 1)):
                bad = col[(col != 0) & (col != 1)][0]
                raise AteLookupError(f"binary treatment {j} has no entry for value {bad!r}")
            if np.any(col != 0):
                self.lookup(j, 1.0)
            effect = self.effects.get(j, 0.0)
            out[:, j] = np.where(col == 0, 0.0, effect * col)
        return out

    @property
    def entries(self):
        rows = []
        for j in sorted(set(self.effects) | set(self.failed)):
            for value in (0.0, 1.0):
                try:
                    ate = self.lookup(j, value)
                except AteLookupError:
                    ate = None
                rows.append({"treatment_index": j, "value": value, "ate": ate})
        return rows

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "treatment_kind": self.treatment_kind,
            "effects": {str(k): v for k, v in self.effects.items()},
            "std_errors": {str(k): v for k, v in self.std_errors.items()},
            "failed": {str(k): v for k, v in self.failed.items()},
            "entries": self.entries,
        }

    @classmethod
    def from_dict(cls, values):
        return cls(
            estimator=values["estimator"],
            treatment_kind=values["treatment_kind"],
            effects={int(k): float(v) for k, v in values["effects"].items()},
            std_errors={int(k): float(v) for k, v in values.get("std_errors", {}).items()},
            failed={int(k): v for k, v in values.get("failed", {}).items()},
        )


def ate_table(data, queries, estimator="two_stage_ls", tol_weak=TOL_WEAK):
    """Estimate ``ATE(1, 0)`` per queried treatment and tabulate ``ATE(t, 0)``.

    Estimator failures are recorded per treatment in ``failed`` rather than
    raised.
    """
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    queries = list(queries)
    if not queries:
        raise ConfigurationError("ate_table needs at least one query")
    for query in queries:
        query.resolve_instruments(data)

    effects, errors, failed = {}, {}, {}
    for query in queries:
        j = query.treatment_index
        try:
            est = estimate(data, query.with_contrast(1.0, 0.0), estimator, tol_weak)
        except EstimationError as exc:
            failed[j] = f"{type(exc).__name__}: {exc}"
            continue
        effects[j] = est.effect_per_unit
        errors[j] = est.diagnostics["se_per_unit"]
    return AteTable(estimator=estimator, treatment_kind=data.treatment_kind, effects=effects,
                    std_errors=errors, failed=failed)


def exogeneity_check(data, instrument_columns, estimates, intercept, threshold=EXOGENEITY_FLAG):
    """Correlation of each instrument column with the structural outcome residual.

    The residual is ``y - intercept - sum_j delta_j t_j`` using the IV
    estimates. Columns with ``|r| > threshold`` are flagged.
    """
    y = np.asarray(data.outcome, dtype=float)
    resid = y - intercept
    for est in estimates:
        resid = resid - est.effect_per_unit * data.treatments[:, est.treatment_index]
    resid = resid - resid.mean()
    correlations = []
    for c in instrument_columns:
        z = data.instrument[:, c] - data.instrument[:, c].mean()
        denom = math.sqrt(float(z @ z) * float(resid @ resid))
        correlations.append(float(z @ resid) / denom if denom > 0 else 0.0)
    max_abs = max(abs(r) for r in correlations)
    return {
        "residual_correlations": correlations,
        "max_abs_correlation": max_abs,
        "threshold": threshold,
        "flagged": bool(max_abs > threshold),
    }

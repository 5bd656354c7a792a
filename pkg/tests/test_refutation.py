import math

import numpy as np
import pytest
from conftest import make_dataset

from causalsmooth import (
    CausalQuery,
    ConfigurationError,
    InputError,
    RefutationError,
    RefutationReport,
    bootstrap_refute,
    placebo_refute,
    refute_all,
    subset_refute,
)
from causalsmooth.refutation import format_refutation_table

Q = CausalQuery(0)


@pytest.fixture(scope="module")
def data():
    return make_dataset(n=3000, seed=11, delta=2.0)


def test_refute_all_passes(data):
    reports = refute_all(data, Q, n_reps=30, seed=1)
    assert [r.method for r in reports] == ["bootstrap", "placebo", "subset"]
    assert all(r.passed for r in reports)
    assert len(reports[0].replicate_ates) == 30


def test_placebo_naive_binary_uses_bernoulli():
    binary = make_dataset(n=2000, seed=4, binary_treatment=True)
    rep = placebo_refute(binary, Q, estimator="naive", n_reps=20, seed=0)
    assert rep.passed and abs(rep.replicate_mean) < 0.2


def test_placebo_instrument_mode(data):
    rep = placebo_refute(data, Q, mode="instrument", n_reps=20, seed=0, placebo_tol=10.0)
    assert rep.details["mode"] == "instrument"
    with pytest.raises(ConfigurationError):
        placebo_refute(data, Q, mode="outcome")


def test_subset_full_fraction_reproduces_original(data):
    rep = subset_refute(data, Q, fraction=1.0, n_reps=3, seed=0)
    assert rep.replicate_ates == [rep.original_ate] * 3
    assert rep.replicate_std == 0.0 and rep.passed


def test_subset_bad_fraction(data):
    for fraction in (0.0, 1.5):
        with pytest.raises(ConfigurationError):
            subset_refute(data, Q, fraction=fraction)
    with pytest.raises(ConfigurationError):
        subset_refute(data.take([0, 1, 2]), Q, fraction=0.5)


def test_n_reps_validated(data):
    with pytest.raises(InputError):
        bootstrap_refute(data, Q, n_reps=1)


def test_seed_changes_replicates(data):
    a = bootstrap_refute(data, Q, n_reps=5, seed=1)
    b = bootstrap_refute(data, Q, n_reps=5, seed=2)
    assert a.replicate_ates != b.replicate_ates


def test_parallel_matches_serial(data):
    serial = bootstrap_refute(data, Q, n_reps=6, seed=3, n_jobs=1)
    parallel = bootstrap_refute(data, Q, n_reps=6, seed=3, n_jobs=2)
    assert serial.to_dict() == parallel.to_dict()


def test_failed_replicates_abort():
    # one non-zero instrument row: many resamples drop it and lose identification
    data = make_dataset(n=20, seed=0)
    z = np.zeros((20, 1))
    z[0] = 1.0
    with pytest.raises(RefutationError):
        bootstrap_refute(data.replace(instrument=z), Q, estimator="covariance_iv", n_reps=20)


def test_report_roundtrip_and_table(data):
    rep = bootstrap_refute(data, Q, n_reps=4, seed=0)
    rep.replicate_ates[0] = math.nan
    back = RefutationReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()
    table = format_refutation_table([rep])
    assert "bootstrap" in table and "verdict" in table

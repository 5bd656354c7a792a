import numpy as np
import pytest
from conftest import make_dataset
from sklearn.base import clone

from causalsmooth import (
    AteLookupError,
    AteTable,
    CausalEstimate,
    CausalQuery,
    ConfigurationError,
    SCMConfig,
    StratumError,
    TwoStageLeastSquares,
    WeakInstrumentError,
    ate_table,
    covariance_iv,
    estimate,
    exogeneity_check,
    generate_dataset,
    naive_ate,
    two_stage_least_squares,
    wald_ate,
)
from causalsmooth.exceptions import IdentificationError, InputError, SingularDesignError

Q = CausalQuery(0)


def test_estimators_recover_effect():
    data = generate_dataset(SCMConfig(treatment_effects=[1.5]), 50_000, 0)
    for name in ("covariance_iv", "two_stage_ls"):
        est = estimate(data, Q, name)
        assert abs(est.ate - 1.5) < 4 * est.std_error + 0.01
    wald = estimate(data, CausalQuery(0, instrument_split=0.0), "wald")
    assert abs(wald.ate - 1.5) < 4 * wald.std_error
    assert naive_ate(data, Q).ate - 1.5 > 0.2


def test_covariance_iv_equals_2sls_single_instrument(small_data):
    a = covariance_iv(small_data, Q)
    (b,) = two_stage_least_squares(small_data, [0], [0])
    assert a.ate == pytest.approx(b.ate, rel=1e-10)
    assert a.std_error == pytest.approx(b.std_error, rel=1e-6)


def test_joint_2sls_over_several_treatments():
    config = SCMConfig(treatment_effects=[2.0, -1.0, 0.5], n_features=6)
    data = generate_dataset(config, 60_000, 1)
    estimates = two_stage_least_squares(data, [0, 1, 2], [0, 1, 2])
    for est, truth in zip(estimates, config.treatment_effects):
        assert abs(est.ate - truth) < 0.1
    assert estimate(data, CausalQuery(1), "two_stage_ls").ate == estimates[1].ate


def test_contrast_scaling(small_data):
    unit = estimate(small_data, Q).ate
    assert estimate(small_data, CausalQuery(0, contrast=(3.0, 1.0))).ate == pytest.approx(2 * unit)


def test_weak_and_constant_instruments(small_data):
    constant = small_data.replace(instrument=np.ones((len(small_data), 1)))
    with pytest.raises(WeakInstrumentError):
        wald_ate(constant, Q)
    with pytest.raises(WeakInstrumentError):
        covariance_iv(constant, Q)
    with pytest.raises((WeakInstrumentError, SingularDesignError)):
        two_stage_least_squares(constant, [0], [0])
    tiny = small_data.replace(instrument=small_data.instrument * 1e-9)
    with pytest.raises(WeakInstrumentError):
        covariance_iv(tiny, Q, tol_weak=1e-6)


def test_wald_strata_errors(small_data):
    with pytest.raises(StratumError):
        wald_ate(small_data, Q)
    with pytest.raises(StratumError):
        wald_ate(small_data, CausalQuery(0, instrument_values=(5.0, 6.0)))


def test_wald_binary_instrument():
    data = make_dataset(n=500, seed=3, binary_instrument=True)
    z, t, y = data.instrument[:, 0] == 1, data.treatments[:, 0], data.outcome
    expected = (y[z].mean() - y[~z].mean()) / (t[z].mean() - t[~z].mean())
    assert wald_ate(data, Q).ate == pytest.approx(expected, rel=1e-12)


def test_identification_and_selectors(small_data):
    two = make_dataset(n=300, m=2)
    with pytest.raises(IdentificationError):
        two_stage_least_squares(two, [0], [0, 1])
    with pytest.raises(ConfigurationError):
        estimate(small_data, CausalQuery(0, instrument_columns=(4,)))
    with pytest.raises(ConfigurationError):
        estimate(small_data, CausalQuery(3))
    with pytest.raises(ConfigurationError):
        estimate(small_data, Q, "ols")
    with pytest.raises(InputError):
        covariance_iv(two, CausalQuery(0))


def test_naive_binary_strata():
    data = make_dataset(n=400, seed=2, binary_treatment=True)
    t, y = data.treatments[:, 0], data.outcome
    est = naive_ate(data, Q)
    assert est.ate == pytest.approx(y[t == 1].mean() - y[t == 0].mean())
    with pytest.raises(StratumError):
        naive_ate(data, CausalQuery(0, contrast=(2.0, 0.0)))


def test_estimate_roundtrip(small_data):
    est = estimate(small_data, Q)
    assert CausalEstimate.from_dict(est.to_dict()) == est
    assert CausalQuery.from_dict(Q.to_dict()) == Q


def test_sklearn_estimator_api(small_data):
    model = TwoStageLeastSquares(tol_weak=1e-4)
    assert model.get_params() == {"tol_weak": 1e-4}
    fitted = clone(model).fit(small_data.treatments, small_data.outcome, small_data.instrument)
    assert fitted.predict(small_data.treatments).shape == (len(small_data),)
    assert fitted.residuals(small_data.treatments, small_data.outcome).mean() == pytest.approx(0, abs=0.1)


def test_ate_table_continuous(small_data):
    table = ate_table(small_data, [Q])
    delta = table.effects[0]
    assert table.lookup(0, 0) == 0.0
    assert table.lookup(0, 2.5) == pytest.approx(2.5 * delta)
    with pytest.raises(AteLookupError):
        table.lookup(1, 1.0)
    assert AteTable.from_dict(table.to_dict()) == table


def test_ate_table_binary_and_failures():
    data = make_dataset(n=500, binary_treatment=True)
    table = ate_table(data, [Q])
    assert table.lookup(0, 1.0) == table.effects[0]
    with pytest.raises(AteLookupError):
        table.lookup(0, 0.5)
    broken = data.replace(instrument=np.zeros((500, 1)))
    table = ate_table(broken, [Q], "covariance_iv")
    assert 0 in table.failed
    with pytest.raises(AteLookupError):
        table.lookup(0, 1.0)
    assert table.lookup_many(np.zeros((3, 1))).tolist() == [[0.0], [0.0], [0.0]]


def test_exogeneity_check(small_data):
    est = estimate(small_data, Q)
    clean = exogeneity_check(small_data, [0], [est], est.diagnostics["intercept"])
    assert not clean["flagged"]
    leaky = small_data.replace(instrument=small_data.outcome - 2 * small_data.treatments[:, 0])
    dirty = exogeneity_check(leaky, [0], [est], est.diagnostics["intercept"])
    assert dirty["flagged"] and dirty["max_abs_correlation"] > 0.5

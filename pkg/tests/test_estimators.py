import numpy as np
import pytest
from sklearn.base import clone

from distlstm.data import Dataset, LabeledSequence, synth_window_series
from distlstm.estimators import (
    DistributedLSTMRegressor,
    EKFLSTMRegressor,
    PFLSTMRegressor,
    SGDLSTMRegressor,
    check_sequences,
)
from distlstm.exceptions import DimensionError
from distlstm.harness import ExperimentConfig, run_experiment


@pytest.fixture(scope="module")
def series():
    ds = synth_window_series(0, 42, 0.6, 0.3, 0.1)
    return [it.X for it in ds], ds.labels


ESTIMATORS = [
    SGDLSTMRegressor(),
    EKFLSTMRegressor(),
    PFLSTMRegressor(n_particles=15),
    DistributedLSTMRegressor(algorithm="dekf"),
    DistributedLSTMRegressor(algorithm="dpf", n_particles=15),
]


@pytest.mark.parametrize("est", ESTIMATORS, ids=lambda e: type(e).__name__ + getattr(e, "algorithm", ""))
def test_fit_predict_clone(est, series):
    X, y = series
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params() == params
    est = clone(est).fit(X, y)
    pred = est.predict(X[:5])
    assert pred.shape == (5,) and np.all(np.isfinite(pred))
    assert np.array_equal(pred, est.predict(X[:5]))  # predict does not train
    assert est.coef_.shape == (est.model_.n_theta,)
    assert len(est.prequential_errors_) > 0
    refit = clone(est).fit(X, y)
    np.testing.assert_array_equal(refit.predict(X[:5]), pred)


def test_partial_fit_equals_fit(series):
    X, y = series
    a = PFLSTMRegressor(n_particles=10).fit(X, y)
    b = PFLSTMRegressor(n_particles=10)
    b.partial_fit(X[:17], y[:17]).partial_fit(X[17:], y[17:])
    np.testing.assert_array_equal(a.coef_, b.coef_)


def test_distributed_estimator_matches_harness(series):
    X, y = series
    est = DistributedLSTMRegressor(algorithm="dpf", n_particles=12, random_state=4).fit(X, y)
    ds = Dataset([LabeledSequence(x, d) for x, d in zip(X, y)])
    log = run_experiment(ExperimentConfig(algorithm="dpf", particles=12, seed=4), ds)
    se = log.squared_errors()
    np.testing.assert_allclose(np.array(est.prequential_errors_).reshape(se.shape), se, rtol=0, atol=0)


def test_input_validation(series):
    X, y = series
    with pytest.raises(ValueError):
        SGDLSTMRegressor().fit(X, y[:-1])
    with pytest.raises(DimensionError):
        check_sequences(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        SGDLSTMRegressor().fit([], [])
    est = SGDLSTMRegressor().fit(X, y)
    with pytest.raises(DimensionError):
        est.predict([np.zeros((2, 3))])
    with pytest.raises(ValueError):
        DistributedLSTMRegressor(algorithm="sgd").fit(X, y)


def test_three_dimensional_input():
    X = np.random.default_rng(0).normal(size=(6, 3, 2))
    est = EKFLSTMRegressor().fit(X, np.zeros(6))
    assert est.predict(X).shape == (6,)

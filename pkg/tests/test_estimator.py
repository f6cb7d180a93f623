import numpy as np
import pytest
from sklearn.base import clone

from vwsgibbs.estimator import JointSAE
from vwsgibbs.ingest import SimulationSettings, simulate_dataset


@pytest.fixture(scope="module")
def data():
    d, _ = simulate_dataset(SimulationSettings(m=40), np.random.default_rng(11))
    return d


def fit(data, **kw):
    est = JointSAE(iterations=300, burn=100, random_state=0, **kw)
    return est.fit(data.X[:, 1:], data.y, data.s2, n=data.n)


def test_params_and_clone():
    est = JointSAE(sampler="mwg", eps1=0.5)
    params = est.get_params()
    assert params["sampler"] == "mwg" and params["eps1"] == 0.5 and params["sigma2_init"] == "ones"
    other = clone(est)
    assert other.get_params() == params and other is not est


def test_fit_attributes(data):
    est = fit(data)
    assert est.theta_.shape == (40,) and est.sigma2_.shape == (40,)
    assert est.coef_.shape == (1,) and est.gamma_.shape == (2,)
    assert est.phi2_ > 0 and est.tau2_ > 0 and np.all(est.sigma2_ > 0)
    assert est.chain_.draws["sigma2"].shape == (200, 40)
    pred = est.predict(data.X[:, 1:])
    assert np.allclose(pred, data.X @ np.r_[est.intercept_, est.coef_])


def test_fit_deterministic(data):
    a, b = fit(data), fit(data)
    assert np.array_equal(a.chain_.draws["theta"], b.chain_.draws["theta"])


def test_fit_with_degrees_of_freedom(data):
    est = JointSAE(sampler="mwg", iterations=200, burn=100, sigma2_init="data", random_state=1)
    est.fit(data.X[:, 1:], data.y, data.s2, d=data.d, Z=data.Z[:, 1:])
    assert est.theta_.shape == (40,)


def test_fit_errors(data):
    with pytest.raises(ValueError):
        JointSAE().fit(data.X[:, 1:], data.y, data.s2)
    with pytest.raises(ValueError):
        JointSAE().fit(data.X[:, 1:], data.y, data.s2, d=data.d)
    with pytest.raises(ValueError):
        fit(data, sigma2_init="random")
    est = fit(data)
    with pytest.raises(ValueError):
        est.predict(np.ones((3, 2)))


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        JointSAE().predict(np.ones((2, 1)))

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from brickcms.estimator import CountMinEstimator, check_flow_keys, check_sizes
from brickcms.flowkey import FlowKey
from brickcms.traces import ZipfSpec, exact_counts, gen_zipf


@pytest.fixture(scope="module")
def trace():
    return gen_zipf(ZipfSpec(5000, 200, 1.0, seed=1))


def test_params_and_clone():
    est = CountMinEstimator(width=1 << 10, backend="hbrick", seed=3)
    params = est.get_params()
    assert params["width"] == 1 << 10 and params["backend"] == "hbrick"
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(strategy="conservative")
    assert est.strategy == "conservative"


def test_fit_predict_matches_oracle(trace):
    oc = exact_counts(trace)
    keys = list(oc.flows)
    est = CountMinEstimator(width=1 << 16, seed=0).fit(trace)
    assert est.n_packets_ == len(trace)
    pred = est.predict(keys)
    assert pred.dtype == np.int64
    assert pred.tolist() == [oc[k] for k in keys]
    assert est.score(keys, [oc[k] for k in keys]) == 0.0


def test_partial_fit_equals_fit(trace):
    a = CountMinEstimator(width=1 << 8, seed=1).fit(trace)
    b = CountMinEstimator(width=1 << 8, seed=1)
    b.partial_fit(trace[:2000]).partial_fit(trace[2000:])
    keys = [p.key for p in trace[:300]]
    assert (a.predict(keys) == b.predict(keys)).all()
    a.fit(trace[:10])
    assert a.n_packets_ == 10


def test_array_input_and_weights():
    X = np.array([["10.0.0.1", "10.0.0.2", 80, 443, 6]] * 3, dtype=object)
    est = CountMinEstimator(width=1 << 8, threshold=150).fit(X, sample_weight=[100, 20, 40])
    assert est.predict(X[:1]).tolist() == [160]
    assert list(est.heavy_hitters().values()) == [2]
    assert est.predict([FlowKey(0, 0, 0, 0, 0)]).tolist() == [0]


def test_validation():
    with pytest.raises(NotFittedError):
        CountMinEstimator().predict([FlowKey(0, 0, 0, 0, 0)])
    with pytest.raises(ValueError):
        check_flow_keys([[1, 2, 3]])
    with pytest.raises(TypeError):
        check_flow_keys(FlowKey(0, 0, 0, 0, 0))
    with pytest.raises(ValueError):
        check_sizes([1, -2], 2)
    with pytest.raises(ValueError):
        check_sizes([1.5, 2], 2)
    with pytest.raises(ValueError):
        check_sizes([1], 2)
    assert check_sizes(None, 3) == [1, 1, 1]

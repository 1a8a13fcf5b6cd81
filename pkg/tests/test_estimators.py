import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sdfeel.data import generate_synthetic
from sdfeel.estimators import FederatedSoftmaxClassifier
from sdfeel.learner import logits


@pytest.fixture(scope="module")
def blobs():
    tr = generate_synthetic(3, 4, 60, 3.0, seed=1)
    te = generate_synthetic(3, 4, 30, 3.0, seed=2)
    return tr.features, tr.labels, te.features, te.labels


def small(**kw):
    base = dict(n_clients=6, n_servers=3, tau1=2, tau2=2, alpha=2, eta=0.3, batch_size=4,
                iterations=80, concentration=5.0, random_state=0)
    base.update(kw)
    return FederatedSoftmaxClassifier(**base)


def test_params_roundtrip():
    est = small()
    assert est.get_params()["tau2"] == 2
    est.set_params(alpha=7, scheme="fedavg")
    assert est.alpha == 7 and est.scheme == "fedavg"
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est


def test_not_fitted(blobs):
    with pytest.raises(NotFittedError):
        small().predict(blobs[0])


@pytest.mark.parametrize("scheme", ["sdfeel", "fedavg", "hierfavg", "feel"])
def test_fit_predict(blobs, scheme):
    X, y, Xt, yt = blobs
    est = small(scheme=scheme, batch_size=2, beta=1.0).fit(X, y)
    assert est.coef_.shape == (3, 4) and est.intercept_.shape == (3,)
    assert est.score(Xt, yt) > 0.8
    assert est.trace_[-1].k == 80


def test_probabilities(blobs):
    X, y, Xt, _ = blobs
    est = small().fit(X, y)
    p = est.predict_proba(Xt)
    np.testing.assert_allclose(p.sum(1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(est.classes_[p.argmax(1)], est.predict(Xt))
    w = np.hstack([est.coef_, est.intercept_[:, None]]).ravel()
    np.testing.assert_allclose(est.decision_function(Xt), logits(w, Xt, 3), atol=1e-12)


def test_string_labels(blobs):
    X, y, Xt, yt = blobs
    names = np.array(["ant", "bee", "cat"])
    est = small().fit(X, names[y])
    assert list(est.classes_) == ["ant", "bee", "cat"]
    assert set(est.predict(Xt)) <= set(names)
    assert est.score(Xt, names[yt]) > 0.8


def test_deterministic(blobs):
    X, y, _, _ = blobs
    a = small().fit(X, y)
    b = small().fit(X, y)
    np.testing.assert_array_equal(a.coef_, b.coef_)


def test_feature_mismatch(blobs):
    X, y, _, _ = blobs
    est = small().fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :3])


def test_input_errors(blobs):
    X, y, _, _ = blobs
    with pytest.raises(ValueError):
        small().fit(X, np.zeros(len(y)))
    with pytest.raises(ValueError):
        small(topology="star").fit(X, y)

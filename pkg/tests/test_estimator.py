import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.utils.estimator_checks import parametrize_with_checks

from deeptwist.compress import PruningSchedule
from deeptwist.distortion import LowRankAssignment, PruneAssignment, QuantizeAssignment
from deeptwist.estimator import DeepTwistMLPClassifier


def blobs(n=400, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((3, 8)) * 3
    y = rng.integers(0, 3, n)
    return centers[y] + rng.standard_normal((n, 8)), np.array(["a", "b", "c"])[y]


@parametrize_with_checks([DeepTwistMLPClassifier(hidden_layer_sizes=(16,), steps=300, learning_rate=1e-2)])
def test_sklearn_compatible(estimator, check):
    check(estimator)


def test_plain_fit_predict():
    X, y = blobs()
    clf = DeepTwistMLPClassifier(hidden_layer_sizes=(16,), steps=400, learning_rate=1e-2).fit(X, y)
    assert clf.score(X, y) > 0.95
    assert set(clf.predict(X)) <= {"a", "b", "c"}
    np.testing.assert_allclose(clf.predict_proba(X).sum(axis=1), 1.0)
    assert clf.events_ == [] and clf.model_.sizes == (8, 16, 3)


def test_compressed_fit_verifies():
    X, y = blobs()
    clf = DeepTwistMLPClassifier(
        hidden_layer_sizes=(16, 12),
        compression=[
            PruneAssignment("fc1", PruningSchedule(0.2, 0.6, 50, 200)),
            QuantizeAssignment("fc2", 2),
            LowRankAssignment("fc3", 2),
        ],
        distortion_step=25,
        steps=400,
        learning_rate=1e-2,
    ).fit(X, y)
    assert clf.verify().passed
    assert clf.events_[-1].step == 400
    assert len(np.unique(clf.model_.layer("fc2").weight)) <= 4
    assert clf.score(X, y) > 0.9


def test_deterministic_and_clonable():
    X, y = blobs()
    clf = DeepTwistMLPClassifier(hidden_layer_sizes=(8,), steps=100, random_state=3)
    a = clf.fit(X, y).predict_proba(X)
    b = clone(clf).fit(X, y).predict_proba(X)
    np.testing.assert_array_equal(a, b)
    assert clone(clf).get_params()["random_state"] == 3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DeepTwistMLPClassifier().predict(np.ones((1, 3)))


def test_feature_count_checked():
    X, y = blobs()
    clf = DeepTwistMLPClassifier(hidden_layer_sizes=(4,), steps=10).fit(X, y)
    with pytest.raises(ValueError, match="features"):
        clf.predict(X[:, :5])


def test_cross_validation():
    X, y = blobs(300)
    scores = cross_val_score(DeepTwistMLPClassifier(hidden_layer_sizes=(16,), steps=300, learning_rate=1e-2), X, y, cv=3)
    assert scores.min() > 0.9

"""Scikit-learn estimator contract: fit/predict, params round-trip, validation."""
from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone

from onconet.estimator import SurvivalCnnClassifier

SMALL = dict(
    variant="aggres_cnn",
    use_fcn=False,
    epochs=40,
    batch_size=8,
    lr=0.0006,
    seed=0,
    stem_channels=4,
    stage_channels=(8, 16, 32, 64),
    fcn_down_channels=(4, 8, 16, 32),
)


def blob_arrays(n=8, size=16, channels=1, seed=0):
    """Class-separable toy images: death cases carry a bigger bright disk."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0, 0.1, size=(n, channels, size, size)).astype(np.float32)
    y = np.array([i % 2 for i in range(n)])
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for i in range(n):
        r = 5.0 if y[i] == 1 else 2.5
        disk = ((ii - size / 2) ** 2 + (jj - size / 2) ** 2 <= r**2).astype(np.float32)
        X[i] += disk
    return X, y


class TestFitPredict:
    def test_memorizes_training_arrays(self):
        X, y = blob_arrays()
        clf = SurvivalCnnClassifier(**SMALL)
        clf.fit(X, y)
        probs = clf.predict_proba(X)
        assert probs.shape == (len(y), 2)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert (clf.predict(X) == y).all()
        assert clf.history_[-1][2] < 0.2
        np.testing.assert_array_equal(clf.classes_, [0, 1])

    def test_two_channel_input(self):
        X, y = blob_arrays(channels=2)
        clf = SurvivalCnnClassifier(**dict(SMALL, epochs=2))
        clf.fit(X, y)
        assert clf.predict_proba(X).shape == (8, 2)

    def test_same_seed_reproducible(self):
        X, y = blob_arrays()
        p1 = SurvivalCnnClassifier(**dict(SMALL, epochs=3)).fit(X, y).predict_proba(X)
        p2 = SurvivalCnnClassifier(**dict(SMALL, epochs=3)).fit(X, y).predict_proba(X)
        np.testing.assert_array_equal(p1, p2)

    def test_param_count_exposed(self):
        X, y = blob_arrays()
        clf = SurvivalCnnClassifier(**dict(SMALL, epochs=1)).fit(X, y)
        assert clf.param_count() > 0


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        clf = SurvivalCnnClassifier(**SMALL)
        params = clf.get_params()
        assert params["lr"] == 0.0006
        clone_ = clone(clf)
        assert clone_.get_params() == params
        clf.set_params(lr=0.01)
        assert clf.get_params()["lr"] == 0.01

    def test_unfitted_predict_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            SurvivalCnnClassifier(**SMALL).predict(np.zeros((1, 1, 16, 16), dtype=np.float32))


class TestValidation:
    def test_bad_ndim(self):
        with pytest.raises(ValueError, match="n_samples"):
            SurvivalCnnClassifier(**SMALL).fit(np.zeros((4, 16, 16), dtype=np.float32), [0, 1, 0, 1])

    def test_non_square(self):
        with pytest.raises(ValueError, match="square"):
            SurvivalCnnClassifier(**SMALL).fit(np.zeros((2, 1, 16, 8), dtype=np.float32), [0, 1])

    def test_non_finite(self):
        X = np.full((2, 1, 16, 16), np.nan, dtype=np.float32)
        with pytest.raises(ValueError, match="non-finite"):
            SurvivalCnnClassifier(**SMALL).fit(X, [0, 1])

    def test_bad_labels(self):
        X, _ = blob_arrays(4)
        with pytest.raises(ValueError, match="0.*1"):
            SurvivalCnnClassifier(**SMALL).fit(X, [0, 1, 2, 1])

    def test_single_class(self):
        X, _ = blob_arrays(4)
        with pytest.raises(ValueError, match="both classes"):
            SurvivalCnnClassifier(**SMALL).fit(X, [1, 1, 1, 1])

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from cdalign.classifiers import (SoftKnnClassifier, SoftmaxClassifier,
                                 fit_linear, fit_soft_knn)
from cdalign.exceptions import DegenerateLabels, DimensionMismatch


def blobs(seed, n_per=10, gap=4.0, n_classes=2, d=3):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in range(n_classes):
        center = np.zeros(d)
        center[c % d] = gap * (1 + c // d)
        xs.append(center + 0.3 * rng.standard_normal((n_per, d)))
        ys.append(np.full(n_per, c))
    return np.vstack(xs), np.concatenate(ys)


class TestSoftmax:
    def test_separable_reaches_full_training_accuracy(self):
        x, y = blobs(0, gap=5.0)
        clf = SoftmaxClassifier().fit(x, y)
        assert np.mean(clf.predict(x) == y) == 1.0

    def test_identical_points_give_uniform_probabilities(self):
        x = np.tile([[1.0, 2.0]], (3, 1))
        y = np.array([0, 1, 2])
        clf = SoftmaxClassifier().fit(x, y)
        probs = clf.predict_proba([[1.0, 2.0], [5.0, -1.0]])
        assert np.allclose(probs, 1.0 / 3.0, atol=1e-12)

    def test_proba_shape_and_row_sums(self):
        x, y = blobs(1, n_classes=4, d=5)
        probs = SoftmaxClassifier().fit(x, y).predict_proba(x)
        assert probs.shape == (x.shape[0], 4)
        assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-9)
        assert np.all(probs >= 0)

    def test_classes_sorted_and_negative_id_allowed(self):
        x, y = blobs(2, n_classes=3)
        y = np.where(y == 2, -1, y)  # unknown id is a class like any other
        clf = SoftmaxClassifier().fit(x, y)
        assert clf.classes().tolist() == [-1, 0, 1]
        assert clf.predict_proba(x).shape[1] == 3

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateLabels):
            SoftmaxClassifier().fit([[0.0], [1.0]], [3, 3])

    def test_predict_before_fit_rejected(self):
        with pytest.raises(NotFittedError):
            SoftmaxClassifier().predict_proba([[0.0]])

    def test_feature_width_checked(self):
        x, y = blobs(3)
        clf = SoftmaxClassifier().fit(x, y)
        with pytest.raises(DimensionMismatch):
            clf.predict_proba(x[:, :2])

    def test_deterministic_repeat(self):
        x, y = blobs(4, n_classes=3)
        p1 = SoftmaxClassifier().fit(x, y).predict_proba(x)
        p2 = SoftmaxClassifier().fit(x, y).predict_proba(x)
        assert np.array_equal(p1, p2)

    def test_permutation_invariance(self):
        x, y = blobs(5, n_classes=3)
        perm = np.random.default_rng(9).permutation(x.shape[0])
        p_base = SoftmaxClassifier().fit(x, y).predict_proba(x)
        p_perm = SoftmaxClassifier().fit(x[perm], y[perm]).predict_proba(x)
        assert np.allclose(p_base, p_perm, atol=1e-12)

    def test_relabeling_permutes_columns(self):
        x, y = blobs(6, n_classes=3)
        remap = {0: 20, 1: 5, 2: 11}
        y2 = np.array([remap[v] for v in y])
        c1 = SoftmaxClassifier().fit(x, y)
        c2 = SoftmaxClassifier().fit(x, y2)
        assert c2.classes().tolist() == [5, 11, 20]
        cols = [c2.classes().tolist().index(remap[c]) for c in c1.classes()]
        assert np.allclose(c1.predict_proba(x), c2.predict_proba(x)[:, cols],
                           atol=1e-12)

    def test_helper_matches_estimator(self):
        x, y = blobs(7)
        direct = SoftmaxClassifier(l2=1e-3, max_epochs=500).fit(x, y)
        helper = fit_linear(x, y)
        assert np.array_equal(direct.predict_proba(x), helper.predict_proba(x))


class TestSoftKnn:
    def test_k1_on_training_point_is_certain(self):
        x = np.array([[0.0, 0.0], [4.0, 0.0]])
        y = np.array([0, 1])
        probs = SoftKnnClassifier(k=1).fit(x, y).predict_proba([[0.0, 0.0]])
        assert np.allclose(probs, [[1.0, 0.0]], atol=1e-12)

    def test_equidistant_pair_splits_evenly(self):
        x = np.array([[-1.0, 0.0], [1.0, 0.0]])
        y = np.array([0, 1])
        probs = SoftKnnClassifier(k=2).fit(x, y).predict_proba([[0.0, 0.0]])
        assert np.allclose(probs, [[0.5, 0.5]], atol=1e-12)

    def test_three_class_hand_softmax(self):
        # query at origin: distances 0, 1, 2 -> weights softmax(-d / tau)
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        y = np.array([0, 1, 2])
        tau = 0.7
        probs = (SoftKnnClassifier(k=3, temperature=tau)
                 .fit(x, y).predict_proba([[0.0, 0.0]]))
        raw = np.exp(-np.array([0.0, 1.0, 2.0]) / tau)
        assert np.allclose(probs, raw / raw.sum(), atol=1e-12)

    def test_distance_tie_prefers_lower_index(self):
        # both training points at the same spot, k=1 -> index 0 wins
        x = np.array([[1.0, 1.0], [1.0, 1.0]])
        y = np.array([4, 2])
        probs = SoftKnnClassifier(k=1).fit(x, y).predict_proba([[1.0, 1.0]])
        col4 = 1  # classes() sorted -> [2, 4]
        assert probs[0, col4] == 1.0

    def test_rows_sum_to_one(self):
        x, y = blobs(8, n_classes=4, d=4)
        probs = SoftKnnClassifier(k=5).fit(x, y).predict_proba(
            np.random.default_rng(3).standard_normal((7, 4)))
        assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-9)

    def test_k_larger_than_training_set_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            SoftKnnClassifier(k=3).fit([[0.0], [1.0]], [0, 1])

    def test_bad_temperature_rejected(self):
        with pytest.raises(ValueError, match="temperature"):
            SoftKnnClassifier(k=1, temperature=0.0).fit([[0.0]], [0])

    def test_predict_before_fit_rejected(self):
        with pytest.raises(NotFittedError):
            SoftKnnClassifier().predict_proba([[0.0]])

    def test_helper_matches_estimator(self):
        x, y = blobs(10, n_classes=3)
        q = np.random.default_rng(4).standard_normal((5, 3))
        direct = SoftKnnClassifier(k=4, temperature=0.5).fit(x, y)
        helper = fit_soft_knn(x, y, k=4, temperature=0.5)
        assert np.array_equal(direct.predict_proba(q), helper.predict_proba(q))

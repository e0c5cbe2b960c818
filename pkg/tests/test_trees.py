from fractions import Fraction

import numpy as np
import pytest

from flowid.trees import TreeParams, fit_dtc, fit_rfc


def oracle_best_split(X, y, n_classes, min_leaf=1):
    """Exhaustive (feature, midpoint) enumeration with exact arithmetic."""
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2.0
            left, right = y[X[:, f] <= thr], y[X[:, f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            cost = Fraction(0)
            for part in (left, right):
                counts = np.bincount(part, minlength=n_classes).astype(object)
                cost += Fraction(len(part)) - Fraction(int((counts ** 2).sum()), len(part))
            if best is None or cost < best[0]:
                best = (cost, f, thr)
    return best


def test_single_threshold_split():
    X = np.array([[0.0], [1.0]] * 8)
    y = np.array([0, 1] * 8)
    tree = fit_dtc(X, y, TreeParams(min_samples_split=2))
    assert tree.feature[0] == 0 and tree.threshold[0] == 0.5
    assert (tree.predict(X) == y).all()


def test_small_node_stays_leaf():
    # 9 samples < min_samples_split=10 -> root is a leaf despite impurity
    X = np.arange(9, dtype=float).reshape(-1, 1)
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1, 0])
    tree = fit_dtc(X, y, TreeParams())
    assert tree.n_nodes == 1 and tree.feature[0] == -1


def test_root_split_matches_exhaustive_enumeration():
    rng = np.random.Generator(np.random.PCG64(0))
    for trial in range(50):
        X = rng.random((30, 3))
        y = rng.integers(0, 3, 30)
        tree = fit_dtc(X, y, TreeParams(min_samples_split=2))
        cost, f, thr = oracle_best_split(X, y, 3)
        assert tree.feature[0] == f, f"trial {trial}"
        assert tree.threshold[0] == pytest.approx(thr, abs=1e-12)


def test_unrestricted_tree_reaches_training_accuracy_one():
    rng = np.random.Generator(np.random.PCG64(1))
    X = rng.random((150, 5))
    y = rng.integers(0, 4, 150)
    tree = fit_dtc(X, y, TreeParams(min_samples_split=2, max_depth=500))
    assert (tree.predict(X) == y).mean() == 1.0


def test_predict_probabilities():
    X = np.array([[0.0], [0.0], [0.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    tree = fit_dtc(X, y, TreeParams(min_samples_split=2))
    proba = tree.predict_proba(np.array([[0.0]]))[0]
    # left leaf holds histogram [2, 1]
    assert proba == pytest.approx([2 / 3, 1 / 3])
    assert proba.sum() == pytest.approx(1.0, abs=1e-12)


def test_pure_leaf_is_one_hot():
    X = np.array([[0.0], [1.0]])
    y = np.array([2, 0])
    tree = fit_dtc(X, y, TreeParams(min_samples_split=2), n_classes=3)
    assert tree.predict_proba([[0.0]])[0].tolist() == [0.0, 0.0, 1.0]


def test_hand_walked_routing():
    # two splits: x0 <= 0.5, then x1 <= 0.5 on the right branch
    X = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]] * 5, dtype=float)
    y = np.array([0, 1, 2] * 5)
    tree = fit_dtc(X, y, TreeParams(min_samples_split=2))
    probe = np.array([1.0, 0.2])
    node = 0
    while tree.feature[node] >= 0:
        f = tree.feature[node]
        node = tree.left[node] if probe[f] <= tree.threshold[node] else tree.right[node]
    hand = tree.hist[node] / tree.hist[node].sum()
    assert np.array_equal(tree.predict_proba(probe[None, :])[0], hand)
    assert tree.predict(probe[None, :])[0] == 1


def test_leaf_histograms_sum_to_routed_samples():
    rng = np.random.Generator(np.random.PCG64(2))
    X = rng.random((80, 4))
    y = rng.integers(0, 3, 80)
    tree = fit_dtc(X, y)
    leaves = tree.feature < 0
    assert tree.hist[leaves].sum() == 80
    assert (tree.hist[leaves].sum(axis=1) >= 1).all()


def test_max_depth_respected():
    rng = np.random.Generator(np.random.PCG64(3))
    X = rng.random((200, 3))
    y = rng.integers(0, 2, 200)
    tree = fit_dtc(X, y, TreeParams(max_depth=2, min_samples_split=2))
    depth = {0: 0}
    worst = 0
    for node in range(tree.n_nodes):
        if tree.feature[node] >= 0:
            depth[tree.left[node]] = depth[node] + 1
            depth[tree.right[node]] = depth[node] + 1
            worst = max(worst, depth[node] + 1)
    assert worst <= 2


def test_dimension_mismatch_rejected():
    tree = fit_dtc(np.zeros((12, 3)), np.zeros(12, dtype=int), TreeParams())
    with pytest.raises(ValueError):
        tree.predict_proba(np.zeros((2, 5)))


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        fit_dtc(np.zeros((0, 3)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        fit_rfc(np.zeros((0, 3)), np.zeros(0, dtype=int))


def test_param_validation():
    with pytest.raises(ValueError):
        fit_dtc(np.zeros((5, 2)), np.zeros(5, dtype=int), TreeParams(max_depth=0))
    with pytest.raises(ValueError):
        fit_dtc(np.zeros((5, 2)), np.zeros(5, dtype=int), TreeParams(min_samples_split=1))


class TestForest:
    def test_single_member_no_bootstrap_equals_dtc(self):
        rng = np.random.Generator(np.random.PCG64(4))
        X = rng.random((60, 4))
        y = rng.integers(0, 3, 60)
        forest = fit_rfc(X, y, TreeParams(n_estimators=1, bootstrap=False))
        tree = fit_dtc(X, y)
        assert np.array_equal(forest.predict_proba(X), tree.predict_proba(X))

    def test_fixed_seed_bit_identical(self):
        rng = np.random.Generator(np.random.PCG64(5))
        X = rng.random((80, 6))
        y = rng.integers(0, 4, 80)
        a = fit_rfc(X, y, TreeParams(seed=9))
        b = fit_rfc(X, y, TreeParams(seed=9))
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.hist, tb.hist)

    def test_prediction_is_mean_of_members(self):
        rng = np.random.Generator(np.random.PCG64(6))
        X = rng.random((100, 5))
        y = rng.integers(0, 3, 100)
        forest = fit_rfc(X, y, TreeParams(seed=1))
        probe = rng.random((7, 5))
        manual = np.mean([t.predict_proba(probe) for t in forest.trees], axis=0)
        assert np.allclose(forest.predict_proba(probe), manual, atol=1e-15)

    def test_probabilities_normalized(self):
        rng = np.random.Generator(np.random.PCG64(7))
        X = rng.random((90, 4))
        y = rng.integers(0, 5, 90)
        forest = fit_rfc(X, y)
        proba = forest.predict_proba(rng.random((40, 4)))
        assert (proba >= 0).all()
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)

"""Decision tree and random forest classifiers, built from scratch.

Greedy CART with Gini impurity. Split candidates are the midpoints
between consecutive distinct sorted values of each feature; ties in
impurity break toward the lower feature index, then the lower
threshold. Routing sends rows with x[feature] <= threshold left.

These models deliberately have no incremental-update API: retraining
from scratch on the merged dataset is the only way to incorporate new
data, which is what makes their on-disk size grow with the training
window (see the size-scaling experiment in the harness).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .seeds import mix


@dataclass
class TreeParams:
    max_depth: int = 100
    min_samples_leaf: int = 1
    min_samples_split: int = 10
    n_estimators: int = 3
    seed: int = 0
    max_features: Optional[int] = None  # None = all features (forest default: ceil(sqrt(d)))
    bootstrap: bool = True

    def validate(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


class DecisionTree:
    """Fitted tree as flat node arrays (preorder).

    feature[i] == -1 marks a leaf; hist[i] holds the class counts of the
    training rows routed through node i.
    """

    def __init__(self, feature, threshold, left, right, hist, n_features: int):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.hist = np.asarray(hist, dtype=np.float64)
        self.n_features = int(n_features)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_classes(self):
        return self.hist.shape[1]

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        counts = self.hist[node]
        return counts / counts.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


class Forest:
    """Bagged trees; prediction averages the member probability vectors."""

    def __init__(self, trees, n_features: int):
        self.trees = list(trees)
        self.n_features = int(n_features)

    @property
    def n_estimators(self):
        return len(self.trees)

    @property
    def n_classes(self):
        return self.trees[0].n_classes

    def predict_proba(self, X) -> np.ndarray:
        probs = self.trees[0].predict_proba(X)
        for tree in self.trees[1:]:
            probs = probs + tree.predict_proba(X)
        return probs / len(self.trees)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def _best_split(X, y_onehot, rows, features, min_samples_leaf):
    """Best (feature, threshold, cost) over midpoint candidates, or None.

    Cost is the size-weighted child impurity `nL*gini(L) + nR*gini(R)`.
    Features are scanned in ascending index order and thresholds in
    ascending value order, replacing the incumbent only on a strict
    improvement, which realizes the tie-break rule.
    """
    n = len(rows)
    best = None  # (cost, feature, threshold)
    for f in features:
        values = X[rows, f]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        cum = np.cumsum(y_onehot[rows][order], axis=0)
        total = cum[-1]
        # candidate boundary after position k (1..n-1) where the value changes
        ks = np.nonzero(sv[1:] != sv[:-1])[0] + 1
        if len(ks) == 0:
            continue
        ks = ks[(ks >= min_samples_leaf) & (n - ks >= min_samples_leaf)]
        if len(ks) == 0:
            continue
        left_counts = cum[ks - 1]
        right_counts = total - left_counts
        n_left = ks.astype(np.float64)
        n_right = n - n_left
        costs = (n_left - (left_counts * left_counts).sum(axis=1) / n_left
                 + n_right - (right_counts * right_counts).sum(axis=1) / n_right)
        i = int(np.argmin(costs))  # first minimum = lowest threshold
        if best is None or costs[i] < best[0]:
            k = ks[i]
            best = (float(costs[i]), int(f), (sv[k - 1] + sv[k]) / 2.0)
    return best


def _grow_tree(X, y, n_classes, params: TreeParams, rng: Optional[np.random.Generator]):
    n_features = X.shape[1]
    y_onehot = np.zeros((len(y), n_classes), dtype=np.float64)
    y_onehot[np.arange(len(y)), y] = 1.0

    feature, threshold, left, right, hist = [], [], [], [], []

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(y_onehot[rows].sum(axis=0))
        return len(feature) - 1

    # preorder growth with an explicit stack; node ids are deterministic
    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = hist[node]
        n = len(rows)
        if depth >= params.max_depth or n < params.min_samples_split or counts.max() == n:
            continue
        if rng is not None and params.max_features is not None and params.max_features < n_features:
            cand = np.sort(rng.choice(n_features, size=params.max_features, replace=False))
        else:
            cand = np.arange(n_features)
        split = _best_split(X, y_onehot, rows, cand, params.min_samples_leaf)
        if split is None:
            continue
        cost, f, thr = split
        parent_cost = n - (counts * counts).sum() / n
        if not cost < parent_cost:
            continue  # no split reduces impurity
        go_left = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        # children get consecutive ids; processing order is deterministic
        right_rows = rows[~go_left]
        left_rows = rows[go_left]
        left[node] = new_node(left_rows)
        stack.append((left[node], left_rows, depth + 1))
        right[node] = new_node(right_rows)
        stack.append((right[node], right_rows, depth + 1))

    return DecisionTree(feature, threshold, left, right, np.vstack(hist), n_features)


def fit_dtc(X, y, params: TreeParams = None, n_classes: Optional[int] = None) -> DecisionTree:
    """Fit a single decision tree (no feature subsetting, no bootstrap)."""
    params = params or TreeParams()
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return _grow_tree(X, y, n_classes, TreeParams(
        max_depth=params.max_depth, min_samples_leaf=params.min_samples_leaf,
        min_samples_split=params.min_samples_split, seed=params.seed,
        max_features=None, bootstrap=False), rng=None)


def fit_rfc(X, y, params: TreeParams = None, n_classes: Optional[int] = None) -> Forest:
    """Fit a bagged forest.

    Each member trains on a bootstrap resample (n draws with
    replacement) and considers ceil(sqrt(n_features)) random features
    per split, both driven by a per-tree seed derived from params.seed.
    """
    params = params or TreeParams()
    params.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    n, d = X.shape
    max_features = params.max_features
    if max_features is None and params.bootstrap:
        max_features = int(np.ceil(np.sqrt(d)))
    trees = []
    for t in range(params.n_estimators):
        rng = np.random.Generator(np.random.PCG64(mix(params.seed, "tree", t)))
        if params.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        member_params = TreeParams(
            max_depth=params.max_depth, min_samples_leaf=params.min_samples_leaf,
            min_samples_split=params.min_samples_split, max_features=max_features)
        trees.append(_grow_tree(X[rows], y[rows], n_classes, member_params, rng))
    return Forest(trees, d)

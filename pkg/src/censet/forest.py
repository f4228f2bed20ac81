"""Probabilistic binary classifiers used for density-ratio estimation.

A small random forest (bootstrap + Gini splits + per-node feature
subsampling) and an L2-penalized logistic regression, both exposing
``fit(X, y)`` and ``predict_proba(X)`` returning P(y = 1 | x).
"""

from __future__ import annotations

import math

import numpy as np


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _add(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def freeze(self):
        self.feature = np.array(self.feature, dtype=np.intp)
        self.threshold = np.array(self.threshold)
        self.left = np.array(self.left, dtype=np.intp)
        self.right = np.array(self.right, dtype=np.intp)
        self.value = np.array(self.value)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]


def _best_split(x: np.ndarray, y: np.ndarray):
    """Best Gini split on one feature: (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    m = xs.size
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    n_left = np.arange(1, m, dtype=float)
    n_right = m - n_left
    pos_left = np.cumsum(ys)[:-1]
    pos_right = ys.sum() - pos_left
    imp = pos_left * (n_left - pos_left) / n_left + pos_right * (n_right - pos_right) / n_right
    imp = np.where(valid, imp, np.inf)
    i = int(np.argmin(imp))
    return float(imp[i]), 0.5 * (xs[i] + xs[i + 1])


def _grow(X, y, max_depth, min_samples_leaf, mtry, rng) -> _Tree:
    tree = _Tree()
    root = tree._add(float(y.mean()))
    stack = [(root, np.arange(y.size), 0)]
    p = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        s = yi.sum()
        if depth >= max_depth or s == 0 or s == yi.size or yi.size < 2 * min_samples_leaf:
            continue
        feats = rng.permutation(p)
        best = None
        for k, f in enumerate(feats):
            if k >= mtry and best is not None:
                break
            cand = _best_split(X[idx, f], yi)
            if cand is not None and (best is None or cand[0] < best[0]):
                best = (cand[0], cand[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        if li.size < min_samples_leaf or ri.size < min_samples_leaf:
            continue
        tree.feature[node], tree.threshold[node] = f, thr
        tree.left[node] = tree._add(float(y[li].mean()))
        tree.right[node] = tree._add(float(y[ri].mean()))
        stack.append((tree.right[node], ri, depth + 1))
        stack.append((tree.left[node], li, depth + 1))
    return tree.freeze()


class RandomForestClassifier:
    """Bagged Gini trees; the class-1 probability is the mean leaf class fraction.

    Parameters
    ----------
    n_trees : int
        Number of bootstrap trees.
    max_depth : int
        Maximum depth of every tree.
    min_samples_leaf : int
        Minimum bootstrap rows in a leaf.
    max_features : int, optional
        Features tried per node; defaults to ``floor(sqrt(p))``.
    seed : int
        Root seed; tree ``k`` draws from its own spawned stream.
    """

    def __init__(self, n_trees=100, max_depth=6, min_samples_leaf=1, max_features=None, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed
        self.trees_: list[_Tree] = []

    def fit(self, X, y) -> RandomForestClassifier:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        mtry = self.max_features or max(1, int(math.floor(math.sqrt(p))))
        streams = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees_ = []
        for ss in streams:
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, n, size=n)
            self.trees_.append(
                _grow(X[boot], y[boot], self.max_depth, self.min_samples_leaf, mtry, rng)
            )
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for tree in self.trees_:
            total += tree.predict(X)
        return total / len(self.trees_)


class LogisticClassifier:
    """Ridge-penalized logistic regression fitted by Newton-Raphson on standardized inputs."""

    def __init__(self, penalty: float = 1e-2, max_iter: int = 100):
        self.penalty = penalty
        self.max_iter = max_iter

    def fit(self, X, y) -> LogisticClassifier:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        Z = np.column_stack([np.ones(len(y)), (X - self.mean_) / self.scale_])
        beta = np.zeros(Z.shape[1])
        pen = np.full(Z.shape[1], self.penalty * len(y))
        pen[0] = 0.0
        for _ in range(self.max_iter):
            prob = 1.0 / (1.0 + np.exp(-(Z @ beta)))
            grad = Z.T @ (y - prob) - pen * beta
            hess = (Z * (prob * (1 - prob))[:, None]).T @ Z + np.diag(pen)
            step = np.linalg.solve(hess, grad)
            beta = beta + step
            if np.max(np.abs(step)) < 1e-10:
                break
        self.coef_ = beta
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.column_stack([np.ones(X.shape[0]), (X - self.mean_) / self.scale_])
        return 1.0 / (1.0 + np.exp(-(Z @ self.coef_)))

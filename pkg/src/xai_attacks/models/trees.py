"""Exact-greedy regression trees, gradient boosting and bagged forests."""

import numpy as np
from scipy.special import expit, logit

from .base import TrainedModel

GBT_DEFAULTS = {
    "n_estimators": 50,
    "max_depth": 4,
    "learning_rate": 0.1,
    "subsample": 0.8,
    "colsample_bytree": 0.8,
    "reg_lambda": 0.1,
    "min_child_weight": 1.0,
}

FOREST_DEFAULTS = {
    "n_estimators": 100,
    "max_depth": 8,
    "max_features": "sqrt",
    "min_samples_leaf": 1,
    "bootstrap": True,
}


class Tree:
    """Array-encoded binary tree; ``x[feature] <= threshold`` goes left."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=int)
        active = self.left[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.left[node] >= 0
        return self.value[node]

    @property
    def n_nodes(self):
        return len(self.value)

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


def build_tree(X, grad, hess, max_depth, reg_lambda=0.0, min_child_weight=1.0, features=None,
               features_per_node=None, rng=None):
    """Grow a second-order tree by exact greedy split search.

    Leaf weights are ``-G / (H + reg_lambda)``; a split is accepted when its
    structure-score gain is positive and both children keep at least
    ``min_child_weight`` hessian mass. ``features`` restricts the candidate
    columns for the whole tree, ``features_per_node`` draws a fresh random
    subset of that size at every node.
    """
    n, d = X.shape
    features = np.arange(d) if features is None else np.asarray(features)
    feat, thr, left, right, value = [], [], [], [], []

    def new_node():
        for arr, v in ((feat, -1), (thr, 0.0), (left, -1), (right, -1), (value, 0.0)):
            arr.append(v)
        return len(value) - 1

    def score(G, H):
        return G * G / (H + reg_lambda)

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        G = grad[idx].sum()
        H = hess[idx].sum()
        value[node] = -G / (H + reg_lambda) if H + reg_lambda > 0 else 0.0
        if depth >= max_depth or len(idx) < 2:
            continue
        cand = features
        if features_per_node is not None and features_per_node < len(features):
            cand = np.sort(rng.choice(features, size=features_per_node, replace=False))
        parent = score(G, H)
        best = (0.0, None, None, None)
        for f in cand:
            xs = X[idx, f]
            order = np.argsort(xs, kind="mergesort")
            xs_sorted = xs[order]
            valid = xs_sorted[1:] > xs_sorted[:-1]
            if not valid.any():
                continue
            GL = np.cumsum(grad[idx][order])[:-1]
            HL = np.cumsum(hess[idx][order])[:-1]
            GR = G - GL
            HR = H - HL
            ok = valid & (HL >= min_child_weight) & (HR >= min_child_weight)
            if not ok.any():
                continue
            gain = np.where(ok, score(GL, HL) + score(GR, HR) - parent, -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > best[0] + 1e-12:
                best = (gain[k], f, 0.5 * (xs_sorted[k] + xs_sorted[k + 1]), None)
        if best[1] is None:
            continue
        f, t = best[1], best[2]
        mask = X[idx, f] <= t
        li, ri = new_node(), new_node()
        feat[node], thr[node], left[node], right[node] = int(f), float(t), li, ri
        stack.append((ri, idx[~mask], depth + 1))
        stack.append((li, idx[mask], depth + 1))
    return Tree(feat, thr, left, right, value)


class GBTModel(TrainedModel):
    """Boosted trees; score = sigmoid(base + learning_rate * sum of leaves)."""

    kind = "gbt"

    def __init__(self, trees, base_margin, learning_rate, d, **kw):
        super().__init__(d, **kw)
        self.trees = list(trees)
        self.base_margin = float(base_margin)
        self.learning_rate = float(learning_rate)
        self.train_log_loss = []

    def predict_margin(self, X):
        X, single = self._check(X)
        m = np.full(X.shape[0], self.base_margin)
        for t in self.trees:
            m += self.learning_rate * t.predict(X)
        return m[0] if single else m

    def params(self):
        return {
            "base_margin": self.base_margin,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_params(cls, p, d, **kw):
        return cls([Tree.from_dict(t) for t in p["trees"]], p["base_margin"], p["learning_rate"], d, **kw)


def _log_loss(y, margin):
    # log(1 + e^m) - y m, stable
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def fit_gbt(X, y, rng, n_estimators=50, max_depth=4, learning_rate=0.1, subsample=0.8,
            colsample_bytree=0.8, reg_lambda=0.1, min_child_weight=1.0, **kw):
    n, d = X.shape
    prior = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    base = float(logit(prior))
    margin = np.full(n, base)
    trees, losses = [], [_log_loss(y, margin)]
    n_rows = max(1, int(round(subsample * n)))
    n_cols = max(1, int(round(colsample_bytree * d)))
    for _ in range(n_estimators):
        p = expit(margin)
        g, h = p - y, p * (1 - p)
        rows = np.sort(rng.choice(n, size=n_rows, replace=False)) if n_rows < n else np.arange(n)
        cols = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)
        tree = build_tree(X[rows], g[rows], h[rows], max_depth, reg_lambda, min_child_weight, features=cols)
        margin = margin + learning_rate * tree.predict(X)
        trees.append(tree)
        losses.append(_log_loss(y, margin))
    model = GBTModel(trees, base, learning_rate, d, **kw)
    model.train_log_loss = losses
    return model


class ForestModel(TrainedModel):
    """Bagged classification trees; score = fraction of trees voting 1."""

    kind = "forest"

    def __init__(self, trees, d, **kw):
        super().__init__(d, **kw)
        self.trees = list(trees)

    def predict_scores(self, X):
        X, single = self._check(X)
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict(X) >= 0.5
        s = votes / len(self.trees)
        return s[0] if single else s

    def predict_margin(self, X):
        s = np.clip(self.predict_scores(X), 1e-12, 1 - 1e-12)
        return logit(s)

    def params(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_params(cls, p, d, **kw):
        return cls([Tree.from_dict(t) for t in p["trees"]], d, **kw)


def fit_forest(X, y, rng, n_estimators=100, max_depth=8, max_features="sqrt", min_samples_leaf=1,
               bootstrap=True, **kw):
    n, d = X.shape
    if max_features == "sqrt":
        per_node = max(1, int(np.sqrt(d)))
    elif max_features is None:
        per_node = d
    else:
        per_node = max(1, min(d, int(max_features)))
    y = y.astype(float)
    hess = np.ones(n)
    trees = []
    for _ in range(n_estimators):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        # squared error against 0/1 labels: leaves hold class frequencies
        trees.append(build_tree(X[rows], -y[rows], hess[rows], max_depth, 0.0, float(min_samples_leaf),
                                features_per_node=per_node, rng=rng))
    return ForestModel(trees, d, **kw)

"""Gradient-boosted regression trees with exact greedy split search.

Squared-error boosting: each tree is fitted to the current residuals, with
leaf weights ``sum(residual) / (count + reg_lambda)``.  Split candidates are
midpoints between consecutive distinct sorted feature values.

Features for a forecast origin are the ``n_lags`` most recent targets
(newest first) followed by the covariate row at the origin.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InsufficientData
from ..timeseries import RegionSeries
from .ar import lag_matrix
from .base import Forecaster, clip01

_MIN_GAIN = 1e-14


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    n_lags: int = 24
    reg_lambda: float = 0.0


@dataclass(eq=False)
class RegressionTree:
    """Flat array tree. ``feature[i] == -1`` marks node ``i`` as a leaf."""

    feature: list
    threshold: list
    left: list
    right: list
    value: list

    def predict_row(self, row) -> float:
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        i = 0
        while feature[i] >= 0:
            i = left[i] if row[feature[i]] < threshold[i] else right[i]
        return self.value[i]

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows[inner], f[inner]] < threshold[node[inner]]
            node[inner] = np.where(go_left, left[node[inner]], right[node[inner]])
        return np.asarray(self.value)[node]

    def depth(self) -> int:
        def walk(i):
            return 0 if self.feature[i] < 0 else 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def to_dict(self) -> dict:
        return asdict(self)


def _best_split(Xn: np.ndarray, rn: np.ndarray, min_leaf: int):
    """Exact greedy search over all features for one node's samples."""
    n = len(rn)
    if n < 2 * min_leaf:
        return None
    total = rn.sum()
    base = total * total / n
    n_left = np.arange(1, n)
    valid_count = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    best = None
    best_gain = _MIN_GAIN
    for f in range(Xn.shape[1]):
        order = np.argsort(Xn[:, f], kind="stable")
        v = Xn[order, f]
        s_left = np.cumsum(rn[order])[:-1]
        s_right = total - s_left
        gain = s_left ** 2 / n_left + s_right ** 2 / (n - n_left) - base
        ok = valid_count & (v[1:] > v[:-1])
        if not ok.any():
            continue
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain = float(gain[k])
            lo, hi = v[k], v[k + 1]
            thr = 0.5 * (lo + hi)
            if not lo < thr <= hi:
                # adjacent floats: the midpoint rounds onto ``lo``
                thr = hi
            best = (f, float(thr))
    return best


def fit_tree(X: np.ndarray, r: np.ndarray, max_depth: int, min_leaf: int,
             reg_lambda: float = 0.0) -> RegressionTree:
    tree = RegressionTree([], [], [], [], [])

    def leaf_value(idx):
        return float(r[idx].sum() / (len(idx) + reg_lambda))

    def grow(idx, depth):
        node = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append(leaf_value(idx))
        if depth >= max_depth:
            return node
        split = _best_split(X[idx], r[idx], min_leaf)
        if split is None:
            return node
        f, thr = split
        mask = X[idx, f] < thr
        tree.feature[node] = int(f)
        tree.threshold[node] = float(thr)
        tree.left[node] = grow(idx[mask], depth + 1)
        tree.right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(r)), 0)
    return tree


class GbtModel(Forecaster):
    kind = "gbt"

    def __init__(self, config: GbtConfig = GbtConfig(), base_score: float = 0.0, trees=()):
        self.config = config
        self.base_score = float(base_score)
        self.trees = list(trees)

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    @property
    def lookback(self) -> int:
        return self.config.n_lags

    def fit(self, train: RegionSeries) -> "GbtModel":
        fitted = fit_gbt(train, self.config)
        self.base_score, self.trees = fitted.base_score, fitted.trees
        return self

    def predict_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.config.learning_rate * tree.predict(X)
        return out

    def predict_one_step(self, y_hist, x_hist) -> float:
        row = list(y_hist[-1:-self.config.n_lags - 1:-1])
        row.extend(x_hist[-1])
        lr = self.config.learning_rate
        total = 0.0
        for tree in self.trees:
            total += tree.predict_row(row)
        return clip01(self.base_score + lr * total)

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), "base_score": self.base_score,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d) -> "GbtModel":
        return cls(GbtConfig(**d["config"]), d["base_score"],
                   [RegressionTree(**t) for t in d["trees"]])


def gbt_features(y: np.ndarray, x: np.ndarray, n_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Design rows for targets ``y[n_lags:]``: lags newest first, then origin covariates."""
    lags = lag_matrix(y, n_lags)
    return np.hstack([lags, x[n_lags - 1:-1]]), y[n_lags:]


def fit_gbt_features(X: np.ndarray, target: np.ndarray, config: GbtConfig = GbtConfig()) -> GbtModel:
    X = np.asarray(X, dtype=float)
    target = np.asarray(target, dtype=float)
    base = float(target.mean())
    pred = np.full(len(target), base)
    trees = []
    for _ in range(config.n_trees):
        tree = fit_tree(X, target - pred, config.max_depth, config.min_samples_leaf,
                        config.reg_lambda)
        pred += config.learning_rate * tree.predict(X)
        trees.append(tree)
    return GbtModel(config, base, trees)


def fit_gbt(train: RegionSeries, config: GbtConfig = GbtConfig()) -> GbtModel:
    if len(train) <= config.n_lags:
        raise InsufficientData(f"GBT needs more than {config.n_lags} samples, got {len(train)}")
    X, target = gbt_features(train.y, train.x, config.n_lags)
    return fit_gbt_features(X, target, config)


def gbt_feature_names(covariate_names, n_lags: int = 24) -> list[str]:
    return [f"lag_{k}" for k in range(1, n_lags + 1)] + list(covariate_names)

"""Second-order regularized tree boosting (logistic loss).

Per round: g_i = p_i - y_i, h_i = p_i (1 - p_i); exact greedy split search
over sorted feature values with
    Gain = 1/2 [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - (G_L+G_R)^2/(H_L+H_R+lambda)] - gamma
and leaf weight w* = -G/(H+lambda), shrunk by the learning rate. Splits are
accepted only with positive gain and both children's hessian sums above
min_child_hessian. Ties break toward the lowest feature index, then the
lowest threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from sklearn.base import BaseEstimator, ClassifierMixin

__all__ = ["XgbHyper", "XgbNode", "TreeEnsemble", "train_xgb", "XgbClassifier",
           "split_gain", "leaf_weight"]


@dataclass(frozen=True)
class XgbHyper:
    eta: float = 0.3
    gamma: float = 0.0
    reg_lambda: float = 1.0
    max_depth: int = 3
    rounds: int = 50
    min_child_hessian: float = 1e-3

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.gamma < 0 or self.reg_lambda < 0:
            raise ValueError("gamma and lambda must be >= 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    """Optimal unshrunk leaf weight -G / (H + lambda)."""
    return -g_sum / (h_sum + reg_lambda)


def split_gain(gl, hl, gr, hr, reg_lambda, gamma) -> float:
    """Structure-score gain of a candidate split."""
    return 0.5 * (gl * gl / (hl + reg_lambda)
                  + gr * gr / (hr + reg_lambda)
                  - (gl + gr) ** 2 / (hl + hr + reg_lambda)) - gamma


@dataclass
class XgbNode:
    cover: float                      # sum of hessians routed here in training
    weight: float | None = None       # leaf weight (eta already applied)
    feature: int | None = None
    threshold: float | None = None
    left: "XgbNode | None" = None
    right: "XgbNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight, "cover": self.cover}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "cover": self.cover,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "XgbNode":
        if "feature" not in d:
            return cls(cover=d["cover"], weight=d["weight"])
        return cls(
            cover=d["cover"], feature=d["feature"], threshold=d["threshold"],
            left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]),
        )


def _route(node: XgbNode, X: np.ndarray) -> np.ndarray:
    """Vectorized leaf-weight lookup for a batch of rows."""
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.weight
            continue
        go_left = X[idx, nd.feature] < nd.threshold
        stack.append((nd.left, idx[go_left]))
        stack.append((nd.right, idx[~go_left]))
    return out


@dataclass
class TreeEnsemble:
    """Additive regression trees over a fixed feature set."""

    base_score: float
    trees: list
    feature_names: tuple = ()

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_margin(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if not np.isfinite(x).all():
            raise ValueError("features must be finite")
        return float(self.predict_margin_batch(x[None, :])[0])

    def predict_margin_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.feature_names and X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {X.shape[1]}"
            )
        margins = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margins += _route(tree, X)
        return margins

    def predict_proba(self, X) -> np.ndarray:
        m = self.predict_margin_batch(X)
        return 1.0 / (1.0 + np.exp(-m))

    def used_features(self) -> set:
        used = set()

        def visit(node):
            if not node.is_leaf:
                used.add(node.feature)
                visit(node.left)
                visit(node.right)

        for t in self.trees:
            visit(t)
        return used

    def to_json(self) -> str:
        return json.dumps({
            "format": "exactct-ensemble",
            "version": 1,
            "base_score": self.base_score,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        doc = json.loads(text)
        if doc.get("format") != "exactct-ensemble" or doc.get("version") != 1:
            raise ValueError("not a version-1 ensemble snapshot")
        return cls(
            base_score=doc["base_score"],
            trees=[XgbNode.from_dict(t) for t in doc["trees"]],
            feature_names=tuple(doc["feature_names"]),
        )


def _best_split(X, g, h, idx, reg_lambda, gamma, min_child_hessian):
    """Exhaustive best (feature, threshold, gain) over the rows in idx."""
    g_sum = g[idx].sum()
    h_sum = h[idx].sum()
    best = None
    for f in range(X.shape[1]):
        order = idx[np.argsort(X[idx, f], kind="stable")]
        xs = X[order, f]
        gl = hl = 0.0
        for i in range(order.size - 1):
            gl += g[order[i]]
            hl += h[order[i]]
            if xs[i] == xs[i + 1]:
                continue
            hr = h_sum - hl
            if hl < min_child_hessian or hr < min_child_hessian:
                continue
            gain = split_gain(gl, hl, g_sum - gl, hr, reg_lambda, gamma)
            thr = (xs[i] + xs[i + 1]) / 2.0
            if (best is None or gain > best[2] + 1e-15
                    or (abs(gain - best[2]) <= 1e-15
                        and (f, thr) < (best[0], best[1]))):
                best = (f, thr, gain)
    return best


def _grow(X, g, h, idx, depth, hyper: XgbHyper) -> XgbNode:
    g_sum = float(g[idx].sum())
    h_sum = float(h[idx].sum())
    node = XgbNode(cover=h_sum)
    split = None
    if depth < hyper.max_depth and idx.size >= 2:
        split = _best_split(X, g, h, idx, hyper.reg_lambda, hyper.gamma,
                            hyper.min_child_hessian)
    if split is None or split[2] <= 0.0:
        node.weight = hyper.eta * leaf_weight(g_sum, h_sum, hyper.reg_lambda)
        return node
    f, thr, _ = split
    mask = X[idx, f] < thr
    node.feature = f
    node.threshold = thr
    node.left = _grow(X, g, h, idx[mask], depth + 1, hyper)
    node.right = _grow(X, g, h, idx[~mask], depth + 1, hyper)
    return node


def train_xgb(X, y, hyper: XgbHyper = XgbHyper(), feature_names=()) -> TreeEnsemble:
    """Boost for hyper.rounds rounds on logistic loss."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.float64)
    if np.unique(y).size < 2:
        raise ValueError("training needs both classes")
    if not feature_names:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))
    base = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    base_score = math.log(base / (1.0 - base))

    margins = np.full(y.size, base_score)
    trees = []
    idx_all = np.arange(y.size)
    for _ in range(hyper.rounds):
        p = 1.0 / (1.0 + np.exp(-margins))
        g = p - y
        h = p * (1.0 - p)
        tree = _grow(X, g, h, idx_all, 0, hyper)
        trees.append(tree)
        margins = margins + _route(tree, X)
    return TreeEnsemble(base_score, trees, tuple(feature_names))


class XgbClassifier(ClassifierMixin, BaseEstimator):
    """Estimator facade over train_xgb for pipeline interoperability."""

    def __init__(self, eta=0.3, gamma=0.0, reg_lambda=1.0, max_depth=3,
                 rounds=50, min_child_hessian=1e-3):
        self.eta = eta
        self.gamma = gamma
        self.reg_lambda = reg_lambda
        self.max_depth = max_depth
        self.rounds = rounds
        self.min_child_hessian = min_child_hessian

    def fit(self, X, y, feature_names=()):
        hyper = XgbHyper(self.eta, self.gamma, self.reg_lambda, self.max_depth,
                         self.rounds, self.min_child_hessian)
        self.ensemble_ = train_xgb(X, y, hyper, feature_names)
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def predict_score(self, X):
        return self.ensemble_.predict_proba(X)

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(int)

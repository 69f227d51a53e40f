"""Five baseline classifiers with scikit-learn estimator semantics.

Each model implements fit(X, y) / predict(X) / predict_score(X) and plays
nicely with get_params/set_params. Training is written out explicitly
(gradient descent, subgradient descent, closed forms, CART) rather than
delegating to library solvers, so the optimization behavior is testable.

Class convention: label 1 = CD (positive), 0 = ITB.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

__all__ = [
    "LogisticRegressionGD",
    "LinearSvm",
    "GaussianNaiveBayes",
    "RandomForest",
    "GradientBoosting",
    "predict_score",
]


def _check_fitted(model, attr="n_features_in_"):
    if not hasattr(model, attr):
        raise RuntimeError(f"{type(model).__name__} is not fitted")


def _check_arity(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features_in_:
        raise ValueError(
            f"expected {model.n_features_in_} features, got {X.shape[1]}"
        )
    return X


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500))),
                    np.exp(np.clip(z, -500, 500)) / (1.0 + np.exp(np.clip(z, -500, 500))))


class _StandardizedMixin:
    """z-standardization folded into the model so raw features go in and out."""

    def _fit_scaler(self, X):
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.std_ = np.where(std > 0, std, 1.0)

    def _scale(self, X):
        return (X - self.mean_) / self.std_


class LogisticRegressionGD(_StandardizedMixin, ClassifierMixin, BaseEstimator):
    """Logistic regression by full-batch gradient descent with backtracking.

    Minimizes the summed cross-entropy plus (l2/2)||w||^2 on z-standardized
    features. The recorded loss trace is monotone nonincreasing.
    """

    def __init__(self, l2=0.0, lr=1.0, iters=500, tol=1e-10):
        self.l2 = l2
        self.lr = lr
        self.iters = iters
        self.tol = tol

    @staticmethod
    def loss_and_grad(w, b, X, y, l2):
        z = X @ w + b
        p = _sigmoid(z)
        # stable summed cross-entropy: log(1 + e^-|z|) + max(z, 0) - y z
        ce = np.logaddexp(0.0, z) - y * z
        loss = float(ce.sum() + 0.5 * l2 * (w @ w))
        err = p - y
        return loss, X.T @ err + l2 * w, float(err.sum())

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).astype(np.float64)
        if np.unique(y).size < 2:
            raise ValueError("training needs both classes")
        self.n_features_in_ = X.shape[1]
        self._fit_scaler(X)
        Xs = self._scale(X)

        w = np.zeros(X.shape[1])
        b = 0.0
        loss, gw, gb = self.loss_and_grad(w, b, Xs, y, self.l2)
        trace = [loss]
        step = self.lr
        for _ in range(self.iters):
            while True:
                w_new = w - step * gw
                b_new = b - step * gb
                new_loss, gw_new, gb_new = self.loss_and_grad(w_new, b_new, Xs, y, self.l2)
                if new_loss <= loss or step < 1e-12:
                    break
                step *= 0.5
            if not math.isfinite(new_loss):
                raise FloatingPointError("logistic loss became non-finite")
            improved = loss - new_loss
            w, b, loss, gw, gb = w_new, b_new, new_loss, gw_new, gb_new
            trace.append(loss)
            step = min(step * 2.0, self.lr)
            if improved < self.tol * max(abs(loss), 1.0):
                break
        self.w_ = w
        self.b_ = b
        self.loss_trace_ = np.array(trace)
        return self

    def predict_score(self, X):
        _check_fitted(self)
        X = _check_arity(self, X)
        return _sigmoid(self._scale(X) @ self.w_ + self.b_)

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(int)


class LinearSvm(_StandardizedMixin, ClassifierMixin, BaseEstimator):
    """Linear soft-margin SVM trained in the primal by deterministic
    Pegasos-style subgradient descent with Polyak averaging.

    Objective: 0.5 ||w||^2 + C * sum_i max(0, 1 - y_i (w x_i + b)).
    """

    def __init__(self, C=1.0, epochs=5000, seed=0, average_from=0.5):
        self.C = C
        self.epochs = epochs
        self.seed = seed
        self.average_from = average_from

    @staticmethod
    def objective(w, b, X, y_pm, C):
        margins = y_pm * (X @ w + b)
        hinge = np.maximum(0.0, 1.0 - margins)
        return float(0.5 * (w @ w) + C * hinge.sum())

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).astype(int)
        if np.unique(y).size < 2:
            raise ValueError("training needs both classes")
        self.n_features_in_ = X.shape[1]
        self._fit_scaler(X)
        Xs = self._scale(X)
        y_pm = np.where(y == 1, 1.0, -1.0)
        n = X.shape[0]
        lam = 1.0 / (self.C * n)        # Pegasos regularization scale

        rng = np.random.default_rng(self.seed)
        w = rng.normal(0.0, 1e-3, size=X.shape[1])
        b = 0.0
        w_avg = np.zeros_like(w)
        b_avg = 0.0
        n_avg = 0
        start_avg = int(self.epochs * self.average_from)
        radius = 1.0 / math.sqrt(lam)
        trace = []
        for t in range(1, self.epochs + 1):
            margins = y_pm * (Xs @ w + b)
            viol = margins < 1.0
            gw = lam * w - (y_pm[viol][:, None] * Xs[viol]).sum(axis=0) / n
            gb = -y_pm[viol].sum() / n
            eta = 1.0 / (lam * t)
            w = w - eta * gw
            b = b - eta * gb
            norm = np.linalg.norm(w)
            if norm > radius:
                w = w * (radius / norm)
            if t > start_avg:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
                trace.append(self.objective(w_avg, b_avg, Xs, y_pm, self.C))
        self.w_ = w_avg
        self.b_ = b_avg
        self.objective_trace_ = np.array(trace)
        self.objective_ = self.objective(w_avg, b_avg, Xs, y_pm, self.C)
        return self

    def predict_score(self, X):
        """Signed margin w.x + b (positive favors class 1)."""
        _check_fitted(self)
        X = _check_arity(self, X)
        return self._scale(X) @ self.w_ + self.b_

    def predict(self, X):
        return (self.predict_score(X) >= 0.0).astype(int)


class GaussianNaiveBayes(ClassifierMixin, BaseEstimator):
    """Gaussian naive Bayes with per-class feature means/variances."""

    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).astype(int)
        classes = np.unique(y)
        if classes.size < 2:
            raise ValueError("training needs both classes")
        self.n_features_in_ = X.shape[1]
        self.classes_ = classes
        self.priors_, self.means_, self.vars_ = {}, {}, {}
        for c in classes:
            Xc = X[y == c]
            if Xc.shape[0] < 2:
                raise ValueError(f"class {c} has fewer than 2 samples")
            self.priors_[int(c)] = Xc.shape[0] / X.shape[0]
            self.means_[int(c)] = Xc.mean(axis=0)
            self.vars_[int(c)] = np.maximum(Xc.var(axis=0), self.var_floor)
        return self

    def log_posterior(self, X):
        """Unnormalized per-class log posterior, columns ordered by classes_."""
        _check_fitted(self)
        X = _check_arity(self, X)
        cols = []
        for c in self.classes_:
            mu, var = self.means_[int(c)], self.vars_[int(c)]
            ll = -0.5 * (np.log(2 * np.pi * var) + (X - mu) ** 2 / var).sum(axis=1)
            cols.append(math.log(self.priors_[int(c)]) + ll)
        return np.stack(cols, axis=1)

    def predict_score(self, X):
        lp = self.log_posterior(X)
        # normalized posterior of class 1
        lp = lp - lp.max(axis=1, keepdims=True)
        p = np.exp(lp)
        p = p / p.sum(axis=1, keepdims=True)
        col1 = int(np.nonzero(self.classes_ == 1)[0][0])
        return p[:, col1]

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(int)


# ---------------------------------------------------------------------------
# CART trees shared by the forest and the first-order booster
# ---------------------------------------------------------------------------


def _gini(counts):
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - (p * p).sum()


def _best_split_classification(X, y, feat_indices):
    """Best (feature, threshold) by Gini impurity decrease; None if pure."""
    n = y.size
    parent_counts = np.bincount(y, minlength=2).astype(float)
    parent_gini = _gini(parent_counts)
    if parent_gini == 0.0:
        return None
    best = None
    best_gain = 1e-12
    for f in feat_indices:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        left = np.zeros(2)
        right = parent_counts.copy()
        for i in range(n - 1):
            left[ys[i]] += 1
            right[ys[i]] -= 1
            if xs[i] == xs[i + 1]:
                continue
            nl, nr = i + 1, n - i - 1
            gain = parent_gini - (nl * _gini(left) + nr * _gini(right)) / n
            thr = (xs[i] + xs[i + 1]) / 2.0
            if gain > best_gain + 1e-15 or (
                abs(gain - best_gain) <= 1e-15 and best is not None
                and (f, thr) < best
            ):
                best_gain = gain
                best = (f, thr)
    return best


def _best_split_regression(X, r, feat_indices, min_leaf=1):
    """Best (feature, threshold) by squared-error reduction; None if no gain."""
    n = r.size
    total_sum = r.sum()
    total_sq = (r * r).sum()
    parent_sse = total_sq - total_sum * total_sum / n
    best = None
    best_gain = 1e-12
    for f in feat_indices:
        order = np.argsort(X[:, f], kind="stable")
        xs, rs = X[order, f], r[order]
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        for i in range(min_leaf - 1, n - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sse_l = csq[i] - csum[i] ** 2 / nl
            sse_r = (total_sq - csq[i]) - (total_sum - csum[i]) ** 2 / nr
            gain = parent_sse - sse_l - sse_r
            thr = (xs[i] + xs[i + 1]) / 2.0
            if gain > best_gain + 1e-15 or (
                abs(gain - best_gain) <= 1e-15 and best is not None
                and (f, thr) < best
            ):
                best_gain = gain
                best = (f, thr)
    return best


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold=None, left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right

    def predict_one(self, x):
        node = self
        while node.feature is not None:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.value

    def predict(self, X):
        return np.array([self.predict_one(x) for x in X])


def _grow_classification_tree(X, y, depth, max_depth, n_feats, rng):
    counts = np.bincount(y, minlength=2)
    majority = 0 if counts[0] >= counts[1] else 1
    if (max_depth is not None and depth >= max_depth) or counts.min() == 0 or y.size < 2:
        return _TreeNode(value=majority)
    d = X.shape[1]
    if n_feats is not None and n_feats < d:
        feats = np.sort(rng.choice(d, size=n_feats, replace=False))
    else:
        feats = np.arange(d)
    split = _best_split_classification(X, y, feats)
    if split is None:
        return _TreeNode(value=majority)
    f, thr = split
    mask = X[:, f] < thr
    left = _grow_classification_tree(X[mask], y[mask], depth + 1, max_depth, n_feats, rng)
    right = _grow_classification_tree(X[~mask], y[~mask], depth + 1, max_depth, n_feats, rng)
    return _TreeNode(feature=f, threshold=thr, left=left, right=right)


def _grow_regression_tree(X, r, depth, max_depth):
    if (max_depth is not None and depth >= max_depth) or r.size < 2:
        return _TreeNode(value=float(r.mean()))
    split = _best_split_regression(X, r, np.arange(X.shape[1]))
    if split is None:
        return _TreeNode(value=float(r.mean()))
    f, thr = split
    mask = X[:, f] < thr
    left = _grow_regression_tree(X[mask], r[mask], depth + 1, max_depth)
    right = _grow_regression_tree(X[~mask], r[~mask], depth + 1, max_depth)
    return _TreeNode(feature=f, threshold=thr, left=left, right=right)


class RandomForest(ClassifierMixin, BaseEstimator):
    """Bagged CART trees with sqrt(d) feature subsampling; majority vote."""

    def __init__(self, n_trees=100, max_depth=None, seed=0, bootstrap=True):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.bootstrap = bootstrap

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).astype(int)
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_features_in_ = X.shape[1]
        n = X.shape[0]
        n_feats = int(math.ceil(math.sqrt(X.shape[1])))
        self.trees_ = []
        for k in range(self.n_trees):
            rng = np.random.default_rng((self.seed, k))
            if self.bootstrap:
                idx = rng.integers(0, n, size=n)
                Xb, yb = X[idx], y[idx]
            else:
                Xb, yb = X, y
            self.trees_.append(
                _grow_classification_tree(Xb, yb, 0, self.max_depth, n_feats, rng)
            )
        return self

    def predict_score(self, X):
        """Fraction of trees voting class 1."""
        _check_fitted(self, "trees_")
        X = _check_arity(self, X)
        votes = np.stack([t.predict(X) for t in self.trees_])
        return votes.mean(axis=0)

    def predict(self, X):
        # ties (exactly half the votes) resolve to class 0
        return (self.predict_score(X) > 0.5).astype(int)


class GradientBoosting(ClassifierMixin, BaseEstimator):
    """First-order gradient boosting on logistic deviance.

    Each stage fits a squared-error regression tree to the negative gradient
    (y - p) and adds it with learning rate eta; f0 is the base-rate log-odds.
    """

    def __init__(self, eta=0.1, stages=100, max_depth=2):
        self.eta = eta
        self.stages = stages
        self.max_depth = max_depth

    def fit(self, X, y):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).astype(np.float64)
        self.n_features_in_ = X.shape[1]
        base = np.clip(y.mean(), 1e-12, 1 - 1e-12)
        self.f0_ = float(np.log(base / (1.0 - base)))
        margins = np.full(y.size, self.f0_)
        self.trees_ = []
        losses = []
        for _ in range(self.stages):
            p = _sigmoid(margins)
            residual = y - p
            tree = _grow_regression_tree(X, residual, 0, self.max_depth)
            self.trees_.append(tree)
            margins = margins + self.eta * tree.predict(X)
            losses.append(float((np.logaddexp(0.0, margins) - y * margins).mean()))
        self.staged_loss_ = np.array(losses)
        return self

    def decision_function(self, X):
        _check_fitted(self, "trees_")
        X = _check_arity(self, X)
        margins = np.full(X.shape[0], self.f0_)
        for tree in self.trees_:
            margins = margins + self.eta * tree.predict(X)
        return margins

    def predict_score(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(int)


def predict_score(model, X):
    """Uniform scoring surface: probability scale except SVM (signed margin)."""
    return model.predict_score(X)

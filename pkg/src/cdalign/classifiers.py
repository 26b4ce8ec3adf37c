"""Probabilistic multiclass base classifiers.

Both families implement the same minimal surface: fit(X, y) -> self,
predict_proba(X) returning row-stochastic matrices over classes(), and the
unknown class (any negative id) is an ordinary class throughout.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import DegenerateLabels, DimensionMismatch


def _check_xy(x, y=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"features must be 2-d, got {x.ndim}-d")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    if y is None:
        return x
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise DimensionMismatch("labels must be 1-d and match the sample count")
    return x, y.astype(np.int64)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p


class SoftmaxClassifier(BaseEstimator):
    """Multinomial logistic regression, full-batch descent with backtracking.

    Deterministic: weights start at zero and no randomness enters training.
    Training stops when the gradient norm of the regularized objective falls
    below ``tol`` or after ``max_epochs`` full-batch steps. The intercept is
    not penalized.
    """

    def __init__(self, l2=1e-3, max_epochs=500, tol=1e-5):
        self.l2 = l2
        self.max_epochs = max_epochs
        self.tol = tol

    def _objective(self, w, xa, onehot):
        n = xa.shape[0]
        probs = _softmax(xa @ w)
        # clip only inside the log; the gradient uses the exact probs
        nll = -np.sum(onehot * np.log(np.maximum(probs, 1e-300))) / n
        penalty = 0.5 * self.l2 * np.sum(w[:-1] ** 2)
        grad = xa.T @ (probs - onehot) / n
        grad[:-1] += self.l2 * w[:-1]
        return nll + penalty, grad

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise DegenerateLabels(
                f"need at least 2 classes to fit, got {self.classes_.size}")
        n, d = x.shape
        col = np.searchsorted(self.classes_, y)
        onehot = np.zeros((n, self.classes_.size))
        onehot[np.arange(n), col] = 1.0
        xa = np.hstack([x, np.ones((n, 1))])

        w = np.zeros((d + 1, self.classes_.size))
        loss, grad = self._objective(w, xa, onehot)
        alpha = 1.0
        epoch = 0
        while epoch < self.max_epochs:
            gnorm2 = float(np.sum(grad ** 2))
            if np.sqrt(gnorm2) < self.tol:
                break
            epoch += 1
            alpha = min(alpha * 2.0, 1e2)
            accepted = False
            for _ in range(60):
                cand = w - alpha * grad
                cand_loss, cand_grad = self._objective(cand, xa, onehot)
                if cand_loss <= loss - 1e-4 * alpha * gnorm2:
                    w, loss, grad = cand, cand_loss, cand_grad
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break  # numerical floor
        self.coef_ = w[:-1]
        self.intercept_ = w[-1]
        self.n_iter_ = epoch
        return self

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("classifier is not fitted; call fit first")

    def classes(self):
        self._check_fitted()
        return self.classes_

    def predict_proba(self, x):
        self._check_fitted()
        x = _check_xy(x)
        if x.shape[1] != self.coef_.shape[0]:
            raise DimensionMismatch(
                f"expected {self.coef_.shape[0]} features, got {x.shape[1]}")
        p = _softmax(x @ self.coef_ + self.intercept_)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class SoftKnnClassifier(BaseEstimator):
    """Distance-softmax-weighted vote among the k nearest training samples.

    Neighbor weights are softmax(-distance / temperature) over the k nearest;
    exact distance ties resolve to the lower training index.
    """

    def __init__(self, k=5, temperature=1.0):
        self.k = k
        self.temperature = temperature

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.k > x.shape[0]:
            raise ValueError(
                f"k={self.k} exceeds the training-set size {x.shape[0]}")
        self.classes_ = np.unique(y)
        self._x = x
        self._col = np.searchsorted(self.classes_, y)
        return self

    def _check_fitted(self):
        if not hasattr(self, "_x"):
            raise NotFittedError("classifier is not fitted; call fit first")

    def classes(self):
        self._check_fitted()
        return self.classes_

    def predict_proba(self, x):
        self._check_fitted()
        x = _check_xy(x)
        if x.shape[1] != self._x.shape[1]:
            raise DimensionMismatch(
                f"expected {self._x.shape[1]} features, got {x.shape[1]}")
        d2 = (np.sum(x ** 2, axis=1)[:, None]
              + np.sum(self._x ** 2, axis=1)[None, :]
              - 2.0 * x @ self._x.T)
        dist = np.sqrt(np.maximum(d2, 0.0))
        order = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
        picked = np.take_along_axis(dist, order, axis=1)
        w = np.exp(-(picked - picked.min(axis=1, keepdims=True))
                   / self.temperature)
        w /= w.sum(axis=1, keepdims=True)
        probs = np.zeros((x.shape[0], self.classes_.size))
        cols = self._col[order]
        for i in range(x.shape[0]):
            np.add.at(probs[i], cols[i], w[i])
        return probs

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


def fit_linear(features, labels, l2_weight=1e-3, max_epochs=500):
    """Fit the default multinomial linear classifier."""
    return SoftmaxClassifier(l2=l2_weight, max_epochs=max_epochs).fit(features, labels)


def fit_soft_knn(features, labels, k=5, temperature=1.0):
    """Fit the soft nearest-neighbor alternative."""
    return SoftKnnClassifier(k=k, temperature=temperature).fit(features, labels)

"""scikit-learn style wrappers: prune a fresh MLP on the training data, then train it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .net import InitSpec, apply_mask, forward, mlp_new, sparsity, train
from .pruning import prune


@dataclass
class _Data:
    X: np.ndarray
    y: np.ndarray
    loss_kind: str


class _PrunedMLP(BaseEstimator):
    _loss_kind = "mse"

    def __init__(
        self,
        hidden_layer_sizes=(100, 100, 100, 100),
        method="synflow",
        sparsity=0.5,
        strategy="singleshot",
        epochs=10,
        prune_epochs=None,
        rounds=10,
        lr=1e-3,
        batch_size=32,
        sigma_w=None,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.method = method
        self.sparsity = sparsity
        self.strategy = strategy
        self.epochs = epochs
        self.prune_epochs = prune_epochs
        self.rounds = rounds
        self.lr = lr
        self.batch_size = batch_size
        self.sigma_w = sigma_w
        self.random_state = random_state

    def _prune_epochs(self):
        if self.prune_epochs is not None:
            return self.prune_epochs
        return 10 if self.strategy == "edge-popup" else 5

    def _fit(self, X, Y, n_out):
        seed = 0 if self.random_state is None else int(self.random_state)
        arch = [X.shape[1], *map(int, self.hidden_layer_sizes), n_out]
        net = mlp_new(arch, InitSpec(sigma_w=self.sigma_w, seed=seed))
        data = _Data(X, Y, self._loss_kind)
        res = prune(
            net, self.method, float(self.sparsity), self.strategy, data,
            rounds=self.rounds, epochs=self._prune_epochs(), seed=seed, batch_size=self.batch_size,
        )
        net = apply_mask(net, res.weight_masks, res.bias_masks)
        if self.strategy != "edge-popup" and self.epochs > 0:
            net, _ = train(net, data, None, self.epochs, self.batch_size, self.lr, self._loss_kind, seed)
        self.net_ = net
        self.sparsity_ = sparsity(net)
        self.n_features_in_ = X.shape[1]
        return self

    def _raw(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.net_, X)[1]


class PrunedMLPClassifier(ClassifierMixin, _PrunedMLP):
    _loss_kind = "softmax-cross-entropy"

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        return self._fit(X, codes.astype(np.int64), len(self.classes_))

    def predict_proba(self, X):
        z = self._raw(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        idx = self._raw(X).argmax(axis=1)
        return self.classes_[idx]


class PrunedMLPRegressor(RegressorMixin, _PrunedMLP):
    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        self._1d = y.ndim == 1
        Y = y.reshape(len(y), -1)
        return self._fit(X, Y, Y.shape[1])

    def predict(self, X):
        out = self._raw(X)
        return out[:, 0] if self._1d else out

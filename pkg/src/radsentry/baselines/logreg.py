"""L2-regularized logistic regression trained by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gbdt.boosting import sigmoid


@dataclass(frozen=True)
class LogRegParams:
    learning_rate: float = 1.0
    epochs: int = 3000
    l2_reg: float = 1e-4
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    n_epochs: int = 0
    loss_history: tuple = ()

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.weights.size:
            raise ValueError(f"model expects {self.weights.size} columns, got shape {X.shape}")
        return X @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.0).astype(np.int8)


def logistic_objective(w, b, X, y, l2) -> float:
    z = X @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_gradient(w, b, X, y, l2):
    r = sigmoid(X @ w + b) - y
    return X.T @ r / len(y) + l2 * w, float(r.mean())


def logreg_fit(X, y, params: LogRegParams = LogRegParams()) -> LinearModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.zeros(X.shape[1])
    b = 0.0
    losses = []
    epoch = 0
    for epoch in range(1, params.epochs + 1):
        gw, gb = logistic_gradient(w, b, X, y, params.l2_reg)
        if np.sqrt(gw @ gw + gb * gb) < params.tolerance:
            break
        w = w - params.learning_rate * gw
        b = b - params.learning_rate * gb
        if epoch % 100 == 0:
            losses.append(logistic_objective(w, b, X, y, params.l2_reg))
    return LinearModel(w, b, epoch, tuple(losses))


def logreg_predict(model: LinearModel, X) -> np.ndarray:
    return model.predict(X)

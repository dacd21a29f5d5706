"""Linear meta models: ridge least squares and logistic regression."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import ModelSpec, TrainedModel, spec_metadata


class LinearModel(TrainedModel):
    family = "linear"

    def __init__(self, task, weights, intercept, metadata):
        super().__init__(task, metadata)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.intercept = float(intercept)

    def raw_scores(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        self._check_features(features, self.weights.shape)
        return features @ self.weights + self.intercept

    def predict(self, features, mask=None) -> np.ndarray:
        return self._finalize(self.raw_scores(features))

    def params_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "intercept": self.intercept}


def _fit_ridge(X: np.ndarray, y: np.ndarray, ridge: float):
    n, d = X.shape
    design = np.concatenate([X, np.ones((n, 1))], axis=1)
    gram = design.T @ design
    penalty = np.full(d + 1, ridge)
    penalty[-1] = 0.0  # intercept unpenalized
    gram += np.diag(penalty)
    coef = np.linalg.solve(gram, design.T @ y)
    return coef[:-1], coef[-1]


def _fit_logistic(X: np.ndarray, y: np.ndarray, spec: ModelSpec):
    """Full-batch gradient descent with Nesterov acceleration and a 1/L step.

    The step size comes from the logistic-loss Lipschitz bound, so the descent
    is monotone up to acceleration; iteration stops at the gradient tolerance.
    """
    n, d = X.shape
    design = np.concatenate([X, np.ones((n, 1))], axis=1)
    penalty = np.full(d + 1, spec.ridge)
    penalty[-1] = 0.0

    sigma_sq = np.linalg.eigvalsh(design.T @ design).max()
    lipschitz = sigma_sq / (4.0 * n) + spec.ridge
    step = 1.0 / lipschitz

    def gradient(w):
        p = expit(design @ w)
        return design.T @ (p - y) / n + penalty * w

    w = np.zeros(d + 1)
    lookahead = w.copy()
    momentum = 1.0
    iterations = 0
    for _ in range(spec.gd_max_iter):
        iterations += 1
        w_next = lookahead - step * gradient(lookahead)
        momentum_next = (1.0 + np.sqrt(1.0 + 4.0 * momentum**2)) / 2.0
        lookahead = w_next + (momentum - 1.0) / momentum_next * (w_next - w)
        w = w_next
        momentum = momentum_next
        if np.abs(gradient(w)).max() < spec.gd_tol:
            break
    return w[:-1], w[-1], iterations


def train_linear(train, val, spec: ModelSpec) -> LinearModel:
    """Fit the linear meta model; the validation split is not used."""
    X, y = train
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.task == "regression":
        weights, intercept = _fit_ridge(X, y, spec.ridge)
        extra = {}
    else:
        weights, intercept, iterations = _fit_logistic(X, y, spec)
        extra = {"iterations": iterations}
    return LinearModel(spec.task, weights, intercept, spec_metadata(spec, extra))


def load_linear(doc: dict) -> LinearModel:
    params = doc["parameters"]
    return LinearModel(
        doc["task"], params["weights"], params["intercept"], doc["metadata"]
    )

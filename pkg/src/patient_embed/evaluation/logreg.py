"""Binary / multinomial logistic regression fit by gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import sigmoid, softmax


class DegenerateFit(ValueError):
    pass


@dataclass
class LogRegModel:
    weights: np.ndarray  # (1, d) binary or (K, d) multinomial, on standardised inputs
    bias: np.ndarray
    classes: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    iterations: int = 0
    grad_norm: float = np.nan
    trained_on: str = ""

    @property
    def binary(self) -> bool:
        return self.classes.size == 2

    def predict_proba(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.scale
        logits = Z @ self.weights.T + self.bias
        if self.binary:
            p = sigmoid(logits[:, 0])
            return np.stack([1.0 - p, p], axis=1)
        return softmax(logits, axis=1)

    def positive_scores(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        if self.binary:
            return self.classes[(self.positive_scores(X) >= 0.5).astype(int)]
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]


def _objective(W, b, Z, Y, l2, binary):
    n = Z.shape[0]
    logits = Z @ W.T + b
    if binary:
        y = Y[:, 1]
        v = logits[:, 0]
        nll = np.mean(np.logaddexp(0.0, v) - y * v)
        dv = (sigmoid(v) - y)[:, None] / n
    else:
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        nll = np.mean(lse - np.sum(Y * logits, axis=1))
        dv = (softmax(logits, axis=1) - Y) / n
    loss = nll + 0.5 * l2 * np.sum(W * W)
    return loss, dv.T @ Z + l2 * W, dv.sum(axis=0)


def fit_logreg(X, y, l2: float = 1e-3, max_iter: int = 5000, tol: float = 1e-6, trained_on: str = "") -> LogRegModel:
    """Minimise mean NLL + l2/2 * ||W||^2 with backtracking gradient descent.

    Inputs are standardised with the training mean and scale. Stops when the
    gradient norm drops below ``tol`` or after ``max_iter`` steps. Weights
    start at zero, so the fit is deterministic.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) with one label per row")
    if X.shape[0] < 2:
        raise DegenerateFit("need at least two examples")
    classes, yi = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise DegenerateFit("logistic regression needs at least two classes")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    Z = (X - mean) / scale
    Y = np.eye(classes.size)[yi]
    binary = classes.size == 2
    K = 1 if binary else classes.size
    W = np.zeros((K, X.shape[1]))
    b = np.zeros(K)

    step = 1.0
    loss, gW, gb = _objective(W, b, Z, Y, l2, binary)
    gnorm = np.sqrt(np.sum(gW * gW) + np.sum(gb * gb))
    it = 0
    while it < max_iter and gnorm >= tol:
        it += 1
        sq = gnorm ** 2
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, gW_new, gb_new = _objective(W_new, b_new, Z, Y, l2, binary)
            if new_loss <= loss - 0.5 * step * sq or step < 1e-12:
                break
            step *= 0.5
        W, b, loss, gW, gb = W_new, b_new, new_loss, gW_new, gb_new
        gnorm = np.sqrt(np.sum(gW * gW) + np.sum(gb * gb))
        step = min(step * 2.0, 1e4)
    return LogRegModel(W, b, classes, mean, scale, it, float(gnorm), trained_on)

"""Exact O(n^2) t-SNE.

Gaussian conditionals are calibrated per point by bisection on the precision
so their entropy equals ``log(perplexity)`` (nats). Optimisation uses the
usual early exaggeration (x12), momentum 0.5 -> 0.8 and per-parameter gains.
After exaggeration ends each step is accepted only if it does not raise the
KL divergence; otherwise the step size is halved and momentum reset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
ENTROPY_TOL = 1e-10
_P_FLOOR = 1e-12


@dataclass
class Projection2D:
    points: np.ndarray  # (n, 2)
    kl_history: np.ndarray  # KL(P || Q) after each iteration, unexaggerated P
    entropies: np.ndarray  # per-point conditional entropy (nats)


def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_entropy(d: np.ndarray, beta: float):
    # d is shifted so min(d) == 0, keeping exp() in range
    w = np.exp(-d * beta)
    s = w.sum()
    p = w / s
    return np.log(s) + beta * np.sum(d * p), p


def conditional_probabilities(X, perplexity: float, max_iter: int = 200):
    """Row-stochastic P_{j|i} and the achieved entropies."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = _sq_distances(X)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    H = np.zeros(n)
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        lo, hi, beta = 0.0, np.inf, 1.0
        h, p = _row_entropy(d, beta)
        for _ in range(max_iter):
            if abs(h - target) < ENTROPY_TOL:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _row_entropy(d, beta)
        P[i, np.arange(n) != i] = p
        H[i] = h
    return P, H


def _kl_and_grad(P: np.ndarray, Y: np.ndarray, want_grad: bool = True):
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), _P_FLOOR)
    kl = float(np.sum(P * np.log(np.where(P > 0, P, 1.0) / Q)))
    if not want_grad:
        return kl, None
    W = (P - Q) * num
    grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y
    return kl, grad


def tsne_project(X, perplexity: float = 30.0, iterations: int = 1000, rng: np.random.Generator = None,
                 learning_rate: float = 200.0) -> Projection2D:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("embeddings must be an (n, d) array with d >= 1")
    n = X.shape[0]
    if perplexity <= 0 or n < 3 * perplexity:
        raise ValueError(f"perplexity {perplexity} too large for {n} points (need n >= 3 * perplexity)")
    if rng is None:
        rng = np.random.default_rng(0)

    D = _sq_distances(X)
    off = ~np.eye(n, dtype=bool)
    if np.any(D[off] == 0.0):
        log.warning("duplicate points in t-SNE input; adding 1e-10 jitter")
        X = X + rng.normal(0.0, 1e-10, X.shape)

    Pc, H = conditional_probabilities(X, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, _P_FLOOR)
    np.fill_diagonal(P, 0.0)

    Y = rng.normal(0.0, 1e-4, (n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_hist = np.empty(iterations)

    def kl(Yc, grad=True):
        return _kl_and_grad(P, Yc, grad)

    lr = learning_rate
    kl_cur = grad_cur = None
    for it in range(iterations):
        if it < EXAGGERATION_ITERS:
            _, grad = _kl_and_grad(P * EXAGGERATION, Y)
            gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
            np.maximum(gains, 0.01, out=gains)
            update = MOMENTUM_EARLY * update - learning_rate * gains * grad
            Y = Y + update
            Y -= Y.mean(axis=0)
            kl_hist[it] = kl(Y, False)[0]
            continue

        if kl_cur is None:
            kl_cur, grad_cur = kl(Y)
        grad = grad_cur
        gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
        np.maximum(gains, 0.01, out=gains)
        accepted = False
        for _ in range(40):
            step = MOMENTUM_LATE * update - lr * gains * grad
            Y_try = Y + step
            Y_try -= Y_try.mean(axis=0)
            kl_try, grad_try = kl(Y_try)
            if kl_try <= kl_cur:
                accepted = True
                break
            lr *= 0.5
            update = np.zeros_like(update)
        if accepted:
            Y, update, kl_cur, grad_cur = Y_try, step, kl_try, grad_try
            lr = min(lr * 1.1, learning_rate)
        else:
            grad_cur = grad
            update = np.zeros_like(update)
        kl_hist[it] = kl_cur
    return Projection2D(Y, kl_hist, H)

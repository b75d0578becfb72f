"""Small dense-math helpers shared by the recurrent cells, the head and the
evaluation code.

Matrices and vectors are plain ``float64`` numpy arrays. Every stochastic
routine in the package takes an explicit :class:`numpy.random.Generator`
created by :func:`make_rng`, so runs are reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(seed: int, *keys) -> int:
    """Deterministic child seed from a parent seed and hashable tags."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[_tag(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _tag(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    # stable across processes, unlike hash()
    return int.from_bytes(str(key).encode("utf-8")[:8].ljust(8, b"\0"), "little") & 0xFFFFFFFF


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x):
    """Logistic function; the tanh form never overflows."""
    out = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=DTYPE)))
    return out if out.ndim else float(out)


def tanh(x):
    out = np.tanh(np.asarray(x, dtype=DTYPE))
    return out if out.ndim else float(out)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector is undefined")
    z = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CohortSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = [set(map(int, p)) for p in (self.train, self.validation, self.test)]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise ValueError("train/validation/test indices overlap")

    def restrict(self, keep: np.ndarray) -> "CohortSplit":
        """Drop indices whose ``keep`` flag is false (e.g. records outside a task)."""
        keep = np.asarray(keep, bool)
        return CohortSplit(*(p[keep[p]] for p in (self.train, self.validation, self.test)))


def fold_sizes(n: int, k: int) -> list:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def kfold_split(n: int, k: int = 5, validation_fraction: float = 0.2, rng: np.random.Generator = None) -> list:
    """Shuffled k-fold partition; validation is carved out of each training part.

    The first ``n % k`` folds get one extra test index.
    """
    if n < k:
        raise ValueError(f"need at least k={k} items, got {n}")
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in [0, 1)")
    perm = rng.permutation(n) if rng is not None else np.arange(n)
    bounds = np.cumsum([0] + fold_sizes(n, k))
    splits = []
    for i in range(k):
        test = perm[bounds[i]:bounds[i + 1]]
        rest = np.concatenate([perm[:bounds[i]], perm[bounds[i + 1]:]])
        n_val = int(round(validation_fraction * len(rest)))
        if validation_fraction > 0:
            n_val = max(n_val, 1)
        splits.append(CohortSplit(np.sort(rest[n_val:]), np.sort(rest[:n_val]), np.sort(test)))
    return splits


def oversample_minority(indices, labels, rng: np.random.Generator) -> np.ndarray:
    """Append resampled indices until every class matches the majority count.

    ``labels`` is aligned with ``indices``. Original indices are kept in order;
    extra draws (with replacement) follow, class by class.
    """
    indices = np.asarray(indices)
    labels = np.asarray(labels)
    if indices.shape != labels.shape:
        raise ValueError("indices and labels must have the same length")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        log.warning("oversampling skipped: only one class present")
        return indices.copy()
    target = counts.max()
    extra = [indices]
    for cls, cnt in zip(classes, counts):
        if cnt < target:
            pool = indices[labels == cls]
            extra.append(rng.choice(pool, size=target - cnt, replace=True))
    return np.concatenate(extra)

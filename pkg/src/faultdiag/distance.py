"""Pairwise dissimilarity matrices and Gower double-centering.

These are the inputs to the permutation tests and to principal
coordinates analysis: the tests partition sums of squared
dissimilarities, and PCoA eigendecomposes the double-centered matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NegativeInputError
from .features import FeatureMatrix

METRICS = ("euclidean", "manhattan", "braycurtis")


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric n x n dissimilarities with a zero diagonal."""

    d: np.ndarray
    metric_name: str
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "d", d)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise DataError("distance matrix must be square")
        if not np.all(np.isfinite(d)):
            raise DataError("distances must be finite")
        if np.any(d < 0):
            raise DataError("distances must be non-negative")
        if np.any(np.diag(d) != 0.0):
            raise DataError("distance matrix diagonal must be zero")
        if not np.array_equal(d, d.T):
            raise DataError("distance matrix must be symmetric")
        if self.sample_ids is not None:
            ids = tuple(str(s) for s in self.sample_ids)
            object.__setattr__(self, "sample_ids", ids)
            if len(ids) != d.shape[0]:
                raise DataError("sample_ids length must match matrix size")

    @property
    def n(self) -> int:
        return self.d.shape[0]


def distance_matrix(fm, metric: str = "euclidean") -> DistanceMatrix:
    """Pairwise dissimilarities between the rows of a feature matrix.

    Bray-Curtis requires non-negative data and defines 0/0 pairs
    (two all-zero rows) as distance 0.
    """
    sample_ids = fm.sample_ids if isinstance(fm, FeatureMatrix) else None
    X = fm.values if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=float)
    if X.ndim != 2:
        raise DataError("expected a 2-D array")
    if not np.all(np.isfinite(X)):
        raise DataError("array entries must be finite")
    n = X.shape[0]
    if metric == "euclidean":
        sq = np.sum(X * X, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
        np.maximum(d2, 0.0, out=d2)
        d = np.sqrt(d2)
    elif metric == "manhattan":
        d = np.zeros((n, n))
        for i in range(n):
            d[i] = np.sum(np.abs(X - X[i]), axis=1)
    elif metric == "braycurtis":
        if np.any(X < 0):
            raise NegativeInputError("braycurtis requires non-negative data")
        d = np.zeros((n, n))
        for i in range(n):
            num = np.sum(np.abs(X - X[i]), axis=1)
            den = np.sum(X + X[i], axis=1)
            d[i] = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    else:
        raise DataError(f"unknown metric {metric!r}; choose from {METRICS}")
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d=d, metric_name=metric, sample_ids=sample_ids)


def gower_center(D: DistanceMatrix) -> np.ndarray:
    """Double-center the squared dissimilarities: G = J(-1/2 D**2)J.

    For a euclidean distance matrix of points X this recovers the
    inner-product (Gram) matrix of the centered points; its rows and
    columns sum to zero.
    """
    a = -0.5 * D.d ** 2
    row = a.mean(axis=1, keepdims=True)
    col = a.mean(axis=0, keepdims=True)
    grand = a.mean()
    g = a - row - col + grand
    return (g + g.T) / 2.0

"""Low-dimensional ordination: PCA for visualization, PCoA for
dissimilarity-based analysis.

PCoA eigendecomposes the Gower-centered distance matrix; axes with
negative eigenvalues (possible for non-euclidean dissimilarities) are
kept separately as imaginary coordinates because the dispersion test
consumes them directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .distance import DistanceMatrix, gower_center
from .errors import DataError, InvalidParamsError, TooFewSamplesError
from .features import FeatureMatrix, _as_2d

# Relative magnitude below which a PCoA eigenvalue counts as zero.
PCOA_EIGEN_TOL = 1e-9


@dataclass(frozen=True)
class OrdinationResult:
    """Eigenvalues and sample coordinates of an ordination.

    ``eigenvalues`` holds the full spectrum sorted descending;
    ``coords`` only the retained axes. ``variance_fraction`` is each
    eigenvalue's share of the positive-eigenvalue total (0 for
    non-positive axes). PCoA may carry ``imaginary_coords`` for
    negative-eigenvalue axes.
    """

    eigenvalues: np.ndarray
    coords: np.ndarray
    variance_fraction: np.ndarray
    kind: str
    imaginary_coords: np.ndarray | None = None
    sample_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", ev)
        if np.any(np.diff(ev) > 0):
            raise DataError("eigenvalues must be sorted descending")


def scree(ordination: OrdinationResult) -> np.ndarray:
    """Per-axis variance fractions over the positive eigenvalues.

    Non-positive axes get 0; the positive entries sum to 1.
    """
    ev = ordination.eigenvalues
    positive = np.where(ev > 0, ev, 0.0)
    total = positive.sum()
    if total == 0.0:
        return np.zeros_like(ev)
    return positive / total


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: the largest-magnitude loading of
    each component is made positive (first occurrence wins ties)."""
    flip = np.ones(components.shape[1])
    for j in range(components.shape[1]):
        i = int(np.argmax(np.abs(components[:, j])))
        if components[i, j] < 0:
            flip[j] = -1.0
    return flip


class PrincipalComponents(TransformerMixin, BaseEstimator):
    """PCA of the sample covariance (divisor n-1) via SVD of the
    centered data matrix.

    Fitted attributes: ``mean_``, ``components_`` (p x m loadings),
    ``eigenvalues_`` (full spectrum), ``variance_fraction_``.
    """

    def __init__(self, n_components: int | None = None):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = _as_2d(X)
        n, p = X.shape
        if n < 2:
            raise TooFewSamplesError("PCA needs at least 2 samples")
        limit = min(n - 1, p)
        m = limit if self.n_components is None else int(self.n_components)
        if not 1 <= m <= limit:
            raise InvalidParamsError(
                f"n_components={m} outside [1, min(n-1, p)={limit}]"
            )
        self.mean_ = X.mean(axis=0)
        xc = X - self.mean_
        _, svals, vt = np.linalg.svd(xc, full_matrices=False)
        eigenvalues = np.maximum(svals ** 2 / (n - 1), 0.0)[:limit]
        components = vt[:limit].T  # p x limit
        flip = _fix_signs(components)
        components = components * flip
        self.eigenvalues_ = eigenvalues
        positive = eigenvalues[eigenvalues > 0]
        total = positive.sum()
        self.variance_fraction_ = (
            np.where(eigenvalues > 0, eigenvalues, 0.0) / total
            if total > 0 else np.zeros_like(eigenvalues)
        )
        self.components_ = components[:, :m]
        self.n_components_ = m
        self.n_features_in_ = p
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "components_")
        X = _as_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError("column count differs from fit")
        return (X - self.mean_) @ self.components_


def pca(fm, n_components: int | None = None) -> OrdinationResult:
    """PCA scores of a feature matrix.

    Columns are mean-centered; eigenvalue j is sigma_j^2/(n-1); scores
    are the centered data projected onto the eigenvectors, with the
    largest-magnitude loading of each component made positive.
    """
    sample_ids = fm.sample_ids if isinstance(fm, FeatureMatrix) else None
    model = PrincipalComponents(n_components=n_components).fit(fm)
    return OrdinationResult(
        eigenvalues=model.eigenvalues_,
        coords=model.transform(fm),
        variance_fraction=model.variance_fraction_,
        kind="pca",
        sample_ids=sample_ids,
    )


class PrincipalCoordinates(BaseEstimator):
    """Classical scaling of a dissimilarity matrix.

    Eigendecomposes the Gower-centered matrix; axes with eigenvalue
    above ``PCOA_EIGEN_TOL * max|eigenvalue|`` become real coordinates
    scaled by sqrt(eigenvalue), those below the negated threshold
    become imaginary coordinates scaled by sqrt(-eigenvalue), and the
    near-zero rest are dropped.
    """

    def fit(self, D: DistanceMatrix, y=None):
        if not isinstance(D, DistanceMatrix):
            raise DataError("PrincipalCoordinates expects a DistanceMatrix")
        if D.n < 2:
            raise TooFewSamplesError("PCoA needs at least 2 samples")
        g = gower_center(D)
        lam, vec = np.linalg.eigh(g)
        order = np.argsort(-lam, kind="stable")
        lam = lam[order]
        vec = vec[:, order]
        vec = vec * _fix_signs(vec)
        tol = PCOA_EIGEN_TOL * np.max(np.abs(lam)) if lam.size else 0.0
        real = lam > tol
        imag = lam < -tol
        self.eigenvalues_ = lam
        self.coords_ = vec[:, real] * np.sqrt(lam[real])
        self.imaginary_coords_ = vec[:, imag] * np.sqrt(-lam[imag])
        positive = lam[lam > 0]
        total = positive.sum()
        self.variance_fraction_ = (
            np.where(lam > 0, lam, 0.0) / total if total > 0 else np.zeros_like(lam)
        )
        self.sample_ids_ = D.sample_ids
        return self

    def fit_transform(self, D: DistanceMatrix, y=None) -> np.ndarray:
        return self.fit(D).coords_


def pcoa(D: DistanceMatrix) -> OrdinationResult:
    """Principal coordinates of a dissimilarity matrix."""
    model = PrincipalCoordinates().fit(D)
    return OrdinationResult(
        eigenvalues=model.eigenvalues_,
        coords=model.coords_,
        variance_fraction=model.variance_fraction_,
        kind="pcoa",
        imaginary_coords=model.imaginary_coords_,
        sample_ids=model.sample_ids_,
    )

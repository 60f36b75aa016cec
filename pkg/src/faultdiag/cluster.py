"""Gaussian-mixture and k-means clustering with cluster-count selection.

The mixture model is fit by expectation-maximization with full
per-component covariances; k-means supplies the within-cluster
sum-of-squares (WSS) curve whose knee picks the cluster count, with
average silhouette width and BIC/AIC reported alongside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClusterMixin, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .distance import DistanceMatrix
from .errors import (
    DataError,
    DegenerateComponentError,
    DimensionMismatchError,
    KTooLargeError,
    SingleClusterError,
    TooFewPointsError,
)
from .features import FeatureMatrix, _as_2d
from .rng import rng_for

_LOG_2PI = math.log(2.0 * math.pi)

# Stream tags keep k-means and EM restarts on disjoint RNG streams.
_KMEANS_STREAM = 11
_GMM_STREAM = 12


@dataclass
class ClusterSelection:
    """Model-selection curves over a range of cluster counts."""

    k_values: list[int]
    wss: list[float]
    avg_silhouette: list[float] = field(default_factory=list)
    bic: list[float] = field(default_factory=list)
    aic: list[float] = field(default_factory=list)
    recommended_k: int = 0
    method: str = "wss_knee"
    low_confidence: bool = False


def _sq_dists(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    sq_x = np.sum(X * X, axis=1)[:, None]
    sq_c = np.sum(centers * centers, axis=1)[None, :]
    d2 = sq_x + sq_c - 2.0 * (X @ centers.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: points chosen with probability proportional
    to squared distance from the nearest already-chosen center."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining)) if remaining.size else int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def _lloyd(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    """One k-means run: k-means++ seeding, then Lloyd iterations until
    the assignment is stable. Empty clusters are re-seeded from the
    point currently farthest from its centroid. Returns
    ``(labels, centers, wss, init_wss)``."""
    n = X.shape[0]
    centers = _kmeans_pp(X, k, rng)
    labels = np.full(n, -1)
    init_wss = None
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        new_labels = np.argmin(d2, axis=1)
        assigned = d2[np.arange(n), new_labels]
        for j in range(k):
            if not np.any(new_labels == j):
                far = int(np.argmax(assigned))
                new_labels[far] = j
                assigned[far] = 0.0
        if init_wss is None:
            init_wss = float(np.sum((X - centers[new_labels]) ** 2))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if np.any(members):
                centers[j] = X[members].mean(axis=0)
    wss = float(np.sum((X - centers[labels]) ** 2))
    return labels, centers, wss, init_wss


class KMeansCluster(ClusterMixin, BaseEstimator):
    """Lloyd's algorithm with k-means++ seeding, best of several restarts.

    Restart ``r`` draws its seeding from the stream keyed on
    ``(seed, r)``, so results do not depend on evaluation order.
    """

    def __init__(self, n_clusters: int = 2, seed: int = 0, restarts: int = 10,
                 max_iter: int = 300):
        self.n_clusters = n_clusters
        self.seed = seed
        self.restarts = restarts
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = _as_2d(X)
        n = X.shape[0]
        k = self.n_clusters
        if k < 1:
            raise DataError("n_clusters must be >= 1")
        if k > n:
            raise KTooLargeError(f"n_clusters={k} exceeds n={n}")
        best = None
        for r in range(max(1, self.restarts)):
            rng = rng_for(self.seed, _KMEANS_STREAM, r)
            result = _lloyd(X, k, rng, self.max_iter)
            if best is None or result[2] < best[2]:
                best = result
        self.labels_, self.cluster_centers_, self.inertia_, self.init_inertia_ = best
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "cluster_centers_")
        X = _as_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError("column count differs from fit")
        return np.argmin(_sq_dists(X, self.cluster_centers_), axis=1)


def kmeans_fit(fm, k: int, seed: int = 0, restarts: int = 10):
    """Fit k-means; returns ``(labels, centroids, wss)`` of the best restart."""
    model = KMeansCluster(n_clusters=k, seed=seed, restarts=restarts).fit(fm)
    return model.labels_, model.cluster_centers_, model.inertia_


class _ComponentCollapse(Exception):
    """Internal: a mixture component degenerated during EM."""


class GaussianMixtureModel(DensityMixin, BaseEstimator):
    """Finite Gaussian mixture fit by EM with full covariances.

    Responsibilities are computed in log space (log-sum-exp); each
    M-step covariance gets a ridge of ``reg * trace/p`` on its
    diagonal. The best of ``restarts`` runs (by log-likelihood) is
    kept. If a component weight underflows below 1e-12 or a covariance
    loses positive definiteness, the whole fit is retried with the
    ridge scaled up tenfold, at most three times, before raising
    :class:`DegenerateComponentError`.

    Fitted attributes: ``weights_``, ``means_``, ``covariances_``,
    ``log_likelihood_``, ``bic_``, ``aic_``, ``n_iter_``,
    ``converged_``, ``log_likelihood_history_``.
    """

    def __init__(self, n_components: int = 1, seed: int = 0, restarts: int = 5,
                 max_iter: int = 500, rel_tol: float = 1e-8, reg: float = 1e-6):
        self.n_components = n_components
        self.seed = seed
        self.restarts = restarts
        self.max_iter = max_iter
        self.rel_tol = rel_tol
        self.reg = reg

    def fit(self, X, y=None):
        X = _as_2d(X)
        n, p = X.shape
        k = self.n_components
        if k < 1:
            raise DataError("n_components must be >= 1")
        if n < k:
            raise KTooLargeError(f"n_components={k} exceeds n={n}")
        last_err = None
        for attempt in range(4):  # initial try + 3 regularization retries
            reg_eff = self.reg * 10.0 ** attempt
            try:
                best = None
                for r in range(max(1, self.restarts)):
                    rng = rng_for(self.seed, _GMM_STREAM, r)
                    run = self._em_once(X, k, rng, reg_eff)
                    if best is None or run["ll"] > best["ll"]:
                        best = run
                break
            except _ComponentCollapse as err:
                last_err = err
        else:
            raise DegenerateComponentError(
                f"component collapsed after 3 ridge retries: {last_err}"
            )
        self.weights_ = best["w"]
        self.means_ = best["mu"]
        self.covariances_ = best["cov"]
        self._chols = best["chol"]
        self.log_likelihood_ = best["ll"]
        self.log_likelihood_history_ = best["history"]
        self.n_iter_ = best["n_iter"]
        self.converged_ = best["converged"]
        m = (k - 1) + k * p + k * p * (p + 1) // 2
        self.n_parameters_ = m
        self.bic_ = -2.0 * best["ll"] + m * math.log(n)
        self.aic_ = -2.0 * best["ll"] + 2.0 * m
        self.n_features_in_ = p
        return self

    def _em_once(self, X, k, rng, reg):
        n, p = X.shape
        # Responsibilities start from a converged k-means partition
        # (k-means++ seeded); seeding alone leaves EM stuck in whatever
        # split the seeds happened to make once densities saturate.
        labels, _, _, _ = _lloyd(X, k, rng, self.max_iter)
        resp = np.zeros((n, k))
        resp[np.arange(n), labels] = 1.0
        global_scale = float(np.trace(np.cov(X, rowvar=False).reshape(p, p))) / p
        history: list[float] = []
        ll_prev = None
        converged = False
        for _ in range(self.max_iter):
            w, mu, cov, chol = self._m_step(X, resp, reg, global_scale)
            log_dens = self._log_weighted_densities(X, w, mu, chol)
            log_norm = logsumexp(log_dens, axis=1)
            ll = float(np.sum(log_norm))
            history.append(ll)
            resp = np.exp(log_dens - log_norm[:, None])
            if ll_prev is not None and abs(ll - ll_prev) <= self.rel_tol * abs(ll_prev):
                converged = True
                break
            ll_prev = ll
        return {
            "w": w, "mu": mu, "cov": cov, "chol": chol, "ll": ll,
            "history": history, "n_iter": len(history), "converged": converged,
        }

    @staticmethod
    def _m_step(X, resp, reg, global_scale):
        n, p = X.shape
        k = resp.shape[1]
        nk = resp.sum(axis=0)
        w = nk / n
        if np.any(w < 1e-12):
            raise _ComponentCollapse(f"weight underflow: {w.min():g}")
        mu = (resp.T @ X) / nk[:, None]
        cov = np.empty((k, p, p))
        chol = np.empty((k, p, p))
        for j in range(k):
            diff = X - mu[j]
            cj = (resp[:, j, None] * diff).T @ diff / nk[j]
            cj = (cj + cj.T) / 2.0
            cj[np.diag_indices(p)] += reg * np.trace(cj) / p
            try:
                chol[j] = np.linalg.cholesky(cj)
            except np.linalg.LinAlgError:
                # single-point component: its covariance has zero trace,
                # so the proportional ridge is zero; fall back to an
                # absolute ridge at the global data scale
                cj[np.diag_indices(p)] += reg * global_scale
                try:
                    chol[j] = np.linalg.cholesky(cj)
                except np.linalg.LinAlgError as err:
                    raise _ComponentCollapse(f"covariance not SPD: {err}") from err
            cov[j] = cj
        return w, mu, cov, chol

    def _log_weighted_densities(self, X, w, mu, chol):
        n, p = X.shape
        k = w.shape[0]
        out = np.empty((n, k))
        for j in range(k):
            y = solve_triangular(chol[j], (X - mu[j]).T, lower=True)
            maha = np.sum(y * y, axis=0)
            logdet = 2.0 * np.sum(np.log(np.diag(chol[j])))
            out[:, j] = math.log(w[j]) - 0.5 * (p * _LOG_2PI + logdet + maha)
        return out

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = _as_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"model has p={self.n_features_in_}, data has p={X.shape[1]}"
            )
        log_dens = self._log_weighted_densities(X, self.weights_, self.means_, self._chols)
        resp = np.exp(log_dens - logsumexp(log_dens, axis=1)[:, None])
        resp /= resp.sum(axis=1, keepdims=True)
        return resp

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = _as_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError("column count differs from fit")
        log_dens = self._log_weighted_densities(X, self.weights_, self.means_, self._chols)
        return logsumexp(log_dens, axis=1)


def gmm_fit(fm, k: int, *, seed: int = 0, restarts: int = 5, max_iter: int = 500,
            rel_tol: float = 1e-8, reg: float = 1e-6) -> GaussianMixtureModel:
    """Fit a Gaussian mixture; returns the fitted model object."""
    return GaussianMixtureModel(
        n_components=k, seed=seed, restarts=restarts, max_iter=max_iter,
        rel_tol=rel_tol, reg=reg,
    ).fit(fm)


def gmm_predict(model: GaussianMixtureModel, fm):
    """Responsibilities and hard labels for new data.

    Rows of the responsibility matrix sum to 1; hard labels take the
    argmax with ties broken toward the lowest component index.
    """
    resp = model.predict_proba(fm)
    return resp, np.argmax(resp, axis=1)


def silhouette_widths(D: DistanceMatrix, labels):
    """Per-point silhouette widths s = (b - a)/max(a, b) and their mean.

    ``a`` is the mean distance to the point's own cluster (excluding
    itself), ``b`` the smallest mean distance to another cluster.
    Singleton clusters and all-coincident configurations get s = 0.
    """
    labels = np.asarray(labels)
    d = D.d
    n = d.shape[0]
    if labels.shape[0] != n:
        raise DataError("labels length must match distance matrix")
    groups = np.unique(labels)
    if groups.size < 2:
        raise SingleClusterError("silhouette needs at least 2 clusters")
    masks = [labels == g for g in groups]
    s = np.zeros(n)
    for i in range(n):
        own = labels[i]
        own_idx = int(np.flatnonzero(groups == own)[0])
        m = int(masks[own_idx].sum())
        if m == 1:
            s[i] = 0.0
            continue
        a = (d[i, masks[own_idx]].sum()) / (m - 1)
        b = min(d[i, mask].mean() for j, mask in enumerate(masks) if j != own_idx)
        denom = max(a, b)
        s[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return s, float(np.mean(s))


def _wss_knee(k_values, wss) -> tuple[int, bool]:
    """Knee of the WSS curve by maximum perpendicular distance to the
    chord between its endpoints, both axes min-max normalized. Ties go
    to the smaller k; a flat or linear curve has no knee and falls back
    to the smallest interior k with ``low_confidence`` set."""
    k = np.asarray(k_values, dtype=float)
    w = np.asarray(wss, dtype=float)
    if k.size < 3:
        raise TooFewPointsError("knee detection needs at least 3 k values")
    if k[-1] == k[0] or w[0] == w[-1]:
        return int(k_values[1]), True
    ks = (k - k[0]) / (k[-1] - k[0])
    wn = (w - w[-1]) / (w[0] - w[-1])
    # chord runs from (0, 1) to (1, 0); signed distance below it
    dist = (1.0 - ks - wn) / math.sqrt(2.0)
    interior = slice(1, len(k_values) - 1)
    best = 1 + int(np.argmax(dist[interior]))
    low_confidence = bool(np.max(dist[interior]) <= 1e-6)
    if low_confidence:
        best = 1
    return int(k_values[best]), low_confidence


def recommend_k(sel: ClusterSelection) -> int:
    """Recommended cluster count: the knee of the WSS curve.

    Silhouette and BIC curves are reported alongside in the selection
    object but do not override the WSS knee.
    """
    k, _ = _wss_knee(sel.k_values, sel.wss)
    return k


def wss_curve(fm, k_max: int, seed: int = 0, restarts: int = 10) -> ClusterSelection:
    """WSS for k = 1..k_max via k-means, plus the knee recommendation."""
    X = _as_2d(fm)
    if k_max > X.shape[0]:
        raise KTooLargeError(f"k_max={k_max} exceeds n={X.shape[0]}")
    if k_max < 1:
        raise DataError("k_max must be >= 1")
    k_values = list(range(1, k_max + 1))
    wss = []
    for k in k_values:
        _, _, w = kmeans_fit(X, k, seed=seed, restarts=restarts)
        wss.append(w)
    sel = ClusterSelection(k_values=k_values, wss=wss)
    if len(k_values) >= 3:
        sel.recommended_k, sel.low_confidence = _wss_knee(k_values, wss)
    else:
        sel.recommended_k = k_values[-1]
        sel.low_confidence = True
    return sel


def selection_curves(fm, k_max: int, seed: int = 0, restarts: int = 10,
                     gmm_restarts: int = 5, with_gmm: bool = True) -> ClusterSelection:
    """Full selection diagnostics: WSS, average silhouette, BIC and AIC
    for k = 1..k_max.

    Silhouette uses the k-means labels on euclidean distances; it is
    defined for k >= 2 and recorded as 0.0 at k = 1. BIC/AIC come from
    mixture fits at each k.
    """
    from .distance import distance_matrix

    X = _as_2d(fm)
    sel = wss_curve(X, k_max, seed=seed, restarts=restarts)
    D = distance_matrix(X, metric="euclidean")
    for k in sel.k_values:
        if k == 1:
            sel.avg_silhouette.append(0.0)
        else:
            labels, _, _ = kmeans_fit(X, k, seed=seed, restarts=restarts)
            if np.unique(labels).size < 2:
                sel.avg_silhouette.append(0.0)
            else:
                _, avg = silhouette_widths(D, labels)
                sel.avg_silhouette.append(avg)
        if with_gmm:
            model = gmm_fit(X, k, seed=seed, restarts=gmm_restarts)
            sel.bic.append(model.bic_)
            sel.aic.append(model.aic_)
    return sel

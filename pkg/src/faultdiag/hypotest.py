"""Permutation and classical hypothesis tests for cluster validation.

The workhorses are PERMANOVA (location differences between groups in
dissimilarity space) and the multivariate dispersion homogeneity test
(a multivariate analogue of Levene's test, run on distances to group
centroids in principal-coordinate space), both with seeded permutation
p-values. Shapiro-Wilk and Bartlett cover the classical parametric
assumption checks.

Every permutation test reports p = (1 + exceedances)/(1 + B), where a
permuted statistic tying the observed one counts as an exceedance; the
smallest attainable p is therefore 1/(1 + B), e.g. 0.001 at B = 999.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distance import DistanceMatrix
from .errors import (
    DataError,
    InvalidParamsError,
    SampleTooLargeError,
    SampleTooSmallError,
    SingleGroupError,
    ZeroRangeError,
    ZeroResidualError,
    ZeroTotalVariationError,
    ZeroVarianceError,
)
from .ordination import pcoa
from .rng import permutation_at, permutation_stream


@dataclass(frozen=True)
class GroupLabels:
    """A grouping factor: labels, ordered unique groups, group sizes."""

    labels: tuple
    groups: tuple
    sizes: tuple[int, ...]
    codes: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "GroupLabels":
        labels = tuple(labels)
        if not labels:
            raise DataError("empty label vector")
        try:
            groups = tuple(sorted(set(labels)))
        except TypeError as err:
            raise DataError("labels must be mutually comparable") from err
        index = {g: i for i, g in enumerate(groups)}
        codes = np.array([index[lab] for lab in labels], dtype=np.intp)
        sizes = tuple(int(np.sum(codes == i)) for i in range(len(groups)))
        return cls(labels=labels, groups=groups, sizes=sizes, codes=codes)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_groups(self) -> int:
        return len(self.groups)


@dataclass(frozen=True)
class PermTestResult:
    """Outcome of one seeded permutation test."""

    statistic: float
    permutations: int
    exceedances: int
    p_value: float
    seed: int
    parametric_p: float | None = None


@dataclass(frozen=True)
class PermanovaResult:
    """Sum-of-squares partition and pseudo-F of a PERMANOVA."""

    ss_total: float
    ss_among: float
    ss_within: float
    df_among: int
    df_within: int
    pseudo_f: float
    test: PermTestResult


@dataclass(frozen=True)
class DispersionResult:
    """Multivariate dispersion homogeneity test outcome.

    ``pairwise`` is an a x a matrix with observed (parametric Welch t)
    p-values in the lower triangle and permutation p-values in the
    upper triangle; the diagonal is NaN. ``clamped_count`` counts
    negative squared centroid distances clamped to zero (possible only
    with imaginary PCoA axes).
    """

    centroid_distances: np.ndarray
    group_mean_distances: np.ndarray
    anova_f: float
    test: PermTestResult
    pairwise: np.ndarray | None
    clamped_count: int
    groups: tuple


# -- distribution upper tails -------------------------------------------------

def dist_sf(kind: str, x: float, *params: float) -> float:
    """Upper-tail probability of chi-squared, F, or Student t.

    Computed from the regularized incomplete gamma/beta functions.
    ``params`` is (df,) for chi_squared and student_t, (df1, df2)
    for f.
    """
    if not math.isfinite(x):
        if math.isnan(x):
            raise InvalidParamsError("statistic is NaN")
        return 0.0 if x > 0 else 1.0
    if kind == "chi_squared":
        (df,) = params
        if df <= 0:
            raise InvalidParamsError("chi_squared needs df > 0")
        if x <= 0:
            return 1.0
        return float(special.gammaincc(df / 2.0, x / 2.0))
    if kind == "f":
        df1, df2 = params
        if df1 <= 0 or df2 <= 0:
            raise InvalidParamsError("f needs df1, df2 > 0")
        if x <= 0:
            return 1.0
        return float(special.betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x)))
    if kind == "student_t":
        (df,) = params
        if df <= 0:
            raise InvalidParamsError("student_t needs df > 0")
        tail = 0.5 * float(special.betainc(df / 2.0, 0.5, df / (df + x * x)))
        return tail if x >= 0 else 1.0 - tail
    raise InvalidParamsError(f"unknown distribution kind {kind!r}")


# -- Shapiro-Wilk -------------------------------------------------------------

# Royston (1995) AS R94 polynomial coefficients, highest degree first.
_SW_C1 = (-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0)
_SW_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0)
_SW_MU_SMALL = (-0.0006714, 0.025054, -0.39978, 0.5440)
_SW_SIG_SMALL = (-0.0020322, 0.062767, -0.77857, 1.3822)
_SW_MU_LARGE = (0.0038915, -0.083751, -0.31082, -1.5861)
_SW_SIG_LARGE = (0.0030302, -0.082676, -0.4803)


def shapiro_wilk(x) -> tuple[float, float]:
    """Shapiro-Wilk normality test via the AS R94 approximation.

    Returns ``(W, p)``; valid for 3 <= n <= 5000. W is built from
    normal-order-statistic weights, p from Royston's normalizing
    transformation of W.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n < 3:
        raise SampleTooSmallError("Shapiro-Wilk needs n >= 3")
    if n > 5000:
        raise SampleTooLargeError("Shapiro-Wilk approximation valid for n <= 5000")
    if x[0] == x[-1]:
        raise ZeroRangeError("all values identical")

    m = special.ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    msq = float(m @ m)
    if n == 3:
        a = np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    else:
        u = 1.0 / math.sqrt(n)
        a_n = float(np.polyval(_SW_C1, u)) + m[-1] / math.sqrt(msq)
        if n > 5:
            a_n1 = float(np.polyval(_SW_C2, u)) + m[-2] / math.sqrt(msq)
            phi = (msq - 2.0 * m[-1] ** 2 - 2.0 * m[-2] ** 2) / \
                  (1.0 - 2.0 * a_n ** 2 - 2.0 * a_n1 ** 2)
            a = m / math.sqrt(phi)
            a[-1], a[-2] = a_n, a_n1
            a[0], a[1] = -a_n, -a_n1
        else:
            phi = (msq - 2.0 * m[-1] ** 2) / (1.0 - 2.0 * a_n ** 2)
            a = m / math.sqrt(phi)
            a[-1] = a_n
            a[0] = -a_n

    ss = float(np.sum((x - x.mean()) ** 2))
    w = float((a @ x) ** 2 / ss)
    w = min(w, 1.0)

    if n == 3:
        # exact distribution for n = 3
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, float(min(max(p, 0.0), 1.0))
    one_minus_w = 1.0 - w
    if one_minus_w <= 0.0:
        return w, 1.0
    if n <= 11:
        gamma = 0.459 * n - 2.273
        wt = -math.log(gamma - math.log(one_minus_w))
        mu = float(np.polyval(_SW_MU_SMALL, n))
        sigma = math.exp(float(np.polyval(_SW_SIG_SMALL, n)))
    else:
        wt = math.log(one_minus_w)
        ln_n = math.log(n)
        mu = float(np.polyval(_SW_MU_LARGE, ln_n))
        sigma = math.exp(float(np.polyval(_SW_SIG_LARGE, ln_n)))
    z = (wt - mu) / sigma
    return w, float(special.ndtr(-z))


# -- Bartlett -----------------------------------------------------------------

def bartlett_test(groups) -> tuple[float, int, float]:
    """Bartlett's test of homogeneity of variances.

    Returns ``(K_squared, df, p)`` with df = a - 1 and p from the
    chi-squared upper tail. Needs >= 2 groups, each with >= 2 values
    and positive variance.
    """
    groups = [np.asarray(g, dtype=float) for g in groups]
    a = len(groups)
    if a < 2:
        raise SingleGroupError("Bartlett needs at least 2 groups")
    sizes = np.array([g.size for g in groups])
    if np.any(sizes < 2):
        raise DataError("every group needs at least 2 values")
    variances = np.array([float(np.var(g, ddof=1)) for g in groups])
    if np.any(variances <= 0):
        raise ZeroVarianceError("a group has zero variance")
    n_total = int(sizes.sum())
    pooled = float(np.sum((sizes - 1) * variances) / (n_total - a))
    numerator = (n_total - a) * math.log(pooled) - float(
        np.sum((sizes - 1) * np.log(variances))
    )
    correction = 1.0 + (float(np.sum(1.0 / (sizes - 1))) - 1.0 / (n_total - a)) / \
        (3.0 * (a - 1))
    k_squared = numerator / correction
    df = a - 1
    return k_squared, df, dist_sf("chi_squared", k_squared, df)


# -- PERMANOVA ----------------------------------------------------------------

def _as_groups(groups) -> GroupLabels:
    return groups if isinstance(groups, GroupLabels) else GroupLabels.from_labels(groups)


def _permanova_stat(d_sq: np.ndarray, codes: np.ndarray, sizes, ss_total: float,
                    df_among: int, df_within: int) -> tuple[float, float]:
    ss_within = 0.0
    for gi, n_g in enumerate(sizes):
        idx = np.flatnonzero(codes == gi)
        ss_within += d_sq[np.ix_(idx, idx)].sum() / (2.0 * n_g)
    ss_among = ss_total - ss_within
    if ss_within <= 0.0:
        f = math.inf if ss_among > 0 else 0.0
    else:
        f = (ss_among / df_among) / (ss_within / df_within)
    return f, ss_within


def _count_exceedances(statistic, observed, seed, n, index_range, stream=()):
    count = 0
    for b in index_range:
        perm = permutation_at(seed, n, b, stream)
        if statistic(perm) >= observed:
            count += 1
    return count


def _permutation_pvalue(statistic, observed: float, seed: int, n: int,
                        permutations: int, n_workers: int = 1,
                        stream: tuple[int, ...] = ()) -> tuple[int, float]:
    """Count permuted statistics >= observed over the keyed stream.

    Each permutation index is an independent work item, so the count
    (and p-value) is identical for any worker count.
    """
    if permutations < 1:
        raise DataError("permutations must be >= 1")
    if n_workers <= 1:
        exceed = _count_exceedances(statistic, observed, seed, n,
                                    range(permutations), stream)
    else:
        chunks = np.array_split(np.arange(permutations), n_workers)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = pool.map(
                lambda ix: _count_exceedances(statistic, observed, seed, n, ix, stream),
                chunks,
            )
        exceed = sum(parts)
    return exceed, (1 + exceed) / (1 + permutations)


def permanova(D: DistanceMatrix, groups, permutations: int = 999, seed: int = 0,
              n_workers: int = 1) -> PermanovaResult:
    """Permutational multivariate analysis of variance.

    Partitions the total sum of squared dissimilarities into among- and
    within-group parts and tests the pseudo-F statistic by permuting
    group labels. For euclidean distances on univariate data the
    pseudo-F coincides with the classical one-way ANOVA F.
    """
    g = _as_groups(groups)
    n = D.n
    if g.n != n:
        raise DataError("labels length must match distance matrix")
    a = g.n_groups
    if a < 2:
        raise SingleGroupError("PERMANOVA needs at least 2 groups")
    d_sq = D.d ** 2
    ss_total = float(d_sq.sum()) / (2.0 * n)
    if ss_total <= 0.0:
        raise ZeroTotalVariationError("all points are identical")
    df_among = a - 1
    df_within = n - a
    codes = g.codes
    f_obs, ss_within = _permanova_stat(d_sq, codes, g.sizes, ss_total,
                                       df_among, df_within)

    def stat(perm):
        f, _ = _permanova_stat(d_sq, codes[perm], g.sizes, ss_total,
                               df_among, df_within)
        return f

    exceed, p = _permutation_pvalue(stat, f_obs, seed, n, permutations, n_workers)
    return PermanovaResult(
        ss_total=ss_total,
        ss_among=ss_total - ss_within,
        ss_within=ss_within,
        df_among=df_among,
        df_within=df_within,
        pseudo_f=f_obs,
        test=PermTestResult(
            statistic=f_obs, permutations=permutations, exceedances=exceed,
            p_value=p, seed=seed,
        ),
    )


# -- dispersion homogeneity ---------------------------------------------------

def _anova_f(values: np.ndarray, codes: np.ndarray, sizes: np.ndarray,
             ss_total: float, grand: float, df_among: int, df_within: int) -> float:
    group_sums = np.bincount(codes, weights=values, minlength=sizes.size)
    means = group_sums / sizes
    ss_between = float(np.sum(sizes * (means - grand) ** 2))
    ss_within = ss_total - ss_between
    if ss_within <= 0.0:
        return math.inf if ss_between > 0 else 0.0
    return (ss_between / df_among) / (ss_within / df_within)


def _centroid_distances(D: DistanceMatrix, g: GroupLabels):
    """Distances from each point to its group centroid in PCoA space.

    Squared distances subtract the imaginary-axis component; negative
    results are clamped to zero and counted.
    """
    ordn = pcoa(D)
    real = ordn.coords
    imag = ordn.imaginary_coords
    z_sq = np.zeros(D.n)
    for gi in range(g.n_groups):
        members = g.codes == gi
        centroid = real[members].mean(axis=0) if real.shape[1] else 0.0
        if real.shape[1]:
            z_sq[members] = np.sum((real[members] - centroid) ** 2, axis=1)
        if imag is not None and imag.shape[1]:
            icentroid = imag[members].mean(axis=0)
            z_sq[members] -= np.sum((imag[members] - icentroid) ** 2, axis=1)
    clamped = int(np.sum(z_sq < 0.0))
    return np.sqrt(np.clip(z_sq, 0.0, None)), clamped


def permdisp(D: DistanceMatrix, groups, permutations: int = 999, seed: int = 0,
             n_workers: int = 1, pairwise: bool = True,
             pairwise_permutations: int | None = None) -> DispersionResult:
    """Homogeneity of multivariate dispersions across groups.

    Each point's distance to its group centroid is measured in
    principal-coordinate space (imaginary axes subtract); a one-way
    ANOVA F on those distances is tested both parametrically and by
    permuting group labels over the fixed distances. When ``pairwise``
    is set, a group-pair table of observed (Welch t) and permutation
    p-values is attached.
    """
    g = _as_groups(groups)
    if g.n != D.n:
        raise DataError("labels length must match distance matrix")
    a = g.n_groups
    if a < 2:
        raise SingleGroupError("dispersion test needs at least 2 groups")
    if min(g.sizes) < 2:
        raise DataError("every group needs at least 2 members")
    z, clamped = _centroid_distances(D, g)
    sizes = np.asarray(g.sizes, dtype=float)
    grand = float(z.mean())
    ss_total = float(np.sum((z - grand) ** 2))
    df_among = a - 1
    df_within = g.n - a
    f_obs = _anova_f(z, g.codes, sizes, ss_total, grand, df_among, df_within)
    if ss_total <= 0.0 or not math.isfinite(f_obs):
        raise ZeroResidualError("within-group distance variation is zero")
    parametric_p = dist_sf("f", f_obs, df_among, df_within)

    codes = g.codes

    def stat(perm):
        return _anova_f(z, codes[perm], sizes, ss_total, grand, df_among, df_within)

    exceed, p = _permutation_pvalue(stat, f_obs, seed, g.n, permutations, n_workers)
    table = None
    if pairwise:
        table = pairwise_dispersion_table(
            z, g, pairwise_permutations or permutations, seed
        )
    group_means = np.bincount(g.codes, weights=z, minlength=a) / sizes
    return DispersionResult(
        centroid_distances=z,
        group_mean_distances=group_means,
        anova_f=f_obs,
        test=PermTestResult(
            statistic=f_obs, permutations=permutations, exceedances=exceed,
            p_value=p, seed=seed, parametric_p=parametric_p,
        ),
        pairwise=table,
        clamped_count=clamped,
        groups=g.groups,
    )


def _welch_t(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n1, n2 = x.size, y.size
    v1 = float(np.var(x, ddof=1))
    v2 = float(np.var(y, ddof=1))
    se_sq = v1 / n1 + v2 / n2
    diff = float(x.mean() - y.mean())
    if se_sq == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return t, float(n1 + n2 - 2)
    t = diff / math.sqrt(se_sq)
    df = se_sq ** 2 / ((v1 / n1) ** 2 / (n1 - 1) + (v2 / n2) ** 2 / (n2 - 1))
    return t, df


def pairwise_dispersion_table(centroid_distances: np.ndarray, groups,
                              permutations: int = 999, seed: int = 0) -> np.ndarray:
    """Group-pair comparison of centroid distances.

    For each pair (i, j): the observed p (two-sided Welch t) goes in
    the lower triangle, the permutation p (pooled labels reshuffled,
    |t| recomputed) in the upper triangle; the diagonal is NaN. The
    pair's permutation stream is keyed on (seed, i, j).
    """
    g = _as_groups(groups)
    z = np.asarray(centroid_distances, dtype=float)
    if z.size != g.n:
        raise DataError("distances length must match labels")
    a = g.n_groups
    if a < 2:
        raise SingleGroupError("pairwise table needs at least 2 groups")
    table = np.full((a, a), np.nan)
    for i in range(a):
        zi = z[g.codes == i]
        for j in range(i + 1, a):
            zj = z[g.codes == j]
            t_obs, df = _welch_t(zi, zj)
            p_obs = 2.0 * dist_sf("student_t", abs(t_obs), df)
            pooled = np.concatenate([zi, zj])
            t_abs = abs(t_obs)

            def stat(perm, pooled=pooled, n_i=zi.size):
                zp = pooled[perm]
                t, _ = _welch_t(zp[:n_i], zp[n_i:])
                return abs(t)

            exceed, p_perm = _permutation_pvalue(
                stat, t_abs, seed, pooled.size, permutations, stream=(i, j)
            )
            table[j, i] = min(p_obs, 1.0)
            table[i, j] = p_perm
    return table

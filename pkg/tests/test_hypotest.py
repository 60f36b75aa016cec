import itertools
import math

import numpy as np
import pytest
from scipy import stats

from faultdiag.distance import DistanceMatrix, distance_matrix
from faultdiag.errors import (
    DataError,
    InvalidParamsError,
    SampleTooSmallError,
    SampleTooLargeError,
    SingleGroupError,
    ZeroRangeError,
    ZeroResidualError,
    ZeroTotalVariationError,
    ZeroVarianceError,
)
from faultdiag.hypotest import (
    GroupLabels,
    bartlett_test,
    dist_sf,
    pairwise_dispersion_table,
    permanova,
    permdisp,
    shapiro_wilk,
)
from faultdiag.rng import permutation_stream


class TestPermutationStream:
    def test_n_one_is_identity(self):
        for perm in permutation_stream(3, 1, 5):
            assert np.array_equal(perm, [0])

    def test_bijection(self):
        for perm in permutation_stream(9, 12, 20):
            assert sorted(perm.tolist()) == list(range(12))

    def test_deterministic(self):
        a = [p.tolist() for p in permutation_stream(42, 5, 3)]
        b = [p.tolist() for p in permutation_stream(42, 5, 3)]
        assert a == b

    def test_distinct_streams(self):
        a = [p.tolist() for p in permutation_stream(1, 8, 10)]
        b = [p.tolist() for p in permutation_stream(2, 8, 10)]
        assert a != b


class TestDistSf:
    def test_chi_squared_at_zero(self):
        assert dist_sf("chi_squared", 0.0, 5) == 1.0

    def test_student_t_at_zero(self):
        assert dist_sf("student_t", 0.0, 7) == 0.5

    def test_chi_squared_df1_against_normal_cdf(self):
        # chi2 sf(x, 1) = 2*(1 - Phi(sqrt(x)))
        x = 1.5868
        oracle = math.erfc(math.sqrt(x) / math.sqrt(2.0))
        assert dist_sf("chi_squared", x, 1) == pytest.approx(oracle, abs=1e-12)
        assert dist_sf("chi_squared", x, 1) == pytest.approx(0.2077, abs=2e-4)

    def test_against_mpmath_oracle(self):
        import mpmath

        mpmath.mp.dps = 30
        cases = [("chi_squared", 3.7, (4,)), ("chi_squared", 12.1, (2,)),
                 ("chi_squared", 0.3, (9,))]
        for kind, x, params in cases:
            df = params[0]
            oracle = float(mpmath.gammainc(df / 2, x / 2, mpmath.inf,
                                           regularized=True))
            assert abs(dist_sf(kind, x, *params) - oracle) <= 1e-10

    def test_f_and_t_against_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = float(rng.uniform(-4, 8))
            d1, d2 = rng.integers(1, 40, size=2)
            assert abs(dist_sf("f", x, d1, d2)
                       - stats.f.sf(x, d1, d2)) <= 1e-10
            assert abs(dist_sf("student_t", x, d1)
                       - stats.t.sf(x, d1)) <= 1e-10

    def test_invalid_params(self):
        with pytest.raises(InvalidParamsError):
            dist_sf("chi_squared", 1.0, 0)
        with pytest.raises(InvalidParamsError):
            dist_sf("gaussian", 1.0, 1)


class TestShapiroWilk:
    def test_too_small(self):
        with pytest.raises(SampleTooSmallError):
            shapiro_wilk([1.0, 2.0])

    def test_too_large(self):
        with pytest.raises(SampleTooLargeError):
            shapiro_wilk(np.arange(5001, dtype=float))

    def test_zero_range(self):
        with pytest.raises(ZeroRangeError):
            shapiro_wilk([3.0, 3.0, 3.0, 3.0])

    def test_ideal_normal_scores(self):
        n = 50
        x = stats.norm.ppf((np.arange(1, n + 1) - 0.375) / (n + 0.25))
        w, p = shapiro_wilk(x)
        assert w > 0.99
        assert p > 0.5

    def test_outlier_vector_rejects(self):
        w, p = shapiro_wilk([1.0, 1.0, 1.0, 1.0, 10.0])
        assert p < 0.05

    def test_matches_scipy_reference(self):
        rng = np.random.default_rng(5)
        vectors = [
            rng.normal(size=10), rng.normal(size=30), rng.normal(size=100),
            rng.exponential(size=30), rng.standard_t(df=2, size=100),
            np.arange(1.0, 13.0) ** 3,
        ]
        for x in vectors:
            w, p = shapiro_wilk(x)
            ref = stats.shapiro(x)
            assert w == pytest.approx(ref.statistic, abs=1e-3)
            assert p == pytest.approx(ref.pvalue, rel=0.10, abs=1e-12)

    def test_n3_exact_branch(self):
        w, p = shapiro_wilk([1.0, 2.0, 4.0])
        ref = stats.shapiro([1.0, 2.0, 4.0])
        assert w == pytest.approx(ref.statistic, abs=1e-6)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)


class TestBartlett:
    def test_equal_variances_give_zero(self):
        g1 = [0.0, 1.0, 2.0, 3.0]
        g2 = [10.0, 11.0, 12.0, 13.0]
        k2, df, p = bartlett_test([g1, g2])
        assert k2 == pytest.approx(0.0, abs=1e-12)
        assert df == 1
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_worked_example(self):
        g1 = np.array([0.0, 1.0, 2.0, -1.0, -2.0]) * math.sqrt(1 / 2.5)
        g2 = np.array([0.0, 2.0, 4.0, -2.0, -4.0]) * math.sqrt(4 / 10.0)
        assert np.var(g1, ddof=1) == pytest.approx(1.0)
        assert np.var(g2, ddof=1) == pytest.approx(4.0)
        k2, df, p = bartlett_test([g1, g2])
        assert k2 == pytest.approx(1.5868, abs=1e-3)
        assert df == 1
        assert p == pytest.approx(0.2077, abs=1e-3)

    def test_single_group(self):
        with pytest.raises(SingleGroupError):
            bartlett_test([[1.0, 2.0, 3.0]])

    def test_zero_variance_group(self):
        with pytest.raises(ZeroVarianceError):
            bartlett_test([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])

    def test_against_closed_form_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = int(rng.integers(2, 6))
            groups = [rng.normal(scale=rng.uniform(0.5, 3), size=rng.integers(3, 20))
                      for _ in range(a)]
            k2, df, p = bartlett_test(groups)
            # independent hand computation of the closed form
            sizes = [len(g) for g in groups]
            variances = [float(np.var(g, ddof=1)) for g in groups]
            n_total = sum(sizes)
            pooled = sum((m - 1) * v for m, v in zip(sizes, variances)) / (n_total - a)
            num = (n_total - a) * math.log(pooled) - sum(
                (m - 1) * math.log(v) for m, v in zip(sizes, variances))
            corr = 1 + (sum(1 / (m - 1) for m in sizes) - 1 / (n_total - a)) / (3 * (a - 1))
            assert k2 == pytest.approx(num / corr, rel=1e-10)
            assert df == a - 1
            ref_k2, ref_p = stats.bartlett(*groups)
            assert k2 == pytest.approx(ref_k2, rel=1e-9)
            assert p == pytest.approx(ref_p, rel=1e-7, abs=1e-12)


def _anova_f_oracle(groups):
    """Classical one-way ANOVA F, computed the long way."""
    all_vals = np.concatenate(groups)
    grand = all_vals.mean()
    a = len(groups)
    n = all_vals.size
    ssb = sum(len(g) * (np.mean(g) - grand) ** 2 for g in groups)
    ssw = sum(float(np.sum((np.asarray(g) - np.mean(g)) ** 2)) for g in groups)
    return (ssb / (a - 1)) / (ssw / (n - a))


class TestPermanova:
    def test_hand_instance_partition(self):
        X = np.array([[1.0], [2.0], [3.0], [7.0], [8.0], [9.0]])
        res = permanova(distance_matrix(X), ["a"] * 3 + ["b"] * 3,
                        permutations=99, seed=0)
        assert res.ss_total == pytest.approx(58.0, abs=1e-12)
        assert res.ss_among == pytest.approx(54.0, abs=1e-12)
        assert res.ss_within == pytest.approx(4.0, abs=1e-12)
        assert res.df_among == 1
        assert res.df_within == 4
        assert res.pseudo_f == pytest.approx(54.0, abs=1e-12)

    def test_hand_instance_permutation_p(self):
        # exhaustive oracle: of the C(6,3) = 20 balanced assignments,
        # exactly 2 reach F >= 54, so the exact p is 0.1
        X = np.array([[1.0], [2.0], [3.0], [7.0], [8.0], [9.0]])
        values = X[:, 0]
        count = 0
        for combo in itertools.combinations(range(6), 3):
            g1 = values[list(combo)]
            g2 = values[[i for i in range(6) if i not in combo]]
            if _anova_f_oracle([g1, g2]) >= 54.0 - 1e-9:
                count += 1
        assert count == 2
        D = distance_matrix(X)
        for seed in range(20):
            res = permanova(D, ["a"] * 3 + ["b"] * 3, permutations=999, seed=seed)
            assert 0.07 <= res.test.p_value <= 0.13

    def test_equals_classical_anova(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a = int(rng.integers(2, 6))
            groups = [rng.normal(loc=rng.uniform(-2, 2), size=rng.integers(4, 41))
                      for _ in range(a)]
            labels = np.concatenate([[i] * len(g) for i, g in enumerate(groups)])
            X = np.concatenate(groups).reshape(-1, 1)
            res = permanova(distance_matrix(X), labels.tolist(),
                            permutations=1, seed=0)
            assert res.pseudo_f == pytest.approx(_anova_f_oracle(groups), rel=1e-10)

    def test_p_value_bounds_and_determinism(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(12, 2))
        labels = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
        res1 = permanova(distance_matrix(X), labels, permutations=49, seed=7)
        res2 = permanova(distance_matrix(X), labels, permutations=49, seed=7)
        assert res1.test.p_value == res2.test.p_value
        assert 1 / 50 <= res1.test.p_value <= 1.0
        assert res1.test.p_value == (1 + res1.test.exceedances) / 50

    def test_workers_bit_identical(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(20, 3))
        labels = [i % 4 for i in range(20)]
        D = distance_matrix(X)
        res1 = permanova(D, labels, permutations=199, seed=5, n_workers=1)
        res8 = permanova(D, labels, permutations=199, seed=5, n_workers=8)
        assert res1.test.exceedances == res8.test.exceedances
        assert res1.test.p_value == res8.test.p_value

    def test_decomposition_every_call(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(6, 25))
            X = rng.normal(size=(n, 3))
            labels = rng.integers(0, 3, size=n)
            while len(set(labels.tolist())) < 2:
                labels = rng.integers(0, 3, size=n)
            res = permanova(distance_matrix(X), labels.tolist(),
                            permutations=1, seed=0)
            assert res.ss_among + res.ss_within == pytest.approx(
                res.ss_total, rel=1e-9)

    def test_zero_total_variation(self):
        with pytest.raises(ZeroTotalVariationError):
            permanova(distance_matrix(np.ones((6, 2))), [0, 0, 0, 1, 1, 1],
                      permutations=9, seed=0)

    def test_single_group(self):
        rng = np.random.default_rng(6)
        with pytest.raises(SingleGroupError):
            permanova(distance_matrix(rng.normal(size=(5, 2))), [1] * 5,
                      permutations=9, seed=0)


def _mirror_groups():
    """Two groups that are exact mirror images about a shared centroid."""
    a = np.array([[1.0, 0.5], [-1.0, 0.2], [2.0, -1.0], [-2.0, 0.3]])
    return np.vstack([a, -a]), [0, 0, 0, 0, 1, 1, 1, 1]


def _radius_groups(rng, n_per=10):
    """Group 0 on a radius-1 circle, group 1 on a radius-5 circle."""
    angles0 = rng.uniform(0, 2 * np.pi, n_per)
    angles1 = rng.uniform(0, 2 * np.pi, n_per)
    X = np.vstack([
        np.column_stack([np.cos(angles0), np.sin(angles0)]),
        5.0 * np.column_stack([np.cos(angles1), np.sin(angles1)]),
    ])
    return X, [0] * n_per + [1] * n_per


class TestPermdisp:
    def test_mirrored_groups_not_significant(self):
        X, labels = _mirror_groups()
        res = permdisp(distance_matrix(X), labels, permutations=999, seed=3)
        # mirror symmetry makes the two groups' centroid distances equal
        assert res.anova_f == pytest.approx(0.0, abs=1e-12)
        assert res.test.p_value > 0.9
        assert res.group_mean_distances[0] == pytest.approx(
            res.group_mean_distances[1], rel=1e-12)

    def test_radius_contrast_detected(self):
        rng = np.random.default_rng(7)
        X, labels = _radius_groups(rng)
        res = permdisp(distance_matrix(X), labels, permutations=999, seed=4)
        assert res.test.p_value <= 0.01
        # oracle check of the observed F from explicit geometry
        z0 = np.linalg.norm(X[:10] - X[:10].mean(axis=0), axis=1)
        z1 = np.linalg.norm(X[10:] - X[10:].mean(axis=0), axis=1)
        assert res.anova_f == pytest.approx(_anova_f_oracle([z0, z1]), rel=1e-8)

    def test_euclidean_never_clamps(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(16, 3))
        labels = [i % 2 for i in range(16)]
        res = permdisp(distance_matrix(X), labels, permutations=49, seed=0)
        assert res.clamped_count == 0

    def test_scale_invariance_bit_equal_p(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(18, 3))
        labels = [i % 3 for i in range(18)]
        res1 = permdisp(distance_matrix(X), labels, permutations=199, seed=11)
        res2 = permdisp(distance_matrix(3.7 * X), labels, permutations=199, seed=11)
        assert res1.test.exceedances == res2.test.exceedances
        assert res1.test.p_value == res2.test.p_value
        assert res1.anova_f == pytest.approx(res2.anova_f, rel=1e-9)

    def test_parametric_p_present(self):
        rng = np.random.default_rng(10)
        X, labels = _radius_groups(rng)
        res = permdisp(distance_matrix(X), labels, permutations=99, seed=0)
        assert res.test.parametric_p is not None
        assert 0.0 <= res.test.parametric_p <= 1.0

    def test_group_size_precondition(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(5, 2))
        with pytest.raises(DataError):
            permdisp(distance_matrix(X), [0, 0, 0, 0, 1], permutations=9, seed=0)

    def test_zero_residual(self):
        # two tight pairs, each coincident: all centroid distances zero
        X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
        with pytest.raises(ZeroResidualError):
            permdisp(distance_matrix(X), [0, 0, 1, 1], permutations=9, seed=0)

    def test_workers_bit_identical(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(20, 3))
        labels = [i % 2 for i in range(20)]
        D = distance_matrix(X)
        r1 = permdisp(D, labels, permutations=199, seed=5, n_workers=1,
                      pairwise=False)
        r8 = permdisp(D, labels, permutations=199, seed=5, n_workers=8,
                      pairwise=False)
        assert r1.test.exceedances == r8.test.exceedances


class TestPairwiseTable:
    def test_mirrored_pair_not_significant(self):
        X, labels = _mirror_groups()
        res = permdisp(distance_matrix(X), labels, permutations=999, seed=1)
        assert res.pairwise[1, 0] > 0.5  # observed (lower triangle)
        assert res.pairwise[0, 1] > 0.5  # permuted (upper triangle)

    def test_radius_pair_significant(self):
        rng = np.random.default_rng(13)
        X, labels = _radius_groups(rng)
        res = permdisp(distance_matrix(X), labels, permutations=999, seed=2)
        assert res.pairwise[1, 0] <= 0.01
        assert res.pairwise[0, 1] <= 0.01

    def test_two_group_table_shape(self):
        X, labels = _mirror_groups()
        res = permdisp(distance_matrix(X), labels, permutations=99, seed=0)
        table = res.pairwise
        assert table.shape == (2, 2)
        assert math.isnan(table[0, 0]) and math.isnan(table[1, 1])
        assert 0.0 < table[0, 1] <= 1.0
        assert 0.0 < table[1, 0] <= 1.0

    def test_pair_streams_keyed_per_pair(self):
        rng = np.random.default_rng(14)
        z = rng.normal(size=18) ** 2
        g = GroupLabels.from_labels([0] * 6 + [1] * 6 + [2] * 6)
        t1 = pairwise_dispersion_table(z, g, permutations=99, seed=5)
        t2 = pairwise_dispersion_table(z, g, permutations=99, seed=5)
        assert np.array_equal(t1, t2, equal_nan=True)
        t3 = pairwise_dispersion_table(z, g, permutations=99, seed=6)
        assert not np.array_equal(t1, t3, equal_nan=True)


class TestNullCalibration:
    def test_permanova_null_rate(self):
        # smaller version of the acceptance check: i.i.d. data with
        # arbitrary labels should reject at roughly the nominal rate
        hits = 0
        trials = 120
        for sim in range(trials):
            rng = np.random.default_rng(20_000 + sim)
            X = rng.normal(size=(24, 2))
            labels = [0] * 12 + [1] * 12
            res = permanova(distance_matrix(X), labels, permutations=99,
                            seed=30_000 + sim)
            hits += res.test.p_value <= 0.05
        assert 0.01 <= hits / trials <= 0.12

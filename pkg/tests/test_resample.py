"""Tests for the bootstrap resamplers and the replicate engine.

The engine parity tests re-derive every replicate with an independent dense
implementation (same random streams, statistics computed through the explicit
matrix formulas) and demand agreement, which pins the vectorised kernel path
to the reference arithmetic for all three methods and both statistics.
"""

from __future__ import annotations

import numpy as np
import pytest

from hetmats import linalg as la
from hetmats.model import EstimatorSet, GroupedSample, estimate
from hetmats.resample import (
    CHUNK,
    BootstrapConfig,
    BootstrapResult,
    _resample_group,
    bootstrap_aggregate,
    bootstrap_test,
    nonparametric_resample,
    parametric_resample,
    replicate_quantile,
    wild_resample,
)
from hetmats.stats import limit_weights, mats, one_way_hypothesis, sample_limit, wts


def est_from_parts(means, covs, n) -> EstimatorSet:
    means = [np.asarray(m, dtype=np.float64) for m in means]
    covs = [np.asarray(c, dtype=np.float64) for c in covs]
    total = int(sum(n))
    sigma = la.direct_sum([(total / n_i) * c for n_i, c in zip(n, covs)])
    return EstimatorSet(
        mean_vector=np.concatenate(means),
        group_covs=tuple(covs),
        sigma_hat=sigma,
        d_hat=np.diag(np.diag(sigma)),
        n=tuple(int(v) for v in n),
        N=total,
    )


def compound_symmetry(d: int, rho: float = 0.5) -> np.ndarray:
    v = np.full((d, d), rho)
    np.fill_diagonal(v, 1.0)
    return v


def normal_dataset(rng: np.random.Generator, sizes, cov) -> GroupedSample:
    root = la.psd_sqrt(np.asarray(cov, dtype=np.float64))
    return GroupedSample([rng.standard_normal((n_i, root.shape[0])) @ root for n_i in sizes])


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())


def reference_replicates(sample: GroupedSample, hyp, config: BootstrapConfig, statistic: str) -> np.ndarray:
    """Dense re-derivation of the engine's replicates from the same streams."""
    est = estimate(sample)
    family = {"parametric": 1, "wild": 2, "nonparametric": 3}[config.method]
    roots = [la.psd_sqrt(v) for v in est.group_covs]
    residuals = [g - g.mean(axis=0) for g in sample.groups]
    stat_fn = mats if statistic == "mats" else wts
    out = []
    for chunk_index, start in enumerate(range(0, config.B, CHUNK)):
        r = min(CHUNK, config.B - start)
        seq = np.random.SeedSequence(config.seed, spawn_key=(family, chunk_index))
        rng = np.random.Generator(np.random.Philox(seq))
        per_group = []
        for i, g in enumerate(sample.groups):
            n_i = g.shape[0]
            if config.method == "parametric":
                draws = rng.standard_normal((r, n_i, est.d)) @ roots[i]
            elif config.method == "wild":
                w = rng.standard_normal((r, n_i))
                draws = w[:, :, None] * residuals[i][None, :, :]
            else:
                idx = rng.integers(0, n_i, size=(r, n_i))
                draws = g[idx]
            per_group.append(draws)
        for b in range(r):
            groups_b = [draws[b] for draws in per_group]
            means = [gb.mean(axis=0) for gb in groups_b]
            covs = []
            for gb in groups_b:
                centered = gb - gb.mean(axis=0)
                covs.append(centered.T @ centered / (gb.shape[0] - 1))
            mean_vec = np.concatenate(means)
            if config.method == "nonparametric":
                mean_vec = mean_vec - est.mean_vector
            sigma = la.direct_sum([(est.N / n_i) * c for n_i, c in zip(est.n, covs)])
            est_b = EstimatorSet(
                mean_vector=mean_vec,
                group_covs=tuple(covs),
                sigma_hat=sigma,
                d_hat=np.diag(np.diag(sigma)),
                n=est.n,
                N=est.N,
            )
            out.append(stat_fn(est_b, hyp))
    return np.asarray(out)


class TestBootstrapConfig:
    def test_rejects_unknown_method(self):
        with pytest.raises(ValueError, match="method must be one of"):
            BootstrapConfig(method="jackknife", seed=1)

    def test_rejects_nonpositive_b(self):
        with pytest.raises(ValueError, match="B must be"):
            BootstrapConfig(method="wild", B=0, seed=1)

    def test_rejects_unknown_weight_law(self):
        with pytest.raises(ValueError, match="wild_weights"):
            BootstrapConfig(method="wild", wild_weights="poisson", seed=1)


class TestParametricResample:
    def test_zero_covariance_gives_zero_draws(self):
        est = est_from_parts([np.zeros(2)] * 2, [np.zeros((2, 2))] * 2, (4, 4))
        rng = np.random.default_rng(3)
        boot = parametric_resample(est, (4, 4), rng)
        for g in boot.groups:
            np.testing.assert_array_equal(g, np.zeros((4, 2)))

    def test_identity_covariance_moments(self):
        est = est_from_parts([np.zeros(3)] * 2, [np.eye(3)] * 2, (10, 10))
        rng = np.random.default_rng(5)
        boot = parametric_resample(est, (100_000, 2), rng)
        draws = boot.groups[0]
        emp = draws.T @ draws / draws.shape[0]
        np.testing.assert_allclose(emp, np.eye(3), atol=0.02)

    def test_singular_covariance_draws_stay_in_range(self):
        v1 = np.array(
            [
                [1.0, 0.5, 1.0, 1.0],
                [0.5, 1.0, 0.5, 0.5],
                [1.0, 0.5, 1.0, 1.0],
                [1.0, 0.5, 1.0, 1.0],
            ]
        )
        est = est_from_parts([np.zeros(4)] * 2, [v1, v1], (10, 10))
        rng = np.random.default_rng(7)
        boot = parametric_resample(est, (5000, 2), rng)
        # Both kernel vectors of v1 sum their support components to zero.
        for kernel_vec in (np.array([1.0, 0.0, -1.0, 0.0]), np.array([1.0, 0.0, 0.0, -1.0])):
            coords = boot.groups[0] @ kernel_vec
            assert float(np.var(coords)) < 1e-20

    def test_size_mismatch(self):
        est = est_from_parts([np.zeros(2)] * 2, [np.eye(2)] * 2, (5, 5))
        with pytest.raises(ValueError, match="sample sizes"):
            parametric_resample(est, (5,), np.random.default_rng(1))


class TestWildResample:
    def test_unit_weights_reproduce_centered_data(self):
        rng = np.random.default_rng(11)
        sample = GroupedSample([rng.normal(size=(6, 2)), rng.normal(size=(5, 2))])
        config = BootstrapConfig(method="wild", seed=1)
        boot = wild_resample(sample, config, rng, weight_draw=lambda _rng, n: np.ones(n))
        for g, b in zip(sample.groups, boot.groups):
            np.testing.assert_allclose(b, g - g.mean(axis=0), atol=1e-15)

    def test_rademacher_rows_are_signed_residuals(self):
        rng = np.random.default_rng(13)
        sample = GroupedSample([rng.normal(size=(8, 3))])
        config = BootstrapConfig(method="wild", wild_weights="rademacher", seed=1)
        boot = wild_resample(sample, config, rng)
        residuals = sample.groups[0] - sample.groups[0].mean(axis=0)
        for row, res in zip(boot.groups[0], residuals):
            assert np.allclose(row, res, atol=1e-12) or np.allclose(row, -res, atol=1e-12)

    def test_second_moment_matches_residuals(self):
        # For a fixed 2-point group the average of the squared bootstrap
        # entries estimates the squared residuals (Var(W) = 1).
        sample = GroupedSample([np.array([[1.0, -2.0], [3.0, 4.0]])])
        config = BootstrapConfig(method="wild", seed=1)
        rng = np.random.default_rng(17)
        reps = 20_000
        acc = np.zeros((2, 2))
        for _ in range(reps):
            acc += np.square(wild_resample(sample, config, rng).groups[0])
        residuals_sq = np.square(sample.groups[0] - sample.groups[0].mean(axis=0))
        np.testing.assert_allclose(acc / reps, residuals_sq, rtol=4.0 * np.sqrt(2.0 / reps))

    def test_bootstrap_group_means_center_at_zero(self):
        rng = np.random.default_rng(19)
        sample = GroupedSample([rng.normal(size=(6, 2))])
        config = BootstrapConfig(method="wild", seed=1)
        reps = 10_000
        acc = np.zeros(2)
        for _ in range(reps):
            acc += wild_resample(sample, config, rng).groups[0].mean(axis=0)
        residuals = sample.groups[0] - sample.groups[0].mean(axis=0)
        se = np.sqrt(np.square(residuals).sum(axis=0)) / sample.groups[0].shape[0] / np.sqrt(reps)
        assert np.all(np.abs(acc / reps) <= 4.0 * se)


class TestNonparametricResample:
    def test_rows_come_from_the_same_group(self):
        rng = np.random.default_rng(23)
        sample = GroupedSample([rng.normal(size=(7, 3)), rng.normal(size=(5, 3))])
        boot = nonparametric_resample(sample, rng)
        for original, resampled in zip(sample.groups, boot.groups):
            assert resampled.shape == original.shape
            matches = (resampled[:, None, :] == original[None, :, :]).all(axis=2)
            assert matches.any(axis=1).all()

    def test_single_row_is_duplicated(self):
        row = np.array([[1.5, -0.5]])
        out = _resample_group(row, 2, np.random.default_rng(1))
        np.testing.assert_array_equal(out, np.repeat(row, 2, axis=0))

    def test_selection_is_uniform(self):
        rows = np.arange(5, dtype=np.float64)[:, None] * np.ones((1, 2))
        sample = GroupedSample([rows])
        rng = np.random.default_rng(29)
        reps = 20_000
        counts = np.zeros(5)
        for _ in range(reps):
            drawn = nonparametric_resample(sample, rng).groups[0][:, 0]
            counts += np.bincount(drawn.astype(int), minlength=5)
        freq = counts / (reps * 5)
        np.testing.assert_allclose(freq, 0.2, atol=0.01)


class TestBootstrapTest:
    def test_identical_means_give_pvalue_one(self):
        rng = np.random.default_rng(31)
        base = rng.normal(size=(8, 2))
        sample = GroupedSample([base, base.copy()])
        config = BootstrapConfig(method="parametric", B=200, seed=42)
        result = bootstrap_test(sample, one_way_hypothesis(2, 2), config)
        assert result.observed == pytest.approx(0.0, abs=1e-20)
        assert result.pvalue >= 0.99

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(37)
        sample = normal_dataset(rng, (10, 12), compound_symmetry(3))
        hyp = one_way_hypothesis(2, 3)
        config = BootstrapConfig(method="nonparametric", B=300, seed=7)
        first = bootstrap_test(sample, hyp, config)
        second = bootstrap_test(sample, hyp, config)
        np.testing.assert_array_equal(first.replicates, second.replicates)
        assert first.pvalue == second.pvalue
        assert first.quantile_95 == second.quantile_95
        other = bootstrap_test(sample, hyp, BootstrapConfig(method="nonparametric", B=300, seed=8))
        assert not np.array_equal(first.replicates, other.replicates)

    @pytest.mark.parametrize("method", ["parametric", "wild", "nonparametric"])
    @pytest.mark.parametrize("a", [2, 3])
    def test_mats_replicates_match_dense_reference(self, method, a):
        rng = np.random.default_rng(41 + a)
        sample = normal_dataset(rng, (7, 9, 8)[:a], compound_symmetry(3, 0.4))
        hyp = one_way_hypothesis(a, 3)
        config = BootstrapConfig(method=method, B=40, seed=11)
        result = bootstrap_test(sample, hyp, config)
        expected = reference_replicates(sample, hyp, config, "mats")
        np.testing.assert_allclose(result.replicates, expected, rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("a", [2, 3])
    def test_wts_replicates_match_dense_reference(self, a):
        rng = np.random.default_rng(51 + a)
        sample = normal_dataset(rng, (8, 10, 9)[:a], compound_symmetry(3, 0.3))
        hyp = one_way_hypothesis(a, 3)
        config = BootstrapConfig(method="parametric", B=40, seed=13)
        result = bootstrap_test(sample, hyp, config, statistic="wts")
        expected = reference_replicates(sample, hyp, config, "wts")
        np.testing.assert_allclose(result.replicates, expected, rtol=1e-8, atol=1e-10)

    def test_counts_degenerate_replicates(self):
        # Two-row groups resampled with replacement collapse to a single
        # distinct row half of the time, which zeroes the group variances.
        sample = GroupedSample([np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[2.0, 0.5], [0.0, 1.5]])])
        config = BootstrapConfig(method="nonparametric", B=64, seed=3)
        result = bootstrap_test(sample, one_way_hypothesis(2, 2), config)
        assert result.n_degenerate_replicates > 0
        assert result.n_degenerate_replicates <= config.B
        assert np.all(np.isfinite(result.replicates))

    def test_rejects_unknown_statistic(self):
        sample = GroupedSample([np.eye(3), np.eye(3) * 2.0])
        config = BootstrapConfig(method="wild", B=10, seed=1)
        with pytest.raises(ValueError, match="statistic must be"):
            bootstrap_test(sample, one_way_hypothesis(2, 3), config, statistic="ats")

    @pytest.mark.parametrize("method", ["parametric", "wild", "nonparametric"])
    def test_replicates_approximate_the_plugin_limit(self, method):
        # For a large null dataset the replicate distribution must be close
        # to the plug-in weighted chi-square limit (Kolmogorov distance).
        rng = np.random.Generator(np.random.Philox(123))
        sample = normal_dataset(rng, (1000, 1000), compound_symmetry(4))
        hyp = one_way_hypothesis(2, 4)
        config = BootstrapConfig(method=method, B=2000, seed=99)
        result = bootstrap_test(sample, hyp, config)
        limit = sample_limit(limit_weights(estimate(sample), hyp), 20_000, seed=7)
        assert ks_distance(result.replicates, limit) < 0.05


class TestBootstrapAggregate:
    def test_single_contrast_observed_matches_mats(self):
        rng = np.random.default_rng(61)
        sample = normal_dataset(rng, (9, 11), compound_symmetry(2, 0.3))
        h = np.array([[1.0, 0.0, -1.0, 0.0]])
        config = BootstrapConfig(method="parametric", B=50, seed=5)
        agg = bootstrap_aggregate(sample, h, config)
        from hetmats.stats import HypothesisSpec

        quad = mats(estimate(sample), HypothesisSpec.from_contrast(h))
        assert agg.observed == pytest.approx(quad, rel=1e-10)

    def test_sum_is_sum_of_single_contrast_statistics(self):
        rng = np.random.default_rng(67)
        sample = normal_dataset(rng, (8, 10), compound_symmetry(2, 0.4))
        h = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
        config = BootstrapConfig(method="parametric", B=30, seed=9)
        total = bootstrap_aggregate(sample, h, config, kind="sum")
        parts = [bootstrap_aggregate(sample, h[i : i + 1], config) for i in range(2)]
        assert total.observed == pytest.approx(sum(p.observed for p in parts), rel=1e-10)
        # Same streams, so the replicate sums decompose identically.
        np.testing.assert_allclose(
            total.replicates,
            parts[0].replicates + parts[1].replicates,
            rtol=1e-10,
        )

    def test_max_bounded_by_sum(self):
        rng = np.random.default_rng(71)
        sample = normal_dataset(rng, (10, 10), compound_symmetry(3, 0.2))
        h = np.array(
            [
                [1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
                [0.0, 0.0, 1.0, 0.0, 0.0, -1.0],
            ]
        )
        config = BootstrapConfig(method="wild", B=60, seed=2)
        s = bootstrap_aggregate(sample, h, config, kind="sum")
        m = bootstrap_aggregate(sample, h, config, kind="max")
        assert m.observed <= s.observed + 1e-12
        assert np.all(m.replicates <= s.replicates + 1e-12)

    def test_rejects_bad_inputs(self):
        sample = GroupedSample([np.eye(2), 2.0 * np.eye(2)])
        config = BootstrapConfig(method="wild", B=10, seed=1)
        with pytest.raises(ValueError, match="kind must be"):
            bootstrap_aggregate(sample, np.array([[1.0, 0.0, -1.0, 0.0]]), config, kind="median")
        with pytest.raises(ValueError, match="columns"):
            bootstrap_aggregate(sample, np.array([[1.0, -1.0]]), config)
        with pytest.raises(ValueError, match="not a contrast"):
            bootstrap_aggregate(sample, np.array([[1.0, 1.0, 1.0, 1.0]]), config)
        with pytest.raises(ValueError, match="non-zero"):
            bootstrap_aggregate(sample, np.array([[0.0, 0.0, 0.0, 0.0]]), config)


class TestReplicateQuantile:
    def test_order_statistic_convention(self):
        values = np.arange(1.0, 11.0)
        assert replicate_quantile(values, 0.90) == 9.0
        assert replicate_quantile(values, 0.95) == 10.0
        assert replicate_quantile(values, 0.50) == 5.0
        assert replicate_quantile(values, 0.05) == 1.0

    def test_rejects_bad_level(self):
        with pytest.raises(ValueError, match="level"):
            replicate_quantile(np.ones(5), 1.0)
        with pytest.raises(ValueError, match="level"):
            replicate_quantile(np.ones(5), 0.0)

    def test_quantile_test_equals_pvalue_test(self):
        # p <= alpha must coincide with observed > c_{1-alpha}, including at
        # ties between the observed value and replicates.
        rng = np.random.default_rng(73)
        cases = [
            (np.arange(1.0, 11.0), 5.0),
            (np.array([1.0, 2.0, 2.0, 2.0, 3.0, 7.0, 7.0, 9.0]), 2.0),
            (rng.exponential(size=173), 1.0),
            (np.full(10, 4.2), 4.2),
        ]
        for replicates, observed in cases:
            b = replicates.size
            pvalue = np.count_nonzero(replicates >= observed) / b
            for alpha in np.linspace(0.01, 0.99, 57):
                critical = replicate_quantile(replicates, 1.0 - alpha)
                assert (pvalue <= alpha) == (observed > critical)

"""Nested-ANOVA fit: effects, variance components, intervals, QQ data."""

import numpy as np
import pytest
from scipy import stats

from pickerbench import statframe, synth
from pickerbench.design import DesignSpec, MetricTable
from pickerbench.statframe import (FitError, cell_mean_ci, fit, functional_fit,
                                   qq_data, variance_components)

SMALL = DesignSpec(n_models=2, quantity_levels=(1, 3), n_cluster_sets=4, n_inits=3)


def random_table(design=SMALL, seed=0):
    rng = np.random.default_rng(seed)
    return MetricTable("x", design, rng.random(design.shape))


class TestFit:
    def test_constant_table(self):
        table = MetricTable("x", SMALL, np.full(SMALL.shape, 0.7))
        r = fit(table)
        assert r.grand_mean == pytest.approx(0.7)
        assert np.allclose(r.model_effects, 0)
        assert np.allclose(r.quantity_effects, 0)
        assert np.allclose(r.interactions, 0)
        for row in r.cells:
            for c in row:
                assert c.var_train.estimate == pytest.approx(0.0)
                assert c.var_data.estimate == pytest.approx(0.0)
                assert c.ci_low == pytest.approx(c.ci_high)

    def test_decomposition_identity(self):
        for seed in range(20):
            r = fit(random_table(seed=seed))
            recon = (r.grand_mean + r.model_effects[:, None]
                     + r.quantity_effects[None, :] + r.interactions)
            assert np.abs(recon - r.cell_means).max() < 1e-12

    def test_sum_to_zero_constraints(self):
        r = fit(random_table(seed=3))
        assert abs(r.model_effects.sum()) < 1e-12
        assert abs(r.quantity_effects.sum()) < 1e-12
        assert np.abs(r.interactions.sum(axis=0)).max() < 1e-12
        assert np.abs(r.interactions.sum(axis=1)).max() < 1e-12

    def test_residual_identities(self):
        r = fit(random_table(seed=4))
        # training residuals sum to zero within each (m, a, d)
        assert np.abs(r.residuals_train.sum(axis=3)).max() < 1e-12
        # data residuals sum to zero within each (m, a)
        assert np.abs(r.residuals_data.sum(axis=2)).max() < 1e-12

    def test_incomplete_cell_rejected(self):
        table = random_table(seed=5)
        table.missing_mask[0, 0, 0, 0] = True
        with pytest.raises(FitError):
            fit(table)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        table = random_table(seed=6)
        perm_d = rng.permutation(SMALL.n_cluster_sets)
        perm_i = rng.permutation(SMALL.n_inits)
        shuffled = MetricTable("x", SMALL, table.values[:, :, perm_d][:, :, :, perm_i])
        a, b = fit(table), fit(shuffled)
        assert np.allclose(a.cell_means, b.cell_means)
        assert np.allclose(a.model_effects, b.model_effects)
        for ra, rb in zip(a.cells, b.cells):
            for ca, cb in zip(ra, rb):
                assert ca.var_train.estimate == pytest.approx(cb.var_train.estimate)
                assert ca.var_data.estimate == pytest.approx(cb.var_data.estimate)

    def test_estimator_recovery_monte_carlo(self):
        # oracle: forward-simulate the generating model and average estimates
        design = DesignSpec(n_models=2, quantity_levels=(1, 3), n_cluster_sets=12,
                            n_inits=4)
        gamma, mu = 0.8, np.array([0.02, -0.02])
        alpha = np.array([-0.05, 0.05])
        var_data, var_train = 4e-4, 1e-4
        sums = {"gamma": 0.0, "mu": np.zeros(2), "alpha": np.zeros(2),
                "vt": 0.0, "vd": 0.0}
        n_reps = 300
        for rep in range(n_reps):
            table = synth.gen_metrics(design, gamma, mu, alpha, None, var_data,
                                      var_train, seed=rep)
            r = fit(table)
            sums["gamma"] += r.grand_mean
            sums["mu"] += r.model_effects
            sums["alpha"] += r.quantity_effects
            sums["vt"] += r.cells[0][0].var_train.estimate
            sums["vd"] += r.cells[0][0].var_data.estimate
        assert sums["gamma"] / n_reps == pytest.approx(gamma, rel=0.01)
        assert np.allclose(sums["mu"] / n_reps, mu, atol=0.01 * 0.02 * 10)
        assert np.allclose(sums["alpha"] / n_reps, alpha, atol=0.01 * 0.05 * 10)
        assert sums["vt"] / n_reps == pytest.approx(var_train, rel=0.1)
        assert sums["vd"] / n_reps == pytest.approx(var_data, rel=0.1)


class TestVarianceComponents:
    def test_no_training_variance(self):
        # identical replicates within each set; set means vary
        cell = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0],
                         [4.0, 4.0, 4.0], [5.0, 5.0, 5.0]])
        train, data = variance_components(cell)
        assert train.estimate == pytest.approx(0.0)
        assert data.estimate == pytest.approx(np.var(cell.mean(axis=1), ddof=1))
        assert not data.negative

    def test_hand_computed_negative_case(self):
        # MSwithin = 4 / (2*(2-1)) = 2, MSbetween = 0,
        # so the data component is (0 - 2) / 2 = -1, flagged negative
        cell = np.array([[1.0, -1.0], [1.0, -1.0]])
        train, data = variance_components(cell)
        assert train.estimate == pytest.approx(2.0)
        assert data.estimate == pytest.approx(-1.0)
        assert data.negative
        assert data.ci_low < -1.0 < data.ci_high

    def test_train_invariant_to_per_set_shift(self):
        rng = np.random.default_rng(8)
        cell = rng.normal(size=(5, 4))
        shifted = cell + rng.normal(size=(5, 1))
        t1, _ = variance_components(cell)
        t2, _ = variance_components(shifted)
        assert t1.estimate == pytest.approx(t2.estimate)

    def test_data_invariant_to_global_shift(self):
        rng = np.random.default_rng(9)
        cell = rng.normal(size=(5, 4))
        _, d1 = variance_components(cell)
        _, d2 = variance_components(cell + 17.5)
        assert d1.estimate == pytest.approx(d2.estimate)

    def test_composition_identity(self):
        # total sum of squares splits exactly into the two mean-square parts
        rng = np.random.default_rng(10)
        for _ in range(30):
            n_sets, n_inits = rng.integers(2, 8), rng.integers(2, 8)
            cell = rng.normal(size=(n_sets, n_inits))
            ms_w, ms_b, _, _ = statframe._mean_squares(cell)
            total = ((cell - cell.mean()) ** 2).sum()
            recon = (n_sets - 1) * ms_b + n_sets * (n_inits - 1) * ms_w
            assert total == pytest.approx(recon, abs=1e-10 * max(1.0, total))

    def test_degenerate_dims_rejected(self):
        with pytest.raises(FitError):
            variance_components(np.zeros((1, 4)))
        with pytest.raises(FitError):
            variance_components(np.zeros((4, 1)))

    def test_estimator_means_and_train_ci_coverage(self):
        var_data, var_train = 4e-4, 1e-4
        n_sets, n_inits = 12, 4
        rng = np.random.default_rng(11)
        n_reps = 2000
        vt, vd, covered = [], [], 0
        for _ in range(n_reps):
            cell = (rng.normal(0, np.sqrt(var_data), size=(n_sets, 1))
                    + rng.normal(0, np.sqrt(var_train), size=(n_sets, n_inits)))
            train, data = variance_components(cell)
            vt.append(train.estimate)
            vd.append(data.estimate)
            if train.ci_low <= var_train <= train.ci_high:
                covered += 1
        assert np.mean(vt) == pytest.approx(var_train, rel=0.05)
        assert np.mean(vd) == pytest.approx(var_data, rel=0.05)
        assert 0.88 <= covered / n_reps <= 0.92


class TestCellMeanCI:
    def test_zero_variance_zero_width(self):
        lo, hi = cell_mean_ci(np.full((4, 3), 2.5))
        assert lo == hi == pytest.approx(2.5)

    def test_midpoint_is_mean(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            cell = rng.normal(size=(6, 4))
            lo, hi = cell_mean_ci(cell)
            assert 0.5 * (lo + hi) == pytest.approx(cell.mean())

    def test_coverage(self):
        true_mean, var_data, var_train = 0.8, 4e-4, 1e-4
        n_sets, n_inits = 12, 4
        rng = np.random.default_rng(13)
        n_reps = 5000
        covered = 0
        for _ in range(n_reps):
            cell = (true_mean
                    + rng.normal(0, np.sqrt(var_data), size=(n_sets, 1))
                    + rng.normal(0, np.sqrt(var_train), size=(n_sets, n_inits)))
            lo, hi = cell_mean_ci(cell)
            if lo <= true_mean <= hi:
                covered += 1
        assert 0.88 <= covered / n_reps <= 0.92


class TestFunctionalFit:
    def test_constant_grid(self):
        table = random_table(seed=14)
        results = functional_fit([table, table, table])
        for r in results:
            assert np.allclose(r.cell_means, results[0].cell_means)

    def test_single_point_reduces_to_fit(self):
        table = random_table(seed=15)
        (r,) = functional_fit([table])
        direct = fit(table)
        assert np.allclose(r.cell_means, direct.cell_means)
        assert r.grand_mean == pytest.approx(direct.grand_mean)

    def test_matches_loop_oracle_and_skips_masked(self):
        tables = [random_table(seed=s) for s in range(5)]
        tables[2].missing_mask[0, 0, 0, 0] = True
        results = functional_fit(tables)
        assert results[2] is None
        for j in (0, 1, 3, 4):
            assert np.allclose(results[j].cell_means, fit(tables[j]).cell_means)


class TestQQ:
    def test_exact_gaussian_quantiles_on_line(self):
        n, sigma = 200, 0.3
        q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        residuals = sigma * q
        pairs = qq_data(residuals)
        assert np.abs(pairs[:, 0] - pairs[:, 1]).max() < 1e-9

    def test_simulated_gaussian_correlation(self):
        rng = np.random.default_rng(16)
        pairs = qq_data(rng.normal(0, 0.05, size=10_000))
        assert np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1] > 0.999

    def test_sorted_in_both_coordinates(self):
        rng = np.random.default_rng(17)
        pairs = qq_data(rng.normal(size=100))
        assert (np.diff(pairs[:, 0]) >= 0).all()
        assert (np.diff(pairs[:, 1]) >= 0).all()

    def test_too_few_residuals(self):
        with pytest.raises(FitError):
            qq_data([0.1, 0.2])

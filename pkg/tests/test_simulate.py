import numpy as np
import pytest
from scipy.stats import chisquare, poisson

import intervalhawkes as ih
from intervalhawkes.errors import GridHorizonMismatch, InvalidInput, UnstableExplosion


class TestAggregationGrid:
    def test_regular(self):
        grid = ih.AggregationGrid.regular(200.0, 0.5)
        assert grid.n_intervals == 400
        assert grid.boundaries[-1] == 200.0

    def test_regular_requires_divisibility(self):
        with pytest.raises(InvalidInput):
            ih.AggregationGrid.regular(10.0, 0.3)

    def test_must_start_at_zero(self):
        with pytest.raises(InvalidInput):
            ih.AggregationGrid(boundaries=[1.0, 2.0])


class TestAggregate:
    def test_empty_path(self):
        path = ih.EventSequence(times=[], types=[], horizon=2.0)
        counts = ih.aggregate(path, ih.AggregationGrid.regular(2.0, 1.0), n_types=2)
        assert counts.counts.sum() == 0
        assert counts.counts.shape == (2, 2)

    def test_direct_counting(self):
        path = ih.EventSequence(times=[0.4, 0.6, 1.2], types=[1, 2, 1], horizon=2.0)
        counts = ih.aggregate(path, ih.AggregationGrid.regular(2.0, 1.0), n_types=2)
        np.testing.assert_array_equal(counts.counts, [[1, 1], [1, 0]])

    def test_boundary_event_belongs_to_closing_interval(self):
        path = ih.EventSequence(times=[1.0, 1.5], types=[1, 1], horizon=2.0)
        counts = ih.aggregate(path, ih.AggregationGrid.regular(2.0, 1.0), n_types=1)
        np.testing.assert_array_equal(counts.counts, [[1], [1]])

    def test_conservation(self, recovery_model):
        spec, theta = recovery_model
        path = ih.simulate_path(theta, spec, 30.0, seed=2)
        counts = ih.aggregate(path, ih.AggregationGrid.regular(30.0, 0.5), n_types=2)
        np.testing.assert_array_equal(counts.totals_by_type(), path.counts_by_type(2))

    def test_horizon_mismatch(self):
        path = ih.EventSequence(times=[0.5], types=[1], horizon=2.0)
        with pytest.raises(GridHorizonMismatch):
            ih.aggregate(path, ih.AggregationGrid.regular(3.0, 1.0))


class TestSimulatePath:
    def test_deterministic_given_seed(self, recovery_model):
        spec, theta = recovery_model
        a = ih.simulate_path(theta, spec, 25.0, seed=11)
        b = ih.simulate_path(theta, spec, 25.0, seed=11)
        assert np.array_equal(a.times, b.times) and np.array_equal(a.types, b.types)
        c = ih.simulate_path(theta, spec, 25.0, seed=12)
        assert not np.array_equal(a.times, c.times)

    def test_poisson_special_case_gof(self):
        # eta = 0: counts over (0, T] are Poisson(sum(nu) * T); chi-square GOF
        spec, theta = ih.exponential_model([0.7, 0.3], np.zeros((2, 2)), np.ones((2, 2)))
        grid = ih.AggregationGrid(boundaries=[0.0, 3.0])
        counts = ih.simulate_counts(theta, spec, grid, 10_000, seed=42)
        totals = counts.sum(axis=(1, 2))
        mean = 1.0 * 3.0
        edges = list(range(0, 9))
        observed = np.array([(totals == k).sum() for k in edges] + [(totals >= 9).sum()])
        probs = np.array([poisson.pmf(k, mean) for k in edges] + [1 - poisson.cdf(8, mean)])
        stat = chisquare(observed, probs * totals.size)
        assert stat.pvalue > 0.01

    def test_mean_event_count_near_two_thousand(self, recovery_model):
        # the recovery configuration was calibrated to average ~2000 events at T=200
        spec, theta = recovery_model
        grid = ih.AggregationGrid(boundaries=[0.0, 200.0])
        counts = ih.simulate_counts(theta, spec, grid, 200, seed=5)
        mean_total = counts.sum(axis=(1, 2)).mean()
        assert abs(mean_total - 2000.0) <= 0.05 * 2000.0

    def test_empirical_rates_match_stationary_solution(self, recovery_model):
        spec, theta = recovery_model
        target = ih.stationary_mean_rates(theta)  # (5.6, 4.8)
        grid = ih.AggregationGrid(boundaries=[0.0, 100.0])
        counts = ih.simulate_counts(theta, spec, grid, 150, seed=77)
        rates = counts[:, 0, :] / 100.0
        mean = rates.mean(axis=0)
        sem = rates.std(axis=0, ddof=1) / np.sqrt(rates.shape[0])
        # burn-in from the empty origin biases low, so allow 3 SE + small slack
        assert np.all(np.abs(mean - target) <= 3 * sem + 0.12)

    def test_explosion_cap(self):
        spec, theta = ih.exponential_model([5.0], [[1.6]], [[0.2]])
        with pytest.raises(UnstableExplosion):
            ih.simulate_path(theta, spec, 500.0, seed=0, max_events=200)

    def test_gamma_shape_below_one_rejected(self):
        spec, theta = ih.gamma_model([1.0], [[0.4]], [[0.5]], [[1.0]])
        with pytest.raises(InvalidInput):
            ih.simulate_path(theta, spec, 5.0, seed=0)

    def test_spline_baseline_path(self):
        spec = ih.ModelSpec(
            baselines=(ih.SplineBaseline(knots=(5.0,), horizon=10.0),),
            kernels=(("exponential",),),
        )
        theta = ih.ParameterVector(nu=((0.5, 2.0, 0.5),), eta=((0.3,),),
                                   kernel_params=(((1.0,),),))
        path = ih.simulate_path(theta, spec, 10.0, seed=3)
        assert path.n_events > 0
        assert path.times[-1] <= 10.0


class TestSimulateCounts:
    def test_deterministic(self, verification_gamma_model):
        spec, theta = verification_gamma_model
        grid = ih.AggregationGrid(boundaries=[0.0, 1.0, 2.0])
        a = ih.simulate_counts(theta, spec, grid, 500, seed=9)
        b = ih.simulate_counts(theta, spec, grid, 500, seed=9)
        assert np.array_equal(a, b)

    def test_batch_agrees_with_per_path_simulator(self, recovery_model):
        # compiled batch loop vs the pure-python thinning: equal means
        spec, theta = recovery_model
        grid = ih.AggregationGrid(boundaries=[0.0, 20.0])
        batch = ih.simulate_counts(theta, spec, grid, 4000, seed=21).sum(axis=(1, 2))
        py = np.array([
            ih.simulate_path(theta, spec, 20.0, ih.replicate_rng(22, i)).n_events
            for i in range(250)
        ])
        se = np.sqrt(batch.var(ddof=1) / batch.size + py.var(ddof=1) / py.size)
        assert abs(batch.mean() - py.mean()) <= 4 * se

    def test_gamma_batch_agrees_with_cluster_construction(self,
                                                          verification_gamma_model):
        # independent oracle: exact branching (cluster) representation
        spec, theta = verification_gamma_model
        grid = ih.AggregationGrid(boundaries=[0.0, 1.0, 2.0])
        batch = ih.simulate_counts(theta, spec, grid, 60_000, seed=31)
        p_batch = np.mean(np.all(batch == 1, axis=(1, 2)))

        rng = np.random.default_rng(99)
        nu = np.array([1.0, 1.0])
        eta = np.array([[0.6, 0.4], [0.4, 0.6]])
        kap = np.array([[2.0, 3.0], [3.0, 2.0]])
        dlt = np.array([[1.0, 2.0], [2.0, 1.0]])
        hits = 0
        n_cluster = 60_000
        for _ in range(n_cluster):
            frontier = []
            for m in range(2):
                for t in rng.uniform(0, 2.0, rng.poisson(nu[m] * 2.0)):
                    frontier.append((t, m))
            counts = np.zeros((2, 2), dtype=int)
            while frontier:
                t, j = frontier.pop()
                counts[0 if t <= 1.0 else 1, j] += 1
                for m in range(2):
                    for d in rng.gamma(kap[m, j], dlt[m, j], rng.poisson(eta[m, j])):
                        if t + d <= 2.0:
                            frontier.append((t + d, m))
            hits += int(np.all(counts == 1))
        p_cluster = hits / n_cluster
        se = np.sqrt(p_batch * (1 - p_batch) / batch.shape[0]
                     + p_cluster * (1 - p_cluster) / n_cluster)
        assert abs(p_batch - p_cluster) <= 4 * se

    def test_spline_fallback(self):
        spec = ih.ModelSpec(
            baselines=(ih.SplineBaseline(knots=(2.0,), horizon=4.0),),
            kernels=(("exponential",),),
        )
        theta = ih.ParameterVector(nu=((1.0, 2.0, 1.0),), eta=((0.2,),),
                                   kernel_params=(((0.5,),),))
        grid = ih.AggregationGrid.regular(4.0, 1.0)
        counts = ih.simulate_counts(theta, spec, grid, 40, seed=1)
        assert counts.shape == (40, 4, 1)
        again = ih.simulate_counts(theta, spec, grid, 40, seed=1)
        assert np.array_equal(counts, again)


class TestReplicateStreams:
    def test_replicates_are_independent_streams(self, recovery_model):
        spec, theta = recovery_model
        paths = ih.simulate_paths(theta, spec, 10.0, 3, seed=8)
        assert len({p.n_events for p in paths}) > 1 or not np.array_equal(
            paths[0].times, paths[1].times)
        again = ih.simulate_paths(theta, spec, 10.0, 3, seed=8)
        for a, b in zip(paths, again):
            assert np.array_equal(a.times, b.times)

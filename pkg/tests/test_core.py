#!/usr/bin/env python3
"""
Tests for time grids, random streams, estimators and policies
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import numpy as np
import pytest

from models.time_grid import make_time_grid
from models.policy import Policy, StepState
from models.estimate import Estimate
from utils.random_streams import RandomStreams, gaussian_increments
from utils.statistics import Statistics, mean_and_stderr
from exceptions.riskflow_exceptions import InvalidArgumentError


class TestTimeGrid:
    """Test cases for make_time_grid"""

    def test_last_node_is_horizon(self):
        """Last node equals T exactly"""
        for horizon, n_steps in [(1.0, 3), (0.7, 7), (3.7, 999), (50.0, 600)]:
            grid = make_time_grid(horizon, n_steps)
            assert grid.nodes[-1] == horizon
            assert grid.nodes.size == n_steps + 1
            assert grid.nodes[0] == 0.0

    def test_single_step(self):
        """N = 1 gives the nodes 0 and T"""
        grid = make_time_grid(2.0, 1)
        assert grid.nodes.tolist() == [0.0, 2.0]
        assert grid.dt == 2.0

    def test_invalid_arguments(self):
        """Non-positive horizon or step count is rejected"""
        with pytest.raises(InvalidArgumentError):
            make_time_grid(0.0, 10)
        with pytest.raises(InvalidArgumentError):
            make_time_grid(1.0, 0)
        with pytest.raises(InvalidArgumentError):
            make_time_grid(-1.0, 10)

    def test_node_index(self):
        grid = make_time_grid(1.0, 4)
        assert grid.node_index(0.5) == 2
        assert grid.node_index(1.0) == 4


class TestRandomStreams:
    """Test cases for the counter-based Gaussian streams"""

    def test_path_stream_is_reproducible(self):
        """Same (seed, path) gives the same increments"""
        a = gaussian_increments(7, 3, 16, 2, 0.01)
        b = gaussian_increments(7, 3, 16, 2, 0.01)
        assert np.array_equal(a, b)
        assert a.shape == (16, 2)

    def test_paths_differ(self):
        a = gaussian_increments(7, 3, 16, 1, 0.01)
        b = gaussian_increments(7, 4, 16, 1, 0.01)
        assert not np.array_equal(a, b)

    def test_thread_independence(self):
        """Ensembles do not depend on the worker count"""
        single = RandomStreams.ensemble_increments(11, 2500, 8, 2, 0.125, max_workers=1)
        pooled = RandomStreams.ensemble_increments(11, 2500, 8, 2, 0.125, max_workers=4)
        assert np.array_equal(single, pooled)

    def test_ensemble_rows_match_path_streams(self):
        """Row p of an ensemble is the stream of path p"""
        ensemble = RandomStreams.ensemble_increments(5, 1500, 4, 1, 0.25, max_workers=2)
        assert np.array_equal(ensemble[1234], gaussian_increments(5, 1234, 4, 1, 0.25))

    def test_moments(self):
        """Increments are N(0, dt)"""
        dt = 0.04
        draws = RandomStreams.ensemble_increments(3, 2000, 50, 1, dt).ravel()
        mean = Statistics.mean_and_stderr(draws)
        variance = Statistics.sample_variance(draws)
        assert mean.within(0.0)
        assert variance.within(dt)

    def test_streams_are_independent(self):
        """Auxiliary stream tags give other draws for the same path"""
        base = RandomStreams.gaussian_increments(1, 0, 8, 1, 1.0, stream=0)
        other = RandomStreams.gaussian_increments(1, 0, 8, 1, 1.0, stream=1)
        assert not np.array_equal(base, other)

    def test_worker_cap_from_environment(self, monkeypatch):
        monkeypatch.setenv('RISKFLOW_THREADS', '2')
        assert RandomStreams.worker_count(8) == 2
        monkeypatch.setenv('RISKFLOW_THREADS', 'many')
        assert RandomStreams.worker_count(3) == 3


class TestStatistics:
    """Test cases for the Monte Carlo estimators"""

    def test_mean_and_stderr(self):
        estimate = mean_and_stderr([1.0, 2.0, 3.0, 4.0])
        assert estimate.mean == pytest.approx(2.5)
        assert estimate.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)
        assert estimate.n == 4

    def test_needs_two_samples(self):
        """n < 2 is rejected"""
        with pytest.raises(InvalidArgumentError):
            mean_and_stderr([1.0])

    def test_sample_covariance_of_itself_is_variance(self):
        x = np.random.default_rng(0).normal(size=500)
        assert Statistics.sample_covariance(x, x).mean == pytest.approx(Statistics.sample_variance(x).mean)

    def test_combined_stderr(self):
        a = Estimate(1.0, 3.0, 10)
        b = Estimate(1.0, 4.0, 10)
        assert a.combined_stderr(b) == pytest.approx(5.0)


class TestPolicy:
    """Test cases for Policy kinds"""

    def test_constant_table(self):
        policy = Policy.constant([1.0, 2.0])
        table = policy.table(3, 4)
        assert table.shape == (3, 4, 2)
        assert np.all(table[:, :, 1] == 2.0)

    def test_deterministic_step_mismatch(self):
        """Deterministic tables must match the grid"""
        policy = Policy.deterministic(np.ones(5))
        with pytest.raises(InvalidArgumentError):
            policy.table(2, 4)

    def test_feedback_needs_wealth(self):
        """Feedback policies are resolved step by step"""
        policy = Policy.feedback(lambda state: state.wealth[:, None], 1)
        with pytest.raises(InvalidArgumentError):
            policy.table(2, 2)
        state = StepState(k=0, t=0.0, values=np.ones((2, 1)), wealth=np.array([1.0, 2.0]))
        assert policy.shares_at(state)[:, 0].tolist() == [1.0, 2.0]

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidArgumentError):
            Policy.constant([np.nan])

    def test_scaled(self):
        policy = Policy.deterministic([[1.0], [2.0]]).scaled(3.0)
        assert policy.data[:, 0].tolist() == [3.0, 6.0]


if __name__ == "__main__":
    pytest.main([__file__])

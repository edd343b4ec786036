#!/usr/bin/env python3
"""
Tests for continuous-time inverse risk budgeting
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import math

import numpy as np
import pytest

from adapters.sabr_model import SabrModel
from models.budget import BudgetProcess, InformationClass
from models.market_params import GbmParams, SabrParams
from models.policy import Policy
from models.strategy import VolManagedSpec
from models.time_grid import make_time_grid
from services.budgeting_service import BudgetingService, SolverOptions, EmbeddingOptions
from services.contribution_service import ContributionService
from services.market_service import MarketService
from services.vol_managed_service import VolManagedService
from exceptions.riskflow_exceptions import (
    ConvergenceError, DegenerateMarketError, InvalidArgumentError
)


DRIFTLESS = GbmParams(s0=[1.0], drift=[0.0], diffusion=[[0.2]])
TWO_ASSETS = GbmParams(s0=[1.0, 1.0], drift=[0.06, 0.04], diffusion=[[0.2, 0.0], [0.05, 0.15]])


@pytest.fixture
def service():
    return BudgetingService(ContributionService())


@pytest.fixture(scope='module')
def driftless_ensemble():
    return MarketService(max_workers=2).simulate_gbm(DRIFTLESS, make_time_grid(1.0, 16), 5000, seed=31)


@pytest.fixture(scope='module')
def two_asset_ensemble():
    return MarketService(max_workers=2).simulate_gbm(TWO_ASSETS, make_time_grid(1.0, 16), 4000, seed=37)


class TestPointwise:
    """Zero-drift solves at every (path, step)"""

    def test_one_asset_closed_form(self, service, driftless_ensemble):
        """u = sqrt(beta) / (sigma S)"""
        budget = BudgetProcess.constant([0.04])
        solution = service.solve_budget_pointwise(DRIFTLESS, driftless_ensemble, budget)
        expected = 0.2 / (0.2 * driftless_ensemble.left_values[:, :, 0])
        assert np.allclose(solution.policy.data[:, :, 0], expected, rtol=1e-12)
        assert solution.converged
        assert solution.residual_max <= 1e-10

    def test_vol_managed_recovery(self, service):
        """The budget (c_hat F / sigma)^2 returns u = c_hat / sigma^2"""
        params = SabrParams(f0=1.0, s=0.2, alpha=0.5, beta_exp=1.0)
        ensemble = MarketService().simulate_sabr(params, make_time_grid(1.0, 16), 2000, seed=3)
        spec = VolManagedSpec(c_hat=0.01)
        budget = VolManagedService().vol_managed_budget(spec, ensemble)
        solution = service.solve_budget_pointwise(SabrModel(params), ensemble, budget)
        expected = spec.c_hat / ensemble.volatility[:, :-1] ** 2
        assert np.max(np.abs(solution.policy.data[:, :, 0] / expected - 1.0)) <= 1e-2

    def test_multi_asset_residual(self, service):
        params = TWO_ASSETS.with_drift([0.0, 0.0])
        ensemble = MarketService().simulate_gbm(params, make_time_grid(1.0, 8), 500, seed=5)
        budget = BudgetProcess.constant([0.03, 0.01])
        solution = service.solve_budget_pointwise(params, ensemble, budget)
        risk = solution.contribution.risk
        assert np.max(np.abs(risk - np.array([0.03, 0.01]))) <= 1e-10
        assert np.all(solution.policy.data > 0)

    def test_drift_rejected(self, service, two_asset_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.solve_budget_pointwise(TWO_ASSETS, two_asset_ensemble, BudgetProcess.constant([0.01, 0.01]))

    def test_singular_covariance(self, service):
        """Two assets on one driver have a singular local covariance"""
        params = GbmParams(s0=[1.0, 1.0], drift=[0.0, 0.0], diffusion=[[0.2], [0.3]])
        ensemble = MarketService().simulate_gbm(params, make_time_grid(1.0, 4), 100, seed=2)
        with pytest.raises(DegenerateMarketError):
            service.solve_budget_pointwise(params, ensemble, BudgetProcess.constant([0.01, 0.01]))

    def test_absorbed_sabr_paths(self, service):
        """Shares are zero once the forward hits 0; live points still solve exactly"""
        params = SabrParams(f0=0.05, s=0.6, alpha=0.3, beta_exp=0.5)
        ensemble = MarketService(max_workers=2).simulate_sabr(params, make_time_grid(1.0, 16), 2000, seed=3)
        assert ensemble.absorbed_fraction > 0
        solution = service.solve_budget_pointwise(params, ensemble, BudgetProcess.constant([0.04]))
        shares = solution.policy.data[:, :, 0]
        dead = ensemble.left_values[:, :, 0] <= 0.0
        assert dead.any() and (~dead).any()
        assert np.all(shares[dead] == 0.0)
        assert solution.converged
        assert solution.residual_max <= 1e-10
        assert np.isfinite(solution.objective)
        live_variance = SabrModel(params).local_variance(ensemble)[~dead]
        assert np.allclose(shares[~dead], 0.2 / np.sqrt(live_variance), rtol=1e-12)

    def test_cap_reported(self, service, driftless_ensemble):
        solution = service.solve_budget_pointwise(DRIFTLESS, driftless_ensemble, BudgetProcess.constant([0.04]),
                                                  u_max=1.0)
        assert solution.cap_hit_fraction > 0
        assert np.max(solution.policy.data) <= 1.0


class TestIterative:
    """Class-restricted Newton-Krylov solves"""

    def test_constant_class_analytic(self, service):
        """One number u with u^2 E int sigma^2 S^2 dt = lambda"""
        ensemble = MarketService().simulate_gbm(DRIFTLESS, make_time_grid(1.0, 64), 10000, seed=41)
        solution = service.solve_budget_iterative(DRIFTLESS, ensemble, BudgetProcess.constant([0.04]),
                                                  InformationClass('constant'))
        analytic = math.sqrt(0.04 / math.expm1(0.04))
        assert solution.cell_values.shape == (1, 1)
        assert abs(solution.cell_values[0, 0] / analytic - 1.0) <= 1e-2
        assert solution.policy.kind == 'constant'
        assert solution.converged

    def test_deterministic_class_with_drift(self, service, two_asset_ensemble):
        budget = BudgetProcess.constant([0.02, 0.01])
        info = InformationClass('deterministic')
        solution = service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, budget, info)
        assert solution.converged
        assert solution.policy.kind == 'deterministic'
        assert np.all(solution.cell_values > 0)
        residual_max, _ = service.budget_residual(solution.contribution, budget, info, two_asset_ensemble)
        assert residual_max <= 1e-8 * 0.02 * (1.0 + 1e-6)

    def test_feedback_class(self, service, two_asset_ensemble):
        budget = BudgetProcess.constant([0.02, 0.01])
        solution = service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, budget,
                                                  InformationClass('feedback', n_bins=4))
        assert solution.converged
        assert solution.policy.kind == 'raw'
        # every path starts at s0, so step 0 is one cell
        assert solution.cell_values.shape == (1 + 15 * 4, 2)

    def test_uniqueness_across_starts(self, service, two_asset_ensemble):
        """Different starting points reach the same policy"""
        budget = BudgetProcess.constant([0.02, 0.01])
        info = InformationClass('deterministic')
        scaled = service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, budget, info)
        uniform = service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, budget, info,
                                                 SolverOptions(start='uniform'))
        far = service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, budget, info,
                                             SolverOptions(start=np.array([3.0, 0.05])))
        for other in (uniform, far):
            assert np.allclose(other.cell_values, scaled.cell_values, rtol=1e-6)

    def test_iteration_cap(self, service, two_asset_ensemble):
        with pytest.raises(ConvergenceError) as info:
            service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, BudgetProcess.constant([0.02, 0.01]),
                                           InformationClass('deterministic'), SolverOptions(max_iterations=0))
        assert info.value.last_iterate is not None
        assert info.value.residual > 0

    def test_bad_start(self, service, two_asset_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.solve_budget_iterative(TWO_ASSETS, two_asset_ensemble, BudgetProcess.constant([0.02, 0.01]),
                                           InformationClass('deterministic'), SolverOptions(start='random'))

    def test_degenerate_market(self, service):
        params = GbmParams(s0=[1.0], drift=[0.0], diffusion=[[0.0]])
        ensemble = MarketService().simulate_gbm(params, make_time_grid(1.0, 4), 200, seed=1)
        with pytest.raises(DegenerateMarketError):
            service.solve_budget_iterative(params, ensemble, BudgetProcess.constant([0.01]),
                                           InformationClass('deterministic'))


class TestProjection:
    """Budgets projected onto coarser information"""

    def test_coarse_solve_equals_projected_solve(self, service, driftless_ensemble):
        fine = BudgetProcess.raw(0.04 * driftless_ensemble.left_values[:, :, 0] ** 2)
        coarse = InformationClass('feedback', n_bins=4)
        direct = service.solve_budget_iterative(DRIFTLESS, driftless_ensemble, fine, coarse)
        projected = service.project_budget(fine, InformationClass('full'), coarse, driftless_ensemble)
        via_projection = service.solve_budget_iterative(DRIFTLESS, driftless_ensemble, projected, coarse)
        assert np.max(np.abs(direct.cell_values / via_projection.cell_values - 1.0)) <= 1e-8

    def test_projection_to_finer_rejected(self, service, driftless_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.project_budget(BudgetProcess.constant([0.01]), InformationClass('constant'),
                                   InformationClass('deterministic'), driftless_ensemble)

    def test_nested_bins(self):
        assert InformationClass('feedback', n_bins=4).is_coarser_or_equal(InformationClass('feedback', n_bins=8))
        assert not InformationClass('feedback', n_bins=3).is_coarser_or_equal(InformationClass('feedback', n_bins=8))


class TestEmbedding:
    """Auxiliary problems with a linear term in M_T"""

    def test_fixed_point_matches_direct_solve(self, service):
        params = GbmParams(s0=[1.0], drift=[0.08], diffusion=[[0.2]])
        ensemble = MarketService().simulate_gbm(params, make_time_grid(1.0, 16), 4000, seed=43)
        budget = BudgetProcess.constant([0.04])
        info = InformationClass('deterministic')
        gamma, embedded = service.embedding_search(params, ensemble, budget, info)
        direct = service.solve_budget_iterative(params, ensemble, budget, info)
        gains = ContributionService().investment_value(direct.policy, ensemble).terminal_mean.mean
        assert gamma == pytest.approx(-2.0 * gains, rel=1e-4)
        assert np.allclose(embedded.cell_values, direct.cell_values, rtol=1e-4)
        assert embedded.gamma == gamma

    def test_bad_damping(self, service, driftless_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.embedding_search(DRIFTLESS, driftless_ensemble, BudgetProcess.constant([0.01]),
                                     embedding=EmbeddingOptions(damping=1.5))

    def test_zero_drift_fixed_point(self, service, driftless_ensemble):
        """Without drift the linear term does not move the policy"""
        gamma, solution = service.embedding_search(DRIFTLESS, driftless_ensemble, BudgetProcess.constant([0.01]))
        direct = service.solve_budget_iterative(DRIFTLESS, driftless_ensemble, BudgetProcess.constant([0.01]),
                                                InformationClass('deterministic'))
        assert np.allclose(solution.cell_values, direct.cell_values, rtol=1e-8)


class TestDiagnostics:
    """Objective and divergence"""

    def test_kl_zero_when_policy_equals_budget(self, service, driftless_ensemble):
        table = np.full((driftless_ensemble.n_paths, 16, 1), 0.3)
        assert service.kl_divergence(BudgetProcess.constant([0.3]), table, driftless_ensemble) == 0.0
        assert service.kl_divergence(BudgetProcess.constant([0.3]), table, driftless_ensemble,
                                     normalized=True) == 0.0

    def test_kl_positive_normalized(self, service, driftless_ensemble):
        table = np.full((driftless_ensemble.n_paths, 16, 1), 0.5)
        assert service.kl_divergence(BudgetProcess.constant([0.3]), table, driftless_ensemble,
                                     normalized=True) > 0

    def test_solution_minimizes_objective(self, service, driftless_ensemble):
        """The solver optimum beats nearby constant policies at variance weight 1/2"""
        budget = BudgetProcess.constant([0.04])
        solution = service.solve_budget_iterative(DRIFTLESS, driftless_ensemble, budget,
                                                  InformationClass('constant'))
        best = solution.objective
        u = float(solution.cell_values[0, 0])
        for factor in (0.9, 1.1):
            other = service.objective(Policy.constant([factor * u]), driftless_ensemble, budget, 0.5)
            assert other > best

    def test_log_objective_needs_positive_shares(self, service, driftless_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.objective(Policy.constant([-1.0]), driftless_ensemble, BudgetProcess.constant([0.01]))

    def test_auxiliary_objective_finite(self, service, driftless_ensemble):
        value = service.auxiliary_objective(Policy.constant([1.0]), 0.1, driftless_ensemble,
                                            BudgetProcess.constant([0.01]))
        assert np.isfinite(value)


if __name__ == "__main__":
    pytest.main([__file__])

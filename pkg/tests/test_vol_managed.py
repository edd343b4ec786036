#!/usr/bin/env python3
"""
Tests for the volatility-managed portfolio
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import numpy as np
import pytest

from adapters.sabr_model import SabrModel
from models.market_params import GbmParams, SabrParams
from models.strategy import VolManagedSpec
from models.time_grid import make_time_grid
from services.contribution_service import ContributionService
from services.market_service import MarketService
from services.vol_managed_service import VolManagedService, FactorMarketParams
from utils.statistics import Statistics
from exceptions.riskflow_exceptions import InvalidArgumentError


SABR = SabrParams(f0=1.0, s=0.2, alpha=0.5, beta_exp=1.0)
SPEC = VolManagedSpec(c_hat=0.01)


@pytest.fixture
def service():
    return VolManagedService(max_workers=2)


@pytest.fixture(scope='module')
def sabr_ensemble():
    return MarketService(max_workers=2).simulate_sabr(SABR, make_time_grid(1.0, 32), 2000, seed=19)


class TestVolManagedPolicy:
    """u = c_hat / sigma^2"""

    def test_policy_from_volatility_track(self, service, sabr_ensemble):
        policy = service.vol_managed_policy(SPEC, sabr_ensemble)
        assert policy.kind == 'raw'
        assert np.allclose(policy.data[:, :, 0], 0.01 / sabr_ensemble.volatility[:, :-1] ** 2)

    def test_explicit_sigma(self, service):
        ensemble = MarketService().simulate_gbm(GbmParams(s0=[1.0], drift=[0.0], diffusion=[[0.2]]),
                                                make_time_grid(1.0, 8), 50, seed=1)
        policy = service.vol_managed_policy(SPEC, ensemble, sigma=0.2)
        assert np.allclose(policy.data, 0.25)
        with pytest.raises(InvalidArgumentError):
            service.vol_managed_policy(SPEC, ensemble)

    def test_cap(self, service, sabr_ensemble):
        policy = service.vol_managed_policy(SPEC, sabr_ensemble, u_max=0.2)
        assert np.max(policy.data) <= 0.2

    def test_spec_validation(self):
        with pytest.raises(InvalidArgumentError):
            VolManagedSpec(c_hat=0.0)


class TestVolManagedBudget:
    """beta = (c_hat S / sigma)^2"""

    def test_budget_values(self, service, sabr_ensemble):
        beta = service.vol_managed_budget(SPEC, sabr_ensemble).evaluate(sabr_ensemble)[:, :, 0]
        expected = (0.01 * sabr_ensemble.left_values[:, :, 0] / sabr_ensemble.volatility[:, :-1]) ** 2
        assert np.allclose(beta, expected)

    def test_policy_carries_its_budget(self, service, sabr_ensemble):
        """u * c of the vol-managed policy is the vol-managed budget"""
        policy = service.vol_managed_policy(SPEC, sabr_ensemble)
        contribution = ContributionService().explicit_marginal_contribution(policy, sabr_ensemble, SabrModel(SABR))
        beta = service.vol_managed_budget(SPEC, sabr_ensemble).evaluate(sabr_ensemble)
        assert np.allclose(contribution.risk, beta, rtol=1e-10)

    def test_one_asset_only(self, service):
        params = GbmParams(s0=[1.0, 1.0], drift=[0.0, 0.0], diffusion=[[0.2, 0.0], [0.0, 0.3]])
        ensemble = MarketService().simulate_gbm(params, make_time_grid(1.0, 4), 20, seed=1)
        with pytest.raises(InvalidArgumentError):
            service.vol_managed_budget(SPEC, ensemble, sigma=0.2)


class TestDiscretePolicy:
    """Trailing realized-variance estimate of sigma"""

    def test_first_step_uses_initial_sigma(self, service, sabr_ensemble):
        policy = service.vol_managed_discrete_policy(SPEC, sabr_ensemble, window=8)
        assert np.allclose(policy.data[:, 0, 0], 0.01 / 0.2 ** 2)

    def test_recovers_constant_volatility(self, service):
        params = FactorMarketParams(s=0.2, alpha=0.0, dynamics='geometric')
        ensemble = service.simulate_factor_market(params, make_time_grid(1.0, 100), 2000, seed=7)
        policy = service.vol_managed_discrete_policy(SPEC, ensemble, window=50)
        assert np.median(policy.data[:, -1, 0]) == pytest.approx(0.01 / 0.2 ** 2, rel=0.1)

    def test_bad_window(self, service, sabr_ensemble):
        with pytest.raises(InvalidArgumentError):
            service.vol_managed_discrete_policy(SPEC, sabr_ensemble, window=0)


class TestFactorMarket:
    """Traded factor with stochastic volatility"""

    def test_parameter_validation(self):
        with pytest.raises(InvalidArgumentError):
            FactorMarketParams(dynamics='log')
        with pytest.raises(InvalidArgumentError):
            FactorMarketParams(sigma_lo=0.4, sigma_hi=0.1)
        with pytest.raises(InvalidArgumentError):
            FactorMarketParams(s=0.0)

    def test_arithmetic_terminal_variance(self, service):
        """Constant volatility and no drift: S_T - s0 ~ N(0, s^2 T)"""
        params = FactorMarketParams(s=0.2, alpha=0.0)
        ensemble = service.simulate_factor_market(params, make_time_grid(2.0, 16), 20000, seed=3)
        assert Statistics.sample_variance(ensemble.values[:, -1, 0]).within(0.08)
        assert ensemble.model_name == 'factor_arithmetic'

    def test_volatility_bounds(self, service):
        params = FactorMarketParams(s=0.2, alpha=1.0, sigma_lo=0.1, sigma_hi=0.3)
        ensemble = service.simulate_factor_market(params, make_time_grid(5.0, 60), 200, seed=4)
        assert ensemble.volatility.min() >= 0.1 and ensemble.volatility.max() <= 0.3

    def test_long_term_gap_shrinks(self, service):
        """X_t / t approaches the averaged theta-weighted budget"""
        params = FactorMarketParams(s=0.2, alpha=0.3, theta=0.4, sigma_lo=0.1, sigma_hi=0.4)
        spec = VolManagedSpec(c_hat=0.04)
        gaps = {}
        for horizon in (10, 50):
            ensemble = service.simulate_factor_market(params, make_time_grid(float(horizon), 12 * horizon),
                                                      500, seed=horizon)
            rows = service.vol_managed_long_term(spec, ensemble, theta=params.theta)
            assert [row['t'] for row in rows] == pytest.approx([horizon / 4, horizon / 2, horizon])
            gaps[horizon] = rows[-1]['mean_gap']
        assert gaps[50] < gaps[10]


if __name__ == "__main__":
    pytest.main([__file__])

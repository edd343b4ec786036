#!/usr/bin/env python3
"""
Tests for the information-restricted SABR policies
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import dataclasses

import numpy as np
import pytest

from models.market_params import SabrParams
from models.strategy import SabrPolicyCase, SABR_CASES
from models.time_grid import make_time_grid
from services.contribution_service import ContributionService
from services.market_service import MarketService
from services.sabr_strategy_service import SabrStrategyService
from exceptions.riskflow_exceptions import InvalidArgumentError


PARAMS = SabrParams(f0=1.0, s=0.3, alpha=0.6, beta_exp=0.7)
LEVEL = 0.04


@pytest.fixture(scope='module')
def service():
    return SabrStrategyService(ContributionService(), max_workers=2)


@pytest.fixture(scope='module')
def ensemble():
    return MarketService(max_workers=2).simulate_sabr(PARAMS, make_time_grid(1.0, 32), 3000, seed=11)


@pytest.fixture(scope='module')
def policies(service, ensemble):
    built = {case: service.sabr_policy(SabrPolicyCase(case, LEVEL), PARAMS, ensemble, n_replicas=16)
             for case in SABR_CASES}
    built['h_projection_normalized'] = service.sabr_policy(SabrPolicyCase('h_projection', LEVEL), PARAMS, ensemble,
                                                           n_replicas=16, normalize=True)
    return built


LEVEL_CASES = ('parity', 'h_projection_normalized', 'deterministic', 'single_period')


class TestSabrCases:
    """Parity, h-projection, deterministic and single-period policies"""

    @pytest.mark.parametrize('case', LEVEL_CASES)
    def test_terminal_variance_is_lambda(self, policies, ensemble, case):
        variance = ContributionService().terminal_variance(policies[case], ensemble)
        assert variance.within(LEVEL)

    def test_h_projection_follows_formula(self, service, policies, ensemble):
        """u = sqrt(lambda / T) / (s Fbar^beta) with no further scaling"""
        projected = service.projected_forward(PARAMS, ensemble, n_replicas=16)[:, :-1]
        usable = (ensemble.values[:, :-1, 0] > 0) & (projected > 0)
        expected = np.sqrt(LEVEL) / (PARAMS.s * np.power(np.where(usable, projected, 1.0), PARAMS.beta_exp))
        shares = policies['h_projection'].data[:, :, 0]
        assert np.allclose(shares[usable], expected[usable], rtol=1e-12)
        assert np.all(shares[~usable] == 0.0)

    def test_h_projection_risk_near_level(self, policies, ensemble):
        """Replacing sigma by s only approximates the target level"""
        variance = ContributionService().terminal_variance(policies['h_projection'], ensemble)
        assert abs(variance.mean - LEVEL) <= 0.3 * LEVEL

    def test_normalized_h_projection_is_rescaled_formula(self, policies):
        raw = policies['h_projection'].data
        normalized = policies['h_projection_normalized'].data
        live = raw > 0
        ratio = normalized[live] / raw[live]
        assert np.allclose(ratio, ratio[0], rtol=1e-12)
        assert policies['h_projection_normalized'].name == 'h_projection_normalized'

    def test_parity_risk_is_flat(self, service, policies, ensemble):
        """u * c = lambda / T wherever the forward is alive"""
        contribution = service.sabr_marginal(policies['parity'], ensemble, PARAMS)
        alive = ensemble.values[:, :-1, 0] > 0
        assert np.max(np.abs(contribution.risk[:, :, 0] - LEVEL)[alive]) <= 1e-10

    def test_dispersion_grows_as_information_shrinks(self, service, policies, ensemble):
        """Compared at a common risk level"""
        dispersions = [service.contribution_dispersion(service.sabr_marginal(policies[case], ensemble, PARAMS))
                       for case in LEVEL_CASES]
        assert all(a < b for a, b in zip(dispersions, dispersions[1:]))

    def test_policy_kinds(self, policies):
        assert policies['parity'].kind == 'raw'
        assert policies['h_projection'].kind == 'raw'
        assert policies['deterministic'].kind == 'deterministic'
        assert policies['single_period'].kind == 'constant'

    def test_correlation_rejected(self, service, ensemble):
        correlated = SabrParams(f0=1.0, s=0.3, alpha=0.6, beta_exp=0.7, rho=-0.3)
        with pytest.raises(InvalidArgumentError):
            service.sabr_policy(SabrPolicyCase('parity', LEVEL), correlated, ensemble)

    def test_case_validation(self):
        with pytest.raises(InvalidArgumentError):
            SabrPolicyCase('momentum', LEVEL)
        with pytest.raises(InvalidArgumentError):
            SabrPolicyCase('parity', 0.0)


class TestProjectedForward:
    """E[F_t | B1 path]"""

    def test_bins_preserve_node_means(self, service, ensemble):
        projected = service.projected_forward(PARAMS, ensemble, method='bins', n_bins=16)
        assert projected.shape == (ensemble.n_paths, 33)
        assert np.allclose(projected.mean(axis=0), ensemble.values[:, :, 0].mean(axis=0))
        assert np.allclose(projected[:, 0], 1.0)

    def test_nested_replicas_keep_martingale_mean(self, service, ensemble):
        projected = service.projected_forward(PARAMS, ensemble, n_replicas=8)
        assert projected.shape == (ensemble.n_paths, 33)
        assert abs(projected[:, -1].mean() - 1.0) <= 3.0 * projected[:, -1].std(ddof=1) / np.sqrt(ensemble.n_paths)

    def test_nested_needs_seed(self, service, ensemble):
        unseeded = dataclasses.replace(ensemble, seed=None)
        with pytest.raises(InvalidArgumentError):
            service.projected_forward(PARAMS, unseeded)

    def test_unknown_method(self, service, ensemble):
        with pytest.raises(InvalidArgumentError):
            service.projected_forward(PARAMS, ensemble, method='kernel')

    def test_bins_variant_policy(self, service, ensemble):
        case = SabrPolicyCase('h_projection', LEVEL)
        policy = service.sabr_policy(case, PARAMS, ensemble, method='bins', n_bins=16)
        assert abs(ContributionService().terminal_variance(policy, ensemble).mean - LEVEL) <= 0.3 * LEVEL
        normalized = service.sabr_policy(case, PARAMS, ensemble, method='bins', n_bins=16, normalize=True)
        assert ContributionService().terminal_variance(normalized, ensemble).within(LEVEL)


if __name__ == "__main__":
    pytest.main([__file__])

#!/usr/bin/env python3
"""
Tests for single-period risk contributions and risk budgeting
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import numpy as np
import pytest

from models.market_params import SinglePeriodMarket
from services.single_period_service import SinglePeriodService
from exceptions.riskflow_exceptions import ValidationError, InvalidArgumentError


EXAMPLE_COVARIANCE = [[0.0900, 0.0480, 0.0225],
                      [0.0480, 0.0400, 0.0090],
                      [0.0225, 0.0090, 0.0225]]


@pytest.fixture
def service():
    return SinglePeriodService()


@pytest.fixture
def example_market():
    return SinglePeriodMarket(EXAMPLE_COVARIANCE)


class TestEulerAggregation:
    """Contributions add up to the risk measure"""

    def test_random_markets(self, service):
        rng = np.random.default_rng(42)
        for _ in range(50):
            d = int(rng.integers(1, 8))
            factor = rng.normal(size=(d, d))
            market = SinglePeriodMarket(factor @ factor.T + 0.1 * np.eye(d))
            w = rng.normal(size=d)
            assert service.euler_residual(market, w, 'std') <= 1e-10
            assert service.euler_residual(market, w, 'variance') <= 1e-10

    def test_std_at_zero_weights(self, service, example_market):
        """The std contribution is undefined for w = 0"""
        with pytest.raises(ZeroDivisionError):
            service.marginal_contribution_sp(example_market, np.zeros(3), 'std')

    def test_unknown_measure(self, service, example_market):
        with pytest.raises(InvalidArgumentError):
            service.marginal_contribution_sp(example_market, np.ones(3), 'cvar')


class TestMarketValidation:
    """SinglePeriodMarket rejects non-SPD input"""

    def test_not_symmetric(self):
        with pytest.raises(ValidationError):
            SinglePeriodMarket([[1.0, 0.5], [0.4, 1.0]])

    def test_not_positive_definite(self):
        with pytest.raises(ValidationError):
            SinglePeriodMarket([[1.0, 2.0], [2.0, 1.0]])

    def test_not_square(self):
        with pytest.raises(ValidationError):
            SinglePeriodMarket([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


class TestStrategies:
    """Equal weight, minimum variance and risk parity on the three-asset example"""

    def test_risk_parity_equalizes_contributions(self, service, example_market):
        rp = service.risk_parity_weights(example_market)
        contributions = service.risk_contribution_sp(example_market, rp.weights, 'std')
        assert np.max(contributions) - np.min(contributions) <= 1e-8 * np.mean(contributions)
        assert rp.weights.sum() == pytest.approx(1.0)
        assert np.all(rp.weights > 0)

    def test_min_variance_shorts_first_asset(self, service, example_market):
        mv = service.min_variance_weights(example_market)
        assert mv[0] < 0
        assert mv.sum() == pytest.approx(1.0)

    def test_risk_ordering(self, service, example_market):
        """sigma(mv) <= sigma(rp) <= sigma(ew)"""
        mv = service.min_variance_weights(example_market)
        rp = service.risk_parity_weights(example_market).weights
        ew = service.equal_weights(3)
        risks = [service.std_risk(example_market, w) for w in (mv, rp, ew)]
        assert risks[0] <= risks[1] <= risks[2]

    def test_identity_covariance(self, service):
        """With Lambda = I all three strategies coincide"""
        market = SinglePeriodMarket(np.eye(3))
        rows = service.strategy_table(market, ['ew', 'mv', 'rp'])
        for strategy in ('mv', 'rp'):
            weights = [row['weight'] for row in rows if row['strategy'] == strategy]
            assert np.allclose(weights, 1.0 / 3.0, atol=1e-10)

    def test_strategy_table_contributions_normalized(self, service, example_market):
        rows = service.strategy_table(example_market, ['ew', 'mv', 'rp'])
        for strategy in ('ew', 'mv', 'rp'):
            total = sum(row['contribution'] for row in rows if row['strategy'] == strategy)
            assert total == pytest.approx(1.0)

    def test_unknown_strategy(self, service, example_market):
        with pytest.raises(InvalidArgumentError):
            service.strategy_table(example_market, ['momentum'])


class TestRiskBudgeting:
    """Log-barrier risk budgeting"""

    def test_first_order_condition(self, service, example_market):
        budget = np.array([0.5, 0.3, 0.2])
        result = service.risk_budget_weights(example_market, budget)
        x = result.raw
        assert np.max(np.abs(x * (example_market.covariance @ x) - budget / 2)) <= 1e-10
        shares = result.weights * (example_market.covariance @ result.weights)
        assert np.allclose(shares / shares.sum(), budget, atol=1e-8)

    def test_heuristic_loss_vanishes_at_solution(self, service, example_market):
        budget = np.array([0.2, 0.2, 0.6])
        w = service.risk_budget_weights(example_market, budget).weights
        assert service.heuristic_loss(example_market, w, budget) <= 1e-12

    def test_rejects_non_positive_budget(self, service, example_market):
        with pytest.raises(InvalidArgumentError):
            service.risk_budget_weights(example_market, [0.5, 0.5, 0.0])

    def test_constrained_form_binds(self, service, example_market):
        """The constraint sum beta log x >= level is active at the solution"""
        budget = np.array([1.0, 1.0, 1.0]) / 3.0
        x = service.constrained_budget_weights(example_market, budget, level=0.5)
        assert float(budget @ np.log(x)) == pytest.approx(0.5)
        rp = service.risk_parity_weights(example_market).weights
        assert np.allclose(x / x.sum(), rp, atol=1e-8)

    def test_start_point_independence(self, service, example_market):
        budget = np.array([0.1, 0.6, 0.3])
        a = service.risk_budget_weights(example_market, budget).weights
        b = service.risk_budget_weights(example_market, budget, start=[5.0, 0.01, 2.0]).weights
        assert np.allclose(a, b, atol=1e-8)


if __name__ == "__main__":
    pytest.main([__file__])

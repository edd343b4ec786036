import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from models.market_params import SinglePeriodMarket
from exceptions.riskflow_exceptions import InvalidArgumentError, ConvergenceError


logger = logging.getLogger(__name__)

MEASURES = ('std', 'variance')
FOC_TOLERANCE = 1e-10
MAX_ITERATIONS = 500


@dataclass(frozen=True)
class BudgetWeights:
    """Raw solver shares x* and normalized weights w* = x* / sum(x*)"""
    raw: np.ndarray = field(repr=False)
    weights: np.ndarray
    foc_residual: float
    iterations: int
    method: str


class SinglePeriodService:
    """Risk measures, risk contributions and budgeting over a covariance matrix

    Contributions use the marginal Lambda w, so variance contributions sum to w^T Lambda w.
    The budgeting loss is J(x) = -sum beta log x + x^T Lambda x, hence x (Lambda x) = beta / 2
    at the optimum.
    """

    def __init__(self, tolerance: float = FOC_TOLERANCE, max_iterations: int = MAX_ITERATIONS):
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    @staticmethod
    def _weights(market: SinglePeriodMarket, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if w.shape != (market.n_assets,) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError(f"weights must be a finite vector of length {market.n_assets}")
        return w

    @staticmethod
    def _budget(market: SinglePeriodMarket, budget) -> np.ndarray:
        beta = np.atleast_1d(np.asarray(budget, dtype=float))
        if beta.shape != (market.n_assets,):
            raise InvalidArgumentError(f"budget must have {market.n_assets} entries")
        if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise InvalidArgumentError("budget entries must be strictly positive")
        return beta

    def std_risk(self, market: SinglePeriodMarket, w) -> float:
        w = self._weights(market, w)
        return math.sqrt(max(float(w @ market.covariance @ w), 0.0))

    def marginal_contribution_sp(self, market: SinglePeriodMarket, w, measure: str = 'variance') -> np.ndarray:
        if measure not in MEASURES:
            raise InvalidArgumentError(f"measure must be one of {MEASURES}")
        w = self._weights(market, w)
        marginal = market.covariance @ w
        if measure == 'variance':
            return marginal
        risk = self.std_risk(market, w)
        if risk == 0.0:
            raise ZeroDivisionError("std marginal contribution is undefined for a riskless portfolio")
        return marginal / risk

    def risk_contribution_sp(self, market: SinglePeriodMarket, w, measure: str = 'variance') -> np.ndarray:
        w = self._weights(market, w)
        return w * self.marginal_contribution_sp(market, w, measure)

    def euler_residual(self, market: SinglePeriodMarket, w, measure: str = 'variance') -> float:
        """|sum_i k_i - rho(w)|"""
        w = self._weights(market, w)
        total = float(np.sum(self.risk_contribution_sp(market, w, measure)))
        target = self.std_risk(market, w) if measure == 'std' else float(w @ market.covariance @ w)
        return abs(total - target)

    @staticmethod
    def equal_weights(n_assets: int) -> np.ndarray:
        return np.full(n_assets, 1.0 / n_assets)

    def min_variance_weights(self, market: SinglePeriodMarket) -> np.ndarray:
        """Lambda^{-1} 1 / (1^T Lambda^{-1} 1)"""
        ones = np.ones(market.n_assets)
        solved = linalg.cho_solve(linalg.cho_factor(market.covariance), ones)
        return solved / solved.sum()

    def heuristic_loss(self, market: SinglePeriodMarket, w, budget) -> float:
        """sum_ij (k_i / beta_i - k_j / beta_j)^2"""
        beta = self._budget(market, budget)
        scaled = self.risk_contribution_sp(market, w, 'variance') / beta
        return float(np.sum((scaled[:, None] - scaled[None, :]) ** 2))

    def _foc_residual(self, market: SinglePeriodMarket, x: np.ndarray, beta: np.ndarray) -> float:
        return float(np.max(np.abs(x * (market.covariance @ x) - 0.5 * beta)))

    def risk_budget_weights(self, market: SinglePeriodMarket, budget,
                            start: Optional[Sequence[float]] = None) -> BudgetWeights:
        """Minimize -sum beta log x + x^T Lambda x over x > 0"""
        beta = self._budget(market, budget)
        cov = market.covariance
        x = np.sqrt(beta) / np.sqrt(np.diag(cov)) if start is None else np.asarray(start, dtype=float).copy()
        if np.any(x <= 0):
            raise InvalidArgumentError("start point must be strictly positive")

        def loss(z: np.ndarray) -> float:
            return float(-beta @ np.log(z) + z @ cov @ z)

        residual = self._foc_residual(market, x, beta)
        iterations = 0
        stalled = False
        while residual > self.tolerance and iterations < self.max_iterations:
            iterations += 1
            gradient = -beta / x + 2.0 * cov @ x
            hessian = np.diag(beta / x ** 2) + 2.0 * cov
            step = -linalg.solve(hessian, gradient, assume_a='pos')

            # keep x > 0
            shrinking = step < 0
            alpha = min(1.0, 0.99 * float(np.min(-x[shrinking] / step[shrinking]))) if np.any(shrinking) else 1.0
            current = loss(x)
            slope = float(gradient @ step)
            while alpha > 1e-12 and loss(x + alpha * step) > current + 1e-4 * alpha * slope:
                alpha *= 0.5
            if alpha <= 1e-12:
                stalled = True
                break
            x = x + alpha * step
            residual = self._foc_residual(market, x, beta)
            logger.debug(f"newton iteration {iterations}: foc residual {residual:.3e}")

        method = 'newton'
        if residual > self.tolerance:
            if stalled:
                logger.info("Newton stalled, switching to cyclic coordinate descent")
            x, extra, residual = self._coordinate_descent(cov, beta, x, self.max_iterations - iterations)
            iterations += extra
            method = 'coordinate_descent'
        if residual > self.tolerance:
            raise ConvergenceError("risk budget solver did not converge", residual, iterations, x)

        return BudgetWeights(raw=x, weights=x / x.sum(), foc_residual=residual,
                             iterations=iterations, method=method)

    def _coordinate_descent(self, cov: np.ndarray, beta: np.ndarray, x: np.ndarray, budget_iterations: int):
        """Each coordinate solves 2 L_ii x_i^2 + 2 (sum_{j!=i} L_ij x_j) x_i - beta_i = 0"""
        x = x.copy()
        residual = float(np.max(np.abs(x * (cov @ x) - 0.5 * beta)))
        sweeps = 0
        while residual > self.tolerance and sweeps < max(budget_iterations, 1) * 20:
            sweeps += 1
            for i in range(x.size):
                off = float(cov[i] @ x - cov[i, i] * x[i])
                x[i] = (-off + math.sqrt(off ** 2 + 2.0 * cov[i, i] * beta[i])) / (2.0 * cov[i, i])
            residual = float(np.max(np.abs(x * (cov @ x) - 0.5 * beta)))
        return x, sweeps, residual

    def risk_parity_weights(self, market: SinglePeriodMarket) -> BudgetWeights:
        return self.risk_budget_weights(market, self.equal_weights(market.n_assets))

    def constrained_budget_weights(self, market: SinglePeriodMarket, budget, level: float) -> np.ndarray:
        """min x^T Lambda x s.t. sum beta log x >= level, the unconstrained x* moved along its ray"""
        beta = self._budget(market, budget)
        x = self.risk_budget_weights(market, beta).raw
        scale = math.exp((level - float(beta @ np.log(x))) / float(beta.sum()))
        return scale * x

    def strategy_table(self, market: SinglePeriodMarket, strategies: List[str],
                       budget: Optional[Sequence[float]] = None) -> List[Dict]:
        """Weights and normalized std contributions per strategy"""
        rows = []
        for strategy in strategies:
            if strategy == 'ew':
                w = self.equal_weights(market.n_assets)
            elif strategy == 'mv':
                w = self.min_variance_weights(market)
            elif strategy == 'rp':
                w = self.risk_parity_weights(market).weights
            elif strategy == 'budget':
                if budget is None:
                    raise InvalidArgumentError("strategy 'budget' needs a budget vector")
                w = self.risk_budget_weights(market, budget).weights
            else:
                raise InvalidArgumentError(f"Unknown strategy: {strategy}")
            risk = self.std_risk(market, w)
            contributions = self.risk_contribution_sp(market, w, 'std') / risk
            for i in range(market.n_assets):
                rows.append({'strategy': strategy, 'asset': i, 'weight': float(w[i]),
                             'contribution': float(contributions[i]), 'std': risk})
        return rows

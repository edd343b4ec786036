import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from models.estimate import Estimate
from models.strategy import MvParams
from models.time_grid import TimeGrid
from services.contribution_service import ContributionService
from utils.random_streams import RandomStreams
from utils.statistics import Statistics
from exceptions.riskflow_exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)

EXPECTATION_FORMS = ('policy', 'printed')
FIGURE2_TIME = 0.5
FIGURE2_X0 = (0.5, 1.0, 1.5)
FIGURE2_TAU = (0.5, 1.0, 2.0)
FIGURE2_X_RANGE = (0.0, 3.0, 61)


@dataclass(frozen=True)
class MvRiskContribution:
    """K0 (bond) and K1 (stock) at wealth X, with their coefficients in X (low to high)"""
    k0: np.ndarray
    k1: np.ndarray
    k0_coefficients: np.ndarray = field(repr=False)
    k1_coefficients: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class MvPaths:
    grid: TimeGrid
    wealth: np.ndarray = field(repr=False)   # (n_paths, n_steps + 1)
    stock: np.ndarray = field(repr=False)    # (n_paths, n_steps + 1), s0 = 1


class MeanVarianceService:
    """Bond-stock mean-variance investor with the linear feedback policy"""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers

    @staticmethod
    def mv_policy(params: MvParams, t: float, wealth):
        """Money in bond and stock (M0, M1); wealth may be an array or a polynomial in X"""
        target_now = params.target * math.exp(-params.r * (params.horizon - t))
        stock = params.premium_ratio * (target_now - wealth)
        return wealth - stock, stock

    @staticmethod
    def mv_expected_terminal(params: MvParams, form: str = 'policy') -> float:
        """E[X_T] under mv_policy; form='printed' gives the closed form as printed in the literature"""
        theta_t = params.theta_sq * params.horizon
        if form == 'policy':
            return params.x0 * math.exp(params.r * params.horizon) + math.expm1(theta_t) / (2.0 * params.tau)
        if form == 'printed':
            return params.x0 * (math.expm1(theta_t) + math.exp(params.r * params.horizon - theta_t))
        raise InvalidArgumentError(f"form must be one of {EXPECTATION_FORMS}")

    @staticmethod
    def mv_terminal_variance(params: MvParams) -> float:
        """(e^{theta^2 T} - 1) / (4 tau^2)"""
        return math.expm1(params.theta_sq * params.horizon) / (4.0 * params.tau ** 2)

    def mv_risk_contribution(self, params: MvParams, t: float, wealth,
                             expected_terminal: Optional[float] = None) -> MvRiskContribution:
        """Money-manner contributions of the bond and the stock at (t, X)"""
        if expected_terminal is None:
            expected_terminal = self.mv_expected_terminal(params)
        x = Polynomial([0.0, 1.0])
        money = self.mv_policy(params, t, x)
        drift = [params.r, params.b]
        covariance = [[0.0, 0.0], [0.0, params.sigma_sq]]
        k0, k1 = ContributionService.money_manner_risk(list(money), x, drift, covariance,
                                                       expected_terminal, params.x0)
        k0_coef = np.zeros(3)
        k1_coef = np.zeros(3)
        k0_coef[:k0.coef.size] = k0.coef
        k1_coef[:k1.coef.size] = k1.coef
        values = np.asarray(wealth, dtype=float)
        return MvRiskContribution(k0=k0(values), k1=k1(values), k0_coefficients=k0_coef, k1_coefficients=k1_coef)

    @staticmethod
    def mv_printed_leading_terms(params: MvParams) -> Tuple[float, float]:
        """X^2 coefficients 2r(sigma^2 + b - r)/sigma^2 and (r^2 - b^2)/sigma^2"""
        return (2.0 * params.r * (params.sigma_sq + params.b - params.r) / params.sigma_sq,
                (params.r ** 2 - params.b ** 2) / params.sigma_sq)

    def simulate_mv_wealth(self, params: MvParams, grid: TimeGrid, n_paths: int, seed: int) -> MvPaths:
        """Exact paths through Y = target e^{-r(T-t)} - X, a driftless-in-log GBM with volatility -theta"""
        if abs(grid.horizon - params.horizon) > 1e-12:
            raise InvalidArgumentError("grid horizon must equal the investment horizon")
        increments = RandomStreams.ensemble_increments(seed, n_paths, grid.n_steps, 1, grid.dt,
                                                       max_workers=self.max_workers)[:, :, 0]
        w = np.zeros((n_paths, grid.n_steps + 1))
        np.cumsum(increments, axis=1, out=w[:, 1:])
        t = grid.nodes
        theta = (params.b - params.r) / params.sigma
        target_path = params.target * np.exp(-params.r * (params.horizon - t))
        y0 = target_path[0] - params.x0
        y = y0 * np.exp((params.r - 1.5 * params.theta_sq) * t - theta * w)
        stock = np.exp((params.b - 0.5 * params.sigma_sq) * t + params.sigma * w)
        return MvPaths(grid=grid, wealth=target_path - y, stock=stock)

    def mv_aggregate_check(self, params: MvParams, paths: MvPaths) -> Dict[str, Estimate]:
        """E int (K0 + K1) dt and Var(X_T) on simulated paths"""
        grid = paths.grid
        total = np.zeros(paths.wealth.shape[0])
        for k in range(grid.n_steps):
            contribution = self.mv_risk_contribution(params, float(grid.nodes[k]), paths.wealth[:, k])
            total += (contribution.k0 + contribution.k1) * grid.dt
        return {'aggregate': Statistics.mean_and_stderr(total),
                'variance': Statistics.sample_variance(paths.wealth[:, -1]),
                'mean': Statistics.mean_and_stderr(paths.wealth[:, -1])}

    def figure2_table(self, params: MvParams, t: float = FIGURE2_TIME,
                      x_values: Optional[Sequence[float]] = None,
                      x0_values: Sequence[float] = FIGURE2_X0,
                      tau_values: Sequence[float] = FIGURE2_TAU) -> Tuple[List[Dict], List[Dict]]:
        """(X, K0, K1) rows per sweep value, and the coefficient / sign summary per sweep value"""
        if not 0.0 <= t <= params.horizon:
            raise InvalidArgumentError(f"t must lie in [0, {params.horizon}]")
        if x_values is None:
            x_values = np.linspace(*FIGURE2_X_RANGE)
        x = np.asarray(x_values, dtype=float)

        sweeps = [('baseline', 0.0, params)]
        sweeps += [('x0', float(v), params.with_updates(x0=float(v))) for v in x0_values]
        sweeps += [('tau', float(v), params.with_updates(tau=float(v))) for v in tau_values]

        rows, summary = [], []
        for sweep, value, swept in sweeps:
            contribution = self.mv_risk_contribution(swept, t, x)
            for xi, k0, k1 in zip(x, contribution.k0, contribution.k1):
                rows.append({'sweep': sweep, 'value': value, 'X': float(xi), 'K0': float(k0), 'K1': float(k1)})
            roots = np.sort(Polynomial(contribution.k1_coefficients).roots())
            real_roots = [float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12]
            central = None
            if len(real_roots) == 2:
                central = float(Polynomial(contribution.k1_coefficients)(0.5 * sum(real_roots))) > 0
            summary.append({'sweep': sweep, 'value': value,
                            'k0_x2': float(contribution.k0_coefficients[2]),
                            'k1_x2': float(contribution.k1_coefficients[2]),
                            'k1_roots': real_roots, 'k1_central_positive': central})
        logger.info(f"Figure-2 table: {len(rows)} rows over {len(sweeps)} sweep values")
        return rows, summary

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from models.budget import BudgetProcess
from models.path_ensemble import PathEnsemble
from models.policy import Policy, DEFAULT_U_MAX
from models.strategy import VolManagedSpec
from models.time_grid import TimeGrid
from services.contribution_service import ContributionService
from utils.random_streams import RandomStreams
from exceptions.riskflow_exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)

FACTOR_DYNAMICS = ('arithmetic', 'geometric')
LONG_TERM_FRACTIONS = (0.25, 0.5, 1.0)


@dataclass(frozen=True)
class FactorMarketParams:
    """Traded factor with stochastic volatility under the physical measure

    sigma_t = clip(s exp(alpha W2 - alpha^2 t / 2), sigma_lo, sigma_hi)
    arithmetic: dS = sigma (theta dt + dB1);  geometric: dS = S sigma (theta dt + dB1)
    """
    s0: float = 1.0
    s: float = 0.2
    alpha: float = 0.5
    theta: float = 0.0
    sigma_lo: float = 0.0
    sigma_hi: float = math.inf
    dynamics: str = 'arithmetic'

    def __post_init__(self):
        if self.dynamics not in FACTOR_DYNAMICS:
            raise InvalidArgumentError(f"dynamics must be one of {FACTOR_DYNAMICS}")
        if not self.s > 0 or self.alpha < 0:
            raise InvalidArgumentError("need s > 0 and alpha >= 0")
        if not 0.0 <= self.sigma_lo < self.sigma_hi:
            raise InvalidArgumentError("volatility bounds must satisfy 0 <= sigma_lo < sigma_hi")


class VolManagedService:
    """Volatility-managed portfolio u = c_hat / sigma^2"""

    def __init__(self, contribution_service: Optional[ContributionService] = None,
                 max_workers: Optional[int] = None):
        self.contributions = contribution_service or ContributionService()
        self.max_workers = max_workers

    @staticmethod
    def _volatility(ensemble: PathEnsemble, sigma: Optional[Union[float, np.ndarray]] = None) -> np.ndarray:
        """Volatility at every node, shape (n_paths, n_steps + 1)"""
        shape = (ensemble.n_paths, ensemble.grid.n_steps + 1)
        if sigma is not None:
            return np.broadcast_to(np.asarray(sigma, dtype=float), shape)
        if ensemble.volatility is None:
            raise InvalidArgumentError("ensemble has no volatility track; pass sigma explicitly")
        return ensemble.volatility

    def vol_managed_policy(self, spec: VolManagedSpec, ensemble: PathEnsemble,
                           sigma: Optional[Union[float, np.ndarray]] = None,
                           u_max: float = DEFAULT_U_MAX) -> Policy:
        vol = self._volatility(ensemble, sigma)[:, :-1]
        if np.any(vol <= 0):
            raise InvalidArgumentError("volatility must be strictly positive")
        shares = spec.c_hat / vol ** 2
        hit = float(np.mean(shares > u_max))
        if hit > 0:
            logger.warning(f"Vol-managed policy capped at {u_max:g} on {hit:.4%} of steps")
        return Policy.raw(np.minimum(shares, u_max)[:, :, None], u_max=u_max, name='vol_managed')

    def vol_managed_budget(self, spec: VolManagedSpec, ensemble: PathEnsemble,
                           sigma: Optional[Union[float, np.ndarray]] = None) -> BudgetProcess:
        """beta = (c_hat S / sigma)^2 on a one-asset ensemble"""
        if ensemble.n_assets != 1:
            raise InvalidArgumentError("vol-managed budget is defined for one asset")
        vol = self._volatility(ensemble, sigma)[:, :-1]
        return BudgetProcess.raw((spec.c_hat * ensemble.left_values[:, :, 0] / vol) ** 2, name='vol_managed')

    def vol_managed_discrete_policy(self, spec: VolManagedSpec, ensemble: PathEnsemble, window: int,
                                    initial_sigma: Optional[float] = None,
                                    u_max: float = DEFAULT_U_MAX) -> Policy:
        """c_hat over the realized variance of the last `window` log returns"""
        if window < 1:
            raise InvalidArgumentError("window must be at least one step")
        if initial_sigma is None:
            if ensemble.volatility is None:
                raise InvalidArgumentError("need initial_sigma when the ensemble has no volatility track")
            initial_sigma = ensemble.volatility[:, 0]
        start = np.broadcast_to(np.asarray(initial_sigma, dtype=float), (ensemble.n_paths,))
        dt = ensemble.grid.dt

        def rule(k: int, values: np.ndarray) -> np.ndarray:
            if k == 0:
                return spec.c_hat / start ** 2
            prices = values[:, max(0, k - window):k + 1, 0]
            returns = np.diff(np.log(prices), axis=1)
            realized = np.mean(returns ** 2, axis=1) / dt
            return spec.c_hat / np.maximum(realized, spec.c_hat / u_max)

        return Policy.raw_from_rule(rule, ensemble, u_max=u_max, name=f'vol_managed_{window}')

    def simulate_factor_market(self, params: FactorMarketParams, grid: TimeGrid,
                               n_paths: int, seed: int) -> PathEnsemble:
        increments = RandomStreams.ensemble_increments(seed, n_paths, grid.n_steps, 2, grid.dt,
                                                       max_workers=self.max_workers)
        w2 = np.zeros((n_paths, grid.n_steps + 1))
        np.cumsum(increments[:, :, 1], axis=1, out=w2[:, 1:])
        vol = params.s * np.exp(params.alpha * w2 - 0.5 * params.alpha ** 2 * grid.nodes)
        vol = np.clip(vol, params.sigma_lo, params.sigma_hi)

        step_vol = vol[:, :-1]
        noise = params.theta * grid.dt + increments[:, :, 0]
        values = np.empty((n_paths, grid.n_steps + 1, 1))
        values[:, 0, 0] = params.s0
        if params.dynamics == 'arithmetic':
            np.cumsum(step_vol * noise, axis=1, out=values[:, 1:, 0])
            values[:, 1:, 0] += params.s0
        else:
            log_steps = step_vol * noise - 0.5 * step_vol ** 2 * grid.dt
            values[:, 1:, 0] = params.s0 * np.exp(np.cumsum(log_steps, axis=1))
        return PathEnsemble(grid=grid, values=values, increments=increments,
                            model_name=f'factor_{params.dynamics}', seed=seed, volatility=vol)

    def vol_managed_long_term(self, spec: VolManagedSpec, ensemble: PathEnsemble,
                              theta: Union[float, np.ndarray] = 0.0,
                              sigma_bounds: Optional[Tuple[float, float]] = None) -> List[Dict[str, float]]:
        """X_t / t against t^-1 int beta^{1/2} theta ds at T/4, T/2 and T

        beta^{1/2} is the price-diffusion amplitude times u: c_hat / sigma on an arithmetic
        factor, c_hat S / sigma on a geometric one.
        """
        vol = self._volatility(ensemble)
        if sigma_bounds is not None:
            vol = np.clip(vol, *sigma_bounds)
        grid = ensemble.grid
        shares = (spec.c_hat / vol[:, :-1] ** 2)[:, :, None]
        wealth = self.contributions.wealth_from_shares(shares, ensemble, 0.0)

        amplitude = vol[:, :-1]
        if ensemble.model_name != 'factor_arithmetic':
            amplitude = amplitude * ensemble.left_values[:, :, 0]
        sqrt_budget = shares[:, :, 0] * amplitude
        theta_track = np.broadcast_to(np.asarray(theta, dtype=float), sqrt_budget.shape)
        drift_integral = np.zeros_like(wealth)
        np.cumsum(sqrt_budget * theta_track * grid.dt, axis=1, out=drift_integral[:, 1:])

        rows = []
        for fraction in LONG_TERM_FRACTIONS:
            k = max(1, grid.node_index(fraction * grid.horizon))
            t = float(grid.nodes[k])
            lhs = wealth[:, k] / t
            rhs = drift_integral[:, k] / t
            gap = np.abs(lhs - rhs)
            rows.append({'t': t, 'lhs_mean': float(np.mean(lhs)), 'rhs_mean': float(np.mean(rhs)),
                         'mean_gap': float(np.mean(gap)), 'median_gap': float(np.median(gap))})
        logger.info(f"Long-term gap at T={grid.horizon:g}: mean {rows[-1]['mean_gap']:.4g}")
        return rows

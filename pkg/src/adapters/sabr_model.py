import logging
import math
from typing import Any, Dict, Optional, Tuple

import numpy as np

from adapters.base_model import BaseMarketModel
from models.market_params import SabrParams
from models.path_ensemble import PathEnsemble
from models.time_grid import TimeGrid


logger = logging.getLogger(__name__)


class SabrModel(BaseMarketModel):
    """SABR forward: Euler steps for F absorbed at zero, exact stochastic exponential for sigma

    Driver 0 is B1 (drives F), driver 1 is B2; W2 = rho B1 + sqrt(1 - rho^2) B2 drives sigma.
    """

    def __init__(self, params: SabrParams, max_workers: Optional[int] = None):
        super().__init__('sabr', max_workers)
        self.params = params

    def describe(self) -> Dict[str, Any]:
        p = self.params
        return {'type': 'sabr', 'f0': p.f0, 's': p.s, 'alpha': p.alpha,
                'beta_exp': p.beta_exp, 'rho': p.rho}

    def n_assets(self) -> int:
        return 1

    def n_drivers(self) -> int:
        return 2

    def volatility_path(self, grid: TimeGrid, dw2: np.ndarray) -> np.ndarray:
        """sigma_k = s exp(alpha W2_k - alpha^2 t_k / 2), shape (..., n_steps + 1)"""
        p = self.params
        w2 = np.zeros(dw2.shape[:-1] + (grid.n_steps + 1,))
        np.cumsum(dw2, axis=-1, out=w2[..., 1:])
        return p.s * np.exp(p.alpha * w2 - 0.5 * p.alpha ** 2 * grid.nodes)

    def forward_path(self, grid: TimeGrid, db1: np.ndarray,
                     volatility: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Euler scheme for F given B1 increments and the sigma track; returns (F, absorbed)"""
        p = self.params
        forward = np.empty(db1.shape[:-1] + (grid.n_steps + 1,))
        forward[..., 0] = p.f0
        absorbed = np.zeros(db1.shape[:-1], dtype=bool)
        current = np.full(db1.shape[:-1], p.f0)
        for k in range(grid.n_steps):
            step = current + volatility[..., k] * np.power(current, p.beta_exp) * db1[..., k]
            absorbed |= step <= 0.0
            current = np.where(absorbed, 0.0, step)
            forward[..., k + 1] = current
        return forward, absorbed

    def simulate_with_increments(self, grid: TimeGrid, increments: np.ndarray,
                                 seed: int = None) -> PathEnsemble:
        increments = self._check_increments(grid, increments)
        p = self.params
        db1 = increments[:, :, 0]
        dw2 = p.rho * db1 + math.sqrt(1.0 - p.rho ** 2) * increments[:, :, 1]

        volatility = self.volatility_path(grid, dw2)
        forward, absorbed = self.forward_path(grid, db1, volatility)
        absorbed_fraction = float(np.mean(absorbed))
        if absorbed_fraction > 0:
            logger.info(f"SABR forward absorbed at zero on {absorbed_fraction:.4%} of paths")

        return PathEnsemble(grid=grid, values=forward[:, :, None], increments=increments,
                            model_name=self.name, seed=seed, volatility=volatility,
                            absorbed_fraction=absorbed_fraction)

    def local_variance(self, ensemble: PathEnsemble) -> np.ndarray:
        """sigma^2 F^{2 beta} at left nodes, zero once F is absorbed, shape (n_paths, n_steps)"""
        forward = ensemble.values[:, :-1, 0]
        sigma = ensemble.volatility[:, :-1]
        alive = forward > 0.0
        return np.where(alive, sigma ** 2 * np.power(np.where(alive, forward, 1.0), 2.0 * self.params.beta_exp), 0.0)

    def price_drift(self, ensemble: PathEnsemble) -> np.ndarray:
        self._check_ensemble(ensemble)
        return np.zeros(ensemble.left_values.shape)

    def covariance_action(self, ensemble: PathEnsemble, shares: np.ndarray) -> np.ndarray:
        self._check_ensemble(ensemble)
        return self.local_variance(ensemble)[:, :, None] * shares

    def local_covariance_at(self, ensemble: PathEnsemble, k: int) -> np.ndarray:
        self._check_ensemble(ensemble)
        forward = ensemble.values[:, k, 0]
        alive = forward > 0.0
        var = np.where(alive, ensemble.volatility[:, k] ** 2 *
                       np.power(np.where(alive, forward, 1.0), 2.0 * self.params.beta_exp), 0.0)
        return var[:, None, None]

from typing import Any, Dict, Optional

import numpy as np

from adapters.base_model import BaseMarketModel
from models.market_params import GbmParams
from models.path_ensemble import PathEnsemble
from models.time_grid import TimeGrid


class GbmModel(BaseMarketModel):
    """Multi-asset geometric Brownian motion stepped with the exact log-normal scheme"""

    def __init__(self, params: GbmParams, max_workers: Optional[int] = None):
        super().__init__('gbm', max_workers)
        self.params = params

    def describe(self) -> Dict[str, Any]:
        return {'type': 'gbm', 's0': self.params.s0.tolist(), 'drift': self.params.drift.tolist(),
                'diffusion': self.params.diffusion.tolist()}

    def n_assets(self) -> int:
        return self.params.n_assets

    def n_drivers(self) -> int:
        return self.params.n_drivers

    def simulate_with_increments(self, grid: TimeGrid, increments: np.ndarray,
                                 seed: int = None) -> PathEnsemble:
        """log S_k = log s0 + (b - diag(sigma sigma^T)/2) t_k + sigma W_k"""
        increments = self._check_increments(grid, increments)
        p = self.params
        n_paths = increments.shape[0]

        log_drift = p.drift - 0.5 * np.sum(p.diffusion ** 2, axis=1)
        log_paths = np.empty((n_paths, grid.n_steps + 1, p.n_assets))
        log_paths[:, 0, :] = 0.0
        np.cumsum(increments @ p.diffusion.T, axis=1, out=log_paths[:, 1:, :])
        log_paths += grid.nodes[None, :, None] * log_drift[None, None, :]
        values = p.s0[None, None, :] * np.exp(log_paths)
        values[:, 0, :] = p.s0

        return PathEnsemble(grid=grid, values=values, increments=increments,
                            model_name=self.name, seed=seed)

    def price_drift(self, ensemble: PathEnsemble) -> np.ndarray:
        """Diag(S) b"""
        self._check_ensemble(ensemble)
        return ensemble.left_values * self.params.drift[None, None, :]

    def covariance_action(self, ensemble: PathEnsemble, shares: np.ndarray) -> np.ndarray:
        """Diag(S) sigma sigma^T Diag(S) u"""
        self._check_ensemble(ensemble)
        s = ensemble.left_values
        return s * ((s * shares) @ self.params.covariance)

    def local_covariance_at(self, ensemble: PathEnsemble, k: int) -> np.ndarray:
        self._check_ensemble(ensemble)
        s = ensemble.values[:, k, :]
        return s[:, :, None] * self.params.covariance[None, :, :] * s[:, None, :]

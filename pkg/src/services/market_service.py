import logging
from typing import Dict, List, Optional

import numpy as np

from adapters.gbm_model import GbmModel
from adapters.sabr_model import SabrModel
from interfaces.market_model import IMarketModel
from models.market_params import GbmParams, SabrParams, BondParams
from models.path_ensemble import PathEnsemble
from models.time_grid import TimeGrid, make_time_grid
from utils.random_streams import RandomStreams
from utils.statistics import Statistics
from utils.file_utils import FileUtils
from exceptions.riskflow_exceptions import DegenerateMarketError, InvalidArgumentError


logger = logging.getLogger(__name__)


class MarketService:
    """Simulation entry points for the market models"""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers

    def simulate_gbm(self, params: GbmParams, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
        return GbmModel(params, self.max_workers).simulate(grid, n_paths, seed)

    def simulate_sabr(self, params: SabrParams, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
        """F in values[..., 0], sigma in the volatility track"""
        return SabrModel(params, self.max_workers).simulate(grid, n_paths, seed)

    @staticmethod
    def bond_path(params: BondParams, grid: TimeGrid) -> np.ndarray:
        """S0_k = s0 e^{r t_k}"""
        return params.s0 * np.exp(params.rate * grid.nodes)

    @staticmethod
    def coarsen_increments(increments: np.ndarray) -> np.ndarray:
        """Sum consecutive pairs of increments (dt doubled, same Brownian path)"""
        n_paths, n_steps, n_drivers = increments.shape
        if n_steps % 2:
            raise InvalidArgumentError("coarsening needs an even number of steps")
        return increments.reshape(n_paths, n_steps // 2, 2, n_drivers).sum(axis=2)

    def strong_order_rms(self, model: IMarketModel, horizon: float, finest_steps: int,
                         n_paths: int, seed: int, levels: int = 3) -> List[Dict[str, float]]:
        """RMS terminal difference between successive dt-halvings on a shared Brownian path

        Row i compares grids with finest_steps / 2^(i+1) and finest_steps / 2^i steps.
        """
        if finest_steps % (2 ** levels):
            raise InvalidArgumentError(f"finest_steps must be divisible by {2 ** levels}")
        fine_grid = make_time_grid(horizon, finest_steps)
        increments = RandomStreams.ensemble_increments(
            seed, n_paths, finest_steps, model.n_drivers(), fine_grid.dt, max_workers=self.max_workers)

        terminals = []
        steps = finest_steps
        for _ in range(levels + 1):
            grid = make_time_grid(horizon, steps)
            ensemble = model.simulate_with_increments(grid, increments, seed)
            terminals.append((steps, ensemble.values[:, -1, :]))
            if steps > finest_steps // (2 ** levels):
                increments = self.coarsen_increments(increments)
                steps //= 2

        rows = []
        for (fine_steps, fine), (coarse_steps, coarse) in zip(terminals[:-1], terminals[1:]):
            rows.append({'coarse_dt': horizon / coarse_steps, 'fine_dt': horizon / fine_steps,
                         'rms': float(np.sqrt(np.mean(np.sum((fine - coarse) ** 2, axis=-1))))})
        return rows

    @staticmethod
    def ensure_non_degenerate(ensemble: PathEnsemble, n_stderr: float = 3.0) -> None:
        """Every asset must carry terminal variance above n_stderr standard errors"""
        for i in range(ensemble.n_assets):
            moves = ensemble.values[:, -1, i] - ensemble.values[:, 0, i]
            variance = Statistics.sample_variance(moves)
            if variance.mean <= n_stderr * variance.stderr or variance.mean <= 0:
                raise DegenerateMarketError(
                    f"asset {i} has terminal variance {variance.mean:.3e} "
                    f"(stderr {variance.stderr:.3e}); the market is degenerate")

    @staticmethod
    def export_ensemble(ensemble: PathEnsemble, path: str) -> List[str]:
        return FileUtils.export_ensemble(ensemble, path)

    @staticmethod
    def import_ensemble(path: str) -> PathEnsemble:
        return FileUtils.import_ensemble(path)

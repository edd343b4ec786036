import logging
from abc import abstractmethod
from typing import Any, Dict, Optional

import numpy as np

from interfaces.market_model import IMarketModel
from models.path_ensemble import PathEnsemble
from models.time_grid import TimeGrid
from utils.random_streams import RandomStreams
from exceptions.riskflow_exceptions import InvalidArgumentError, UnsupportedModelError


logger = logging.getLogger(__name__)


class BaseMarketModel(IMarketModel):
    """Base class for simulated markets; subclasses supply the stepping scheme"""

    def __init__(self, name: str, max_workers: Optional[int] = None):
        self.name = name
        self.max_workers = max_workers

    def get_name(self) -> str:
        """Get model name"""
        return self.name

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        """Parameters as a plain dict"""
        pass

    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
        """Simulate n_paths paths with per-path counter-based streams"""
        if int(n_paths) != n_paths or n_paths < 1:
            raise InvalidArgumentError(f"n_paths must be a positive integer, got {n_paths}")
        if seed is None:
            raise InvalidArgumentError("a seed is required for simulation")
        increments = RandomStreams.ensemble_increments(
            seed, int(n_paths), grid.n_steps, self.n_drivers(), grid.dt, max_workers=self.max_workers)
        ensemble = self.simulate_with_increments(grid, increments, seed)
        logger.info(f"Simulated {self.name}: {n_paths} paths x {grid.n_steps} steps (seed={seed})")
        return ensemble

    def _check_increments(self, grid: TimeGrid, increments: np.ndarray) -> np.ndarray:
        increments = np.asarray(increments, dtype=float)
        if increments.ndim != 3 or increments.shape[1:] != (grid.n_steps, self.n_drivers()):
            raise InvalidArgumentError(
                f"increments must be (n_paths, {grid.n_steps}, {self.n_drivers()}), got {increments.shape}")
        return increments

    def _check_ensemble(self, ensemble: PathEnsemble) -> None:
        if ensemble.model_name != self.name:
            raise UnsupportedModelError(
                f"ensemble was produced by '{ensemble.model_name}', not by '{self.name}'")

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from models.time_grid import TimeGrid


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated asset values on a time grid, one row per Monte Carlo path

    values:      (n_paths, n_steps + 1, n_assets)
    increments:  (n_paths, n_steps, n_drivers) Brownian increments that produced the values
    volatility:  optional (n_paths, n_steps + 1) volatility track (SABR sigma)
    """
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    model_name: str = 'unknown'
    seed: Optional[int] = None
    volatility: Optional[np.ndarray] = field(default=None, repr=False)
    absorbed_fraction: float = 0.0

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[2]

    @property
    def n_drivers(self) -> int:
        return self.increments.shape[2]

    @property
    def price_increments(self) -> np.ndarray:
        """S(t_{k+1}) - S(t_k), shape (n_paths, n_steps, n_assets)"""
        return np.diff(self.values, axis=1)

    @property
    def left_values(self) -> np.ndarray:
        """S(t_k) for k < N"""
        return self.values[:, :-1, :]

    def cumulative_driver(self, j: int) -> np.ndarray:
        """Brownian path B_j at every node, shape (n_paths, n_steps + 1)"""
        path = np.zeros((self.n_paths, self.grid.n_steps + 1))
        np.cumsum(self.increments[:, :, j], axis=1, out=path[:, 1:])
        return path

    def replace_values(self, values: np.ndarray) -> 'PathEnsemble':
        """Copy of the ensemble with other path values (same grid and drivers)"""
        return PathEnsemble(grid=self.grid, values=values, increments=self.increments,
                            model_name=self.model_name, seed=self.seed,
                            volatility=self.volatility,
                            absorbed_fraction=self.absorbed_fraction)

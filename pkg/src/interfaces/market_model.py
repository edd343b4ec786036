from abc import ABC, abstractmethod

import numpy as np

from models.path_ensemble import PathEnsemble
from models.time_grid import TimeGrid


class IMarketModel(ABC):
    """Interface for diffusion models that simulate asset values and expose their coefficients"""

    @abstractmethod
    def get_name(self) -> str:
        """Get model name"""
        pass

    @abstractmethod
    def n_assets(self) -> int:
        """Number of traded assets"""
        pass

    @abstractmethod
    def n_drivers(self) -> int:
        """Number of Brownian drivers"""
        pass

    @abstractmethod
    def simulate(self, grid: TimeGrid, n_paths: int, seed: int) -> PathEnsemble:
        """Simulate an ensemble on the grid"""
        pass

    @abstractmethod
    def simulate_with_increments(self, grid: TimeGrid, increments: np.ndarray,
                                 seed: int = None) -> PathEnsemble:
        """Drive the scheme with given Brownian increments"""
        pass

    @abstractmethod
    def price_drift(self, ensemble: PathEnsemble) -> np.ndarray:
        """Price drift mu_S at left nodes, shape (n_paths, n_steps, d)"""
        pass

    @abstractmethod
    def covariance_action(self, ensemble: PathEnsemble, shares: np.ndarray) -> np.ndarray:
        """Sigma_S u at left nodes for a share table, shape (n_paths, n_steps, d)"""
        pass

    @abstractmethod
    def local_covariance_at(self, ensemble: PathEnsemble, k: int) -> np.ndarray:
        """Price covariance Sigma_S at node k, shape (n_paths, d, d)"""
        pass

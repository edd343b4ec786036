import math
from typing import Sequence

import numpy as np

from models.estimate import Estimate
from exceptions.riskflow_exceptions import InvalidArgumentError


class Statistics:
    """Monte Carlo estimators across paths"""

    @staticmethod
    def _as_samples(samples: Sequence[float]) -> np.ndarray:
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise InvalidArgumentError(f"need at least 2 samples, got {x.size}")
        return x

    @staticmethod
    def mean_and_stderr(samples: Sequence[float]) -> Estimate:
        """Sample mean and s / sqrt(n)"""
        x = Statistics._as_samples(samples)
        n = x.size
        return Estimate(mean=float(np.mean(x)), stderr=float(np.std(x, ddof=1) / math.sqrt(n)), n=n)

    @staticmethod
    def sample_variance(samples: Sequence[float]) -> Estimate:
        """Unbiased variance; stderr by the delta method std((x - mean)^2) / sqrt(n)"""
        x = Statistics._as_samples(samples)
        n = x.size
        centered_sq = (x - np.mean(x)) ** 2
        variance = float(np.sum(centered_sq) / (n - 1))
        return Estimate(mean=variance, stderr=float(np.std(centered_sq, ddof=1) / math.sqrt(n)), n=n)

    @staticmethod
    def sample_covariance(a: Sequence[float], b: Sequence[float]) -> Estimate:
        """Unbiased covariance with delta-method stderr"""
        x = Statistics._as_samples(a)
        y = Statistics._as_samples(b)
        if x.size != y.size:
            raise InvalidArgumentError("covariance needs samples of equal length")
        n = x.size
        products = (x - np.mean(x)) * (y - np.mean(y))
        return Estimate(mean=float(np.sum(products) / (n - 1)),
                        stderr=float(np.std(products, ddof=1) / math.sqrt(n)), n=n)

    @staticmethod
    def sample_std(samples: Sequence[float]) -> float:
        """Sample standard deviation, a deviation risk measure on finite sample spaces"""
        x = np.asarray(samples, dtype=float).ravel()
        if x.size < 2:
            raise InvalidArgumentError(f"need at least 2 samples, got {x.size}")
        return float(np.std(x, ddof=1))

    @staticmethod
    def path_integral(integrand: np.ndarray, dt: float) -> np.ndarray:
        """Left-point time integral per path of a (n_paths, n_steps, ...) integrand"""
        return np.sum(integrand, axis=1) * dt


def mean_and_stderr(samples: Sequence[float]) -> Estimate:
    return Statistics.mean_and_stderr(samples)

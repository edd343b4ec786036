import logging
from typing import Callable, List

import numpy as np

from exceptions.riskflow_exceptions import InvalidMaskError, InvalidArgumentError


logger = logging.getLogger(__name__)


class PredictabilityAudit:
    """Left-endpoint measurability checks for rules evaluated on path data"""

    MAX_CHECKED_STEPS = 8

    @staticmethod
    def checked_steps(n_steps: int, max_checks: int = MAX_CHECKED_STEPS) -> List[int]:
        """Evenly spaced steps audited for look-ahead"""
        count = min(max_checks, n_steps)
        return sorted(set(np.linspace(0, n_steps - 1, count).round().astype(int).tolist()))

    @staticmethod
    def scramble_future(values: np.ndarray, k: int) -> np.ndarray:
        """Copy of values with every node after k replaced by another path's data"""
        scrambled = np.array(values, copy=True)
        future = values[:, k + 1:, ...]
        scrambled[:, k + 1:, ...] = np.roll(future[::-1], 1, axis=0) * 1.5 + 1.0
        return scrambled

    @staticmethod
    def evaluate_rule(rule: Callable[[int, np.ndarray], np.ndarray], ensemble,
                      what: str = 'mask') -> np.ndarray:
        """Evaluate rule(k, values) for every step and audit it

        The rule receives the full (n_paths, n_steps + 1, d) value array and must
        only read nodes <= k. Returns the stacked (n_paths, n_steps, ...) table.
        """
        n_paths = ensemble.n_paths
        n_steps = ensemble.grid.n_steps
        values = ensemble.values

        def run(k: int, data: np.ndarray) -> np.ndarray:
            out = np.asarray(rule(k, data), dtype=float)
            if out.ndim == 0:
                out = np.full(n_paths, float(out))
            elif out.shape[0] != n_paths:
                out = np.broadcast_to(out, (n_paths,) + out.shape)
            return out

        table = np.stack([run(k, values) for k in range(n_steps)], axis=1)
        if not np.all(np.isfinite(table)):
            raise InvalidArgumentError(f"{what} rule produced non-finite values")

        for k in PredictabilityAudit.checked_steps(n_steps):
            scrambled = run(k, PredictabilityAudit.scramble_future(values, k))
            if not np.allclose(scrambled, table[:, k], rtol=1e-12, atol=1e-12):
                logger.warning(f"{what} rule reads data after node {k}")
                raise InvalidMaskError(
                    f"{what} at step {k} changes when path data after node {k} is scrambled")
        return table

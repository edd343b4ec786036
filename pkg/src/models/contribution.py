from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from models.estimate import Estimate
from exceptions.riskflow_exceptions import InvalidArgumentError


CONVENTION = 'Var = E int u^T c dt'


@dataclass(frozen=True)
class ContributionProcess:
    """Marginal contribution c and risk contribution k = u * c per (path, step, asset)"""
    shares: np.ndarray = field(repr=False)
    marginal: np.ndarray = field(repr=False)
    anchor: float = 0.0
    convention: str = CONVENTION

    @property
    def risk(self) -> np.ndarray:
        return self.shares * self.marginal

    @property
    def n_assets(self) -> int:
        return self.marginal.shape[2]


@dataclass(frozen=True)
class InvestmentResult:
    """Wealth X per (path, node) and its terminal statistics"""
    wealth: np.ndarray = field(repr=False)
    shares: np.ndarray = field(repr=False)
    terminal_mean: Estimate
    terminal_variance: Estimate
    cap_hit_fraction: float = 0.0

    @property
    def terminal(self) -> np.ndarray:
        return self.wealth[:, -1]


@dataclass(frozen=True)
class PredictableMask:
    """{0,1} indicator per (path, step, asset) of a predictable set

    Only audited masks may be paired with a contribution.
    """
    indicator: np.ndarray = field(repr=False)
    audited: bool = False

    def __post_init__(self):
        ind = np.asarray(self.indicator)
        if ind.ndim == 2:
            ind = ind[:, :, None]
        if ind.ndim != 3:
            raise InvalidArgumentError("mask must be (n_paths, n_steps) or (n_paths, n_steps, d)")
        if not np.all((ind == 0) | (ind == 1)):
            raise InvalidArgumentError("mask must be {0,1}-valued")
        object.__setattr__(self, 'indicator', ind.astype(float))

    @classmethod
    def full(cls, n_paths: int, n_steps: int, n_assets: int = 1) -> 'PredictableMask':
        return cls(np.ones((n_paths, n_steps, n_assets)), audited=True)

    @classmethod
    def empty(cls, n_paths: int, n_steps: int, n_assets: int = 1) -> 'PredictableMask':
        return cls(np.zeros((n_paths, n_steps, n_assets)), audited=True)

    @classmethod
    def time_window(cls, n_paths: int, step_flags, n_assets: int = 1) -> 'PredictableMask':
        """Mask that only depends on the step index"""
        flags = np.asarray(step_flags, dtype=float)
        if flags.ndim == 1:
            flags = flags[:, None]
        table = np.broadcast_to(flags, (n_paths, flags.shape[0], max(n_assets, flags.shape[1])))
        return cls(table.copy(), audited=True)

    @classmethod
    def from_rule(cls, rule: Callable[[int, np.ndarray], np.ndarray], ensemble) -> 'PredictableMask':
        """Evaluate rule(k, values) per step and run the look-ahead audit"""
        from utils.predictability import PredictabilityAudit

        table = PredictabilityAudit.evaluate_rule(rule, ensemble, what='mask')
        return cls(table, audited=True)

    @classmethod
    def from_table(cls, table) -> 'PredictableMask':
        """Unaudited mask; rejected by marginal_measure"""
        return cls(np.asarray(table), audited=False)

    def complement(self) -> 'PredictableMask':
        return PredictableMask(1.0 - self.indicator, audited=self.audited)

    def intersect(self, other: 'PredictableMask') -> 'PredictableMask':
        return PredictableMask(self.indicator * other.indicator,
                               audited=self.audited and other.audited)

    def union(self, other: 'PredictableMask') -> 'PredictableMask':
        both = self.indicator * other.indicator
        return PredictableMask(self.indicator + other.indicator - both,
                               audited=self.audited and other.audited)

    def is_disjoint(self, other: 'PredictableMask') -> bool:
        return not np.any(self.intersect(other).indicator)

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from exceptions.riskflow_exceptions import InvalidArgumentError


DEFAULT_U_MAX = 1e6
POLICY_KINDS = ('constant', 'deterministic', 'feedback', 'raw')


@dataclass(frozen=True)
class StepState:
    """Information available at the left endpoint t_k of step k"""
    k: int
    t: float
    values: np.ndarray                 # (n_paths, n_assets)
    wealth: np.ndarray                 # (n_paths,)
    volatility: Optional[np.ndarray] = None


FeedbackRule = Callable[[StepState], np.ndarray]
HistoryRule = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Policy:
    """Predictable share process u on a time grid

    constant:       data is a (d,) vector
    deterministic:  data is a (n_steps, d) table
    feedback:       data is a callable StepState -> (n_paths, d)
    raw:            data is a (n_paths, n_steps, d) table whose step k only uses nodes <= k
    """
    kind: str
    n_assets: int
    data: Any = field(repr=False)
    u_max: float = DEFAULT_U_MAX
    name: str = ''

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidArgumentError(f"Unknown policy kind: {self.kind}")
        if self.u_max <= 0:
            raise InvalidArgumentError("u_max must be positive")

    @classmethod
    def constant(cls, shares, u_max: float = DEFAULT_U_MAX, name: str = '') -> 'Policy':
        shares = np.atleast_1d(np.asarray(shares, dtype=float))
        if shares.ndim != 1 or not np.all(np.isfinite(shares)):
            raise InvalidArgumentError("constant policy needs a finite share vector")
        return cls('constant', shares.size, shares, u_max, name or 'constant')

    @classmethod
    def deterministic(cls, table, u_max: float = DEFAULT_U_MAX, name: str = '') -> 'Policy':
        table = np.asarray(table, dtype=float)
        if table.ndim == 1:
            table = table[:, None]
        if table.ndim != 2 or not np.all(np.isfinite(table)):
            raise InvalidArgumentError("deterministic policy needs a finite (n_steps, d) table")
        return cls('deterministic', table.shape[1], table, u_max, name or 'deterministic')

    @classmethod
    def feedback(cls, rule: FeedbackRule, n_assets: int, u_max: float = DEFAULT_U_MAX,
                 name: str = '') -> 'Policy':
        if not callable(rule):
            raise InvalidArgumentError("feedback policy needs a callable rule")
        return cls('feedback', int(n_assets), rule, u_max, name or 'feedback')

    @classmethod
    def raw(cls, table, u_max: float = DEFAULT_U_MAX, name: str = '') -> 'Policy':
        """Wrap a per-(path, step) table; the caller vouches for predictability"""
        table = np.asarray(table, dtype=float)
        if table.ndim == 2:
            table = table[:, :, None]
        if table.ndim != 3 or not np.all(np.isfinite(table)):
            raise InvalidArgumentError("raw policy needs a finite (n_paths, n_steps, d) table")
        return cls('raw', table.shape[2], table, u_max, name or 'raw')

    @classmethod
    def raw_from_rule(cls, rule: HistoryRule, ensemble, u_max: float = DEFAULT_U_MAX,
                      name: str = '') -> 'Policy':
        """Build a raw policy from rule(k, values[:, :k+1]) after auditing it"""
        from utils.predictability import PredictabilityAudit

        table = PredictabilityAudit.evaluate_rule(rule, ensemble, what='policy')
        if table.ndim == 2:
            table = table[:, :, None]
        return cls('raw', table.shape[2], table, u_max, name or 'raw')

    @property
    def is_wealth_dependent(self) -> bool:
        return self.kind == 'feedback'

    def table(self, n_paths: int, n_steps: int) -> np.ndarray:
        """Share table (n_paths, n_steps, d) for non-feedback kinds"""
        if self.kind == 'constant':
            return np.broadcast_to(self.data, (n_paths, n_steps, self.n_assets)).copy()
        if self.kind == 'deterministic':
            if self.data.shape[0] != n_steps:
                raise InvalidArgumentError(
                    f"deterministic policy has {self.data.shape[0]} steps, grid has {n_steps}")
            return np.broadcast_to(self.data, (n_paths, n_steps, self.n_assets)).copy()
        if self.kind == 'raw':
            if self.data.shape[:2] != (n_paths, n_steps):
                raise InvalidArgumentError(
                    f"raw policy shape {self.data.shape[:2]} does not match ({n_paths}, {n_steps})")
            return np.array(self.data, copy=True)
        raise InvalidArgumentError("feedback policies are resolved step by step on wealth")

    def shares_at(self, state: StepState) -> np.ndarray:
        """Shares held over step k, shape (n_paths, d)"""
        n_paths = state.values.shape[0]
        if self.kind == 'feedback':
            shares = np.asarray(self.data(state), dtype=float)
            return np.broadcast_to(shares, (n_paths, self.n_assets))
        if self.kind == 'constant':
            return np.broadcast_to(self.data, (n_paths, self.n_assets))
        if self.kind == 'deterministic':
            return np.broadcast_to(self.data[state.k], (n_paths, self.n_assets))
        return self.data[:, state.k, :]

    def scaled(self, factor: float) -> 'Policy':
        if self.kind == 'feedback':
            rule = self.data
            return Policy.feedback(lambda state: factor * rule(state), self.n_assets,
                                   self.u_max, self.name)
        return Policy(self.kind, self.n_assets, factor * self.data, self.u_max, self.name)

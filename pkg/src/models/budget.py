from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from models.policy import Policy, StepState, POLICY_KINDS
from models.contribution import ContributionProcess
from exceptions.riskflow_exceptions import InvalidArgumentError


INFORMATION_ORDER = {'constant': 0, 'deterministic': 1, 'feedback': 2, 'full': 3}
DEFAULT_FEEDBACK_BINS = 32


@dataclass(frozen=True)
class BudgetProcess:
    """Strictly positive budget process beta, same kinds as Policy"""
    kind: str
    n_assets: int
    data: Any = field(repr=False)
    name: str = ''

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidArgumentError(f"Unknown budget kind: {self.kind}")
        if self.kind != 'feedback':
            values = np.asarray(self.data, dtype=float)
            if not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise InvalidArgumentError("budget must be strictly positive")
            object.__setattr__(self, 'data', values)

    @classmethod
    def constant(cls, values, name: str = '') -> 'BudgetProcess':
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls('constant', values.size, values, name or 'constant')

    @classmethod
    def deterministic(cls, table, name: str = '') -> 'BudgetProcess':
        table = np.asarray(table, dtype=float)
        if table.ndim == 1:
            table = table[:, None]
        return cls('deterministic', table.shape[1], table, name or 'deterministic')

    @classmethod
    def feedback(cls, rule, n_assets: int, name: str = '') -> 'BudgetProcess':
        """rule(StepState) -> (n_paths, d), evaluated at every left node"""
        return cls('feedback', int(n_assets), rule, name or 'feedback')

    @classmethod
    def raw(cls, table, name: str = '') -> 'BudgetProcess':
        table = np.asarray(table, dtype=float)
        if table.ndim == 2:
            table = table[:, :, None]
        return cls('raw', table.shape[2], table, name or 'raw')

    def evaluate(self, ensemble) -> np.ndarray:
        """Budget values per (path, step, asset)"""
        n_paths, n_steps = ensemble.n_paths, ensemble.grid.n_steps
        shape = (n_paths, n_steps, self.n_assets)
        if self.kind in ('constant', 'deterministic'):
            if self.kind == 'deterministic' and self.data.shape[0] != n_steps:
                raise InvalidArgumentError(
                    f"budget has {self.data.shape[0]} steps, grid has {n_steps}")
            return np.broadcast_to(self.data, shape).copy()
        if self.kind == 'raw':
            if self.data.shape != shape:
                raise InvalidArgumentError(f"budget shape {self.data.shape} does not match {shape}")
            return self.data
        table = np.empty(shape)
        for k in range(n_steps):
            state = StepState(k=k, t=ensemble.grid.nodes[k], values=ensemble.values[:, k, :],
                              wealth=np.zeros(n_paths),
                              volatility=None if ensemble.volatility is None else ensemble.volatility[:, k])
            table[:, k, :] = np.broadcast_to(np.asarray(self.data(state), dtype=float),
                                             (n_paths, self.n_assets))
        if not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise InvalidArgumentError(f"budget '{self.name}' is not strictly positive on the ensemble")
        return table

    def scaled(self, factor: float) -> 'BudgetProcess':
        if factor <= 0:
            raise InvalidArgumentError("budget scale must be positive")
        if self.kind == 'feedback':
            rule = self.data
            return BudgetProcess.feedback(lambda state: factor * rule(state), self.n_assets, self.name)
        return BudgetProcess(self.kind, self.n_assets, factor * self.data, self.name)


@dataclass(frozen=True)
class InformationClass:
    """Discretized sub-sigma-algebra a policy or budget may depend on

    feedback cells are n_bins equal-probability bins of the state at each node;
    state is 'asset:i' (asset value) or 'driver:j' (cumulative Brownian driver).
    """
    kind: str
    n_bins: int = DEFAULT_FEEDBACK_BINS
    state: str = 'asset:0'

    def __post_init__(self):
        if self.kind not in INFORMATION_ORDER:
            raise InvalidArgumentError(f"Unknown information class: {self.kind}")
        if self.n_bins < 1:
            raise InvalidArgumentError("n_bins must be positive")
        source, _, index = self.state.partition(':')
        if source not in ('asset', 'driver') or not index.isdigit():
            raise InvalidArgumentError(f"state must be 'asset:i' or 'driver:j', got {self.state}")

    @property
    def level(self) -> int:
        return INFORMATION_ORDER[self.kind]

    @property
    def state_source(self):
        source, _, index = self.state.partition(':')
        return source, int(index)

    def is_coarser_or_equal(self, other: 'InformationClass') -> bool:
        """Every cell of other lies inside one cell of self"""
        if self.kind == 'feedback' and other.kind == 'feedback':
            return self.state == other.state and other.n_bins % self.n_bins == 0
        return self.level <= other.level

    def describe(self) -> str:
        if self.kind == 'feedback':
            return f"feedback({self.n_bins} bins on {self.state})"
        return self.kind


@dataclass(frozen=True)
class BudgetSolution:
    """Result of a risk-budgeting solve"""
    policy: Policy
    cell_values: np.ndarray = field(repr=False)
    residual_max: float
    residual_l2: float
    objective: float
    iterations: int
    converged: bool
    info_class: InformationClass
    contribution: Optional[ContributionProcess] = field(default=None, repr=False)
    gamma: Optional[float] = None
    cap_hit_fraction: float = 0.0

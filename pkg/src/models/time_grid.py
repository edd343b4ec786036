from dataclasses import dataclass, field

import numpy as np

from exceptions.riskflow_exceptions import InvalidArgumentError


DEFAULT_STEPS_PER_YEAR = 252


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, T]"""
    horizon: float
    n_steps: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def left_nodes(self) -> np.ndarray:
        """Left endpoints t_0..t_{N-1}, one per step"""
        return self.nodes[:-1]

    def node_index(self, t: float) -> int:
        """Closest node to time t"""
        if t < 0 or t > self.horizon:
            raise InvalidArgumentError(f"time {t} outside [0, {self.horizon}]")
        return int(round(t / self.dt))


def make_time_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Build a uniform grid with node k at k*T/N and the last node pinned to T"""
    if not np.isfinite(horizon) or horizon <= 0:
        raise InvalidArgumentError(f"horizon must be positive, got {horizon}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgumentError(f"n_steps must be a positive integer, got {n_steps}")

    n_steps = int(n_steps)
    nodes = np.arange(n_steps + 1, dtype=float) * horizon / n_steps
    nodes[-1] = horizon
    nodes.setflags(write=False)
    return TimeGrid(horizon=float(horizon), n_steps=n_steps, nodes=nodes)


def default_steps(horizon: float) -> int:
    """252 steps per unit of time, at least one"""
    return max(1, int(round(DEFAULT_STEPS_PER_YEAR * float(horizon))))

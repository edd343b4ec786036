from dataclasses import dataclass
import math


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error"""
    mean: float
    stderr: float
    n: int

    def combined_stderr(self, other: 'Estimate') -> float:
        """Standard error of the difference of two estimates, treated as independent"""
        return math.hypot(self.stderr, other.stderr)

    def within(self, target: float, n_stderr: float = 3.0) -> bool:
        return abs(self.mean - target) <= n_stderr * self.stderr

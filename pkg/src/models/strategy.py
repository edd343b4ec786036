from dataclasses import dataclass
import math

from exceptions.riskflow_exceptions import InvalidArgumentError


SABR_CASES = ('parity', 'h_projection', 'deterministic', 'single_period')


@dataclass(frozen=True)
class VolManagedSpec:
    """Exposure scale c_hat of the volatility-managed portfolio"""
    c_hat: float

    def __post_init__(self):
        if not self.c_hat > 0:
            raise InvalidArgumentError("c_hat must be positive")


@dataclass(frozen=True)
class SabrPolicyCase:
    """One of the four information-restricted SABR policies at total risk lambda"""
    case: str
    risk_level: float

    def __post_init__(self):
        if self.case not in SABR_CASES:
            raise InvalidArgumentError(f"Unknown SABR policy case: {self.case}")
        if not self.risk_level > 0:
            raise InvalidArgumentError("risk level lambda must be positive")


@dataclass(frozen=True)
class MvParams:
    """Bond-stock market and investor of the continuous-time mean-variance problem"""
    r: float = 0.06
    b: float = 0.12
    sigma_sq: float = 0.15 ** 2
    tau: float = 1.0
    x0: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise InvalidArgumentError("sigma_sq must be positive")
        if not self.tau > 0:
            raise InvalidArgumentError("tau must be positive")
        if not self.x0 > 0:
            raise InvalidArgumentError("x0 must be positive")
        if not self.horizon > 0:
            raise InvalidArgumentError("horizon must be positive")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def premium_ratio(self) -> float:
        """(b - r) / sigma sigma^T"""
        return (self.b - self.r) / self.sigma_sq

    @property
    def theta_sq(self) -> float:
        """Squared market price of risk (b - r)^2 / sigma sigma^T"""
        return (self.b - self.r) ** 2 / self.sigma_sq

    @property
    def p(self) -> float:
        """P = -(b - r) / sigma sigma^T"""
        return -self.premium_ratio

    @property
    def target(self) -> float:
        """Wealth level the feedback policy steers towards at T"""
        return self.x0 * math.exp(self.r * self.horizon) + \
            math.exp(self.theta_sq * self.horizon) / (2.0 * self.tau)

    def q(self, t: float) -> float:
        """Q_t = P e^{-r(T-t)} (2 tau x0 e^{rT} + e^{T theta^2}) / (2 tau)"""
        return self.p * math.exp(-self.r * (self.horizon - t)) * self.target

    def with_updates(self, **changes) -> 'MvParams':
        values = {**self.__dict__, **changes}
        return MvParams(**values)

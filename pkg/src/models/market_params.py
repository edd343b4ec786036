from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from exceptions.riskflow_exceptions import InvalidArgumentError, ValidationError, DegenerateMarketError


SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SinglePeriodMarket:
    """Price covariance matrix of d assets over one period"""
    covariance: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValidationError(f"covariance must be square, got shape {cov.shape}")
        if not np.all(np.isfinite(cov)):
            raise ValidationError("covariance has non-finite entries")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE * max(1.0, np.max(np.abs(cov))):
            raise ValidationError("covariance is not symmetric")
        try:
            factor = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError:
            raise ValidationError("covariance is not positive definite")
        if np.any(np.diag(factor) <= 0):
            raise ValidationError("covariance is not positive definite")
        object.__setattr__(self, 'covariance', cov)

    @property
    def n_assets(self) -> int:
        return self.covariance.shape[0]


@dataclass(frozen=True)
class GbmParams:
    """dS = Diag(S)(b dt + sigma dW) with d assets and m drivers"""
    s0: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        drift = np.atleast_1d(np.asarray(self.drift, dtype=float))
        diffusion = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        d = s0.size
        if drift.shape != (d,):
            raise InvalidArgumentError(f"drift must have {d} entries")
        if diffusion.shape[0] != d:
            raise InvalidArgumentError(f"diffusion must have {d} rows")
        if np.any(s0 <= 0):
            raise InvalidArgumentError("initial prices must be positive")
        object.__setattr__(self, 's0', s0)
        object.__setattr__(self, 'drift', drift)
        object.__setattr__(self, 'diffusion', diffusion)

    @property
    def n_assets(self) -> int:
        return self.s0.size

    @property
    def n_drivers(self) -> int:
        return self.diffusion.shape[1]

    @property
    def covariance(self) -> np.ndarray:
        """sigma sigma^T"""
        return self.diffusion @ self.diffusion.T

    def is_non_degenerate(self) -> bool:
        """sigma sigma^T strictly positive definite"""
        try:
            factor = linalg.cholesky(self.covariance, lower=True)
        except linalg.LinAlgError:
            return False
        return bool(np.all(np.diag(factor) > 1e-14))

    def require_non_degenerate(self) -> None:
        if not self.is_non_degenerate():
            raise DegenerateMarketError("sigma sigma^T is singular on the traded assets")

    def with_drift(self, drift) -> 'GbmParams':
        return GbmParams(self.s0, drift, self.diffusion)


@dataclass(frozen=True)
class SabrParams:
    """dF = sigma F^beta dW1, dsigma = alpha sigma dW2, d<W1, W2> = rho dt"""
    f0: float
    s: float
    alpha: float
    beta_exp: float
    rho: float = 0.0

    def __post_init__(self):
        if self.f0 <= 0:
            raise InvalidArgumentError("f0 must be positive")
        if self.s <= 0:
            raise InvalidArgumentError("initial volatility must be positive")
        if self.alpha < 0:
            raise InvalidArgumentError("alpha must be non-negative")
        if not 0.0 <= self.beta_exp <= 1.0:
            raise InvalidArgumentError("beta_exp must lie in [0, 1]")
        if not -1.0 < self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in (-1, 1)")


@dataclass(frozen=True)
class BondParams:
    """dS0 = r S0 dt"""
    rate: float
    s0: float = 1.0

    def __post_init__(self):
        if self.s0 <= 0:
            raise InvalidArgumentError("bond initial value must be positive")

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from adapters.gbm_model import GbmModel
from adapters.sabr_model import SabrModel
from interfaces.market_model import IMarketModel
from models.contribution import ContributionProcess, InvestmentResult, PredictableMask
from models.estimate import Estimate
from models.market_params import GbmParams, SabrParams
from models.path_ensemble import PathEnsemble
from models.policy import Policy, StepState
from models.time_grid import TimeGrid
from utils.statistics import Statistics
from exceptions.riskflow_exceptions import (
    InvalidArgumentError, InvalidMaskError, InconsistentPortfolioError, UnsupportedModelError
)


logger = logging.getLogger(__name__)

MANNERS = ('share', 'money', 'weight')
SELF_FINANCING_TOLERANCE = 1e-8


@dataclass(frozen=True)
class ResolvedPolicy:
    """Share table and wealth of a policy on one ensemble"""
    shares: np.ndarray        # (n_paths, n_steps, d)
    wealth: np.ndarray        # (n_paths, n_steps + 1)
    cap_hit_fraction: float


@dataclass(frozen=True)
class CovarianceEstimate:
    """Terminal covariance through contributions, with the two one-sided pairings"""
    symmetric: Estimate       # (E int v c^u + E int u c^v) / 2
    pairing_vu: Estimate      # E int v^T c^u dt
    pairing_uv: Estimate      # E int u^T c^v dt
    direct: Estimate          # sample Cov(X_T^u, X_T^v)


@dataclass(frozen=True)
class ContinuityCheck:
    lhs: float
    bound: float
    constant: float
    sup_norm: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound


PolicyLike = Union[Policy, np.ndarray]
ModelLike = Union[IMarketModel, GbmParams, SabrParams]


class ContributionService:
    """Investment values, terminal variance and marginal risk contributions

    Convention: Var(X_T) = E int u^T c dt, with
    c = 2 mu_S M_t + Sigma_S u - mu_S E[M_T], M = X - x0, mu_S = Diag(S) b.
    """

    @staticmethod
    def as_model(model: ModelLike) -> IMarketModel:
        if isinstance(model, IMarketModel):
            return model
        if isinstance(model, GbmParams):
            return GbmModel(model)
        if isinstance(model, SabrParams):
            return SabrModel(model)
        raise UnsupportedModelError(f"no drift/diffusion coefficients for {type(model).__name__}")

    @staticmethod
    def _cap(shares: np.ndarray, u_max: float) -> Tuple[np.ndarray, float]:
        hits = np.abs(shares) > u_max
        fraction = float(np.mean(hits)) if shares.size else 0.0
        if fraction > 0:
            logger.warning(f"Policy cap {u_max:g} binds on {fraction:.4%} of (path, step, asset) points")
            shares = np.clip(shares, -u_max, u_max)
        return shares, fraction

    @staticmethod
    def wealth_from_shares(shares: np.ndarray, ensemble: PathEnsemble, x0: float) -> np.ndarray:
        """Left-point rule X_{k+1} = X_k + u_k . (S_{k+1} - S_k)"""
        gains = np.einsum('pkd,pkd->pk', shares, ensemble.price_increments)
        wealth = np.empty((ensemble.n_paths, ensemble.grid.n_steps + 1))
        wealth[:, 0] = x0
        np.cumsum(gains, axis=1, out=wealth[:, 1:])
        wealth[:, 1:] += x0
        return wealth

    def resolve_policy(self, policy: PolicyLike, ensemble: PathEnsemble, x0: float = 0.0) -> ResolvedPolicy:
        """Share table, wealth and cap statistics of a policy on an ensemble"""
        n_paths, n_steps = ensemble.n_paths, ensemble.grid.n_steps
        if isinstance(policy, np.ndarray):
            policy = Policy.raw(policy)
        if policy.n_assets != ensemble.n_assets:
            raise InvalidArgumentError(
                f"policy trades {policy.n_assets} assets, ensemble has {ensemble.n_assets}")

        if not policy.is_wealth_dependent:
            shares, fraction = self._cap(policy.table(n_paths, n_steps), policy.u_max)
            return ResolvedPolicy(shares, self.wealth_from_shares(shares, ensemble, x0), fraction)

        shares = np.empty((n_paths, n_steps, policy.n_assets))
        wealth = np.empty((n_paths, n_steps + 1))
        wealth[:, 0] = x0
        increments = ensemble.price_increments
        hits = 0
        for k in range(n_steps):
            state = StepState(k=k, t=float(ensemble.grid.nodes[k]), values=ensemble.values[:, k, :],
                              wealth=wealth[:, k],
                              volatility=None if ensemble.volatility is None else ensemble.volatility[:, k])
            step_shares = np.asarray(policy.shares_at(state), dtype=float)
            if not np.all(np.isfinite(step_shares)):
                raise InvalidArgumentError(f"feedback policy produced non-finite shares at step {k}")
            hits += int(np.sum(np.abs(step_shares) > policy.u_max))
            step_shares = np.clip(step_shares, -policy.u_max, policy.u_max)
            shares[:, k, :] = step_shares
            wealth[:, k + 1] = wealth[:, k] + np.sum(step_shares * increments[:, k, :], axis=1)
        fraction = hits / shares.size
        if fraction > 0:
            logger.warning(f"Policy cap {policy.u_max:g} binds on {fraction:.4%} of points")
        return ResolvedPolicy(shares, wealth, fraction)

    def investment_value(self, policy: PolicyLike, ensemble: PathEnsemble, x0: float = 0.0) -> InvestmentResult:
        resolved = self.resolve_policy(policy, ensemble, x0)
        terminal = resolved.wealth[:, -1]
        return InvestmentResult(wealth=resolved.wealth, shares=resolved.shares,
                                terminal_mean=Statistics.mean_and_stderr(terminal),
                                terminal_variance=Statistics.sample_variance(terminal),
                                cap_hit_fraction=resolved.cap_hit_fraction)

    def terminal_variance(self, policy: PolicyLike, ensemble: PathEnsemble, x0: float = 0.0) -> Estimate:
        return self.investment_value(policy, ensemble, x0).terminal_variance

    def contribution_for_shares(self, shares: np.ndarray, ensemble: PathEnsemble, model: ModelLike,
                                x0: float = 0.0, anchor: Optional[float] = None,
                                form: str = 'centered') -> ContributionProcess:
        """c for a fixed share table; anchor defaults to the sample mean of M_T"""
        model = self.as_model(model)
        wealth = self.wealth_from_shares(shares, ensemble, x0)
        gains = wealth - x0
        if anchor is None:
            anchor = float(np.mean(gains[:, -1]))

        drift = model.price_drift(ensemble)
        diffusion_part = model.covariance_action(ensemble, shares)
        if form == 'centered':
            marginal = 2.0 * drift * gains[:, :-1, None] + diffusion_part - drift * anchor
        elif form == 'printed':
            # 2 Diag(S) b X_t - Diag(S) b (E X_T + x0)
            expected_terminal = anchor + x0
            marginal = 2.0 * drift * wealth[:, :-1, None] + diffusion_part - drift * (expected_terminal + x0)
        else:
            raise InvalidArgumentError(f"Unknown contribution form: {form}")
        return ContributionProcess(shares=shares, marginal=marginal, anchor=anchor)

    def explicit_marginal_contribution(self, policy: PolicyLike, ensemble: PathEnsemble, model: ModelLike,
                                       x0: float = 0.0, form: str = 'centered') -> ContributionProcess:
        """Two-pass c: E[M_T] over the ensemble first, then c per path"""
        if model is None:
            raise UnsupportedModelError("explicit contributions need model coefficients")
        resolved = self.resolve_policy(policy, ensemble, x0)
        return self.contribution_for_shares(resolved.shares, ensemble, model, x0, form=form)

    def centered_equals_printed(self, policy: PolicyLike, ensemble: PathEnsemble, model: ModelLike,
                                x0: float = 0.0, rtol: float = 1e-10) -> bool:
        resolved = self.resolve_policy(policy, ensemble, x0)
        centered = self.contribution_for_shares(resolved.shares, ensemble, model, x0)
        printed = self.contribution_for_shares(resolved.shares, ensemble, model, x0, form='printed')
        gap = float(np.max(np.abs(centered.marginal - printed.marginal)))
        scale = max(1.0, float(np.max(np.abs(centered.marginal))))
        if gap > rtol * scale:
            logger.warning(f"centered and printed contributions differ by {gap:.3e}")
            return False
        return True

    @staticmethod
    def money_manner_risk(money, wealth, drift, covariance, expected_terminal: float, x0: float):
        """k_i = 2 M_i b_i X - M_i b_i (E X_T + x0) + M_i (sigma sigma^T M)_i

        Plain arithmetic per asset, so entries may be arrays or numpy polynomials in X.
        """
        d = len(drift)
        risk = []
        for i in range(d):
            cross = sum(covariance[i][j] * money[j] for j in range(d))
            risk.append(2.0 * money[i] * drift[i] * wealth
                        - money[i] * drift[i] * (expected_terminal + x0)
                        + money[i] * cross)
        return risk

    @staticmethod
    def weight_manner_risk(weights, wealth, drift, covariance, expected_terminal: float, x0: float):
        """k_i = 2 w_i b_i X^2 - w_i b_i X (E X_T + x0) + X^2 w_i (sigma sigma^T w)_i"""
        d = len(drift)
        risk = []
        for i in range(d):
            cross = sum(covariance[i][j] * weights[j] for j in range(d))
            risk.append(2.0 * weights[i] * drift[i] * wealth * wealth
                        - weights[i] * drift[i] * wealth * (expected_terminal + x0)
                        + wealth * wealth * weights[i] * cross)
        return risk

    def risk_contribution_variants(self, policy: PolicyLike, ensemble: PathEnsemble, model: ModelLike,
                                   x0: float = 0.0, manner: str = 'share') -> ContributionProcess:
        """Risk contribution k in share, money (M = u S) or weight (w = M / X) manner"""
        if manner not in MANNERS:
            raise InvalidArgumentError(f"manner must be one of {MANNERS}")
        model = self.as_model(model)
        resolved = self.resolve_policy(policy, ensemble, x0)
        share_view = self.contribution_for_shares(resolved.shares, ensemble, model, x0)
        if manner == 'share':
            return share_view
        if not isinstance(model, GbmModel):
            raise UnsupportedModelError("money and weight manners need constant drift and diffusion")

        prices = ensemble.left_values
        wealth = resolved.wealth[:, :-1]
        money = resolved.shares * prices
        position = np.sum(money, axis=2)
        gap = np.max(np.abs(wealth - position) / np.maximum(1.0, np.abs(wealth)))
        if gap > SELF_FINANCING_TOLERANCE:
            raise InconsistentPortfolioError(
                f"wealth differs from the position value by {gap:.3e} (relative); not self-financing")

        params = model.params
        expected_terminal = share_view.anchor + x0
        money_cols = [money[:, :, i] for i in range(ensemble.n_assets)]
        if manner == 'money':
            risk = self.money_manner_risk(money_cols, wealth, params.drift, params.covariance,
                                          expected_terminal, x0)
        else:
            if np.any(wealth == 0):
                raise InconsistentPortfolioError("weights are undefined where wealth is zero")
            weight_cols = [m / wealth for m in money_cols]
            risk = self.weight_manner_risk(weight_cols, wealth, params.drift, params.covariance,
                                           expected_terminal, x0)
        risk = np.stack(risk, axis=2)
        with np.errstate(divide='ignore', invalid='ignore'):
            marginal = np.where(resolved.shares != 0, risk / resolved.shares, share_view.marginal)
        return ContributionProcess(shares=resolved.shares, marginal=marginal, anchor=share_view.anchor)

    @staticmethod
    def aggregate_risk(contribution: ContributionProcess, grid: TimeGrid,
                       shares: Optional[np.ndarray] = None) -> Estimate:
        """E sum_k u(t_k)^T c(t_k) dt; other shares pair v with c^u"""
        pairing = contribution.shares if shares is None else shares
        per_path = np.sum(pairing * contribution.marginal, axis=(1, 2)) * grid.dt
        return Statistics.mean_and_stderr(per_path)

    @staticmethod
    def marginal_measure(contribution: ContributionProcess, mask: PredictableMask, grid: TimeGrid) -> np.ndarray:
        """E int 1_E (.) c dt per asset"""
        if not mask.audited:
            raise InvalidMaskError("mask has not passed the predictability audit")
        indicator = mask.indicator
        if indicator.shape[:2] != contribution.marginal.shape[:2]:
            raise InvalidArgumentError("mask shape does not match the contribution")
        masked = np.broadcast_to(indicator, contribution.marginal.shape) * contribution.marginal
        return np.sum(masked, axis=(0, 1)) * grid.dt / contribution.marginal.shape[0]

    def gateaux_oracle(self, u: PolicyLike, v: PolicyLike, ensemble: PathEnsemble, x0: float = 0.0,
                       h: Optional[float] = None) -> float:
        """[Var(X^{u+hv}) - Var(X^{u-hv})] / (2h) on common random numbers"""
        shares_u = self.resolve_policy(u, ensemble, x0).shares
        shares_v = self.resolve_policy(v, ensemble, x0).shares
        if h is None:
            scale = float(np.max(np.abs(shares_u)))
            h = 1e-4 * (scale if scale > 0 else 1.0)
        if not h > 0:
            raise InvalidArgumentError("bump h must be positive")
        dS = ensemble.price_increments
        gains_u = np.einsum('pkd,pkd->p', shares_u, dS)
        gains_v = np.einsum('pkd,pkd->p', shares_v, dS)
        up = np.var(gains_u + h * gains_v, ddof=1)
        down = np.var(gains_u - h * gains_v, ddof=1)
        return float((up - down) / (2.0 * h))

    def covariance_via_contribution(self, u: PolicyLike, v: PolicyLike, ensemble: PathEnsemble,
                                    model: ModelLike, x0: float = 0.0) -> CovarianceEstimate:
        """Cov(X_T^u, X_T^v) = (E int v^T c^u dt + E int u^T c^v dt) / 2"""
        resolved_u = self.resolve_policy(u, ensemble, x0)
        resolved_v = self.resolve_policy(v, ensemble, x0)
        c_u = self.contribution_for_shares(resolved_u.shares, ensemble, model, x0)
        c_v = self.contribution_for_shares(resolved_v.shares, ensemble, model, x0)
        dt = ensemble.grid.dt
        vu = np.sum(resolved_v.shares * c_u.marginal, axis=(1, 2)) * dt
        uv = np.sum(resolved_u.shares * c_v.marginal, axis=(1, 2)) * dt
        return CovarianceEstimate(
            symmetric=Statistics.mean_and_stderr(0.5 * (vu + uv)),
            pairing_vu=Statistics.mean_and_stderr(vu),
            pairing_uv=Statistics.mean_and_stderr(uv),
            direct=Statistics.sample_covariance(resolved_u.wealth[:, -1], resolved_v.wealth[:, -1]))

    def cross_gateaux(self, u: PolicyLike, ensemble: PathEnsemble, model: ModelLike,
                      source_asset: int, target_asset: int, mask: PredictableMask,
                      x0: float = 0.0) -> float:
        """Part of the marginal measure of asset target_asset on E generated by holding source_asset"""
        shares = self.resolve_policy(u, ensemble, x0).shares
        if not 0 <= source_asset < shares.shape[2] or not 0 <= target_asset < shares.shape[2]:
            raise InvalidArgumentError("asset index out of range")
        restricted = np.zeros_like(shares)
        restricted[:, :, source_asset] = shares[:, :, source_asset]
        contribution = self.contribution_for_shares(restricted, ensemble, model, x0)
        return float(self.marginal_measure(contribution, mask, ensemble.grid)[target_asset])

    def contribution_continuity_check(self, u: PolicyLike, u_perturbed: PolicyLike, ensemble: PathEnsemble,
                                      model: ModelLike, mask: PredictableMask,
                                      x0: float = 0.0) -> ContinuityCheck:
        """|E int 1_E^T c^{du} dt| against K ||du||_inf with K evaluated on the ensemble"""
        model = self.as_model(model)
        delta = self.resolve_policy(u, ensemble, x0).shares - self.resolve_policy(u_perturbed, ensemble, x0).shares
        contribution = self.contribution_for_shares(delta, ensemble, model, x0)
        lhs = abs(float(np.sum(self.marginal_measure(contribution, mask, ensemble.grid))))

        indicator = np.broadcast_to(mask.indicator, delta.shape)
        dt = ensemble.grid.dt
        # |M_t| <= ||du|| * (total variation of S up to t)
        variation = np.zeros((ensemble.n_paths, ensemble.grid.n_steps))
        np.cumsum(np.sum(np.abs(ensemble.price_increments), axis=2)[:, :-1], axis=1, out=variation[:, 1:])
        drift = model.price_drift(ensemble)
        drift_mass = np.abs(np.sum(indicator * drift, axis=2))
        cov_mass = np.zeros_like(drift_mass)
        for k in range(ensemble.grid.n_steps):
            local = np.abs(model.local_covariance_at(ensemble, k))
            cov_mass[:, k] = np.einsum('pi,pij->p', indicator[:, k, :], local)
        mean_variation = float(np.mean(np.sum(np.abs(ensemble.price_increments), axis=(1, 2))))
        constant = float(np.mean(np.sum(2.0 * drift_mass * variation + cov_mass
                                        + drift_mass * mean_variation, axis=1)) * dt)
        sup_norm = float(np.max(np.abs(delta))) if delta.size else 0.0
        return ContinuityCheck(lhs=lhs, bound=constant * sup_norm, constant=constant, sup_norm=sup_norm)

import logging
import math
from typing import Optional

import numpy as np

from adapters.sabr_model import SabrModel
from models.contribution import ContributionProcess
from models.market_params import SabrParams
from models.path_ensemble import PathEnsemble
from models.policy import Policy, DEFAULT_U_MAX
from models.strategy import SabrPolicyCase
from services.contribution_service import ContributionService, PolicyLike
from utils.cell_partition import CellPartitioner
from utils.random_streams import RandomStreams, CHUNK_PATHS
from exceptions.riskflow_exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)

PROJECTION_METHODS = ('nested', 'bins')
DEFAULT_REPLICAS = 32
DEFAULT_PROJECTION_BINS = 64
REPLICA_STREAM = 1


class SabrStrategyService:
    """Risk-level-lambda policies on a SABR forward under four information restrictions"""

    def __init__(self, contribution_service: Optional[ContributionService] = None,
                 max_workers: Optional[int] = None):
        self.contributions = contribution_service or ContributionService()
        self.max_workers = max_workers

    def sabr_marginal(self, policy: PolicyLike, ensemble: PathEnsemble, params: SabrParams) -> ContributionProcess:
        """c = u sigma^2 F^{2 beta}, zero on absorbed paths"""
        model = SabrModel(params)
        shares = self.contributions.resolve_policy(policy, ensemble).shares
        return self.contributions.contribution_for_shares(shares, ensemble, model)

    def projected_forward(self, params: SabrParams, ensemble: PathEnsemble, method: str = 'nested',
                          n_replicas: int = DEFAULT_REPLICAS, n_bins: int = DEFAULT_PROJECTION_BINS) -> np.ndarray:
        """E[F_t | B1 path] per (path, node)"""
        if method not in PROJECTION_METHODS:
            raise InvalidArgumentError(f"projection method must be one of {PROJECTION_METHODS}")
        grid = ensemble.grid
        if method == 'bins':
            b1 = ensemble.cumulative_driver(0)
            forward = ensemble.values[:, :, 0]
            projected = np.empty_like(forward)
            bins = min(n_bins, ensemble.n_paths)
            for k in range(grid.n_steps + 1):
                labels = CellPartitioner.quantile_bins(b1[:, k], bins)
                sums = np.bincount(labels, weights=forward[:, k], minlength=bins)
                counts = np.bincount(labels, minlength=bins)
                projected[:, k] = sums[labels] / counts[labels]
            return projected

        if ensemble.seed is None:
            raise InvalidArgumentError("nested projection needs a seeded ensemble")
        model = SabrModel(params)
        replicas = RandomStreams.ensemble_replicas(ensemble.seed, ensemble.n_paths, n_replicas, grid.n_steps,
                                                   grid.dt, REPLICA_STREAM, self.max_workers)
        projected = np.empty((ensemble.n_paths, grid.n_steps + 1))
        db1 = ensemble.increments[:, :, 0]
        for start in range(0, ensemble.n_paths, CHUNK_PATHS):
            stop = min(start + CHUNK_PATHS, ensemble.n_paths)
            chunk_b1 = np.broadcast_to(db1[start:stop], (n_replicas, stop - start, grid.n_steps))
            vol = model.volatility_path(grid, replicas[:, start:stop, :])
            forward, _ = model.forward_path(grid, chunk_b1, vol)
            projected[start:stop] = np.mean(forward, axis=0)
        return projected

    def sabr_policy(self, case: SabrPolicyCase, params: SabrParams, ensemble: PathEnsemble,
                    method: str = 'nested', n_replicas: int = DEFAULT_REPLICAS,
                    n_bins: int = DEFAULT_PROJECTION_BINS, u_max: float = DEFAULT_U_MAX,
                    normalize: bool = False) -> Policy:
        """Policy of one information case at risk level lambda

        h_projection follows sqrt(lambda / T) / (s Fbar^beta), whose total risk only approximates
        lambda; normalize=True rescales it to carry exactly lambda on the ensemble.
        """
        if params.rho != 0.0:
            raise InvalidArgumentError("the SABR policy cases assume rho = 0")
        level = case.risk_level
        horizon = ensemble.grid.horizon
        forward = ensemble.values[:, :-1, 0]
        alive = forward > 0.0
        scale = math.sqrt(level / horizon)
        model = SabrModel(params)

        if case.case == 'parity':
            sigma = ensemble.volatility[:, :-1]
            shares = np.where(alive, scale / (sigma * np.power(np.where(alive, forward, 1.0), params.beta_exp)), 0.0)
            return Policy.raw(shares[:, :, None], u_max=u_max, name='parity')

        if case.case == 'h_projection':
            projected = self.projected_forward(params, ensemble, method, n_replicas, n_bins)[:, :-1]
            usable = alive & (projected > 0.0)
            shares = np.where(usable, scale / (params.s * np.power(np.where(usable, projected, 1.0),
                                                                    params.beta_exp)), 0.0)
            risk = float(np.mean(np.sum(shares ** 2 * model.local_variance(ensemble), axis=1))) * ensemble.grid.dt
            logger.info(f"h_projection policy carries risk {risk:.6g} against the level {level:g}")
            if not normalize:
                return Policy.raw(shares[:, :, None], u_max=u_max, name='h_projection')
            if risk <= 0:
                raise InvalidArgumentError("h_projection policy carries no risk to normalize")
            shares = shares * math.sqrt(level / risk)
            return Policy.raw(shares[:, :, None], u_max=u_max, name='h_projection_normalized')

        if case.case == 'deterministic':
            expected = np.mean(model.local_variance(ensemble), axis=0)
            if np.any(expected <= 0):
                raise InvalidArgumentError("forward is absorbed on every path at some node")
            return Policy.deterministic(scale / np.sqrt(expected), u_max=u_max, name='deterministic')

        terminal = ensemble.values[:, -1, 0]
        variance = float(np.var(terminal, ddof=1))
        if variance <= 0:
            raise InvalidArgumentError("terminal forward has no variance")
        return Policy.constant(math.sqrt(level / variance), u_max=u_max, name='single_period')

    @staticmethod
    def contribution_dispersion(contribution: ContributionProcess) -> float:
        """Variance of u * c over all (path, step) points"""
        return float(np.var(np.sum(contribution.risk, axis=2)))

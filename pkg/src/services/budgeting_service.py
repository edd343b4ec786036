import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from interfaces.market_model import IMarketModel
from models.budget import BudgetProcess, BudgetSolution, InformationClass
from models.contribution import ContributionProcess
from models.path_ensemble import PathEnsemble
from models.policy import Policy, DEFAULT_U_MAX
from services.contribution_service import ContributionService, ModelLike, PolicyLike
from services.market_service import MarketService
from utils.cell_partition import CellPartition, CellPartitioner
from utils.statistics import Statistics
from exceptions.riskflow_exceptions import (
    InvalidArgumentError, DegenerateMarketError, ConvergenceError
)


logger = logging.getLogger(__name__)

POINTWISE_TOLERANCE = 1e-10
ITERATIVE_TOLERANCE = 1e-8
MAX_ITERATIONS = 200
EMBEDDING_TOLERANCE = 1e-6
EMBEDDING_MAX_ITERATIONS = 50
SOLVER_VARIANCE_WEIGHT = 0.5
STARTS = ('scaled', 'uniform')


@dataclass
class SolverOptions:
    tolerance: float = ITERATIVE_TOLERANCE
    max_iterations: int = MAX_ITERATIONS
    start: Union[str, np.ndarray] = 'scaled'
    u_max: float = DEFAULT_U_MAX
    check_degenerate: bool = True


@dataclass
class EmbeddingOptions:
    tolerance: float = EMBEDDING_TOLERANCE
    max_iterations: int = EMBEDDING_MAX_ITERATIONS
    damping: float = 1.0
    gamma0: float = 0.0


class BudgetingService:
    """Inverse risk budgeting: find u > 0 with u * c^u = beta

    Solutions are computed on the cells of an information class; the solvers minimize
    E int -sum beta log u dt + Var(X_T) / 2, whose first-order condition is u * c = beta.
    """

    def __init__(self, contribution_service: Optional[ContributionService] = None):
        self.contributions = contribution_service or ContributionService()

    # ---- pointwise (zero drift) -------------------------------------------------

    def solve_budget_pointwise(self, model: ModelLike, ensemble: PathEnsemble, budget: BudgetProcess,
                               u_max: float = DEFAULT_U_MAX) -> BudgetSolution:
        """Solve u * (Sigma_S u) = beta at every (path, step); only valid without drift"""
        model = self.contributions.as_model(model)
        if np.any(model.price_drift(ensemble) != 0.0):
            raise InvalidArgumentError("pointwise budgeting needs a driftless model")
        beta = budget.evaluate(ensemble)
        n_paths, n_steps, d = beta.shape
        if d != ensemble.n_assets:
            raise InvalidArgumentError(f"budget has {d} assets, ensemble has {ensemble.n_assets}")

        shares = np.empty_like(beta)
        absorbed = np.zeros(beta.shape, dtype=bool)
        for k in range(n_steps):
            local = model.local_covariance_at(ensemble, k)
            dead = (np.einsum('pii->pi', local) <= 0.0) & (ensemble.values[:, k, :] <= 0.0)
            absorbed[:, k, :] = dead
            if np.any(dead):
                # decouple absorbed assets so the live block is solved on its own
                local = np.where(dead[:, :, None] | dead[:, None, :], 0.0, local)
                local[:, np.arange(d), np.arange(d)] += dead
            shares[:, k, :] = np.where(dead, 0.0, self._pointwise_step(local, beta[:, k, :], k))
        absorbed_fraction = float(np.mean(absorbed))
        if absorbed_fraction > 0:
            logger.info(f"Pointwise budget: zero shares on {absorbed_fraction:.4%} of absorbed points")

        capped = np.abs(shares) > u_max
        cap_hit_fraction = float(np.mean(capped))
        if cap_hit_fraction > 0:
            logger.warning(f"Budget policy exceeds the cap {u_max:g} on {cap_hit_fraction:.4%} of points")
        policy = Policy.raw(np.clip(shares, -u_max, u_max), u_max=u_max, name='pointwise')

        contribution = self.contributions.contribution_for_shares(policy.data, ensemble, model)
        error = np.where(capped | absorbed, 0.0, contribution.risk - beta)
        residual_max = float(np.max(np.abs(error)))
        residual_l2 = float(np.sqrt(np.mean(np.sum(error ** 2, axis=2))))
        converged = residual_max <= POINTWISE_TOLERANCE * max(1.0, float(np.max(beta)))
        logger.info(f"Pointwise budget solve: residual {residual_max:.3e}")
        return BudgetSolution(policy=policy, cell_values=policy.data, residual_max=residual_max,
                              residual_l2=residual_l2,
                              objective=self.objective(policy.data, ensemble, np.where(absorbed, 0.0, beta),
                                                       SOLVER_VARIANCE_WEIGHT),
                              iterations=1, converged=converged, info_class=InformationClass('full'),
                              contribution=contribution, cap_hit_fraction=cap_hit_fraction)

    @staticmethod
    def _pointwise_step(local: np.ndarray, beta: np.ndarray, k: int) -> np.ndarray:
        """Batched Newton for u * (L u) = beta with one (d, d) matrix L per path"""
        diag = np.einsum('pii->pi', local)
        if np.any(diag <= 0.0):
            raise DegenerateMarketError(f"local covariance is singular at step {k}")
        d = beta.shape[1]
        u = np.sqrt(beta / diag)
        if d == 1:
            return u
        if np.any(np.linalg.eigvalsh(local)[:, 0] <= 1e-14 * np.max(diag, axis=1)):
            raise DegenerateMarketError(f"local covariance is singular at step {k}")

        for _ in range(100):
            action = np.einsum('pij,pj->pi', local, u)
            residual = u * action - beta
            if np.max(np.abs(residual)) <= POINTWISE_TOLERANCE * 1e-2 * max(1.0, float(np.max(beta))):
                break
            jacobian = local * u[:, :, None]
            jacobian[:, np.arange(d), np.arange(d)] += action
            step = -np.linalg.solve(jacobian, residual[:, :, None])[:, :, 0]
            ratio = np.where(step < 0, -u / np.where(step < 0, step, -1.0), np.inf)
            alpha = np.minimum(1.0, 0.99 * np.min(ratio, axis=1))
            u = u + alpha[:, None] * step
        return u

    # ---- class-restricted solver ----------------------------------------------

    def _cell_covariance(self, model: IMarketModel, ensemble: PathEnsemble,
                         partition: CellPartition) -> np.ndarray:
        """Cell average of Sigma_S, shape (n_cells, d, d)"""
        d = ensemble.n_assets
        total = np.zeros((partition.n_cells, d, d))
        for k in range(ensemble.grid.n_steps):
            local = model.local_covariance_at(ensemble, k)
            cells = partition.cells[:, k]
            for i in range(d):
                for j in range(d):
                    total[:, i, j] += np.bincount(cells, weights=local[:, i, j], minlength=partition.n_cells)
        return total / partition.counts[:, None, None]

    def _start(self, start, beta_bar: np.ndarray, cell_cov: np.ndarray) -> np.ndarray:
        diag = np.einsum('cii->ci', cell_cov)
        if isinstance(start, np.ndarray):
            u = np.broadcast_to(np.asarray(start, dtype=float), beta_bar.shape).copy()
        elif start == 'scaled':
            u = np.sqrt(beta_bar / np.maximum(diag, 1e-300))
        elif start == 'uniform':
            level = np.sqrt(np.mean(beta_bar, axis=0) / np.maximum(np.mean(diag, axis=0), 1e-300))
            u = np.broadcast_to(level, beta_bar.shape).copy()
        else:
            raise InvalidArgumentError(f"start must be one of {STARTS} or an array")
        if np.any(~np.isfinite(u)) or np.any(u <= 0):
            raise InvalidArgumentError("start point must be finite and strictly positive")
        return u

    def _newton_krylov(self, cell_marginal: Callable[[np.ndarray], np.ndarray],
                       cell_marginal_linear: Callable[[np.ndarray], np.ndarray],
                       beta_bar: np.ndarray, cell_cov: np.ndarray, u: np.ndarray,
                       options: SolverOptions) -> Tuple[np.ndarray, float, int]:
        """Solve g(u) = cellavg(c^u) - beta_bar / u = 0 keeping u > 0"""
        shape = beta_bar.shape
        n = beta_bar.size
        scale = float(np.max(beta_bar))

        def relative(u_cells: np.ndarray, g: np.ndarray) -> float:
            return float(np.max(np.abs(u_cells * g))) / scale

        def residual_of(u_cells: np.ndarray) -> np.ndarray:
            return cell_marginal(u_cells) - beta_bar / u_cells

        g = residual_of(u)
        rel = relative(u, g)
        iterations = 0
        while rel > options.tolerance:
            if iterations >= options.max_iterations:
                raise ConvergenceError("budget solver reached its iteration cap", rel, iterations, u)
            iterations += 1
            barrier = beta_bar / u ** 2
            blocks = cell_cov.copy()
            idx = np.arange(shape[1])
            blocks[:, idx, idx] += barrier

            def jvp(v_flat, barrier=barrier):
                v = v_flat.reshape(shape)
                return (cell_marginal_linear(v) + barrier * v).ravel()

            def precondition(r_flat, blocks=blocks):
                r = r_flat.reshape(shape)
                return np.linalg.solve(blocks, r[:, :, None])[:, :, 0].ravel()

            jacobian = LinearOperator((n, n), matvec=jvp, dtype=float)
            preconditioner = LinearOperator((n, n), matvec=precondition, dtype=float)
            step, info = gmres(jacobian, -g.ravel(), rtol=max(1e-12, min(1e-2, 0.1 * rel)), atol=0.0,
                               restart=50, maxiter=20, M=preconditioner)
            if info < 0:
                raise ConvergenceError("linear solve failed inside the budget solver", rel, iterations, u)
            step = step.reshape(shape)

            # fraction to the boundary keeps u > 0
            shrinking = step < 0
            alpha = min(1.0, 0.99 * float(np.min(-u[shrinking] / step[shrinking]))) if np.any(shrinking) else 1.0
            merit = float(np.linalg.norm(u * g))
            while True:
                trial = u + alpha * step
                g_trial = residual_of(trial)
                if float(np.linalg.norm(trial * g_trial)) <= (1.0 - 1e-4 * alpha) * merit or alpha < 1e-8:
                    break
                alpha *= 0.5
            u, g = trial, g_trial
            rel = relative(u, g)
            logger.debug(f"newton-krylov iteration {iterations}: relative residual {rel:.3e}, "
                         f"step {alpha:.3g}, gmres info {info}")
        return u, rel, iterations

    def _prepare(self, model: ModelLike, ensemble: PathEnsemble, budget: BudgetProcess,
                 info_class: InformationClass, options: SolverOptions):
        model = self.contributions.as_model(model)
        if budget.n_assets != ensemble.n_assets:
            raise InvalidArgumentError(f"budget has {budget.n_assets} assets, ensemble has {ensemble.n_assets}")
        if options.check_degenerate:
            MarketService.ensure_non_degenerate(ensemble)
        beta = budget.evaluate(ensemble)
        partition = CellPartitioner.partition(info_class, ensemble)
        beta_bar = CellPartitioner.cell_average(partition, beta)
        cell_cov = self._cell_covariance(model, ensemble, partition)
        return model, beta, partition, beta_bar, cell_cov

    def _cell_marginal(self, model, ensemble, partition, anchor_fn):
        def apply(u_cells: np.ndarray) -> np.ndarray:
            shares = CellPartitioner.broadcast(partition, u_cells)
            contribution = self.contributions.contribution_for_shares(
                shares, ensemble, model, anchor=anchor_fn(shares))
            return CellPartitioner.cell_average(partition, contribution.marginal)
        return apply

    @staticmethod
    def _policy_from_cells(info_class: InformationClass, partition: CellPartition,
                           u_cells: np.ndarray, u_max: float) -> Policy:
        if info_class.kind == 'constant':
            return Policy.constant(u_cells[0], u_max=u_max, name='budget')
        if info_class.kind == 'deterministic':
            return Policy.deterministic(u_cells, u_max=u_max, name='budget')
        return Policy.raw(CellPartitioner.broadcast(partition, u_cells), u_max=u_max, name='budget')

    def _solution(self, model, ensemble, beta, partition, info_class, u_cells, iterations,
                  options: SolverOptions, gamma: Optional[float] = None,
                  converged: Optional[bool] = None) -> BudgetSolution:
        policy = self._policy_from_cells(info_class, partition, u_cells, options.u_max)
        shares = CellPartitioner.broadcast(partition, u_cells)
        cap_hit_fraction = float(np.mean(np.abs(shares) > options.u_max))
        contribution = self.contributions.contribution_for_shares(shares, ensemble, model)
        residual_max, residual_l2 = self._norms(contribution, beta, partition)
        scale = float(np.max(CellPartitioner.cell_average(partition, beta)))
        return BudgetSolution(policy=policy, cell_values=u_cells, residual_max=residual_max,
                              residual_l2=residual_l2,
                              objective=self.objective(shares, ensemble, beta, SOLVER_VARIANCE_WEIGHT),
                              iterations=iterations,
                              converged=(residual_max <= options.tolerance * scale * (1.0 + 1e-6)
                                         if converged is None else converged),
                              info_class=info_class, contribution=contribution, gamma=gamma,
                              cap_hit_fraction=cap_hit_fraction)

    def solve_budget_iterative(self, model: ModelLike, ensemble: PathEnsemble, budget: BudgetProcess,
                               info_class: InformationClass,
                               options: Optional[SolverOptions] = None) -> BudgetSolution:
        """Newton-Krylov on the class-averaged first-order condition"""
        options = options or SolverOptions()
        model, beta, partition, beta_bar, cell_cov = self._prepare(model, ensemble, budget, info_class, options)
        logger.info(f"Solving budget '{budget.name}' on {partition.n_cells} cells of {info_class.describe()}")

        u0 = self._start(options.start, beta_bar, cell_cov)
        full = self._cell_marginal(model, ensemble, partition, lambda shares: None)
        u_cells, rel, iterations = self._newton_krylov(full, full, beta_bar, cell_cov, u0, options)
        logger.info(f"Budget solve converged in {iterations} iterations (relative residual {rel:.3e})")
        return self._solution(model, ensemble, beta, partition, info_class, u_cells, iterations, options)

    def embedding_search(self, model: ModelLike, ensemble: PathEnsemble, budget: BudgetProcess,
                         info_class: Optional[InformationClass] = None,
                         options: Optional[SolverOptions] = None,
                         embedding: Optional[EmbeddingOptions] = None) -> Tuple[float, BudgetSolution]:
        """Fixed point gamma = -2 E[M_T] of the auxiliary problems with c_gamma = 2 mu M + Sigma u + mu gamma / 2"""
        info_class = info_class or InformationClass('deterministic')
        options = options or SolverOptions()
        embedding = embedding or EmbeddingOptions()
        if not 0.0 < embedding.damping <= 1.0:
            raise InvalidArgumentError("damping must lie in (0, 1]")
        model, beta, partition, beta_bar, cell_cov = self._prepare(model, ensemble, budget, info_class, options)

        linear = self._cell_marginal(model, ensemble, partition, lambda shares: 0.0)
        u_cells = self._start(options.start, beta_bar, cell_cov)
        gamma = embedding.gamma0
        total_iterations = 0
        for outer in range(1, embedding.max_iterations + 1):
            anchored = self._cell_marginal(model, ensemble, partition, lambda shares, g=gamma: -0.5 * g)
            u_cells, _, inner = self._newton_krylov(anchored, linear, beta_bar, cell_cov, u_cells, options)
            total_iterations += inner
            shares = CellPartitioner.broadcast(partition, u_cells)
            terminal_gain = float(np.mean(np.einsum('pkd,pkd->p', shares, ensemble.price_increments)))
            updated = (1.0 - embedding.damping) * gamma + embedding.damping * (-2.0 * terminal_gain)
            change = abs(updated - gamma)
            gamma = updated
            logger.debug(f"embedding iteration {outer}: gamma {gamma:.10g}, change {change:.3e}")
            if change <= embedding.tolerance:
                logger.info(f"Embedding fixed point gamma* = {gamma:.8g} after {outer} outer iterations")
                return gamma, self._solution(model, ensemble, beta, partition, info_class, u_cells,
                                             total_iterations, options, gamma=gamma,
                                             converged=True)
        raise ConvergenceError("embedding fixed point did not converge", change, embedding.max_iterations, gamma)

    # ---- diagnostics ---------------------------------------------------------------

    @staticmethod
    def _norms(contribution: ContributionProcess, beta: np.ndarray, partition: CellPartition):
        diff = (CellPartitioner.cell_average(partition, contribution.risk)
                - CellPartitioner.cell_average(partition, beta))
        residual_max = float(np.max(np.abs(diff)))
        residual_l2 = float(np.sqrt(np.sum(partition.weights[:, None] * diff ** 2)))
        return residual_max, residual_l2

    def budget_residual(self, contribution: ContributionProcess, budget: BudgetProcess,
                        info_class: InformationClass, ensemble: PathEnsemble) -> Tuple[float, float]:
        """Max and L2 norms of the class-averaged u * c - beta over (cell, asset)"""
        beta = budget.evaluate(ensemble)
        if beta.shape != contribution.marginal.shape:
            raise InvalidArgumentError(f"budget shape {beta.shape} does not match {contribution.marginal.shape}")
        return self._norms(contribution, beta, CellPartitioner.partition(info_class, ensemble))

    @staticmethod
    def project_budget(budget: BudgetProcess, from_class: InformationClass, to_class: InformationClass,
                       ensemble: PathEnsemble) -> BudgetProcess:
        """Conditional average of beta over the cells of a coarser class"""
        if not to_class.is_coarser_or_equal(from_class):
            raise InvalidArgumentError(
                f"cannot project from {from_class.describe()} onto the finer {to_class.describe()}")
        partition = CellPartitioner.partition(to_class, ensemble)
        averaged = CellPartitioner.cell_average(partition, budget.evaluate(ensemble))
        name = f"{budget.name}|{to_class.describe()}"
        if to_class.kind == 'constant':
            return BudgetProcess.constant(averaged[0], name=name)
        if to_class.kind == 'deterministic':
            return BudgetProcess.deterministic(averaged, name=name)
        return BudgetProcess.raw(CellPartitioner.broadcast(partition, averaged), name=name)

    def _shares(self, policy, ensemble: PathEnsemble) -> np.ndarray:
        if isinstance(policy, np.ndarray) and policy.ndim == 3:
            return policy
        return self.contributions.resolve_policy(policy, ensemble).shares

    @staticmethod
    def _beta(budget, ensemble: PathEnsemble) -> np.ndarray:
        return budget.evaluate(ensemble) if isinstance(budget, BudgetProcess) else np.asarray(budget, dtype=float)

    @staticmethod
    def _log_barrier(shares: np.ndarray, beta: np.ndarray, dt: float) -> np.ndarray:
        """-int sum beta log u dt per path; points with beta = 0 carry no barrier"""
        charged = beta > 0
        if np.any(shares[charged] <= 0):
            raise InvalidArgumentError("the log objective needs strictly positive shares")
        logs = np.log(np.where(charged, shares, 1.0))
        return -np.sum(beta * logs, axis=(1, 2)) * dt

    def auxiliary_objective(self, policy: PolicyLike, gamma: float, ensemble: PathEnsemble, budget,
                            variance_weight: float = 1.0) -> float:
        """E[int -sum beta log u dt + w (gamma M_T + M_T^2)]"""
        shares = self._shares(policy, ensemble)
        beta = self._beta(budget, ensemble)
        terminal = np.einsum('pkd,pkd->p', shares, ensemble.price_increments)
        barrier = self._log_barrier(shares, beta, ensemble.grid.dt)
        return float(np.mean(barrier + variance_weight * (gamma * terminal + terminal ** 2)))

    def objective(self, policy: PolicyLike, ensemble: PathEnsemble, budget,
                  variance_weight: float = 1.0) -> float:
        """E int -sum beta log u dt + w Var(M_T)"""
        shares = self._shares(policy, ensemble)
        beta = self._beta(budget, ensemble)
        terminal = np.einsum('pkd,pkd->p', shares, ensemble.price_increments)
        barrier = self._log_barrier(shares, beta, ensemble.grid.dt)
        return float(np.mean(barrier) + variance_weight * np.var(terminal, ddof=1))

    def kl_divergence(self, budget, policy: PolicyLike, ensemble: PathEnsemble,
                      normalized: bool = False) -> float:
        """sum_i E int (beta_i log beta_i - beta_i log u_i) dt, plus E int sum (u - beta) dt if normalized"""
        shares = self._shares(policy, ensemble)
        beta = self._beta(budget, ensemble)
        if np.any(shares <= 0) or np.any(beta <= 0):
            raise InvalidArgumentError("divergence needs strictly positive policy and budget")
        integrand = beta * (np.log(beta) - np.log(shares))
        if normalized:
            integrand = integrand + shares - beta
        return float(np.mean(Statistics.path_integral(np.sum(integrand, axis=2), ensemble.grid.dt)))

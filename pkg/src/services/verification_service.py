import logging
import math
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from adapters.gbm_model import GbmModel
from adapters.sabr_model import SabrModel
from models.budget import BudgetProcess, InformationClass
from models.market_params import GbmParams, SabrParams, SinglePeriodMarket
from models.policy import Policy
from models.strategy import MvParams, SabrPolicyCase, VolManagedSpec, SABR_CASES
from models.run_config import DEFAULT_PATHS
from models.time_grid import make_time_grid, DEFAULT_STEPS_PER_YEAR
from services.budgeting_service import BudgetingService
from services.contribution_service import ContributionService
from services.market_service import MarketService
from services.mean_variance_service import MeanVarianceService
from services.sabr_strategy_service import SabrStrategyService
from services.single_period_service import SinglePeriodService
from services.vol_managed_service import VolManagedService, FactorMarketParams
from utils.random_streams import RandomStreams
from utils.statistics import Statistics
from exceptions.riskflow_exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)

SUITES = ('core', 'single_period', 'contribution', 'budgeting', 'strategies')
DEFAULT_SEED = 20240601
EXAMPLE_COVARIANCE = [[0.0900, 0.0480, 0.0225],
                      [0.0480, 0.0400, 0.0090],
                      [0.0225, 0.0090, 0.0225]]


def _within(a: float, b: float, stderr: float, n_stderr: float = 3.0) -> bool:
    return abs(a - b) <= n_stderr * stderr


class VerificationService:
    """Acceptance checks grouped in suites; each check returns a JSON-ready record"""

    def __init__(self, seed: Optional[int] = None, n_paths: int = DEFAULT_PATHS,
                 n_steps: int = DEFAULT_STEPS_PER_YEAR,
                 convention_factor: float = 1.0, max_workers: Optional[int] = None):
        self.seed = DEFAULT_SEED if seed is None else int(seed)
        self.n_paths = n_paths
        self.n_steps = n_steps
        self.convention_factor = convention_factor
        self.max_workers = max_workers
        self.market = MarketService(max_workers)
        self.contributions = ContributionService()
        self.budgeting = BudgetingService(self.contributions)
        self.single_period = SinglePeriodService()

    def _suite_checks(self) -> Dict[str, List[Callable[[], Dict[str, Any]]]]:
        return {
            'core': [self.check_grid_exactness, self.check_increment_moments, self.check_thread_independence],
            'single_period': [self.check_euler_aggregation, self.check_example_covariance,
                              self.check_deviation_axioms],
            'contribution': [self.check_gbm_variance, self.check_aggregation, self.check_gateaux,
                             self.check_covariance_symmetry],
            'budgeting': [self.check_vol_managed_recovery, self.check_projection, self.check_embedding],
            'strategies': [self.check_sabr_cases, self.check_mean_variance, self.check_long_term],
        }

    def run(self, suite_filter: Optional[str] = None) -> Dict[str, Any]:
        if suite_filter is not None and suite_filter not in SUITES:
            raise InvalidArgumentError(f"Unknown suite: {suite_filter} (expected one of {SUITES})")
        records = []
        for suite, checks in self._suite_checks().items():
            if suite_filter is not None and suite != suite_filter:
                continue
            for check in checks:
                record = check()
                record['suite'] = suite
                status = 'PASS' if record['passed'] else 'FAIL'
                logger.info(f"[{suite}] {record['name']}: {status}")
                records.append(record)
        return {'checks': records, 'passed': all(r['passed'] for r in records)}

    # ---- core ------------------------------------------------------------------

    def check_grid_exactness(self) -> Dict[str, Any]:
        cases = [(1.0, 4), (1.0, 1), (0.5, 250), (3.7, 999)]
        passed = all(make_time_grid(t, n).nodes[-1] == t for t, n in cases)
        return {'name': 'grid_exactness', 'passed': bool(passed), 'metrics': {'cases': len(cases)}}

    def check_increment_moments(self) -> Dict[str, Any]:
        dt = 0.01
        draws = RandomStreams.ensemble_increments(self.seed, 1000, 100, 1, dt, max_workers=self.max_workers).ravel()
        mean = Statistics.mean_and_stderr(draws)
        variance = Statistics.sample_variance(draws)
        passed = _within(mean.mean, 0.0, mean.stderr) and _within(variance.mean, dt, variance.stderr)
        return {'name': 'increment_moments', 'passed': bool(passed),
                'metrics': {'mean': mean.mean, 'variance': variance.mean, 'variance_stderr': variance.stderr}}

    def check_thread_independence(self) -> Dict[str, Any]:
        single = RandomStreams.ensemble_increments(self.seed, 2100, 8, 2, 0.125, max_workers=1)
        pooled = RandomStreams.ensemble_increments(self.seed, 2100, 8, 2, 0.125, max_workers=4)
        return {'name': 'thread_independence', 'passed': bool(np.array_equal(single, pooled)), 'metrics': {}}

    # ---- single period ---------------------------------------------------------

    def check_euler_aggregation(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for _ in range(50):
            d = int(rng.integers(1, 9))
            factor = rng.normal(size=(d, d))
            market = SinglePeriodMarket(factor @ factor.T + 0.1 * np.eye(d))
            w = rng.normal(size=d)
            for measure in ('std', 'variance'):
                worst = max(worst, self.single_period.euler_residual(market, w, measure))
        return {'name': 'euler_aggregation', 'passed': bool(worst <= 1e-10), 'metrics': {'worst_residual': worst}}

    def check_example_covariance(self) -> Dict[str, Any]:
        market = SinglePeriodMarket(EXAMPLE_COVARIANCE)
        sp = self.single_period
        rp = sp.risk_parity_weights(market).weights
        mv = sp.min_variance_weights(market)
        ew = sp.equal_weights(market.n_assets)
        contributions = sp.risk_contribution_sp(market, rp, 'std')
        spread = float((contributions.max() - contributions.min()) / contributions.mean())
        risks = [sp.std_risk(market, w) for w in (mv, rp, ew)]
        passed = spread <= 1e-8 and mv[0] < 0 and risks[0] <= risks[1] <= risks[2]
        return {'name': 'example_covariance', 'passed': bool(passed),
                'metrics': {'rp_weights': rp.tolist(), 'mv_weights': mv.tolist(),
                            'contribution_spread': spread, 'std_mv_rp_ew': risks}}

    def check_deviation_axioms(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 1)
        std = Statistics.sample_std
        passed = True
        for _ in range(200):
            size = int(rng.integers(2, 21))
            x, y = rng.normal(size=size), rng.normal(size=size)
            shift, scale = float(rng.normal()), float(rng.uniform(0.1, 10.0))
            tol = 1e-12 * (1.0 + std(x) + std(y) + abs(shift))
            passed &= abs(std(x + shift) - std(x)) <= tol
            passed &= abs(std(scale * x) - scale * std(x)) <= tol * scale
            passed &= std(x + y) <= std(x) + std(y) + tol
            passed &= std(x) > 0 and std(np.full(size, shift)) <= tol
        return {'name': 'deviation_axioms', 'passed': bool(passed), 'metrics': {'sample_spaces': 200}}

    # ---- contribution ----------------------------------------------------------

    def _gbm(self, d: int, drift: float, n_paths: Optional[int] = None, n_steps: Optional[int] = None,
             seed_offset: int = 0):
        rng = np.random.default_rng(self.seed + 100 + d)
        diffusion = 0.2 * np.eye(d) + 0.05 * rng.uniform(size=(d, d))
        params = GbmParams(s0=np.ones(d), drift=np.full(d, drift), diffusion=diffusion)
        grid = make_time_grid(1.0, n_steps or self.n_steps)
        ensemble = self.market.simulate_gbm(params, grid, n_paths or self.n_paths, self.seed + seed_offset)
        return GbmModel(params), ensemble

    def check_gbm_variance(self) -> Dict[str, Any]:
        params = GbmParams(s0=[1.0], drift=[0.05], diffusion=[[0.2]])
        grid = make_time_grid(1.0, self.n_steps)
        ensemble = self.market.simulate_gbm(params, grid, self.n_paths, self.seed)
        u = 2.0
        estimate = self.contributions.terminal_variance(Policy.constant([u]), ensemble)
        exact = u ** 2 * math.exp(2 * 0.05) * math.expm1(0.04)
        return {'name': 'gbm_variance', 'passed': _within(estimate.mean, exact, estimate.stderr),
                'metrics': {'estimate': estimate.mean, 'stderr': estimate.stderr, 'exact': exact}}

    def check_aggregation(self) -> Dict[str, Any]:
        passed = True
        metrics = {}
        for d in (1, 2, 3):
            model, ensemble = self._gbm(d, 0.05, seed_offset=d)
            policies = {'constant': Policy.constant(np.linspace(1.0, 2.0, d)),
                        'feedback': Policy.feedback(lambda state: 1.0 / state.values, d, name='inverse_price')}
            for kind, policy in policies.items():
                variance = self.contributions.terminal_variance(policy, ensemble)
                contribution = self.contributions.explicit_marginal_contribution(policy, ensemble, model)
                aggregate = self.contributions.aggregate_risk(contribution, ensemble.grid)
                scaled = self.convention_factor * aggregate.mean
                ok = _within(variance.mean, scaled, variance.combined_stderr(aggregate))
                passed &= ok
                metrics[f"d{d}_{kind}"] = {'variance': variance.mean, 'aggregate': scaled}
        return {'name': 'aggregation', 'passed': bool(passed), 'metrics': metrics}

    def check_gateaux(self) -> Dict[str, Any]:
        model, ensemble = self._gbm(2, 0.0, seed_offset=7)
        rng = np.random.default_rng(self.seed + 7)
        n_steps = ensemble.grid.n_steps
        passed = True
        worst = 0.0
        for _ in range(20):
            u = Policy.deterministic(rng.uniform(0.5, 2.0, size=(n_steps, 2)))
            v = Policy.deterministic(rng.normal(size=(n_steps, 2)))
            slope = self.contributions.gateaux_oracle(u, v, ensemble)
            contribution = self.contributions.explicit_marginal_contribution(u, ensemble, model)
            pairing = self.contributions.aggregate_risk(contribution, ensemble.grid,
                                                        shares=v.table(ensemble.n_paths, n_steps))
            covariance = Statistics.sample_covariance(
                *(self.contributions.investment_value(p, ensemble).terminal for p in (u, v)))
            tolerance = max(1e-3 * abs(pairing.mean), 3.0 * pairing.combined_stderr(covariance))
            gap = abs(0.5 * slope - pairing.mean)
            worst = max(worst, gap / max(abs(pairing.mean), 1e-300))
            passed &= gap <= tolerance
        u = Policy.constant([1.0, 0.5])
        self_slope = self.contributions.gateaux_oracle(u, u, ensemble)
        variance = self.contributions.terminal_variance(u, ensemble).mean
        passed &= abs(self_slope - 2.0 * variance) <= 1e-9 * variance
        return {'name': 'gateaux', 'passed': bool(passed), 'metrics': {'worst_relative_gap': worst}}

    def check_covariance_symmetry(self) -> Dict[str, Any]:
        model, ensemble = self._gbm(2, 0.0, seed_offset=11)
        result = self.contributions.covariance_via_contribution(
            Policy.constant([1.0, 0.5]), Policy.constant([-0.3, 1.2]), ensemble, model)
        pairs = [(result.pairing_vu, result.pairing_uv), (result.pairing_vu, result.direct),
                 (result.pairing_uv, result.direct)]
        passed = all(_within(a.mean, b.mean, a.combined_stderr(b)) for a, b in pairs)
        return {'name': 'covariance_symmetry', 'passed': bool(passed),
                'metrics': {'vu': result.pairing_vu.mean, 'uv': result.pairing_uv.mean,
                            'direct': result.direct.mean}}

    # ---- budgeting ---------------------------------------------------------------

    def check_vol_managed_recovery(self) -> Dict[str, Any]:
        params = SabrParams(f0=1.0, s=0.2, alpha=0.5, beta_exp=1.0)
        grid = make_time_grid(1.0, self.n_steps)
        ensemble = self.market.simulate_sabr(params, grid, min(self.n_paths, 5000), self.seed)
        spec = VolManagedSpec(c_hat=0.01)
        budget = VolManagedService(self.contributions).vol_managed_budget(spec, ensemble)
        solution = self.budgeting.solve_budget_pointwise(SabrModel(params), ensemble, budget)
        expected = spec.c_hat / ensemble.volatility[:, :-1] ** 2
        free = expected <= solution.policy.u_max
        error = float(np.max(np.abs(solution.policy.data[:, :, 0] - expected)[free] / expected[free]))
        return {'name': 'vol_managed_recovery', 'passed': bool(error <= 0.01),
                'metrics': {'max_relative_error': error, 'cap_hit_fraction': solution.cap_hit_fraction}}

    def check_projection(self) -> Dict[str, Any]:
        sigma, level = 0.2, 0.04
        params = GbmParams(s0=[1.0], drift=[0.0], diffusion=[[sigma]])
        grid = make_time_grid(1.0, self.n_steps)
        ensemble = self.market.simulate_gbm(params, grid, min(self.n_paths, 10000), self.seed + 3)
        ramp = 0.5 + grid.left_nodes
        budget = BudgetProcess.deterministic(level * ramp / np.mean(ramp))
        constant = self.budgeting.solve_budget_iterative(params, ensemble, budget, InformationClass('constant'))
        analytic = math.sqrt(level / math.expm1(sigma ** 2))
        constant_error = abs(float(constant.cell_values[0, 0]) / analytic - 1.0)

        fine = BudgetProcess.raw(0.04 * ensemble.left_values[:, :, 0] ** 2)
        coarse = InformationClass('feedback', n_bins=8)
        direct = self.budgeting.solve_budget_iterative(params, ensemble, fine, coarse)
        projected = self.budgeting.project_budget(fine, InformationClass('full'), coarse, ensemble)
        via_projection = self.budgeting.solve_budget_iterative(params, ensemble, projected, coarse)
        gap = float(np.max(np.abs(direct.cell_values - via_projection.cell_values)
                           / np.abs(direct.cell_values)))
        return {'name': 'projection', 'passed': bool(constant_error <= 0.01 and gap <= 1e-8),
                'metrics': {'constant_relative_error': constant_error, 'projection_gap': gap}}

    def check_embedding(self) -> Dict[str, Any]:
        params = GbmParams(s0=[1.0], drift=[0.08], diffusion=[[0.2]])
        grid = make_time_grid(1.0, self.n_steps)
        ensemble = self.market.simulate_gbm(params, grid, min(self.n_paths, 10000), self.seed + 5)
        budget = BudgetProcess.constant([0.04])
        info = InformationClass('deterministic')
        gamma, embedded = self.budgeting.embedding_search(params, ensemble, budget, info)
        direct = self.budgeting.solve_budget_iterative(params, ensemble, budget, info)
        gains = self.contributions.investment_value(direct.policy, ensemble).terminal_mean
        policy_gap = float(np.max(np.abs(embedded.cell_values / direct.cell_values - 1.0)))
        passed = abs(gamma + 2.0 * gains.mean) <= 1e-5 * max(1.0, abs(gamma)) and policy_gap <= 1e-4
        return {'name': 'embedding', 'passed': bool(passed),
                'metrics': {'gamma': gamma, 'minus_two_mean_gain': -2.0 * gains.mean, 'policy_gap': policy_gap}}

    # ---- strategies --------------------------------------------------------------

    def check_sabr_cases(self) -> Dict[str, Any]:
        """h_projection is gated through its normalized variant; the raw formula's gap is reported"""
        params = SabrParams(f0=1.0, s=0.3, alpha=0.6, beta_exp=0.7)
        level = 0.04
        grid = make_time_grid(1.0, self.n_steps)
        ensemble = self.market.simulate_sabr(params, grid, min(self.n_paths, 5000), self.seed + 9)
        service = SabrStrategyService(self.contributions, self.max_workers)
        passed = True
        dispersions = []
        variances = {}
        for case in SABR_CASES:
            policy = service.sabr_policy(SabrPolicyCase(case, level), params, ensemble,
                                         normalize=case == 'h_projection')
            variance = self.contributions.terminal_variance(policy, ensemble)
            variances[policy.name] = variance.mean
            passed &= _within(variance.mean, level, variance.stderr)
            contribution = service.sabr_marginal(policy, ensemble, params)
            dispersions.append(service.contribution_dispersion(contribution))
            if case == 'parity':
                alive = ensemble.values[:, :-1, 0] > 0
                passed &= float(np.max(np.abs(contribution.risk[:, :, 0] - level)[alive])) <= 1e-10
        passed &= all(a < b for a, b in zip(dispersions, dispersions[1:]))
        formula = service.sabr_policy(SabrPolicyCase('h_projection', level), params, ensemble)
        formula_variance = self.contributions.terminal_variance(formula, ensemble).mean
        variances['h_projection'] = formula_variance
        return {'name': 'sabr_cases', 'passed': bool(passed),
                'metrics': {'variances': variances, 'dispersions': dispersions,
                            'h_projection_gap': formula_variance / level - 1.0}}

    def check_mean_variance(self) -> Dict[str, Any]:
        service = MeanVarianceService(self.max_workers)
        params = MvParams()
        paths = service.simulate_mv_wealth(params, make_time_grid(params.horizon, 252),
                                           min(self.n_paths, 20000), self.seed + 13)
        result = service.mv_aggregate_check(params, paths)
        expected = service.mv_expected_terminal(params)
        passed = _within(result['mean'].mean, expected, result['mean'].stderr)
        passed &= _within(result['aggregate'].mean, result['variance'].mean,
                          result['aggregate'].combined_stderr(result['variance']))
        k0_x2, k1_x2 = service.mv_printed_leading_terms(params)
        _, summary = service.figure2_table(params)
        passed &= all(abs(row['k0_x2'] - k0_x2) <= 1e-12 * abs(k0_x2) for row in summary)
        passed &= all(abs(row['k1_x2'] - k1_x2) <= 1e-12 * abs(k1_x2) for row in summary)
        return {'name': 'mean_variance', 'passed': bool(passed),
                'metrics': {'mean': result['mean'].mean, 'expected_mean': expected,
                            'aggregate': result['aggregate'].mean, 'variance': result['variance'].mean}}

    def check_long_term(self) -> Dict[str, Any]:
        service = VolManagedService(self.contributions, self.max_workers)
        spec = VolManagedSpec(c_hat=0.04)
        params = FactorMarketParams(s=0.2, alpha=0.3, theta=0.4, sigma_lo=0.1, sigma_hi=0.4)
        gaps = {}
        for horizon in (10, 50):
            grid = make_time_grid(float(horizon), 12 * horizon)
            ensemble = service.simulate_factor_market(params, grid, 2000, self.seed + horizon)
            rows = service.vol_managed_long_term(spec, ensemble, theta=params.theta)
            gaps[horizon] = rows[-1]['mean_gap']
        return {'name': 'vol_managed_long_term', 'passed': bool(gaps[50] < gaps[10]),
                'metrics': {'gap_T10': gaps[10], 'gap_T50': gaps[50]}}

import argparse
import json
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from infrastructure.logging import LoggingManager
from interfaces.market_model import IMarketModel
from models.market_params import SinglePeriodMarket
from models.path_ensemble import PathEnsemble
from models.run_config import RunConfig, OUTPUT_FORMATS
from models.strategy import MvParams
from models.time_grid import make_time_grid
from services.budgeting_service import BudgetingService, SolverOptions
from services.component_factory import ComponentFactory
from services.config_service import ConfigService, COMMAND_BLOCKS, STOCHASTIC_COMMANDS
from services.contribution_service import ContributionService
from services.market_service import MarketService
from services.mean_variance_service import MeanVarianceService, FIGURE2_TIME, FIGURE2_X0, FIGURE2_TAU
from services.single_period_service import SinglePeriodService
from services.verification_service import VerificationService, SUITES
from utils.file_utils import FileUtils
from exceptions.riskflow_exceptions import ConfigurationError, InvalidArgumentError, ValidationError


logger = logging.getLogger(__name__)

VERSION = '0.1.0'
COMMANDS = tuple(name.replace('_', '-') for name in COMMAND_BLOCKS)
SOLVER_METHODS = ('iterative', 'pointwise', 'embedding')
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1


class RiskFlowManager:
    """Runs riskflow commands from a config file"""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers
        self.config_service = ConfigService()
        self.contribution_service = ContributionService()
        self.budgeting_service = BudgetingService(self.contribution_service)
        self.market_service = MarketService(max_workers)
        self.single_period_service = SinglePeriodService()
        self.mean_variance_service = MeanVarianceService(max_workers)
        self.config: Dict[str, Any] = {}

    # ---- shared plumbing -----------------------------------------------------------

    def _emit(self, run: RunConfig, rows: List[Dict[str, Any]], columns: List[str],
              header: Dict[str, Any]) -> None:
        FileUtils.write_text(FileUtils.render_table(rows, columns, header, run.output_format), run.out)

    def _model(self, block: Dict[str, Any]) -> IMarketModel:
        if 'model' not in block:
            raise ValidationError("block is missing 'model'")
        return ComponentFactory.create_model(block['model'], self.max_workers)

    def _ensemble(self, run: RunConfig, model: IMarketModel) -> PathEnsemble:
        """Simulate on the run grid, or reuse an exported ensemble"""
        ensemble_file = run.block['model'].get('ensemble_file')
        if ensemble_file:
            ensemble = self.market_service.import_ensemble(self.config_service.resolve_path(self.config,
                                                                                            ensemble_file))
            if ensemble.model_name != model.get_name():
                raise ConfigurationError(f"ensemble file holds a '{ensemble.model_name}' ensemble, "
                                         f"the model block is '{model.get_name()}'")
            if ensemble.n_assets != model.n_assets():
                raise ConfigurationError(f"ensemble file has {ensemble.n_assets} assets, "
                                         f"the model block has {model.n_assets()}")
            logger.info(f"Reusing ensemble {ensemble_file}: {ensemble.n_paths} paths x {ensemble.grid.n_steps} steps")
            return ensemble
        horizon = float(run.block.get('horizon', 1.0))
        return model.simulate(make_time_grid(horizon, run.n_steps), run.n_paths, run.seed)

    # ---- commands ------------------------------------------------------------------

    def cmd_single_period(self, run: RunConfig) -> int:
        """Weights and normalized std contributions per strategy"""
        block = run.block
        if 'covariance_file' in block:
            covariance = FileUtils.read_matrix_csv(self.config_service.resolve_path(self.config,
                                                                                    block['covariance_file']))
        elif 'covariance' in block:
            covariance = block['covariance']
        else:
            raise ValidationError("single_period block needs 'covariance' or 'covariance_file'")
        market = SinglePeriodMarket(covariance)
        strategies = list(block.get('strategies', ['ew', 'mv', 'rp']))
        rows = self.single_period_service.strategy_table(market, strategies, block.get('budget'))

        header = run.header(stochastic=False)
        for row in rows:
            header[f"std_{row['strategy']}"] = row['std']
        self._emit(run, rows, ['strategy', 'asset', 'weight', 'contribution'], header)
        return EXIT_OK

    def cmd_contrib(self, run: RunConfig) -> int:
        """Terminal variance against the aggregated contribution, at three combined stderr"""
        block = run.block
        model = self._model(block)
        ensemble = self._ensemble(run, model)
        MarketService.ensure_non_degenerate(ensemble)
        policy = ComponentFactory.create_policy(block.get('policy', {}), model, ensemble.grid.n_steps, run.u_max)
        x0 = float(block.get('x0', 0.0))
        manner = block.get('manner', 'share')

        if manner == 'share':
            contribution = self.contribution_service.explicit_marginal_contribution(policy, ensemble, model, x0)
        else:
            contribution = self.contribution_service.risk_contribution_variants(policy, ensemble, model, x0, manner)
        variance = self.contribution_service.terminal_variance(policy, ensemble, x0)
        aggregate = self.contribution_service.aggregate_risk(contribution, ensemble.grid)
        stderr = variance.combined_stderr(aggregate)
        gap = variance.mean - aggregate.mean
        passed = abs(gap) <= 3.0 * stderr

        if 'export' in block:
            FileUtils.export_contribution(contribution, ensemble.grid,
                                          self.config_service.resolve_path(self.config, block['export']))
        rows = [{'quantity': 'variance', 'estimate': variance.mean, 'stderr': variance.stderr},
                {'quantity': 'aggregate', 'estimate': aggregate.mean, 'stderr': aggregate.stderr},
                {'quantity': 'difference', 'estimate': gap, 'stderr': stderr}]
        header = run.header()
        header.update({'model': model.get_name(), 'policy': policy.name, 'manner': manner,
                       'status': 'PASS' if passed else 'FAIL'})
        self._emit(run, rows, ['quantity', 'estimate', 'stderr'], header)
        return EXIT_OK

    def cmd_budget(self, run: RunConfig) -> int:
        """Solve u * c = beta and summarize the policy per step and asset"""
        block = run.block
        model = self._model(block)
        ensemble = self._ensemble(run, model)
        budget = ComponentFactory.create_budget(block.get('budget', {}), model, ensemble.grid.horizon)
        info_class = ComponentFactory.create_info_class(block.get('info_class'))
        solver = block.get('solver', {})
        method = solver.get('method', 'iterative')
        options = SolverOptions(tolerance=float(solver.get('tolerance', SolverOptions.tolerance)),
                                max_iterations=int(solver.get('max_iterations', SolverOptions.max_iterations)),
                                start=solver.get('start', 'scaled'), u_max=run.u_max)

        gamma = None
        if method == 'pointwise':
            solution = self.budgeting_service.solve_budget_pointwise(model, ensemble, budget, run.u_max)
        elif method == 'iterative':
            solution = self.budgeting_service.solve_budget_iterative(model, ensemble, budget, info_class, options)
        elif method == 'embedding':
            gamma, solution = self.budgeting_service.embedding_search(model, ensemble, budget, info_class, options)
        else:
            raise ValidationError(f"solver.method must be one of {SOLVER_METHODS}")

        shares = self.contribution_service.resolve_policy(solution.policy, ensemble).shares
        beta = budget.evaluate(ensemble)
        rows = []
        for k, t in enumerate(ensemble.grid.left_nodes):
            for i in range(ensemble.n_assets):
                column = shares[:, k, i]
                rows.append({'t': float(t), 'asset': i, 'u_mean': float(np.mean(column)),
                             'u_min': float(np.min(column)), 'u_max': float(np.max(column)),
                             'beta_mean': float(np.mean(beta[:, k, i]))})
        header = run.header()
        header.update({'model': model.get_name(), 'budget': budget.name, 'method': method,
                       'info_class': solution.info_class.describe(),
                       'residual_max': solution.residual_max, 'residual_l2': solution.residual_l2,
                       'iterations': solution.iterations, 'converged': solution.converged,
                       'objective': solution.objective, 'cap_hit_fraction': solution.cap_hit_fraction,
                       'kl': self.budgeting_service.kl_divergence(budget, shares, ensemble)})
        if gamma is not None:
            header['gamma'] = gamma
        self._emit(run, rows, ['t', 'asset', 'u_mean', 'u_min', 'u_max', 'beta_mean'], header)
        return EXIT_OK

    def cmd_figure2(self, run: RunConfig) -> int:
        """K0 and K1 of the mean-variance investor along wealth, with sweeps in x0 and tau"""
        block = run.block
        known = set(MvParams.__dataclass_fields__)
        unknown = set(block.get('params', {})) - known
        if unknown:
            raise ValidationError(f"unknown figure2.params keys: {sorted(unknown)}")
        params = MvParams(**{key: float(value) for key, value in block.get('params', {}).items()})
        x_values = None
        if 'x_range' in block:
            low, high, count = block['x_range']
            x_values = np.linspace(float(low), float(high), int(count))
        rows, summary = self.mean_variance_service.figure2_table(
            params, t=float(block.get('t', FIGURE2_TIME)), x_values=x_values,
            x0_values=block.get('x0_values', FIGURE2_X0), tau_values=block.get('tau_values', FIGURE2_TAU))

        header = run.header(stochastic=False)
        header['summary'] = summary if run.output_format == 'json' else json.dumps(summary, sort_keys=True)
        self._emit(run, rows, ['sweep', 'value', 'X', 'K0', 'K1'], header)
        return EXIT_OK

    def cmd_verify(self, run: RunConfig, suite_filter: Optional[str] = None) -> int:
        """Run the acceptance suites and write the JSON report"""
        block = run.block
        suite_filter = suite_filter or block.get('filter')
        verifier = VerificationService(seed=run.seed, n_paths=run.n_paths, n_steps=run.n_steps,
                                       convention_factor=float(block.get('convention_factor', 1.0)),
                                       max_workers=self.max_workers)
        report = verifier.run(suite_filter)
        header = run.header(stochastic=False)
        header.update({'seed': verifier.seed, 'n_paths': verifier.n_paths, 'n_steps': verifier.n_steps,
                       'filter': suite_filter})
        report['header'] = header
        FileUtils.write_text(json.dumps(report, indent=2, sort_keys=True) + '\n', run.out)

        failing = [record['name'] for record in report['checks'] if not record['passed']]
        if failing:
            logger.error(f"Verification failed: {', '.join(failing)}")
            return EXIT_VERIFICATION_FAILED
        logger.info(f"All {len(report['checks'])} checks passed")
        return EXIT_OK

    def cmd_simulate(self, run: RunConfig) -> int:
        """Export an ensemble for reuse through model.ensemble_file"""
        model = self._model(run.block)
        ensemble = self._ensemble(run, model)
        path = run.out or run.block.get('out')
        if not path:
            raise ValidationError("simulate needs --out or simulate.out")
        written = self.market_service.export_ensemble(ensemble, self.config_service.resolve_path(self.config, path))
        for file_path in written:
            logger.info(f"Wrote {file_path}")
        return EXIT_OK

    # ---- command line --------------------------------------------------------------

    def dispatch(self, command: str, run: RunConfig, suite_filter: Optional[str] = None) -> int:
        if command == 'single_period':
            return self.cmd_single_period(run)
        if command == 'contrib':
            return self.cmd_contrib(run)
        if command == 'budget':
            return self.cmd_budget(run)
        if command == 'figure2':
            return self.cmd_figure2(run)
        if command == 'verify':
            return self.cmd_verify(run, suite_filter)
        if command == 'simulate':
            return self.cmd_simulate(run)
        raise InvalidArgumentError(f"Unknown command: {command}")

    @staticmethod
    def build_parser() -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog='riskflow',
            description=(
                'Risk contributions and risk budgeting for single-period and continuous-time portfolios.\n'
                '- Result tables go to stdout (or --out); logs go to stderr.'
            ),
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog=(
                'Examples:\n\n'
                '1) Compare equal-weight, minimum-variance and risk-parity portfolios:\n'
                '   python src/riskflow.py single-period --config config.json\n\n'
                '2) Check Var(X_T) against the aggregated contribution with a fixed seed:\n'
                '   python src/riskflow.py contrib --config config.json --seed 7 --paths 20000\n\n'
                '3) Solve a risk budget and write the policy summary as JSON:\n'
                '   python src/riskflow.py budget --config config.json --format json --out budget.json\n\n'
                '4) Mean-variance contribution sweeps:\n'
                '   python src/riskflow.py figure2 --config config.json\n\n'
                '5) Run one verification suite:\n'
                '   python src/riskflow.py verify --filter single_period\n\n'
                'Exit codes:\n'
                '  0 ok, 1 verification failure, 2 bad input, 3 degenerate market, 4 no convergence'
            )
        )
        parser.add_argument('command', choices=COMMANDS, help='Command to run')
        parser.add_argument('--config', default='config.json', help='Config file (default: config.json)')
        parser.add_argument('--seed', type=int, help='Random seed (overrides runtime.seed)')
        parser.add_argument('--paths', type=int, help='Number of simulated paths (overrides runtime.n_paths)')
        parser.add_argument('--steps', type=int, help='Number of time steps (overrides runtime.n_steps)')
        parser.add_argument('--out', help='Output file (default: stdout)')
        parser.add_argument('--format', choices=OUTPUT_FORMATS, help='Output format (overrides runtime.format)')
        parser.add_argument('--filter', choices=SUITES, help='Verification suite to run (verify only)')
        return parser

    def run_from_command_line(self, argv: Optional[List[str]] = None) -> int:
        """Parse arguments, load the config and run one command; returns the exit code"""
        args = self.build_parser().parse_args(argv)
        command = args.command.replace('-', '_')

        if command == 'verify' and not FileUtils.file_exists(args.config):
            self.config = self.config_service._process_config({})
        else:
            self.config = self.config_service.load_config(args.config)
        LoggingManager.setup_logging(self.config)

        overrides = {'seed': args.seed, 'n_paths': args.paths, 'n_steps': args.steps,
                     'out': args.out, 'format': args.format}
        run = self.config_service.build_run_config(self.config, command, VERSION, overrides)
        if command in STOCHASTIC_COMMANDS:
            logger.info(f"Running {command} (seed={run.seed}, paths={run.n_paths}, steps={run.n_steps})")
        return self.dispatch(command, run, args.filter)

import logging
from typing import Any, Dict, Optional

import numpy as np

from adapters.gbm_model import GbmModel
from adapters.sabr_model import SabrModel
from interfaces.market_model import IMarketModel
from models.budget import BudgetProcess, InformationClass, DEFAULT_FEEDBACK_BINS
from models.market_params import GbmParams, SabrParams
from models.policy import Policy, StepState, DEFAULT_U_MAX
from utils.file_utils import FileUtils
from exceptions.riskflow_exceptions import ValidationError


logger = logging.getLogger(__name__)

MODEL_TYPES = ('gbm', 'sabr')
FEEDBACK_RULES = ('inverse_price', 'risk_parity', 'vol_managed', 'fixed_mix')
BUDGET_EXPRESSIONS = ('constant', 'lambda_over_T', 'vol_managed', 'tabulated')


class ComponentFactory:
    """Builds models, policies, budgets and information classes from config blocks"""

    @staticmethod
    def _require(block: Dict[str, Any], key: str, where: str) -> Any:
        if key not in block:
            raise ValidationError(f"{where} block is missing '{key}'")
        return block[key]

    @staticmethod
    def create_model(block: Dict[str, Any], max_workers: Optional[int] = None) -> IMarketModel:
        """Create a market model from a {'type': 'gbm' | 'sabr', ...} block"""
        model_type = block.get('type', 'gbm')
        try:
            if model_type == 'gbm':
                params = GbmParams(s0=ComponentFactory._require(block, 's0', 'model'),
                                   drift=ComponentFactory._require(block, 'drift', 'model'),
                                   diffusion=ComponentFactory._require(block, 'diffusion', 'model'))
                return GbmModel(params, max_workers)
            if model_type == 'sabr':
                params = SabrParams(f0=float(ComponentFactory._require(block, 'f0', 'model')),
                                    s=float(ComponentFactory._require(block, 's', 'model')),
                                    alpha=float(ComponentFactory._require(block, 'alpha', 'model')),
                                    beta_exp=float(ComponentFactory._require(block, 'beta_exp', 'model')),
                                    rho=float(block.get('rho', 0.0)))
                return SabrModel(params, max_workers)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Malformed model block: {e}")
        raise ValidationError(f"Unknown model type: {model_type} (expected one of {MODEL_TYPES})")

    @staticmethod
    def _asset_volatility(model: IMarketModel, state: StepState) -> np.ndarray:
        """Instantaneous return volatility per asset, shape (n_paths, d)"""
        if isinstance(model, GbmModel):
            row_norm = np.sqrt(np.sum(model.params.diffusion ** 2, axis=1))
            return np.broadcast_to(row_norm, state.values.shape)
        forward = state.values[:, 0]
        alive = forward > 0.0
        beta_exp = model.params.beta_exp
        elasticity = np.where(alive, np.power(np.where(alive, forward, 1.0), beta_exp - 1.0), np.inf)
        return (state.volatility * elasticity)[:, None]

    @staticmethod
    def create_policy(block: Dict[str, Any], model: IMarketModel, n_steps: Optional[int] = None,
                      u_max: float = DEFAULT_U_MAX) -> Policy:
        """Create a policy from a {'kind': ...} block"""
        kind = block.get('kind', 'constant')
        d = model.n_assets()
        u_max = float(block.get('u_max', u_max))

        if kind == 'constant':
            shares = np.broadcast_to(np.asarray(ComponentFactory._require(block, 'shares', 'policy'),
                                                dtype=float), (d,))
            return Policy.constant(shares, u_max=u_max)

        if kind == 'deterministic':
            if 'table' in block:
                table = np.asarray(block['table'], dtype=float)
            else:
                start, end = ComponentFactory._require(block, 'linear', 'policy')
                if n_steps is None:
                    raise ValidationError("a linear deterministic policy needs the step count")
                ramp = np.linspace(0.0, 1.0, n_steps)[:, None]
                table = (1.0 - ramp) * np.asarray(start, dtype=float) + ramp * np.asarray(end, dtype=float)
            if table.ndim == 1:
                table = table[:, None]
            return Policy.deterministic(np.broadcast_to(table, (table.shape[0], d)), u_max=u_max)

        if kind == 'feedback':
            rule_name = ComponentFactory._require(block, 'rule', 'policy')
            scale = float(block.get('scale', 1.0))
            if rule_name == 'inverse_price':
                rule = lambda state: scale / np.maximum(state.values, 1e-300)
            elif rule_name == 'risk_parity':
                rule = lambda state: scale / (ComponentFactory._asset_volatility(model, state)
                                              * np.maximum(state.values, 1e-300))
            elif rule_name == 'vol_managed':
                c_hat = float(ComponentFactory._require(block, 'c_hat', 'policy'))
                rule = lambda state: c_hat / ComponentFactory._asset_volatility(model, state) ** 2
            elif rule_name == 'fixed_mix':
                weights = np.broadcast_to(np.asarray(ComponentFactory._require(block, 'weights', 'policy'),
                                                     dtype=float), (d,))
                rule = lambda state: weights * state.wealth[:, None] / np.maximum(state.values, 1e-300)
            else:
                raise ValidationError(f"Unknown feedback rule: {rule_name} (expected one of {FEEDBACK_RULES})")
            return Policy.feedback(rule, d, u_max=u_max, name=rule_name)

        raise ValidationError(f"Unknown policy kind: {kind}")

    @staticmethod
    def create_budget(block: Dict[str, Any], model: IMarketModel, horizon: float) -> BudgetProcess:
        """Create a budget from an {'expression': ...} block"""
        expression = block.get('expression', 'constant')
        d = model.n_assets()

        if expression == 'constant':
            values = np.broadcast_to(np.asarray(ComponentFactory._require(block, 'values', 'budget'),
                                                dtype=float), (d,))
            return BudgetProcess.constant(values, name='constant')

        if expression == 'lambda_over_T':
            level = float(ComponentFactory._require(block, 'lambda', 'budget'))
            return BudgetProcess.constant(np.full(d, level / (horizon * d)), name='lambda_over_T')

        if expression == 'vol_managed':
            c_hat = float(ComponentFactory._require(block, 'c_hat', 'budget'))

            def rule(state: StepState) -> np.ndarray:
                vol = ComponentFactory._asset_volatility(model, state)
                return (c_hat * state.values / vol) ** 2

            return BudgetProcess.feedback(rule, d, name='vol_managed')

        if expression == 'tabulated':
            if 'file' in block:
                table = FileUtils.read_table(block['file']).to_numpy(dtype=float)
            else:
                table = np.asarray(ComponentFactory._require(block, 'table', 'budget'), dtype=float)
            return BudgetProcess.deterministic(table, name='tabulated')

        raise ValidationError(f"Unknown budget expression: {expression} (expected one of {BUDGET_EXPRESSIONS})")

    @staticmethod
    def create_info_class(block: Optional[Dict[str, Any]]) -> InformationClass:
        block = block or {}
        return InformationClass(kind=block.get('kind', 'deterministic'),
                                n_bins=int(block.get('n_bins', DEFAULT_FEEDBACK_BINS)),
                                state=block.get('state', 'asset:0'))

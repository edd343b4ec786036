#!/usr/bin/env python3
"""
Tests for config loading and component creation
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

import json

import numpy as np
import pytest

from adapters.gbm_model import GbmModel
from adapters.sabr_model import SabrModel
from models.policy import StepState
from services.component_factory import ComponentFactory
from services.config_service import ConfigService
from exceptions.riskflow_exceptions import ConfigurationError, ValidationError


GBM_BLOCK = {'type': 'gbm', 's0': [1.0, 1.0], 'drift': [0.05, 0.08], 'diffusion': [[0.2, 0.0], [0.06, 0.25]]}
SABR_BLOCK = {'type': 'sabr', 'f0': 1.0, 's': 0.2, 'alpha': 0.5, 'beta_exp': 0.5}


def write_config(tmp_path, config) -> str:
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(config), encoding='utf-8')
    return str(path)


@pytest.fixture
def config_service():
    return ConfigService()


class TestConfigService:
    """Loading, validation and run configs"""

    def test_load_fills_runtime_defaults(self, config_service, tmp_path):
        path = write_config(tmp_path, {'runtime': {'seed': 5}, 'contrib': {'model': GBM_BLOCK}})
        config = config_service.load_config(path)
        assert config['runtime']['seed'] == 5
        assert config['runtime']['n_paths'] == 100_000
        assert config['runtime']['n_steps'] is None
        assert len(config['_sha256']) == 64
        assert config['_path'] == os.path.abspath(path)

    def test_missing_file(self, config_service, tmp_path):
        with pytest.raises(ConfigurationError):
            config_service.load_config(str(tmp_path / 'absent.json'))

    def test_invalid_json(self, config_service, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text('{"runtime": ', encoding='utf-8')
        with pytest.raises(ConfigurationError):
            config_service.load_config(str(path))

    def test_missing_model_key(self, config_service, tmp_path):
        block = {key: value for key, value in SABR_BLOCK.items() if key != 'alpha'}
        path = write_config(tmp_path, {'budget': {'model': block}})
        with pytest.raises(ValidationError):
            config_service.load_config(path)

    def test_bad_runtime(self, config_service):
        with pytest.raises(ValidationError):
            config_service.validate_config({'runtime': {'n_paths': 0}})
        with pytest.raises(ValidationError):
            config_service.validate_config({'runtime': {'format': 'xml'}})
        with pytest.raises(ValidationError):
            config_service.validate_config({'runtime': {'seed': 'abc'}})

    def test_stochastic_command_needs_seed(self, config_service):
        config = config_service._process_config({'contrib': {'model': GBM_BLOCK}})
        with pytest.raises(ValidationError):
            config_service.build_run_config(config, 'contrib', '0.1.0')
        run = config_service.build_run_config(config, 'contrib', '0.1.0', {'seed': 3, 'n_paths': 100})
        assert run.seed == 3 and run.n_paths == 100 and run.n_steps == 252

    def test_steps_follow_horizon(self, config_service):
        """Without runtime.n_steps the grid has 252 steps per unit of time"""
        config = config_service._process_config({'contrib': {'model': GBM_BLOCK, 'horizon': 2.0}})
        run = config_service.build_run_config(config, 'contrib', '0.1.0', {'seed': 1})
        assert run.n_paths == 100_000 and run.n_steps == 504
        run = config_service.build_run_config(config, 'contrib', '0.1.0', {'seed': 1, 'n_steps': 16})
        assert run.n_steps == 16

    def test_deterministic_command_without_seed(self, config_service):
        config = config_service._process_config({'single_period': {'covariance': [[1.0]]}})
        run = config_service.build_run_config(config, 'single_period', '0.1.0')
        assert run.seed is None
        assert 'seed' not in run.header(stochastic=False)

    def test_build_id_carries_config_hash(self, config_service, tmp_path):
        config = config_service.load_config(write_config(tmp_path, {'runtime': {'seed': 1}}))
        run = config_service.build_run_config(config, 'verify', '0.1.0')
        assert run.build_id == f"riskflow-0.1.0+{config['_sha256'][:8]}"

    def test_resolve_path(self, config_service, tmp_path):
        config = config_service.load_config(write_config(tmp_path, {}))
        assert config_service.resolve_path(config, 'data/cov.csv') == os.path.join(str(tmp_path), 'data/cov.csv')
        assert config_service.resolve_path(config, '/abs/cov.csv') == '/abs/cov.csv'

    def test_get_block(self, config_service):
        with pytest.raises(ConfigurationError):
            config_service.get_block({}, 'budget')


class TestComponentFactory:
    """Models, policies and budgets from config blocks"""

    def test_create_models(self):
        assert isinstance(ComponentFactory.create_model(GBM_BLOCK), GbmModel)
        sabr = ComponentFactory.create_model(SABR_BLOCK)
        assert isinstance(sabr, SabrModel)
        assert sabr.params.rho == 0.0

    def test_unknown_model(self):
        with pytest.raises(ValidationError):
            ComponentFactory.create_model({'type': 'heston'})

    def test_linear_deterministic_policy(self):
        model = ComponentFactory.create_model(GBM_BLOCK)
        policy = ComponentFactory.create_policy({'kind': 'deterministic', 'linear': [[1.0, 2.0], [3.0, 4.0]]},
                                                model, n_steps=5)
        assert policy.data.shape == (5, 2)
        assert policy.data[0].tolist() == [1.0, 2.0]
        assert policy.data[-1].tolist() == [3.0, 4.0]

    def test_risk_parity_rule(self):
        """scale / (sigma_i S_i) with sigma_i the row norm of the diffusion"""
        model = ComponentFactory.create_model(GBM_BLOCK)
        policy = ComponentFactory.create_policy({'kind': 'feedback', 'rule': 'risk_parity'}, model)
        state = StepState(k=0, t=0.0, values=np.array([[1.0, 2.0]]), wealth=np.zeros(1))
        expected = 1.0 / (np.array([0.2, np.hypot(0.06, 0.25)]) * [1.0, 2.0])
        assert np.allclose(policy.shares_at(state)[0], expected)

    def test_unknown_rule(self):
        model = ComponentFactory.create_model(GBM_BLOCK)
        with pytest.raises(ValidationError):
            ComponentFactory.create_policy({'kind': 'feedback', 'rule': 'momentum'}, model)

    def test_lambda_over_t_budget(self):
        model = ComponentFactory.create_model(GBM_BLOCK)
        budget = ComponentFactory.create_budget({'expression': 'lambda_over_T', 'lambda': 0.04}, model, 2.0)
        assert np.allclose(budget.data, 0.01)

    def test_missing_budget_key(self):
        model = ComponentFactory.create_model(GBM_BLOCK)
        with pytest.raises(ValidationError):
            ComponentFactory.create_budget({'expression': 'constant'}, model, 1.0)

    def test_info_class_defaults(self):
        info = ComponentFactory.create_info_class(None)
        assert info.kind == 'deterministic'
        assert ComponentFactory.create_info_class({'kind': 'feedback', 'n_bins': 8}).describe() == \
            'feedback(8 bins on asset:0)'


if __name__ == "__main__":
    pytest.main([__file__])

import hashlib
import json
import os
from typing import Any, Dict, Optional

from interfaces.config_loader import IConfigLoader
from models.run_config import RunConfig, OUTPUT_FORMATS, DEFAULT_PATHS
from models.policy import DEFAULT_U_MAX
from models.time_grid import default_steps
from exceptions.riskflow_exceptions import ConfigurationError, ValidationError


COMMAND_BLOCKS = ('single_period', 'contrib', 'budget', 'figure2', 'verify', 'simulate')
STOCHASTIC_COMMANDS = ('contrib', 'budget', 'simulate')
RUNTIME_DEFAULTS = {'seed': None, 'n_paths': DEFAULT_PATHS, 'n_steps': None, 'format': 'csv',
                    'u_max': DEFAULT_U_MAX}
MODEL_KEYS = {'gbm': ('s0', 'drift', 'diffusion'), 'sabr': ('f0', 's', 'alpha', 'beta_exp')}


class ConfigService(IConfigLoader):
    """Service for loading and validating configuration"""

    def load_config(self, config_path: str) -> Dict[str, Any]:
        """Load configuration from JSON file"""
        try:
            if not os.path.exists(config_path):
                raise ConfigurationError(f"Config file {config_path} not found!")

            with open(config_path, 'rb') as f:
                raw = f.read()
            config = json.loads(raw.decode('utf-8'))

            self.validate_config(config)
            config = self._process_config(config)
            config['_sha256'] = hashlib.sha256(raw).hexdigest()
            config['_path'] = os.path.abspath(config_path)
            return config

        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in {config_path}: {e}")
        except (ConfigurationError, ValidationError):
            raise
        except Exception as e:
            raise ConfigurationError(f"Error loading config: {e}")

    def validate_config(self, config: Dict[str, Any]) -> bool:
        """Validate configuration structure"""
        if not isinstance(config, dict):
            raise ValidationError("configuration must be a JSON object")

        runtime = config.get('runtime', {})
        if not isinstance(runtime, dict):
            raise ValidationError("runtime must be a dictionary")
        for key in ('n_paths', 'n_steps'):
            if runtime.get(key) is not None and (not isinstance(runtime[key], int) or runtime[key] < 1):
                raise ValidationError(f"runtime.{key} must be a positive integer")
        if 'seed' in runtime and runtime['seed'] is not None and not isinstance(runtime['seed'], int):
            raise ValidationError("runtime.seed must be an integer")
        if runtime.get('format', 'csv') not in OUTPUT_FORMATS:
            raise ValidationError(f"runtime.format must be one of {OUTPUT_FORMATS}")

        for name in COMMAND_BLOCKS:
            block = config.get(name)
            if block is None:
                continue
            if not isinstance(block, dict):
                raise ValidationError(f"{name} must be a dictionary")
            if 'model' in block:
                self._validate_model(block['model'], name)
        return True

    @staticmethod
    def _validate_model(model: Any, where: str) -> None:
        if not isinstance(model, dict):
            raise ValidationError(f"{where}.model must be a dictionary")
        model_type = model.get('type', 'gbm')
        if model_type not in MODEL_KEYS:
            raise ValidationError(f"{where}.model.type must be one of {sorted(MODEL_KEYS)}")
        for key in MODEL_KEYS[model_type]:
            if key not in model:
                raise ValidationError(f"Missing required key: {where}.model.{key}")

    def _process_config(self, config: Dict[str, Any]) -> Dict[str, Any]:
        """Fill runtime defaults"""
        config['runtime'] = {**RUNTIME_DEFAULTS, **config.get('runtime', {})}
        return config

    @staticmethod
    def resolve_path(config: Dict[str, Any], path: str) -> str:
        """Relative paths in the config are taken from the config file's directory"""
        if os.path.isabs(path) or '_path' not in config:
            return path
        return os.path.join(os.path.dirname(config['_path']), path)

    def get_block(self, config: Dict[str, Any], command: str) -> Dict[str, Any]:
        if command not in config:
            raise ConfigurationError(f"Config has no '{command}' block")
        return config[command]

    def build_run_config(self, config: Dict[str, Any], command: str, version: str,
                         overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Merge runtime defaults, the command block and CLI overrides"""
        runtime = dict(config.get('runtime', RUNTIME_DEFAULTS))
        for key, value in (overrides or {}).items():
            if value is not None:
                runtime[key] = value
        block = config.get(command, {})
        n_steps = runtime.get('n_steps') or default_steps(block.get('horizon', 1.0))
        run = RunConfig(command=command, block=block, seed=runtime.get('seed'),
                        n_paths=int(runtime.get('n_paths') or DEFAULT_PATHS), n_steps=int(n_steps),
                        out=runtime.get('out'), output_format=runtime.get('format', 'csv'),
                        u_max=float(runtime.get('u_max', DEFAULT_U_MAX)),
                        build_id=f"riskflow-{version}+{config.get('_sha256', '')[:8]}")
        if command in STOCHASTIC_COMMANDS and run.seed is None:
            raise ValidationError(f"command '{command}' is stochastic and needs a seed")
        if run.output_format not in OUTPUT_FORMATS:
            raise ValidationError(f"format must be one of {OUTPUT_FORMATS}")
        return run

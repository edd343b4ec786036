from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

from models.run_config import RunConfig


class IConfigLoader(ABC):
    """Loads a riskflow JSON config and turns one command block into a RunConfig"""

    @abstractmethod
    def load_config(self, config_path: str) -> Dict[str, Any]:
        """Read, validate and default-fill the config file"""
        pass

    @abstractmethod
    def validate_config(self, config: Dict[str, Any]) -> bool:
        """Raise on malformed runtime settings or model blocks"""
        pass

    @abstractmethod
    def build_run_config(self, config: Dict[str, Any], command: str, version: str,
                         overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        pass

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from models.time_grid import DEFAULT_STEPS_PER_YEAR


OUTPUT_FORMATS = ('csv', 'json')
DEFAULT_PATHS = 100_000


@dataclass
class RunConfig:
    """Parameters of one CLI command run"""
    command: str
    block: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    n_paths: int = DEFAULT_PATHS
    n_steps: int = DEFAULT_STEPS_PER_YEAR
    out: Optional[str] = None
    output_format: str = 'csv'
    u_max: float = 1e6
    build_id: str = ''

    def header(self, stochastic: bool = True) -> Dict[str, Any]:
        """Run metadata embedded in every output"""
        header = {'command': self.command, 'build': self.build_id}
        if stochastic:
            header.update({'seed': self.seed, 'n_paths': self.n_paths, 'n_steps': self.n_steps})
        return header

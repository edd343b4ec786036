import json
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from models.path_ensemble import PathEnsemble
from models.time_grid import make_time_grid
from exceptions.riskflow_exceptions import ConfigurationError


logger = logging.getLogger(__name__)

ENSEMBLE_COLUMNS = ['path', 'node', 'asset', 'value']
CONTRIBUTION_COLUMNS = ['path', 't', 'asset', 'u', 'c', 'k']


class FileUtils:
    """Utility class for file operations"""

    @staticmethod
    def ensure_directory_exists(directory_path: str) -> None:
        """Create directory if it doesn't exist"""
        if directory_path:
            os.makedirs(directory_path, exist_ok=True)

    @staticmethod
    def file_exists(file_path: str) -> bool:
        return os.path.exists(file_path)

    @staticmethod
    def _is_parquet(path: str) -> bool:
        return path.lower().endswith(('.parquet', '.pq'))

    @staticmethod
    def _write_frame(frame: pd.DataFrame, path: str) -> None:
        FileUtils.ensure_directory_exists(os.path.dirname(path))
        if FileUtils._is_parquet(path):
            frame.to_parquet(path, engine='pyarrow', index=False)
        else:
            frame.to_csv(path, index=False)

    @staticmethod
    def _read_frame(path: str) -> pd.DataFrame:
        if not FileUtils.file_exists(path):
            raise ConfigurationError(f"File {path} not found!")
        try:
            if FileUtils._is_parquet(path):
                return pd.read_parquet(path, engine='pyarrow')
            return pd.read_csv(path)
        except Exception as e:
            raise ConfigurationError(f"Could not read {path}: {e}")

    @staticmethod
    def read_table(path: str) -> pd.DataFrame:
        return FileUtils._read_frame(path)

    @staticmethod
    def _sidecar(path: str, suffix: str) -> str:
        stem, ext = os.path.splitext(path)
        return f"{stem}.{suffix}{ext}"

    @staticmethod
    def export_ensemble(ensemble: PathEnsemble, path: str) -> List[str]:
        """Write values as a long (path, node, asset, value) table plus increment and meta sidecars"""
        n_paths, n_nodes, n_assets = ensemble.values.shape
        p, k, a = np.meshgrid(np.arange(n_paths), np.arange(n_nodes), np.arange(n_assets), indexing='ij')
        values = pd.DataFrame({'path': p.ravel(), 'node': k.ravel(), 'asset': a.ravel(),
                               'value': ensemble.values.ravel()})
        FileUtils._write_frame(values, path)

        n_steps, n_drivers = ensemble.increments.shape[1:]
        p, k, j = np.meshgrid(np.arange(n_paths), np.arange(n_steps), np.arange(n_drivers), indexing='ij')
        increments = pd.DataFrame({'path': p.ravel(), 'step': k.ravel(), 'driver': j.ravel(),
                                   'increment': ensemble.increments.ravel()})
        increments_path = FileUtils._sidecar(path, 'increments')
        FileUtils._write_frame(increments, increments_path)
        written = [path, increments_path]

        if ensemble.volatility is not None:
            p, k = np.meshgrid(np.arange(n_paths), np.arange(n_nodes), indexing='ij')
            vol = pd.DataFrame({'path': p.ravel(), 'node': k.ravel(), 'volatility': ensemble.volatility.ravel()})
            vol_path = FileUtils._sidecar(path, 'volatility')
            FileUtils._write_frame(vol, vol_path)
            written.append(vol_path)

        meta = {'horizon': ensemble.grid.horizon, 'n_steps': ensemble.grid.n_steps,
                'model_name': ensemble.model_name, 'seed': ensemble.seed,
                'absorbed_fraction': ensemble.absorbed_fraction}
        meta_path = os.path.splitext(path)[0] + '.meta.json'
        with open(meta_path, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
        written.append(meta_path)

        logger.info(f"Exported ensemble ({n_paths} paths) to {path}")
        return written

    @staticmethod
    def import_ensemble(path: str) -> PathEnsemble:
        """Read an ensemble written by export_ensemble"""
        meta_path = os.path.splitext(path)[0] + '.meta.json'
        if not FileUtils.file_exists(meta_path):
            raise ConfigurationError(f"Ensemble metadata {meta_path} not found!")
        with open(meta_path, 'r', encoding='utf-8') as f:
            meta = json.load(f)

        frame = FileUtils._read_frame(path)
        missing = set(ENSEMBLE_COLUMNS) - set(frame.columns)
        if missing:
            raise ConfigurationError(f"Ensemble table {path} lacks columns {sorted(missing)}")
        frame = frame.sort_values(['path', 'node', 'asset'])
        n_paths = int(frame['path'].max()) + 1
        n_nodes = int(frame['node'].max()) + 1
        n_assets = int(frame['asset'].max()) + 1
        if len(frame) != n_paths * n_nodes * n_assets:
            raise ConfigurationError(f"Ensemble table {path} is incomplete")
        values = frame['value'].to_numpy().reshape(n_paths, n_nodes, n_assets)

        inc = FileUtils._read_frame(FileUtils._sidecar(path, 'increments'))
        inc = inc.sort_values(['path', 'step', 'driver'])
        n_drivers = int(inc['driver'].max()) + 1
        increments = inc['increment'].to_numpy().reshape(n_paths, n_nodes - 1, n_drivers)

        volatility = None
        vol_path = FileUtils._sidecar(path, 'volatility')
        if FileUtils.file_exists(vol_path):
            vol = FileUtils._read_frame(vol_path).sort_values(['path', 'node'])
            volatility = vol['volatility'].to_numpy().reshape(n_paths, n_nodes)

        grid = make_time_grid(meta['horizon'], meta['n_steps'])
        return PathEnsemble(grid=grid, values=values, increments=increments,
                            model_name=meta.get('model_name', 'unknown'), seed=meta.get('seed'),
                            volatility=volatility,
                            absorbed_fraction=meta.get('absorbed_fraction', 0.0))

    @staticmethod
    def contribution_frame(contribution, grid) -> pd.DataFrame:
        """Long table (path, t, asset, u, c, k)"""
        n_paths, n_steps, n_assets = contribution.marginal.shape
        p, k, a = np.meshgrid(np.arange(n_paths), np.arange(n_steps), np.arange(n_assets), indexing='ij')
        return pd.DataFrame({'path': p.ravel(), 't': grid.left_nodes[k.ravel()], 'asset': a.ravel(),
                             'u': contribution.shares.ravel(), 'c': contribution.marginal.ravel(),
                             'k': contribution.risk.ravel()})[CONTRIBUTION_COLUMNS]

    @staticmethod
    def export_contribution(contribution, grid, path: str) -> None:
        FileUtils._write_frame(FileUtils.contribution_frame(contribution, grid), path)

    @staticmethod
    def read_matrix_csv(path: str) -> np.ndarray:
        """Square matrix stored as a headerless CSV"""
        if not FileUtils.file_exists(path):
            raise ConfigurationError(f"Matrix file {path} not found!")
        try:
            frame = pd.read_csv(path, header=None)
            matrix = frame.to_numpy(dtype=float)
        except Exception as e:
            raise ConfigurationError(f"Malformed matrix file {path}: {e}")
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ConfigurationError(f"Matrix in {path} is not square: {matrix.shape}")
        return matrix

    @staticmethod
    def render_table(rows: List[Dict[str, Any]], columns: List[str], header: Dict[str, Any],
                     output_format: str = 'csv') -> str:
        """Render rows with a run header; csv header lines start with '#'"""
        frame = pd.DataFrame(rows, columns=columns)
        if output_format == 'json':
            payload = {'header': header, 'columns': columns,
                       'rows': json.loads(frame.to_json(orient='records', double_precision=15))}
            return json.dumps(payload, indent=2, sort_keys=True) + '\n'
        lines = [f"# {key}={header[key]}" for key in sorted(header)]
        return '\n'.join(lines) + '\n' + frame.to_csv(index=False, float_format='%.12g')

    @staticmethod
    def write_text(text: str, path: Optional[str]) -> None:
        """Write to path, or stdout when no path is given"""
        if path:
            FileUtils.ensure_directory_exists(os.path.dirname(path))
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        else:
            print(text, end='')

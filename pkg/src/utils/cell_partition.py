from dataclasses import dataclass, field

import numpy as np

from models.budget import InformationClass
from exceptions.riskflow_exceptions import InvalidArgumentError


@dataclass(frozen=True)
class CellPartition:
    """Assignment of every (path, step) to a cell of an information class"""
    cells: np.ndarray = field(repr=False)     # (n_paths, n_steps) compact cell ids
    n_cells: int
    counts: np.ndarray = field(repr=False)    # (n_cells,) number of (path, step) points
    steps: np.ndarray = field(repr=False)     # (n_cells,) step index of each cell

    @property
    def weights(self) -> np.ndarray:
        """Share of the (path, step) measure carried by each cell"""
        return self.counts / self.counts.sum()


class CellPartitioner:
    """Builds information-class cells on an ensemble and averages over them"""

    @staticmethod
    def state_track(info_class: InformationClass, ensemble) -> np.ndarray:
        """State the feedback bins are taken on, shape (n_paths, n_steps + 1)"""
        source, index = info_class.state_source
        if source == 'asset':
            if index >= ensemble.n_assets:
                raise InvalidArgumentError(f"state asset {index} not in ensemble")
            return ensemble.values[:, :, index]
        if index >= ensemble.n_drivers:
            raise InvalidArgumentError(f"state driver {index} not in ensemble")
        return ensemble.cumulative_driver(index)

    @staticmethod
    def quantile_bins(state: np.ndarray, n_bins: int) -> np.ndarray:
        """Equal-probability bins; tied states share a bin and edges nest when counts divide"""
        if n_bins == 1:
            return np.zeros(state.shape[0], dtype=np.int64)
        edges = np.quantile(state, np.arange(1, n_bins) / n_bins)
        return np.searchsorted(edges, state, side='right').astype(np.int64)

    @staticmethod
    def partition(info_class: InformationClass, ensemble) -> CellPartition:
        n_paths, n_steps = ensemble.n_paths, ensemble.grid.n_steps
        step_index = np.broadcast_to(np.arange(n_steps), (n_paths, n_steps))

        if info_class.kind == 'constant':
            raw = np.zeros((n_paths, n_steps), dtype=np.int64)
        elif info_class.kind == 'deterministic':
            raw = step_index.astype(np.int64)
        elif info_class.kind == 'feedback':
            track = CellPartitioner.state_track(info_class, ensemble)
            n_bins = min(info_class.n_bins, n_paths)
            raw = np.empty((n_paths, n_steps), dtype=np.int64)
            for k in range(n_steps):
                raw[:, k] = k * n_bins + CellPartitioner.quantile_bins(track[:, k], n_bins)
        else:
            raw = np.arange(n_paths * n_steps, dtype=np.int64).reshape(n_paths, n_steps)

        labels, cells = np.unique(raw, return_inverse=True)
        cells = cells.reshape(n_paths, n_steps)
        counts = np.bincount(cells.ravel(), minlength=labels.size).astype(float)
        steps = np.zeros(labels.size, dtype=np.int64)
        steps[cells.ravel()] = step_index.ravel()
        return CellPartition(cells=cells, n_cells=labels.size, counts=counts, steps=steps)

    @staticmethod
    def cell_average(partition: CellPartition, table: np.ndarray) -> np.ndarray:
        """Average of a (n_paths, n_steps, d) table over each cell, shape (n_cells, d)"""
        flat_cells = partition.cells.ravel()
        d = table.shape[2]
        out = np.empty((partition.n_cells, d))
        for i in range(d):
            out[:, i] = np.bincount(flat_cells, weights=table[:, :, i].ravel(),
                                    minlength=partition.n_cells) / partition.counts
        return out

    @staticmethod
    def cell_sum(partition: CellPartition, table: np.ndarray) -> np.ndarray:
        flat_cells = partition.cells.ravel()
        d = table.shape[2]
        out = np.empty((partition.n_cells, d))
        for i in range(d):
            out[:, i] = np.bincount(flat_cells, weights=table[:, :, i].ravel(),
                                    minlength=partition.n_cells)
        return out

    @staticmethod
    def broadcast(partition: CellPartition, cell_values: np.ndarray) -> np.ndarray:
        """Cell values spread back onto every (path, step), shape (n_paths, n_steps, d)"""
        return cell_values[partition.cells]

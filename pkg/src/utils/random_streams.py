import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Optional

import numpy as np

from exceptions.riskflow_exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)

THREADS_ENV = 'RISKFLOW_THREADS'
CHUNK_PATHS = 1024


class RandomStreams:
    """Counter-based Gaussian streams keyed on (seed, path, stream)

    Each path owns a Philox generator seeded from SeedSequence([seed, path, stream]),
    so any path regenerates on its own and ensembles do not depend on the worker count.
    """

    @staticmethod
    def generator(seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
        entropy = [int(seed), int(path_index)] if stream == 0 else [int(seed), int(path_index), int(stream)]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    @staticmethod
    def gaussian_increments(seed: int, path_index: int, n_steps: int, n_drivers: int,
                            dt: float, stream: int = 0) -> np.ndarray:
        """I.i.d. N(0, dt) increments, shape (n_steps, n_drivers)"""
        if not dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {dt}")
        rng = RandomStreams.generator(seed, path_index, stream)
        return np.sqrt(dt) * rng.standard_normal((n_steps, n_drivers))

    @staticmethod
    def gaussian_replicas(seed: int, path_index: int, n_replicas: int, n_steps: int,
                          dt: float, stream: int) -> np.ndarray:
        """n_replicas independent one-driver increment paths, shape (n_replicas, n_steps)"""
        rng = RandomStreams.generator(seed, path_index, stream)
        return np.sqrt(dt) * rng.standard_normal((n_replicas, n_steps))

    @staticmethod
    def worker_count(requested: Optional[int] = None) -> int:
        """Worker count capped by RISKFLOW_THREADS"""
        workers = requested or os.cpu_count() or 1
        cap = os.environ.get(THREADS_ENV)
        if cap:
            try:
                workers = min(workers, max(1, int(cap)))
            except ValueError:
                logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
        return max(1, workers)

    @staticmethod
    def ensemble_increments(seed: int, n_paths: int, n_steps: int, n_drivers: int,
                            dt: float, stream: int = 0,
                            max_workers: Optional[int] = None) -> np.ndarray:
        """Increments for paths 0..n_paths-1, shape (n_paths, n_steps, n_drivers)"""
        if n_paths < 1:
            raise InvalidArgumentError("n_paths must be positive")
        if not dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {dt}")

        out = np.empty((n_paths, n_steps, n_drivers))
        chunks = [(start, min(start + CHUNK_PATHS, n_paths)) for start in range(0, n_paths, CHUNK_PATHS)]

        def fill(bounds) -> int:
            start, stop = bounds
            for path in range(start, stop):
                out[path] = RandomStreams.gaussian_increments(seed, path, n_steps, n_drivers, dt, stream)
            return stop - start

        workers = RandomStreams.worker_count(max_workers)
        if workers == 1 or len(chunks) == 1:
            for bounds in chunks:
                fill(bounds)
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = [executor.submit(fill, bounds) for bounds in chunks]
                for future in as_completed(futures):
                    future.result()

        logger.debug(f"Generated {n_paths} x {n_steps} x {n_drivers} increments with {workers} workers")
        return out

    @staticmethod
    def ensemble_replicas(seed: int, n_paths: int, n_replicas: int, n_steps: int,
                          dt: float, stream: int, max_workers: Optional[int] = None) -> np.ndarray:
        """Replica increments per path, shape (n_replicas, n_paths, n_steps)"""
        out = np.empty((n_replicas, n_paths, n_steps))
        chunks = [(start, min(start + CHUNK_PATHS, n_paths)) for start in range(0, n_paths, CHUNK_PATHS)]

        def fill(bounds) -> int:
            start, stop = bounds
            for path in range(start, stop):
                out[:, path, :] = RandomStreams.gaussian_replicas(seed, path, n_replicas, n_steps, dt, stream)
            return stop - start

        workers = RandomStreams.worker_count(max_workers)
        with ThreadPoolExecutor(max_workers=workers) as executor:
            for future in as_completed([executor.submit(fill, bounds) for bounds in chunks]):
                future.result()
        return out


def gaussian_increments(seed: int, path_index: int, n_steps: int, n_drivers: int, dt: float) -> np.ndarray:
    """Module-level shortcut for RandomStreams.gaussian_increments"""
    return RandomStreams.gaussian_increments(seed, path_index, n_steps, n_drivers, dt)

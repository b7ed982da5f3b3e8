"""Ensemble orchestration over trajectory-index chunks.

The index range ``0 .. n_traj - 1`` is cut into fixed-size chunks that do not
depend on the worker count.  Each chunk is computed independently from its
own per-trajectory streams and the results are merged in index order, so the
output is identical for any number of workers.
"""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from .stats import EnsembleStats, merge_all

Runner = Callable[[int, np.ndarray], EnsembleStats]


class TrajectoryFailure(RuntimeError):
    def __init__(self, master_seed: int, index: int, cause: BaseException):
        super().__init__(f"trajectory {index} (master seed {master_seed}) failed: {cause!r}")
        self.master_seed = master_seed
        self.index = index
        self.cause = cause


def chunks(n_traj: int, chunk: int) -> list[np.ndarray]:
    if n_traj < 0:
        raise ValueError("number of trajectories must be nonnegative")
    if chunk < 1:
        raise ValueError("chunk size must be positive")
    return [np.arange(a, min(a + chunk, n_traj), dtype=np.int64) for a in range(0, n_traj, chunk)]


def _run_chunk(runner: Runner, master_seed: int, indices: np.ndarray) -> EnsembleStats:
    try:
        return runner(master_seed, indices)
    except Exception as exc:
        # find the first trajectory that fails on its own
        for i in indices:
            try:
                runner(master_seed, np.array([i]))
            except Exception as single:
                raise TrajectoryFailure(master_seed, int(i), single) from single
        raise TrajectoryFailure(master_seed, int(indices[0]), exc) from exc


def run_ensemble(runner: Runner, n_traj: int, workers: int = 1, master_seed: int = 0,
                 chunk: int = 250) -> EnsembleStats:
    """Run ``n_traj`` trajectories through ``runner`` and merge in index order."""
    parts = chunks(n_traj, chunk)
    if not parts:
        return EnsembleStats()
    if workers <= 1 or len(parts) == 1:
        return merge_all(_run_chunk(runner, master_seed, p) for p in parts)
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=min(workers, len(parts)), mp_context=ctx) as pool:
        futures = [pool.submit(_run_chunk, runner, master_seed, p) for p in parts]
        return merge_all(f.result() for f in futures)

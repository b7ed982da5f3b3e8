"""Per-trajectory uniform random streams.

Trajectory ``i`` of an ensemble with master seed ``s`` draws from a Philox
generator keyed by ``SeedSequence(s, spawn_key=(i,))``, so its numbers do not
depend on which worker runs it or on what else is in its batch.  Every draw is
a single uniform double taken in a fixed order:

    initial measurement bits, R1, (R2, R1) per jump, final measurement bits.

``Generator.random(k)`` yields the same doubles as ``k`` scalar calls, which
lets the batched engine prefetch blocks without changing the sequence.
"""
from __future__ import annotations

import numpy as np


def generator(master_seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class UniformStream:
    """Sequential uniforms for one trajectory."""

    def __init__(self, master_seed: int, index: int):
        self.master_seed = int(master_seed)
        self.index = int(index)
        self._gen = generator(master_seed, index)

    def random(self, size=None):
        return self._gen.random(size)

    def open_unit(self) -> float:
        """A uniform on ``(0, 1]``, used for thresholds compared as ``<=``."""
        return 1.0 - float(self._gen.random())


class BatchStreams:
    """Prefetching uniforms for a batch of trajectories, one row per trajectory."""

    def __init__(self, master_seed: int, indices, block: int = 128):
        self.indices = np.asarray(indices, dtype=np.int64)
        self._gens = [generator(master_seed, i) for i in self.indices]
        self._block = int(block)
        self._buf = np.empty((len(self._gens), self._block))
        self._pos = np.full(len(self._gens), self._block, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._gens)

    def _refill(self, rows):
        for r in rows:
            self._buf[r] = self._gens[r].random(self._block)
        self._pos[rows] = 0

    def uniform(self, rows) -> np.ndarray:
        """One uniform on ``[0, 1)`` for each listed row."""
        rows = np.asarray(rows, dtype=np.int64)
        empty = rows[self._pos[rows] >= self._block]
        if empty.size:
            self._refill(empty)
        out = self._buf[rows, self._pos[rows]]
        self._pos[rows] += 1
        return out

    def open_unit(self, rows) -> np.ndarray:
        return 1.0 - self.uniform(rows)

    def uniform_block(self, rows, k: int) -> np.ndarray:
        """``k`` consecutive uniforms per listed row, shape ``(len(rows), k)``."""
        rows = np.asarray(rows, dtype=np.int64)
        out = np.empty((len(rows), k))
        for j in range(k):
            out[:, j] = self.uniform(rows)
        return out

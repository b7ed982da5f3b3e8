"""Per-trajectory sample storage and the statistics derived from it.

Samples are kept in trajectory-index order, so every derived number is a
deterministic function of the ensemble regardless of how it was partitioned.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tpm_entropy import IftEstimate, ift_estimator, running_ift


@dataclass
class EnsembleStats:
    """Samples of named scalar quantities plus integer counters.

    ``mask`` marks samples excluded from statistics (floored probabilities);
    excluded samples are still stored so merges stay exact.
    """

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    samples: dict[str, np.ndarray] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    mask: np.ndarray | None = None
    records: dict[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        n = self.indices.size
        self.samples = {k: np.asarray(v, dtype=float) for k, v in self.samples.items()}
        for k, v in self.samples.items():
            if v.shape != (n,):
                raise ValueError(f"quantity {k} has {v.shape} samples for {n} trajectories")
        if self.mask is None:
            self.mask = np.ones(n, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def count(self) -> int:
        return int(self.indices.size)

    @property
    def quantities(self) -> list[str]:
        return sorted(self.samples)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        """Concatenate two ensembles and put the result in trajectory-index order."""
        if self.count == 0 and not self.samples:
            return other.copy()
        if other.count == 0 and not other.samples:
            return self.copy()
        if set(self.samples) != set(other.samples):
            raise ValueError("cannot merge ensembles with different quantities")
        idx = np.concatenate([self.indices, other.indices])
        if np.unique(idx).size != idx.size:
            raise ValueError("ensembles share trajectory indices")
        order = np.argsort(idx, kind="stable")
        counters = dict(self.counters)
        for k, v in other.counters.items():
            counters[k] = counters.get(k, 0) + int(v)
        return EnsembleStats(
            idx[order],
            {k: np.concatenate([self.samples[k], other.samples[k]])[order] for k in self.samples},
            counters,
            np.concatenate([self.mask, other.mask])[order],
            {**self.records, **other.records},
        )

    def copy(self) -> "EnsembleStats":
        return EnsembleStats(self.indices.copy(), {k: v.copy() for k, v in self.samples.items()},
                             dict(self.counters), self.mask.copy(), dict(self.records))

    def values(self, q: str, include_masked: bool = False) -> np.ndarray:
        v = self.samples[q]
        return v if include_masked else v[self.mask]

    def mean(self, q: str) -> float:
        v = self.values(q)
        return float(v.mean()) if v.size else float("nan")

    def variance(self, q: str) -> float:
        v = self.values(q)
        return float(v.var(ddof=1)) if v.size > 1 else float("nan")

    def sem(self, q: str) -> float:
        v = self.values(q)
        return float(np.sqrt(self.variance(q) / v.size)) if v.size > 1 else float("nan")

    def histogram(self, q: str, bins: int | str = "auto"):
        """``(edges, counts)``; ``"auto"`` picks the Freedman-Diaconis width."""
        v = self.values(q)
        if v.size == 0:
            return np.array([0.0, 1.0]), np.zeros(1, dtype=np.int64)
        edges = np.histogram_bin_edges(v, bins="fd" if bins == "auto" else int(bins))
        counts, edges = np.histogram(v, bins=edges)
        return edges, counts

    def ift(self, q: str) -> IftEstimate:
        return ift_estimator(self.values(q))

    def convergence(self, q: str, checkpoints=None) -> np.ndarray:
        """Running ``<exp(-q)>`` and its standard error versus trajectory count."""
        v = self.values(q)
        if checkpoints is None:
            checkpoints = convergence_checkpoints(v.size)
        return running_ift(v, checkpoints)


def convergence_checkpoints(n: int, per_decade: int = 20) -> np.ndarray:
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    pts = np.unique(np.round(np.logspace(np.log10(2), np.log10(n), per_decade * max(1, int(np.ceil(np.log10(n)))))))
    return np.unique(np.append(pts.astype(np.int64), n))


def merge_all(parts) -> EnsembleStats:
    out = EnsembleStats()
    for p in parts:
        out = out.merge(p)
    return out

"""Experiment runners: steady-state fluctuation theorems and bit erasure.

Runners are picklable callables ``runner(master_seed, indices) -> EnsembleStats``
that rebuild their extended system lazily inside whichever process runs them.
"""
from __future__ import annotations

import numpy as np

from ..gaussian import eigenbasis, fidelity, hermitize
from ..lead_model import ExtendedSystem
from ..streams import BatchStreams
from ..tpm_entropy import (
    entropy_productions, floored, log_bit_probability, sample_final_batch, sample_initial_batch,
)
from ..trajectory import TrajectoryEngine, time_grid
from ..unconditional import current_vector, evolve, steady_state
from .config import ExperimentConfig
from .ensemble import run_ensemble
from .protocols import (
    ErasureProtocol, erasure_initial_state, erasure_protocols, erasure_system,
    erasure_target_state, landauer_bound, steady_system,
)
from .stats import EnsembleStats

ENTROPIES = ("S_tot", "S_unc", "S_mart", "S_tot_mod")
STEADY_QUANTITIES = ("heat", "particles", "energy", "measurement_energy", "entropy_flux", "n_jumps")
ERASURE_QUANTITIES = ("dissipated_heat", "heat", "particles", "energy", "measurement_energy",
                      "bit_occupation", "n_jumps")


def _batch_log_overlap(Cr: np.ndarray, C: np.ndarray) -> np.ndarray:
    # log Tr[rho_r rho] = log det(C_r C + (1 - C_r)(1 - C)), batched
    eye = np.eye(C.shape[-1])
    M = Cr @ C + (eye - Cr) @ (eye - C)
    sign, logdet = np.linalg.slogdet(M)
    if np.any(np.abs(sign.imag) > 1e-8) or np.any(sign.real < 0):
        raise np.linalg.LinAlgError("overlap determinant is not positive")
    return logdet


def _records(res, indices) -> dict:
    return {int(i): res.records[j] for j, i in enumerate(indices)} if res.records is not None else {}


class SteadyFtRunner:
    """Two-point-measurement trajectories started from the steady state."""

    def __init__(self, cfg: ExperimentConfig, record: bool = False):
        self.cfg = cfg
        self.record = record
        self._cache = None

    def __getstate__(self):
        return {"cfg": self.cfg, "record": self.record, "_cache": None}

    def _setup(self):
        if self._cache is None:
            sys = steady_system(self.cfg)
            Css = steady_state(sys)
            U, lam = eigenbasis(Css)
            self._cache = (sys, Css, U, lam, TrajectoryEngine(sys))
        return self._cache

    def __call__(self, master_seed: int, indices) -> EnsembleStats:
        sys, Css, U, lam, engine = self._setup()
        cfg = self.cfg
        indices = np.asarray(indices, dtype=np.int64)
        B, n = indices.size, sys.n
        streams = BatchStreams(master_seed, indices)
        rows = np.arange(B)
        s0, logp0, Cr0 = sample_initial_batch(U, lam, streams.uniform_block(rows, n))
        tau = cfg.protocol.tau[0]
        res = engine.run(Cr0, time_grid(0.0, tau, cfg.run.step), streams, record=self.record)
        Cr = hermitize(res.C, check=False)
        Cp = U.conj().T[None] @ Cr @ U[None]
        s_fin, _ = sample_final_batch(Cp, streams.uniform_block(rows, n))
        logpt = log_bit_probability(lam, s_fin)
        logO = _batch_log_overlap(Cr, Css)
        sigma = res.entropy_flux.sum(axis=1)
        em_over_T = (res.dEM / np.array([r.T for r in sys.reservoirs])).sum(axis=1)
        S = entropy_productions(logp0, logpt, logO, sigma, em_over_T)
        bad = floored(logp0, logpt, logO)
        samples = dict(zip(ENTROPIES, S))
        samples.update(
            heat=res.heat.sum(axis=1), particles=res.dN.sum(axis=1), energy=res.dE.sum(axis=1),
            measurement_energy=res.dEM.sum(axis=1), entropy_flux=sigma,
            n_jumps=res.n_jumps.astype(float),
        )
        return EnsembleStats(indices, samples, {"floored": int(bad.sum())}, ~bad, _records(res, indices))


class ErasureRunner:
    """Trajectories of the erasure protocol from a half-filled bit."""

    def __init__(self, cfg: ExperimentConfig, protocol: ErasureProtocol, record: bool = False):
        self.cfg = cfg
        self.protocol = protocol
        self.record = record
        self._cache = None

    def __getstate__(self):
        return {"cfg": self.cfg, "protocol": self.protocol, "record": self.record, "_cache": None}

    def _setup(self):
        if self._cache is None:
            ld = self.cfg.lead
            sys = erasure_system(self.protocol, ld.T, ld.L, ld.Lambda_plus, ld.Lambda_minus)
            self._cache = (sys, TrajectoryEngine(sys))
        return self._cache

    def __call__(self, master_seed: int, indices) -> EnsembleStats:
        sys, engine = self._setup()
        p = self.protocol
        indices = np.asarray(indices, dtype=np.int64)
        streams = BatchStreams(master_seed, indices)
        grid = time_grid(0.0, p.t_final, self.cfg.run.step, breakpoints=[p.tau])
        res = engine.run(erasure_initial_state(sys), grid, streams, record=self.record)
        heat = res.heat.sum(axis=1)
        samples = dict(
            dissipated_heat=-heat, heat=heat, particles=res.dN.sum(axis=1),
            energy=res.dE.sum(axis=1), measurement_energy=res.dEM.sum(axis=1),
            bit_occupation=np.real(res.C[:, 0, 0]), n_jumps=res.n_jumps.astype(float),
        )
        return EnsembleStats(indices, samples, {}, None, _records(res, indices))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _describe(stats: EnsembleStats, quantities, with_ift=()) -> dict:
    out = {}
    for q in quantities:
        d = {"mean": stats.mean(q), "variance": stats.variance(q), "sem": stats.sem(q)}
        if q in with_ift and stats.values(q).size > 1:
            e = stats.ift(q)
            d["ift_mean_exp"] = e.mean_exp
            d["ift_se"] = e.se_exp
        out[q] = d
    return out


def run_steady_ft(cfg: ExperimentConfig) -> tuple[EnsembleStats, dict]:
    stats = run_ensemble(SteadyFtRunner(cfg, cfg.run.emit_events), cfg.run.trajectories,
                         cfg.run.workers, cfg.run.seed, cfg.run.chunk)
    report = {
        "experiment": "steady-ft",
        "parameters": cfg.to_dict(),
        "trajectories": stats.count,
        "counters": dict(stats.counters),
        "quantities": _describe(stats, ENTROPIES + STEADY_QUANTITIES, ENTROPIES)
        if stats.count else {},
    }
    return stats, report


def erasure_unconditional(cfg: ExperimentConfig, protocol: ErasureProtocol) -> dict:
    """Ensemble-mean heat from the external and internal currents, and the fidelity."""
    ld = cfg.lead
    sys = erasure_system(protocol, ld.T, ld.L, ld.Lambda_plus, ld.Lambda_minus)
    ev = evolve(erasure_initial_state(sys), (0.0, protocol.t_final), sys, currents=True,
                breakpoints=[protocol.tau])
    Q = float(ev.heat([ld.mu])[-1].sum())
    QS = float(ev.internal_heat([ld.mu])[-1].sum())
    return {
        "heat": Q,
        "internal_heat": QS,
        "heat_mismatch": abs(Q - QS) / max(abs(Q), ld.T),
        "fidelity": fidelity(ev.final, erasure_target_state(sys)),
        "bit_occupation": float(np.real(ev.final[0, 0])),
    }


def run_erasure(cfg: ExperimentConfig) -> tuple[dict[str, EnsembleStats], dict]:
    all_stats = {}
    per_tau = {}
    for p in erasure_protocols(cfg):
        label = tau_label(p)
        stats = run_ensemble(ErasureRunner(cfg, p, cfg.run.emit_events), cfg.run.trajectories,
                             cfg.run.workers, cfg.run.seed, cfg.run.chunk)
        all_stats[label] = stats
        entry = {"tau": p.tau, "gamma_max_tau": p.gamma_max * p.tau, "tau_eq": p.tau_eq,
                 "trajectories": stats.count}
        if stats.count:
            entry["quantities"] = _describe(stats, ERASURE_QUANTITIES)
        entry["unconditional"] = erasure_unconditional(cfg, p)
        per_tau[label] = entry
    report = {
        "experiment": "erasure",
        "parameters": cfg.to_dict(),
        "landauer_bound": landauer_bound(cfg.lead.T),
        "protocols": per_tau,
    }
    return all_stats, report


def tau_label(p: ErasureProtocol) -> str:
    return f"gt{p.gamma_max * p.tau:g}"


def steady_unconditional(cfg: ExperimentConfig, L: int | None = None) -> dict:
    sys = steady_system(cfg, L)
    C = steady_state(sys)
    cur = current_vector(C, sys)
    names = ("particle_current", "energy_current", "measurement_energy_current",
             "internal_particle_current", "internal_energy_current")
    out = {name: float(cur[i].sum()) for i, name in enumerate(names)}
    out["dot_occupation"] = float(np.real(C[0, 0]))
    out["L"] = sys.n - sys.n_sys
    return out


def unconditional_report(cfg: ExperimentConfig) -> dict:
    if cfg.protocol.kind == "erasure":
        return {
            "experiment": "unconditional",
            "parameters": cfg.to_dict(),
            "landauer_bound": landauer_bound(cfg.lead.T),
            "protocols": {tau_label(p): erasure_unconditional(cfg, p) for p in erasure_protocols(cfg)},
        }
    return {"experiment": "unconditional", "parameters": cfg.to_dict(),
            "steady_state": steady_unconditional(cfg)}


def system_for(cfg: ExperimentConfig) -> ExtendedSystem:
    if cfg.protocol.kind == "erasure":
        p = erasure_protocols(cfg)[0]
        return erasure_system(p, cfg.lead.T, cfg.lead.L, cfg.lead.Lambda_plus, cfg.lead.Lambda_minus)
    return steady_system(cfg)

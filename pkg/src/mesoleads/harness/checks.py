"""Cross-checks of the covariance engines against the dense many-body model."""
from __future__ import annotations

import numpy as np

from ..oracle import MAX_MODES_TRAJECTORY, dense_covariance, dense_evolve, dense_trajectory, gaussian_density, wick_residual
from ..trajectory import run_trajectory
from ..unconditional import evolve
from .config import ExperimentConfig
from .protocols import erasure_initial_state, erasure_protocols, erasure_system, steady_system

UNCONDITIONAL_TOL = 1e-8
COVARIANCE_TOL = 1e-6
JUMP_TIME_TOL = 1e-6
WICK_TOL = 1e-8


def _small_system(cfg: ExperimentConfig, L: int):
    if cfg.protocol.kind == "erasure":
        p = erasure_protocols(cfg)[0]
        sys = erasure_system(p, cfg.lead.T, L, cfg.lead.Lambda_plus, cfg.lead.Lambda_minus)
        return sys, [p.tau], p.t_final
    return steady_system(cfg, L=L), [], cfg.protocol.tau[0]


def records_match(a, b, tol: float = JUMP_TIME_TOL) -> bool:
    """Same channels in the same order with jump times within ``tol``."""
    if len(a) != len(b):
        return False
    return all(x.k == y[1] and x.sigma == y[2] and abs(x.t - y[0]) <= tol for x, y in zip(a, b))


def oracle_check(cfg: ExperimentConfig, n_seeds: int = 5, L: int = 3, t_max: float = 20.0,
                 h_max: float = 0.25) -> dict:
    """Compare unconditional and seed-locked conditional evolutions on a small lead."""
    L = min(L, MAX_MODES_TRAJECTORY - 1)
    sys, breaks, t_end = _small_system(cfg, L)
    t_end = min(t_end, t_max)
    breaks = [b for b in breaks if b < t_end]
    C0 = erasure_initial_state(sys)
    rho0 = gaussian_density(C0)

    times = np.linspace(0.0, t_end, 6)
    ev = evolve(C0, (0.0, t_end), sys, t_eval=times, breakpoints=breaks)
    dense = dense_evolve(sys, rho0, times)
    unc_err = max(np.abs(ev.C[i] - dense_covariance(r)).max() for i, r in enumerate(dense))

    traj = []
    for i in range(n_seeds):
        eng = run_trajectory(sys, C0, (0.0, t_end), cfg.run.seed, i, h_max=h_max, breakpoints=breaks)
        ref = dense_trajectory(sys, rho0, (0.0, t_end), cfg.run.seed, i)
        traj.append({
            "index": i,
            "jumps": len(ref.record),
            "records_match": records_match(eng.record, ref.record),
            "covariance_error": float(np.abs(eng.C - dense_covariance(ref.rho)).max()),
            "wick_residual": wick_residual(ref.rho),
        })
    passed = (
        unc_err < UNCONDITIONAL_TOL
        and all(t["records_match"] for t in traj)
        and all(t["covariance_error"] < COVARIANCE_TOL for t in traj)
        and all(t["wick_residual"] < WICK_TOL for t in traj)
    )
    return {
        "experiment": "oracle-check",
        "parameters": cfg.to_dict(),
        "modes": sys.n,
        "t_end": t_end,
        "unconditional_error": float(unc_err),
        "trajectories": traj,
        "tolerances": {"unconditional": UNCONDITIONAL_TOL, "covariance": COVARIANCE_TOL,
                       "jump_time": JUMP_TIME_TOL, "wick": WICK_TOL},
        "passed": bool(passed),
    }

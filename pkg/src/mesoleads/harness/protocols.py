"""Physical set-ups for the experiments: a steadily coupled dot and bit erasure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lead_model import ExtendedSystem, ReservoirSpec, fermi_dirac, single_dot
from .config import ExperimentConfig


@dataclass(frozen=True)
class ErasureProtocol:
    """Ramp of a one-level dot from ``mu`` to ``epsilon_tau`` while the coupling
    switches on and off again, followed by an uncoupled equilibration stage.

    The peak coupling is ``epsilon_tau / pi``.
    """

    tau: float
    epsilon_tau: float
    mu: float
    omega_max: float = 1.0
    tau_eq: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"protocol duration must be positive, got {self.tau}")
        if self.tau_eq < 0:
            raise ValueError("equilibration time must be nonnegative")
        if not self.epsilon_tau > 0:
            raise ValueError("final splitting must be positive so the peak coupling is positive")

    @property
    def gamma_max(self) -> float:
        return self.epsilon_tau / np.pi

    @property
    def t_final(self) -> float:
        return self.tau + self.tau_eq


def erasure_drive(t: float, protocol: ErasureProtocol) -> tuple[float, float]:
    """Dot energy and coupling strength ``(eps(t), Gamma(t))``.

    Valid on ``[0, tau + tau_eq]``; after ``tau`` the dot sits at
    ``epsilon_tau`` and is decoupled.
    """
    p = protocol
    if not 0.0 <= t <= p.t_final * (1 + 1e-12):
        raise ValueError(f"t={t} outside the protocol window [0, {p.t_final}]")
    if t >= p.tau:
        return float(p.epsilon_tau), 0.0
    x = t / p.tau
    eps = p.mu + (p.epsilon_tau - p.mu) * (x - np.sin(2 * np.pi * x) / (2 * np.pi))
    gam = p.gamma_max * np.sin(np.pi * x) ** 2
    return float(eps), float(gam)


class _DotEnergy:
    # picklable callables so systems can be shipped to worker processes
    def __init__(self, protocol: ErasureProtocol):
        self.protocol = protocol

    def __call__(self, t: float) -> np.ndarray:
        return np.array([[erasure_drive(min(t, self.protocol.t_final), self.protocol)[0]]], dtype=complex)


class _CouplingScale:
    def __init__(self, protocol: ErasureProtocol):
        self.protocol = protocol

    def __call__(self, t: float) -> float:
        gam = erasure_drive(min(t, self.protocol.t_final), self.protocol)[1]
        return float(np.sqrt(gam / self.protocol.gamma_max))


def erasure_system(protocol: ErasureProtocol, T: float, L: int,
                   lam_plus=1.0, lam_minus=1.0) -> ExtendedSystem:
    """Driven dot coupled to one lead with peak coupling ``Gamma_max``."""
    res = ReservoirSpec(T=T, mu=protocol.mu, L=L, Gamma=protocol.gamma_max,
                        omega_max=protocol.omega_max)
    return single_dot(_DotEnergy(protocol), res, lam_plus=lam_plus, lam_minus=lam_minus,
                      coupling_scale=_CouplingScale(protocol))


def erasure_initial_state(sys: ExtendedSystem) -> np.ndarray:
    """Bit mode half filled, lead modes thermal, no correlations."""
    occ = sys.occupation.copy()
    occ[: sys.n_sys] = 0.5
    return np.diag(occ).astype(complex)


def erasure_target_state(sys: ExtendedSystem) -> np.ndarray:
    """Bit mode empty, lead modes thermal."""
    occ = sys.occupation.copy()
    occ[: sys.n_sys] = 0.0
    return np.diag(occ).astype(complex)


def landauer_bound(T: float) -> float:
    return float(T * np.log(2.0))


def steady_system(cfg: ExperimentConfig, L: int | None = None) -> ExtendedSystem:
    ld = cfg.lead
    res = ReservoirSpec(T=ld.T, mu=ld.mu, L=ld.L if L is None else L, Gamma=ld.Gamma,
                        omega_max=ld.omega_max)
    return single_dot(cfg.system.epsilon, res, lam_plus=ld.Lambda_plus, lam_minus=ld.Lambda_minus)


def erasure_protocols(cfg: ExperimentConfig) -> list[ErasureProtocol]:
    return [
        ErasureProtocol(tau=tau, epsilon_tau=cfg.protocol.epsilon, mu=cfg.lead.mu,
                        omega_max=cfg.lead.omega_max, tau_eq=cfg.protocol.tau_eq)
        for tau in cfg.protocol.tau
    ]


def erasure_systems(cfg: ExperimentConfig) -> list[tuple[ErasureProtocol, ExtendedSystem]]:
    ld = cfg.lead
    return [
        (p, erasure_system(p, ld.T, ld.L, ld.Lambda_plus, ld.Lambda_minus))
        for p in erasure_protocols(cfg)
    ]


__all__ = [
    "ErasureProtocol", "erasure_drive", "erasure_initial_state", "erasure_system",
    "erasure_target_state", "erasure_protocols", "erasure_systems", "fermi_dirac",
    "landauer_bound", "steady_system",
]

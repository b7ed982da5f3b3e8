"""Extended-system construction for the mesoscopic-leads picture.

A central system of ``n_sys`` fermionic sites is coupled to one or more
reservoirs.  Each reservoir is replaced by a finite lead of damped modes; the
lead modes relax towards the reservoir's Fermi-Dirac occupation through a
local (residual) bath.  Everything downstream works with single-particle
matrices of size ``n = n_sys + L``, ordered as

    (system sites, lead 1 modes, ..., lead N_R modes).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


def fermi_dirac(energy, T: float, mu: float):
    """Fermi-Dirac occupation ``1 / (exp((energy - mu) / T) + 1)``."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got T={T}")
    out = expit(-(np.asarray(energy, dtype=float) - mu) / T)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ReservoirSpec:
    """A thermal reservoir attached to system site ``site``.

    Either ``Gamma`` and ``omega_max`` describe a flat spectral density on
    ``[-omega_max, omega_max]``, or ``spectral`` holds a tabulated
    ``(omega, J)`` pair that is linearly interpolated at the mode energies.
    """

    T: float
    mu: float
    L: int
    Gamma: float = 0.0
    omega_max: float = 1.0
    site: int = 0
    spectral: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"reservoir temperature must be positive, got {self.T}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"lead needs at least one mode, got L={self.L}")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be nonnegative, got {self.Gamma}")
        if not self.omega_max > 0:
            raise ValueError(f"omega_max must be positive, got {self.omega_max}")

    def spectral_density(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.spectral is None:
            inside = np.abs(omega) <= self.omega_max
            return np.where(inside, self.Gamma, 0.0)
        w, J = (np.asarray(a, dtype=float) for a in self.spectral)
        return np.interp(omega, w, J, left=0.0, right=0.0)


@dataclass(frozen=True)
class LeadSpec:
    energies: np.ndarray
    gammas: np.ndarray
    couplings: np.ndarray
    occupations: np.ndarray

    @property
    def L(self) -> int:
        return len(self.energies)


def discretize_lead(reservoir: ReservoirSpec) -> LeadSpec:
    """Linear, mid-bin discretization of the band ``[-omega_max, omega_max]``.

    Mode ``k`` (1-based) sits at ``-omega_max + (k - 1/2) * dw`` with
    ``dw = 2 omega_max / L``; every mode is damped at ``gamma_k = dw`` and
    couples with ``kappa_k = sqrt(J(eps_k) dw / 2pi)``.
    """
    L = int(reservoir.L)
    dw = 2.0 * reservoir.omega_max / L
    eps = -reservoir.omega_max + (np.arange(1, L + 1) - 0.5) * dw
    gam = np.full(L, dw)
    J = reservoir.spectral_density(eps)
    if np.any(J < 0):
        raise ValueError("spectral density must be nonnegative")
    kappa = np.sqrt(J * gam / (2.0 * np.pi))
    occ = np.asarray(fermi_dirac(eps, reservoir.T, reservoir.mu), dtype=float)
    return LeadSpec(eps, gam, kappa, occ)


def discretize_flat_lead(reservoir: ReservoirSpec) -> LeadSpec:
    if reservoir.spectral is not None:
        raise ValueError("reservoir has a tabulated spectral density")
    return discretize_lead(reservoir)


@dataclass
class ExtendedSystem:
    """Single-particle description of system plus leads.

    The Hamiltonian is ``H(t) = H_S(t) + H_L + s(t) * H_SL`` where ``H_SL`` is
    the static coupling pattern and ``s(t)`` an optional global scale.
    Dissipation is encoded in the diagonal rates ``gamma`` (zero on system
    sites) and ``F = gamma * f``.
    """

    n_sys: int
    h_system: np.ndarray | Callable[[float], np.ndarray]
    h_lead: np.ndarray  # diagonal lead energies, length L
    h_coupling: np.ndarray  # full n x n Hermitian pattern, nonzero only S<->L
    gamma: np.ndarray  # length n
    occupation: np.ndarray  # length n, zero on system sites
    lead_index: np.ndarray  # length n, -1 on system sites
    reservoirs: tuple[ReservoirSpec, ...]
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    coupling_scale: Callable[[float], float] | None = None
    _static_h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.n
        for name in ("gamma", "occupation", "lam_plus", "lam_minus"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            setattr(self, name, arr)
        if np.any(self.gamma < 0) or np.any(self.gamma[: self.n_sys] != 0):
            raise ValueError("damping must be nonnegative and vanish on system sites")
        if np.any((self.lam_plus < 0) | (self.lam_plus > 1) | (self.lam_minus < 0) | (self.lam_minus > 1)):
            raise ValueError("detection efficiencies must lie in [0, 1]")
        if not callable(self.h_system) and self.coupling_scale is None:
            self._static_h = self._build(0.0)

    @property
    def n(self) -> int:
        return self.n_sys + len(self.h_lead)

    @property
    def n_leads(self) -> int:
        return len(self.reservoirs)

    @property
    def is_static(self) -> bool:
        return self._static_h is not None

    @property
    def F(self) -> np.ndarray:
        return self.gamma * self.occupation

    @property
    def mode_energies(self) -> np.ndarray:
        """Bare lead-mode energies on lead rows, zero on system rows."""
        out = np.zeros(self.n)
        out[self.n_sys:] = self.h_lead
        return out

    def lead_modes(self, alpha: int) -> np.ndarray:
        if not 0 <= alpha < self.n_leads:
            raise IndexError(f"unknown lead index {alpha}")
        return np.flatnonzero(self.lead_index == alpha)

    def lead_mask(self, alpha: int) -> np.ndarray:
        return (self.lead_index == alpha).astype(float)

    def mode_temperature(self) -> np.ndarray:
        T = np.full(self.n, np.nan)
        for a, res in enumerate(self.reservoirs):
            T[self.lead_index == a] = res.T
        return T

    def mode_mu(self) -> np.ndarray:
        mu = np.full(self.n, np.nan)
        for a, res in enumerate(self.reservoirs):
            mu[self.lead_index == a] = res.mu
        return mu

    def _system_block(self, t: float) -> np.ndarray:
        hs = self.h_system(t) if callable(self.h_system) else self.h_system
        return np.asarray(hs, dtype=complex).reshape(self.n_sys, self.n_sys)

    def _build(self, t: float) -> np.ndarray:
        H = np.zeros((self.n, self.n), dtype=complex)
        H[: self.n_sys, : self.n_sys] = self._system_block(t)
        H[self.n_sys:, self.n_sys:] = np.diag(self.h_lead)
        scale = 1.0 if self.coupling_scale is None else self.coupling_scale(t)
        return H + scale * self.h_coupling

    def hamiltonian(self, t: float = 0.0) -> np.ndarray:
        if self._static_h is not None:
            return self._static_h
        return self._build(t)

    def h_int(self, t: float = 0.0) -> np.ndarray:
        scale = 1.0 if self.coupling_scale is None else self.coupling_scale(t)
        return scale * self.h_coupling

    def h_bare(self, t: float = 0.0) -> np.ndarray:
        return self.hamiltonian(t) - self.h_int(t)

    def with_efficiency(self, lam_plus=None, lam_minus=None) -> "ExtendedSystem":
        lp = self.lam_plus if lam_plus is None else _efficiency(lam_plus, self.n, self.n_sys)
        lm = self.lam_minus if lam_minus is None else _efficiency(lam_minus, self.n, self.n_sys)
        return ExtendedSystem(
            self.n_sys, self.h_system, self.h_lead, self.h_coupling, self.gamma,
            self.occupation, self.lead_index, self.reservoirs, lp, lm, self.coupling_scale,
        )


def _efficiency(value, n: int, n_sys: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n - n_sys,))
    out = np.ones(n)
    out[n_sys:] = arr
    out[:n_sys] = 0.0
    return out


def assemble(
    h_system,
    reservoirs: Sequence[ReservoirSpec],
    lam_plus=1.0,
    lam_minus=1.0,
    coupling_scale: Callable[[float], float] | None = None,
) -> ExtendedSystem:
    """Build the extended system from a system Hamiltonian and reservoirs.

    ``h_system`` is an ``n_sys x n_sys`` Hermitian array or a callable of time
    returning one.  ``lam_plus``/``lam_minus`` are scalars or per-lead-mode
    arrays of detection efficiencies.
    """
    if callable(h_system):
        n_sys = np.atleast_2d(h_system(0.0)).shape[0]
    else:
        h_system = np.atleast_2d(np.asarray(h_system, dtype=complex))
        n_sys = h_system.shape[0]
        if h_system.shape != (n_sys, n_sys):
            raise ValueError("system Hamiltonian must be square")
        if np.abs(h_system - h_system.conj().T).max() > 1e-12:
            raise ValueError("system Hamiltonian is not Hermitian")

    leads = [discretize_lead(r) for r in reservoirs]
    L = sum(ld.L for ld in leads)
    n = n_sys + L
    h_lead = np.concatenate([ld.energies for ld in leads]) if leads else np.zeros(0)
    gamma = np.zeros(n)
    occ = np.zeros(n)
    lead_index = np.full(n, -1, dtype=int)
    coupling = np.zeros((n, n), dtype=complex)
    offset = n_sys
    for a, (res, ld) in enumerate(zip(reservoirs, leads)):
        if not 0 <= res.site < n_sys:
            raise IndexError(f"reservoir {a} couples to site {res.site}, system has {n_sys}")
        sl = slice(offset, offset + ld.L)
        gamma[sl] = ld.gammas
        occ[sl] = ld.occupations
        lead_index[sl] = a
        coupling[res.site, sl] = ld.couplings
        coupling[sl, res.site] = np.conj(ld.couplings)
        offset += ld.L

    return ExtendedSystem(
        n_sys=n_sys,
        h_system=h_system,
        h_lead=h_lead,
        h_coupling=coupling,
        gamma=gamma,
        occupation=occ,
        lead_index=lead_index,
        reservoirs=tuple(reservoirs),
        lam_plus=_efficiency(lam_plus, n, n_sys),
        lam_minus=_efficiency(lam_minus, n, n_sys),
        coupling_scale=coupling_scale,
    )


def single_dot(epsilon, reservoir: ReservoirSpec, **kwargs) -> ExtendedSystem:
    """One-level dot (scalar or callable energy) coupled to one reservoir."""
    if callable(epsilon):
        h = lambda t: np.array([[epsilon(t)]], dtype=complex)  # noqa: E731
    else:
        h = np.array([[epsilon]], dtype=complex)
    return assemble(h, [reservoir], **kwargs)

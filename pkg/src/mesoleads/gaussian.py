"""Fermionic Gaussian states in terms of their covariance matrix.

``C[i, j] = <c_j^dag c_i>``.  A number-conserving Gaussian state is
``rho = exp(-c^dag M c) / Z`` with ``M = log((1 - C) / C)`` and
``Z = 1 / det(1 - C)``.

Overlaps and fidelities are evaluated through the equivalent product forms

    Tr[rho1 rho2]           = det(C1 C2 + (1 - C1)(1 - C2))
    Tr[sqrt(rho1) sqrt(rho2)] = det(sqrt(C1) sqrt(C2) + sqrt(1 - C1) sqrt(1 - C2))

which follow from ``exp(-M) = C (1 - C)^-1`` and need no clamping, so they
stay finite for pure states.  ``to_parametrization`` provides ``(M, log Z)``
for callers that want the exponential form itself.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ETA_EIG = 1e-12
HERMITIAN_DRIFT_WARN = 1e-8


def hermitize(C: np.ndarray, check: bool = True) -> np.ndarray:
    C = np.asarray(C, dtype=complex)
    if check:
        drift = np.abs(C - np.swapaxes(C.conj(), -1, -2)).max(initial=0.0)
        if drift > HERMITIAN_DRIFT_WARN:
            log.warning("covariance matrix deviates from Hermitian by %.3g", drift)
    return 0.5 * (C + np.swapaxes(C.conj(), -1, -2))


def eigenbasis(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(U, lam)`` with ``C = U diag(lam) U^dag`` and ``lam`` ascending."""
    lam, U = np.linalg.eigh(hermitize(C))
    return U, lam


def clamp_spectrum(lam: np.ndarray, eta: float = ETA_EIG) -> np.ndarray:
    return np.clip(lam, eta, 1.0 - eta)


@dataclass(frozen=True)
class GaussianParametrization:
    M: np.ndarray
    logZ: float


def to_parametrization(C: np.ndarray, eta: float = ETA_EIG) -> GaussianParametrization:
    U, lam = eigenbasis(C)
    lam = clamp_spectrum(lam, eta)
    m = np.log1p(-lam) - np.log(lam)
    M = (U * m) @ U.conj().T
    logZ = -float(np.sum(np.log1p(-lam)))
    return GaussianParametrization(hermitize(M, check=False), logZ)


def from_parametrization(M: np.ndarray) -> np.ndarray:
    """Covariance ``(1 + e^M)^-1`` of the state ``exp(-c^dag M c) / Z``."""
    m, U = np.linalg.eigh(hermitize(M, check=False))
    occ = 0.5 * (1.0 - np.tanh(0.5 * m))
    return (U * occ) @ U.conj().T


def _logdet_real(A: np.ndarray, what: str) -> float:
    sign, logabs = np.linalg.slogdet(A)
    if abs(np.angle(sign)) > 1e-6 and logabs > -600:
        raise ValueError(f"{what}: determinant has phase {np.angle(sign):.3g}")
    return float(logabs)


def log_overlap(C1: np.ndarray, C2: np.ndarray) -> float:
    """``log Tr[rho1 rho2]`` for two Gaussian states."""
    C1 = hermitize(C1)
    C2 = hermitize(C2)
    I = np.eye(C1.shape[0])
    return _logdet_real(C1 @ C2 + (I - C1) @ (I - C2), "overlap")


def overlap(C1: np.ndarray, C2: np.ndarray) -> float:
    return float(np.exp(log_overlap(C1, C2)))


def overlap_exponential_form(C1: np.ndarray, C2: np.ndarray, eta: float = ETA_EIG) -> float:
    """``det(1 + e^{-M1} e^{-M2}) / (Z1 Z2)`` evaluated literally.

    Only well conditioned for spectra away from 0 and 1; kept as a cross-check
    of the product form.
    """
    p1, p2 = to_parametrization(C1, eta), to_parametrization(C2, eta)
    e1 = _expm_herm(-p1.M)
    e2 = _expm_herm(-p2.M)
    I = np.eye(C1.shape[0])
    ld = _logdet_real(I + e1 @ e2, "overlap")
    return float(np.exp(ld - p1.logZ - p2.logZ))


def _sqrtm_psd(C: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(hermitize(C, check=False))
    return (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.conj().T


def _expm_herm(A: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(hermitize(A, check=False))
    return (U * np.exp(lam)) @ U.conj().T


def fidelity(C1: np.ndarray, C2: np.ndarray) -> float:
    """``det(1 + e^{-M1/2} e^{-M2/2}) / sqrt(Z1 Z2)``, i.e. ``Tr[sqrt(rho1) sqrt(rho2)]``.

    For commuting states this coincides with ``Tr sqrt(rho1 rho2)``.
    """
    C1 = hermitize(C1)
    C2 = hermitize(C2)
    I = np.eye(C1.shape[0])
    A = _sqrtm_psd(C1) @ _sqrtm_psd(C2) + _sqrtm_psd(I - C1) @ _sqrtm_psd(I - C2)
    return float(np.exp(_logdet_real(A, "fidelity")))


def fidelity_exponential_form(C1: np.ndarray, C2: np.ndarray, eta: float = ETA_EIG) -> float:
    p1, p2 = to_parametrization(C1, eta), to_parametrization(C2, eta)
    I = np.eye(C1.shape[0])
    ld = _logdet_real(I + _expm_herm(-0.5 * p1.M) @ _expm_herm(-0.5 * p2.M), "fidelity")
    return float(np.exp(ld - 0.5 * (p1.logZ + p2.logZ)))


def purity(C: np.ndarray) -> float:
    return overlap(C, C)


def is_valid_covariance(C: np.ndarray, tol: float = 1e-8) -> bool:
    C = np.asarray(C)
    if np.abs(C - C.conj().T).max() > tol:
        return False
    lam = np.linalg.eigvalsh(hermitize(C, check=False))
    return bool(lam.min() >= -tol and lam.max() <= 1 + tol)

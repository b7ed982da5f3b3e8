"""Two-point measurement bookkeeping and stochastic entropy productions.

The first measurement projects onto an eigenstate of the unconditional
``rho(0)``, i.e. an occupation bitstring ``s_n`` in the eigenbasis ``U_0`` of
``C(0)``; the second projects onto an eigenstate of the unconditional
``rho(tau)``.  For a Gaussian ``rho`` with covariance eigenvalues ``lam`` the
eigenstate probabilities factorize, ``p_s = prod lam^s (1 - lam)^(1 - s)``.

Given a trajectory state ``C_r`` and ``C' = U^dag C_r U`` in the final basis,

    p(s | r) = det[(1 - n_s)(1 - C') + n_s C'],

which is sampled bit by bit: outcome 1 on mode ``j`` has conditional
probability ``C'_jj`` and leaves ``C' - C' e_j e_j^T C' / C'_jj``; outcome 0
leaves ``C' + C' e_j e_j^T C' / (1 - C'_jj)`` (the same rank-one updates as a
jump).  The product of the conditional probabilities is ``p(s | r)``.

Entropy productions (``Sigma`` is the summed entropy flux, ``O`` the overlap
``Tr[rho_r(tau) rho(tau)]``):

    S_tot  = log p_n^0 - log p_m^tau + Sigma
    S_unc  = -log p_m^tau + log O
    S_mart = log p_n^0 - log O + Sigma
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import eigenbasis, hermitize, log_overlap

LOG_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class TpmSample:
    s_initial: np.ndarray
    log_p_initial: float
    s_final: np.ndarray
    log_p_conditional: float
    log_p_final: float
    log_overlap: float
    entropy_flux: float
    measurement_energy_over_T: float = 0.0
    floored: bool = False

    @property
    def entropies(self) -> tuple[float, float, float, float]:
        return entropy_productions(
            self.log_p_initial, self.log_p_final, self.log_overlap,
            self.entropy_flux, self.measurement_energy_over_T,
        )


def log_bit_probability(lam: np.ndarray, s: np.ndarray) -> np.ndarray:
    lam = np.clip(lam, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        out = np.where(s.astype(bool), np.log(lam), np.log1p(-lam))
    return out.sum(axis=-1)


def sample_initial(C0: np.ndarray, rng, U=None, lam=None):
    """Draw the first measurement outcome.

    Returns ``(s, log p, C_r(0))``; one uniform is consumed per mode in
    ascending eigenvalue order.
    """
    if U is None or lam is None:
        U, lam = eigenbasis(C0)
    u = np.asarray(rng.random(len(lam)))
    s = (u < lam).astype(np.int8)
    Cr = (U * s) @ U.conj().T
    return s, float(log_bit_probability(lam, s)), Cr


def sample_initial_batch(U: np.ndarray, lam: np.ndarray, u: np.ndarray):
    """Vectorized first measurement from uniforms ``u`` of shape ``(B, n)``."""
    s = (u < lam).astype(np.int8)
    Cr = (U[None] * s[:, None, :]) @ U.conj().T[None]
    return s, log_bit_probability(lam, s), Cr


def unconditional_eigen_probability(C: np.ndarray, s, lam=None) -> float:
    if lam is None:
        _, lam = eigenbasis(C)
    return float(np.exp(log_unconditional_eigen_probability(C, s, lam)))


def log_unconditional_eigen_probability(C: np.ndarray, s, lam=None) -> float:
    if lam is None:
        _, lam = eigenbasis(C)
    return float(log_bit_probability(lam, np.asarray(s)))


def _rotate(Cr: np.ndarray, U: np.ndarray) -> np.ndarray:
    return hermitize(U.conj().T @ Cr @ U, check=False)


def projection_probability(Cr: np.ndarray, C: np.ndarray, s, U=None) -> float:
    """``det[(1 - n_s)(1 - C') + n_s C']`` with ``C'`` in the eigenbasis of ``C``."""
    if U is None:
        U, _ = eigenbasis(C)
    Cp = _rotate(np.asarray(Cr, dtype=complex), U)
    s = np.asarray(s, dtype=float)
    n = len(s)
    M = (1.0 - s)[:, None] * (np.eye(n) - Cp) + s[:, None] * Cp
    d = np.linalg.det(M)
    if abs(d.imag) > 1e-10:
        raise ValueError(f"projection probability has imaginary part {d.imag:.3g}")
    return float(d.real)


def sample_final(Cr: np.ndarray, C: np.ndarray, rng, U=None):
    """Sample the second measurement; returns ``(s, log p(s | r))``."""
    if U is None:
        U, _ = eigenbasis(C)
    Cp = _rotate(np.asarray(Cr, dtype=complex), U)[None]
    u = np.asarray(rng.random(Cp.shape[-1]))[None]
    s, logp = sample_final_batch(Cp, u)
    return s[0], float(logp[0])


def sample_final_batch(Cp: np.ndarray, u: np.ndarray):
    """Sequential sampling for a batch of rotated covariances ``C'`` (B, n, n)."""
    Cp = np.array(Cp, dtype=complex, copy=True)
    B, n, _ = Cp.shape
    s = np.zeros((B, n), dtype=np.int8)
    logp = np.zeros(B)
    for j in range(n):
        p1 = np.clip(np.real(Cp[:, j, j]), 0.0, 1.0)
        one = u[:, j] < p1
        s[:, j] = one
        pj = np.where(one, p1, 1.0 - p1)
        with np.errstate(divide="ignore"):
            logp += np.log(pj)
        col = Cp[:, :, j].copy()
        den = np.where(one, p1, 1.0 - p1)
        safe = den > 0
        coef = np.where(safe, np.where(one, -1.0, 1.0) / np.where(safe, den, 1.0), 0.0)
        Cp += coef[:, None, None] * (col[:, :, None] * col.conj()[:, None, :])
        Cp[:, j, :] = 0.0
        Cp[:, :, j] = 0.0
        Cp[:, j, j] = one.astype(float)
    return s, logp


def entropy_productions(log_p0: float, log_pt: float, log_O: float, sigma: float,
                        em_over_T: float = 0.0):
    """``(S_tot, S_unc, S_mart, S_tot_modified)`` from log-probabilities.

    The modified production removes the measurement energy (divided by the
    lead temperature) from the entropy flux.
    """
    log_p0 = np.maximum(log_p0, LOG_FLOOR)
    log_pt = np.maximum(log_pt, LOG_FLOOR)
    log_O = np.maximum(log_O, LOG_FLOOR)
    s_tot = log_p0 - log_pt + sigma
    s_unc = -log_pt + log_O
    s_mart = log_p0 - log_O + sigma
    return s_tot, s_unc, s_mart, s_tot - em_over_T


def floored(*logs) -> np.ndarray:
    """Flag samples where any log-probability sits below the floor."""
    out = np.zeros(np.shape(logs[0]), dtype=bool)
    for x in logs:
        out |= np.asarray(x) < LOG_FLOOR
    return out


@dataclass(frozen=True)
class IftEstimate:
    mean_exp: float
    se_exp: float
    mean: float
    se: float
    n: int


def ift_estimator(values) -> IftEstimate:
    """Mean of ``exp(-S)`` and of ``S`` with their standard errors."""
    S = np.asarray(values, dtype=float)
    if S.size < 2:
        raise ValueError("need at least two samples")
    e = np.exp(-S)
    n = S.size
    return IftEstimate(
        float(e.mean()), float(e.std(ddof=1) / np.sqrt(n)),
        float(S.mean()), float(S.std(ddof=1) / np.sqrt(n)), n,
    )


def running_ift(values, checkpoints) -> np.ndarray:
    """``(n, mean exp(-S), se)`` rows at each checkpoint ``n``."""
    e = np.exp(-np.asarray(values, dtype=float))
    c1 = np.cumsum(e)
    c2 = np.cumsum(e * e)
    rows = []
    for n in checkpoints:
        n = int(n)
        if n < 2 or n > e.size:
            continue
        m = c1[n - 1] / n
        var = max(c2[n - 1] / n - m * m, 0.0) * n / (n - 1)
        rows.append((n, m, np.sqrt(var / n)))
    return np.array(rows).reshape(-1, 3)


def batch_log_overlap(Cr: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.array([log_overlap(c, C) for c in Cr])

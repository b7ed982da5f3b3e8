"""Exact linearization of the no-jump (Riccati) covariance flow.

Between recorded jumps the conditional covariance obeys

    dC/dt = -P C - C Q + A + C R C,

with diagonal ``A = F (1 - lam+)`` and ``R = -lam+ F + lam- (Gamma - F)``,
``P = iH + diag(c)``, ``Q = -iH + diag(c)`` and ``c = Gamma/2 - F + A``.
Writing ``C = X Y^-1`` turns it into the linear system

    d/dt [X; Y] = G(t) [X; Y],   G = [[-P, A], [-R, Q]],

and the survival probability since the last jump follows from the same
solution, ``log p(t) = log|det Y(t)| - (t - t_last) Tr(Gamma) / 2`` with
``Y(t_last) = 1``.  Only ``H`` depends on time, so ``G(t)`` is a constant
plus ``-i (H(t) (+) H(t))``.

Static generators are exponentiated exactly; driven ones use the fourth-order
Magnus expansion with two Gauss-Legendre nodes.  Sub-steps of arbitrary,
per-trajectory length are applied with a truncated Taylor series acting on
``[X; Y]`` directly.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .lead_model import ExtendedSystem

_GAUSS = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)
_MAGNUS_COMM = np.sqrt(3.0) / 12.0
_TAYLOR_MAX_TERMS = 60
_TAYLOR_NORM = 1.0
_EIG_COND_MAX = 1e4
_MAGNUS_PIECE = 0.125


class RiccatiFlow:
    """Batched propagation of ``(C, log p)`` along no-jump stretches.

    Parameters
    ----------
    sys : ExtendedSystem
        Detection efficiencies are read from ``sys.lam_plus`` and
        ``sys.lam_minus``.
    """

    def __init__(self, sys: ExtendedSystem):
        self.sys = sys
        n = sys.n
        self.n = n
        gam = sys.gamma
        F = sys.F
        self.A = F * (1.0 - sys.lam_plus)
        self.D = (gam - F) * (1.0 - sys.lam_minus)
        self.B = gam - 2.0 * F
        self.R = -sys.lam_plus * F + sys.lam_minus * (gam - F)
        c = 0.5 * self.B + self.A
        G0 = np.zeros((2 * n, 2 * n), dtype=complex)
        G0[:n, :n] = -np.diag(c)
        G0[:n, n:] = np.diag(self.A)
        G0[n:, :n] = -np.diag(self.R)
        G0[n:, n:] = np.diag(c)
        self.G0 = G0
        self.trace_offset = 0.5 * float(np.sum(gam))
        self.static = sys.is_static
        self.G_static = self.generator(0.0) if self.static else None
        self._eig = self._diagonalize() if self.static else None
        # registered-channel rates per unit (1 - C_kk) and per unit C_kk
        self.rate_plus = sys.lam_plus * F
        self.rate_minus = sys.lam_minus * (gam - F)
        self.monitored = bool(np.any(self.rate_plus > 0) or np.any(self.rate_minus > 0))
        self._full_cache: dict = {}

    # -- generators -----------------------------------------------------
    def generator(self, t: float) -> np.ndarray:
        n = self.n
        H = self.sys.hamiltonian(t)
        G = self.G0.copy()
        G[:n, :n] -= 1j * H
        G[n:, n:] -= 1j * H
        return G

    def _generators_at(self, times: np.ndarray) -> np.ndarray:
        n = self.n
        Hs = np.stack([self.sys.hamiltonian(float(t)) for t in times])
        G = np.broadcast_to(self.G0, (len(times), 2 * n, 2 * n)).copy()
        G[:, :n, :n] -= 1j * Hs
        G[:, n:, n:] -= 1j * Hs
        return G

    def _diagonalize(self):
        # sub-steps of a static flow become two matrix products when the
        # generator has a well-conditioned eigenbasis
        w, S = np.linalg.eig(self.G_static)
        if np.linalg.cond(S) > _EIG_COND_MAX:
            return None
        return w, S, np.linalg.inv(S)

    def magnus_exponent(self, t: float, s: float) -> np.ndarray:
        """Fourth-order Magnus exponent of the flow over ``[t, t + s]``."""
        if self.static:
            return s * self.G_static
        G1 = self.generator(t + _GAUSS[0] * s)
        G2 = self.generator(t + _GAUSS[1] * s)
        return 0.5 * s * (G1 + G2) - _MAGNUS_COMM * s * s * (G1 @ G2 - G2 @ G1)

    def magnus_exponents(self, a: np.ndarray, s: np.ndarray) -> np.ndarray | None:
        """Per-trajectory exponents for intervals ``[a_i, a_i + s_i]``; ``None`` when static."""
        if self.static:
            return None
        G1 = self._generators_at(a + _GAUSS[0] * s)
        G2 = self._generators_at(a + _GAUSS[1] * s)
        ss = s[:, None, None]
        return 0.5 * ss * (G1 + G2) - _MAGNUS_COMM * ss * ss * (G1 @ G2 - G2 @ G1)

    def step_matrix(self, t: float, s: float) -> np.ndarray:
        if self.static:
            key = float(s)
            Phi = self._full_cache.get(key)
            if Phi is None:
                Phi = expm(s * self.G_static)
                if len(self._full_cache) < 64:
                    self._full_cache[key] = Phi
            return Phi
        return expm(self.magnus_exponent(t, s))

    # -- application ----------------------------------------------------
    def apply(self, Phi: np.ndarray, C: np.ndarray, s) -> tuple[np.ndarray, np.ndarray]:
        """Apply a (shared or per-trajectory) step matrix to ``C``.

        Returns the propagated covariance and the change of ``log p``.
        """
        n = self.n
        X = Phi[..., :n, :n] @ C + Phi[..., :n, n:]
        Y = Phi[..., n:, :n] @ C + Phi[..., n:, n:]
        return self._finish(X, Y, s)

    def _finish(self, X, Y, s, logdet: bool = True):
        Yt = np.swapaxes(Y, -1, -2)
        Ct = np.linalg.solve(Yt, np.swapaxes(X, -1, -2))
        C = np.swapaxes(Ct, -1, -2)
        C = 0.5 * (C + np.swapaxes(C.conj(), -1, -2))
        if not logdet:
            return C, None
        _, logabs = np.linalg.slogdet(Y)
        return C, logabs - np.asarray(s) * self.trace_offset

    def propagate(self, C: np.ndarray, a: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Propagate a batch ``C`` (m, n, n) from times ``a`` by lengths ``s``."""
        a = np.asarray(a, dtype=float)
        s = np.asarray(s, dtype=float)
        m = C.shape[0]
        a = np.broadcast_to(a, (m,))
        s = np.broadcast_to(s, (m,))
        n = self.n
        if self._eig is not None:
            w, S, Sinv = self._eig
            X = Sinv[:, :n] @ C + Sinv[:, n:]
            Z = S @ (np.exp(s[:, None] * w[None, :])[:, :, None] * X)
            return self._finish(Z[:, :n], Z[:, n:], s)
        Z = np.concatenate([C, np.broadcast_to(np.eye(n, dtype=complex), C.shape)], axis=1)
        if self.static:
            norm = float(np.max(np.abs(s), initial=0.0)) * _norm1(self.G_static)
            q = max(1, int(np.ceil(norm / _TAYLOR_NORM)))
            for _ in range(q):
                Z = self._taylor(Z, None, s / q)
            return self._finish(Z[:, :n], Z[:, n:], s)
        # driven: Magnus pieces short enough for the fourth-order error to
        # stay negligible, each exponentiated by a scaled Taylor series
        pieces = max(1, int(np.ceil(float(np.max(s, initial=0.0)) / _MAGNUS_PIECE)))
        h = s / pieces
        for j in range(pieces):
            Om = self.magnus_exponents(a + j * h, h)
            norm = float(max((_norm1(o) for o in Om), default=0.0))
            q = max(1, int(np.ceil(norm / _TAYLOR_NORM)))
            Om = Om / q
            for _ in range(q):
                Z = self._taylor(Z, Om, h / q)
        return self._finish(Z[:, :n], Z[:, n:], s)

    def _taylor(self, Z, Om, s):
        out = Z.copy()
        term = Z
        scale = np.abs(Z).max()
        for j in range(1, _TAYLOR_MAX_TERMS):
            if Om is None:
                term = (s[:, None, None] / j) * (self.G_static @ term)
            else:
                term = (Om @ term) / j
            out = out + term
            if np.abs(term).max() <= 1e-17 * scale:
                break
        return out

    def rhs(self, C: np.ndarray, times) -> np.ndarray:
        """No-jump time derivative ``-P C - C Q + A + C R C`` for a batch."""
        n = self.n
        c = self.G0[n:, n:].diagonal().real
        if self.static:
            H = self.sys.hamiltonian(0.0)
        else:
            H = np.stack([self.sys.hamiltonian(float(t)) for t in np.atleast_1d(times)])
        HC = H @ C
        out = -1j * (HC - np.swapaxes(HC.conj(), -1, -2))
        out -= c[:, None] * C + C * c[None, :]
        out += (C * self.R[None, :]) @ C
        out[..., np.arange(n), np.arange(n)] += self.A
        return out

    def propagate_pair(self, C: np.ndarray, a, s):
        """Propagate by ``s/2`` and ``s``; returns ``(C_half, C_full, dlogp_full)``."""
        a = np.broadcast_to(np.asarray(a, dtype=float), (C.shape[0],))
        s = np.broadcast_to(np.asarray(s, dtype=float), (C.shape[0],))
        if self._eig is None:
            Ch, _ = self.propagate(C, a, 0.5 * s)
            Cf, dl = self.propagate(C, a, s)
            return Ch, Cf, dl
        n = self.n
        w, S, Sinv = self._eig
        X = Sinv[:, :n] @ C + Sinv[:, n:]
        Zh = S @ (np.exp(0.5 * s[:, None] * w[None, :])[:, :, None] * X)
        Zf = S @ (np.exp(s[:, None] * w[None, :])[:, :, None] * X)
        Ch, _ = self._finish(Zh[:, :n], Zh[:, n:], 0.5 * s, logdet=False)
        Cf, dl = self._finish(Zf[:, :n], Zf[:, n:], s)
        return Ch, Cf, dl

    def survival_rate(self, C: np.ndarray) -> np.ndarray:
        """``K = Tr[lam+ F (1 - C)] + Tr[lam- (Gamma - F) C]`` for a batch."""
        d = np.real(np.diagonal(C, axis1=-2, axis2=-1))
        return (1.0 - d) @ self.rate_plus + d @ self.rate_minus


def _norm1(M: np.ndarray) -> float:
    return float(np.abs(M).sum(axis=-2).max())

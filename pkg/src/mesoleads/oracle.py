"""Dense many-body reference implementation (Hilbert space dimension ``2^N``).

Fermionic operators use a Jordan-Wigner string in the mode order of
:mod:`mesoleads.lead_model` (system sites first, then lead modes), with
basis states ``|n_0 n_1 ... n_{N-1}>`` and mode 0 the most significant
qubit.  Everything here is brute force and meant for ``N <= 8``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import brentq

from .lead_model import ExtendedSystem
from .streams import UniformStream

MAX_MODES = 8
MAX_MODES_SUPEROP = 4
MAX_MODES_TRAJECTORY = 6


class DimensionError(ValueError):
    pass


@lru_cache(maxsize=16)
def annihilators(N: int) -> tuple[np.ndarray, ...]:
    """Jordan-Wigner annihilation operators ``c_0 ... c_{N-1}``."""
    if N > MAX_MODES:
        raise DimensionError(f"{N} modes exceed the dense cap of {MAX_MODES}")
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    out = []
    for j in range(N):
        op = np.ones((1, 1))
        for i in range(N):
            op = np.kron(op, Z if i < j else (a if i == j else I))
        out.append(op)
    return tuple(out)


def quadratic(h: np.ndarray, cs) -> np.ndarray:
    """``sum_ij h_ij c_i^dag c_j``."""
    N = len(cs)
    out = np.zeros(cs[0].shape, dtype=complex)
    for i in range(N):
        for j in range(N):
            if h[i, j] != 0:
                out += h[i, j] * (cs[i].T @ cs[j])
    return out


def jump_operators(sys: ExtendedSystem, cs):
    """Channels in engine order, ``(k, sigma, L, efficiency)``."""
    ops = []
    for k in range(sys.n):
        g, f = sys.gamma[k], sys.occupation[k]
        if g == 0:
            continue
        ops.append((k, +1, np.sqrt(g * f) * cs[k].T, sys.lam_plus[k]))
        ops.append((k, -1, np.sqrt(g * (1.0 - f)) * cs[k], sys.lam_minus[k]))
    return ops


class DenseModel:
    """Many-body operators for an extended system."""

    def __init__(self, sys: ExtendedSystem, max_modes: int = MAX_MODES):
        if sys.n > max_modes:
            raise DimensionError(f"{sys.n} modes exceed the dense cap of {max_modes}")
        self.sys = sys
        self.N = sys.n
        self.dim = 2 ** sys.n
        self.cs = annihilators(sys.n)
        self.ops = jump_operators(sys, self.cs)
        self._H_static = quadratic(sys.hamiltonian(0.0), self.cs) if sys.is_static else None
        self._LdL = sum((L.conj().T @ L for _, _, L, _ in self.ops), np.zeros((self.dim, self.dim)))

    def H(self, t: float) -> np.ndarray:
        if self._H_static is not None:
            return self._H_static
        return quadratic(self.sys.hamiltonian(t), self.cs)

    def liouvillian(self, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
        H = self.H(t)
        out = -1j * (H @ rho - rho @ H)
        for _, _, L, _ in self.ops:
            Ld = L.conj().T
            out += L @ rho @ Ld - 0.5 * (Ld @ L @ rho + rho @ Ld @ L)
        return out

    def superoperator(self, t: float = 0.0) -> np.ndarray:
        """Row-major ``vec`` superoperator; only for ``N <= 4``."""
        if self.N > MAX_MODES_SUPEROP:
            raise DimensionError("explicit superoperator limited to 4 modes")
        d = self.dim
        I = np.eye(d)
        H = self.H(t)
        S = -1j * (np.kron(H, I) - np.kron(I, H.T))
        for _, _, L, _ in self.ops:
            LdL = L.conj().T @ L
            S += np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, I) + np.kron(I, LdL.T))
        return S

    def no_jump_generator(self, rho: np.ndarray, t: float) -> np.ndarray:
        """Linear flow of the unnormalized state between registered jumps."""
        Heff = self.H(t) - 0.5j * self._LdL
        out = -1j * (Heff @ rho - rho @ Heff.conj().T)
        for _, _, L, lam in self.ops:
            if lam < 1.0:
                out += (1.0 - lam) * (L @ rho @ L.conj().T)
        return out


def build_liouvillian(sys: ExtendedSystem):
    """Return ``L(rho, t)`` applying the full GKSL generator."""
    return DenseModel(sys).liouvillian


def dense_covariance(rho: np.ndarray, cs=None) -> np.ndarray:
    """``C_ij = Tr[rho c_j^dag c_i]``."""
    if cs is None:
        cs = annihilators(int(np.log2(rho.shape[0])))
    N = len(cs)
    C = np.empty((N, N), dtype=complex)
    for i in range(N):
        for j in range(N):
            C[i, j] = np.trace(rho @ cs[j].T @ cs[i])
    return C


def _mode_ops(U: np.ndarray, cs):
    """Annihilators ``d_k = sum_i conj(U_ik) c_i`` of the eigenmodes."""
    return [sum(np.conj(U[i, k]) * cs[i] for i in range(len(cs))) for k in range(U.shape[1])]


def eigen_projector(U: np.ndarray, s, cs) -> np.ndarray:
    """Projector on the Fock state with occupations ``s`` of the modes ``U``."""
    ds = _mode_ops(U, cs)
    P = np.eye(cs[0].shape[0], dtype=complex)
    for d, sk in zip(ds, s):
        n_op = d.conj().T @ d
        P = P @ (n_op if sk else np.eye(P.shape[0]) - n_op)
    return P


def gaussian_density(C: np.ndarray, cs=None) -> np.ndarray:
    """Number-conserving Gaussian density matrix with covariance ``C``."""
    C = 0.5 * (C + C.conj().T)
    N = C.shape[0]
    if cs is None:
        cs = annihilators(N)
    lam, U = np.linalg.eigh(C)
    lam = np.clip(lam, 0.0, 1.0)
    ds = _mode_ops(U, cs)
    rho = np.eye(cs[0].shape[0], dtype=complex)
    for d, l in zip(ds, lam):
        n_op = d.conj().T @ d
        rho = rho @ (l * n_op + (1.0 - l) * (np.eye(rho.shape[0]) - n_op))
    return rho


def vacuum(N: int) -> np.ndarray:
    rho = np.zeros((2 ** N, 2 ** N), dtype=complex)
    rho[0, 0] = 1.0
    return rho


# ---------------------------------------------------------------------------
# unconditional evolution
# ---------------------------------------------------------------------------

def dense_evolve(sys: ExtendedSystem, rho0: np.ndarray, times, rtol: float = 1e-12,
                 atol: float = 1e-14) -> np.ndarray:
    """``rho(t)`` at the requested times (first time is the start)."""
    model = DenseModel(sys)
    times = np.asarray(times, dtype=float)
    d = model.dim
    if sys.is_static and model.N <= MAX_MODES_SUPEROP:
        S = model.superoperator()
        v0 = rho0.reshape(-1)
        return np.stack([(expm(S * (t - times[0])) @ v0).reshape(d, d) for t in times])
    sol = solve_ivp(
        lambda t, y: model.liouvillian(y.reshape(d, d), t).ravel(),
        (times[0], times[-1]), rho0.astype(complex).ravel(), t_eval=times,
        method="DOP853", rtol=rtol, atol=atol,
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y.T.reshape(-1, d, d)


# ---------------------------------------------------------------------------
# conditional evolution
# ---------------------------------------------------------------------------

@dataclass
class DenseTrajectory:
    record: list  # (t, k, sigma)
    rho: np.ndarray
    snapshots: list = field(default_factory=list)  # (t, normalized rho)


def dense_trajectory(sys: ExtendedSystem, rho0: np.ndarray, t_span, seed: int, index: int = 0,
                     snapshot_dt: float | None = None, rtol: float = 1e-12,
                     atol: float = 1e-14) -> DenseTrajectory:
    """Jump trajectory of the full density matrix with the engine's draw order.

    The unnormalized state follows :meth:`DenseModel.no_jump_generator`; a
    jump happens when its trace reaches ``R1``.
    """
    if sys.n > MAX_MODES_TRAJECTORY:
        raise DimensionError(f"dense trajectories limited to {MAX_MODES_TRAJECTORY} modes")
    model = DenseModel(sys)
    d = model.dim
    stream = UniformStream(seed, index)
    t, t_end = float(t_span[0]), float(t_span[1])
    rho = np.asarray(rho0, dtype=complex)
    rho = rho / np.trace(rho).real
    logR1 = np.log(stream.open_unit())
    record = []
    snaps = [(t, rho.copy())]
    registered = [(k, s, L, lam) for k, s, L, lam in model.ops if lam > 0]

    def rhs(tt, y):
        return model.no_jump_generator(y.reshape(d, d), tt).ravel()

    while t < t_end:
        sol = solve_ivp(rhs, (t, t_end), rho.ravel(), method="DOP853", rtol=rtol, atol=atol,
                        dense_output=True)
        if not sol.success:
            raise RuntimeError(sol.message)
        logp = np.log(np.real(np.trace(sol.y.T.reshape(-1, d, d), axis1=1, axis2=2)))
        below = np.flatnonzero(logp < logR1)
        if snapshot_dt:
            stop = sol.t[below[0]] if below.size else t_end
            for ts in np.arange(t + snapshot_dt, stop, snapshot_dt):
                r = sol.sol(ts).reshape(d, d)
                snaps.append((float(ts), r / np.trace(r).real))
        if below.size == 0:
            rho = sol.y[:, -1].reshape(d, d)
            t = t_end
            break
        j = below[0]

        def g(tt):
            return np.log(np.trace(sol.sol(tt).reshape(d, d)).real) - logR1

        tJ = brentq(g, sol.t[j - 1], sol.t[j], xtol=1e-14, rtol=1e-14)
        # restart from the crossing with a fresh integration for accuracy
        sub = solve_ivp(rhs, (t, tJ), rho.ravel(), method="DOP853", rtol=rtol, atol=atol)
        rt = sub.y[:, -1].reshape(d, d)
        rt = rt / np.trace(rt).real
        R2 = stream.open_unit()
        w = np.array([lam * np.trace(L @ rt @ L.conj().T).real for _, _, L, lam in registered])
        cum = np.cumsum(w)
        idx = int(np.argmax(cum >= R2 * cum[-1]))
        k, sgn, L, _ = registered[idx]
        rho = L @ rt @ L.conj().T
        rho = rho / np.trace(rho).real
        record.append((float(tJ), int(k), int(sgn)))
        t = float(tJ)
        snaps.append((t, rho.copy()))
        logR1 = np.log(stream.open_unit())
    rho = rho / np.trace(rho).real
    snaps.append((t, rho))
    return DenseTrajectory(record, rho, snaps)


# ---------------------------------------------------------------------------
# Gaussianity and measurement ground truth
# ---------------------------------------------------------------------------

def wick_residual(rho: np.ndarray, cs=None) -> float:
    """Largest violation of the four-point Wick factorization.

    ``<c_i^dag c_j^dag c_k c_l> = C_li C_kj - C_ki C_lj``.
    """
    if cs is None:
        cs = annihilators(int(np.log2(rho.shape[0])))
    C = dense_covariance(rho, cs)
    N = len(cs)
    worst = 0.0
    for i, j, k, l in product(range(N), repeat=4):
        val = np.trace(rho @ cs[i].T @ cs[j].T @ cs[k] @ cs[l])
        wick = C[l, i] * C[k, j] - C[k, i] * C[l, j]
        worst = max(worst, abs(val - wick))
    return float(worst)


def eigen_probability(rho: np.ndarray, U: np.ndarray, s, cs=None) -> float:
    """``Tr[rho Pi_s]`` for the Fock state ``s`` of the single-particle modes ``U``."""
    if cs is None:
        cs = annihilators(int(np.log2(rho.shape[0])))
    return float(np.trace(rho @ eigen_projector(U, s, cs)).real)


def all_bitstrings(N: int):
    return [np.array(b, dtype=np.int8) for b in product((0, 1), repeat=N)]


def dense_overlap(rho1: np.ndarray, rho2: np.ndarray) -> float:
    return float(np.trace(rho1 @ rho2).real)


def _psd_sqrt(rho):
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def dense_affinity(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """``Tr[sqrt(rho1) sqrt(rho2)]``."""
    return float(np.trace(_psd_sqrt(rho1) @ _psd_sqrt(rho2)).real)


def dense_uhlmann(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))``, equal to ``Tr sqrt(rho1 rho2)``.

    ``rho1 rho2`` is similar to ``sqrt(rho1) rho2 sqrt(rho1)``, so both have the
    same nonnegative spectrum.
    """
    s = _psd_sqrt(rho1)
    w = np.linalg.eigvalsh(s @ rho2 @ s)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))))

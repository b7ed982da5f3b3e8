"""Ensemble-averaged (unmonitored) dynamics of the extended system.

The covariance obeys ``dC/dt = -(W C + C W^dag) + F`` with
``W = iH(t) + Gamma/2``.  Currents are traces against ``C``:

    I_N,a   = Tr[F_a - Gamma_a C]                      (reservoir -> lead a)
    I_E,a   = Tr[F_a H - (Gamma_a/2) {C, H}]
    I_EM,a  = -(1/2) Tr[Gamma_a {H_int, C}]

The internal currents flow from lead ``a`` into the system.  For quadratic
operators ``<c^dag X c> = Tr[X C]`` and ``[c^dag X c, c^dag Y c] = c^dag [X, Y] c``,
so with ``P_a`` the projector on lead ``a``'s modes

    J_N,a = i Tr([P_a, h_SL] C)
    J_E,a = i Tr([h_L,a, h_SL] C) - (1/2) Tr[{Gamma_a, h_SL} C],

the second term of ``J_E`` being the dissipator's action on the coupling
energy (``h_SL`` has no diagonal lead elements).  These satisfy
``J_E,a = I_E,a - d<H_L,a>/dt`` for static couplings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_continuous_lyapunov

from .gaussian import hermitize
from .lead_model import ExtendedSystem


class IntegrationError(RuntimeError):
    pass


def _W(sys: ExtendedSystem, t: float) -> np.ndarray:
    return 1j * sys.hamiltonian(t) + 0.5 * np.diag(sys.gamma)


def lyapunov_rhs(C: np.ndarray, t: float, sys: ExtendedSystem) -> np.ndarray:
    W = _W(sys, t)
    return -(W @ C + C @ W.conj().T) + np.diag(sys.F)


def steady_state(sys: ExtendedSystem, t: float = 0.0, check: bool = True) -> np.ndarray:
    """Solve ``W C + C W^dag = F`` at fixed ``t``."""
    W = _W(sys, t)
    ev = np.linalg.eigvals(W)
    if np.min(ev.real) <= 0:
        raise np.linalg.LinAlgError(
            f"W is not strictly stable (min Re eig = {np.min(ev.real):.3g}); "
            "some mode is not damped"
        )
    C = hermitize(solve_continuous_lyapunov(W, np.diag(sys.F).astype(complex)), check=False)
    if check:
        res = np.abs(W @ C + C @ W.conj().T - np.diag(sys.F)).max()
        if res > 1e-10:
            raise np.linalg.LinAlgError(f"steady-state residual {res:.3g}")
    return C


# ---------------------------------------------------------------------------
# currents
# ---------------------------------------------------------------------------

def _lead_rows(sys: ExtendedSystem, alpha: int | None) -> np.ndarray:
    if alpha is None:
        return (sys.lead_index >= 0).astype(float)
    _check_lead(sys, alpha)
    return sys.lead_mask(alpha)


def _check_lead(sys: ExtendedSystem, alpha: int) -> None:
    if not 0 <= alpha < sys.n_leads:
        raise IndexError(f"unknown lead index {alpha}")


def avg_particle_current(C: np.ndarray, sys: ExtendedSystem, alpha: int | None = None) -> float:
    m = _lead_rows(sys, alpha)
    return float(np.sum(m * (sys.F - sys.gamma * np.real(np.diagonal(C)))))


def avg_energy_current(C: np.ndarray, sys: ExtendedSystem, alpha: int | None = None,
                       t: float = 0.0) -> float:
    m = _lead_rows(sys, alpha)
    H = sys.hamiltonian(t)
    reHC = np.real(np.diagonal(H @ C))
    return float(np.sum(m * (sys.F * np.real(np.diagonal(H)) - sys.gamma * reHC)))


def avg_measurement_energy(C: np.ndarray, sys: ExtendedSystem, alpha: int | None = None,
                           t: float = 0.0) -> float:
    m = _lead_rows(sys, alpha)
    reHiC = np.real(np.diagonal(sys.h_int(t) @ C))
    return float(-np.sum(m * sys.gamma * reHiC))


def internal_currents(C: np.ndarray, sys: ExtendedSystem, alpha: int,
                      t: float = 0.0) -> tuple[float, float]:
    """Particle and energy currents from lead ``alpha`` into the system."""
    _check_lead(sys, alpha)
    P = np.diag(sys.lead_mask(alpha))
    hSL = sys.h_int(t)
    hL = P @ np.diag(sys.mode_energies) @ P
    JN = 1j * np.trace((P @ hSL - hSL @ P) @ C)
    gam = np.diag(sys.gamma * sys.lead_mask(alpha))
    JE = 1j * np.trace((hL @ hSL - hSL @ hL) @ C) - 0.5 * np.trace((gam @ hSL + hSL @ gam) @ C)
    return float(np.real(JN)), float(np.real(JE))


def current_vector(C: np.ndarray, sys: ExtendedSystem, t: float = 0.0) -> np.ndarray:
    """Stack of all per-lead currents, shape ``(5, n_leads)``.

    Rows: external particle, external energy, measurement energy,
    internal particle, internal energy.
    """
    out = np.empty((5, sys.n_leads))
    for a in range(sys.n_leads):
        out[0, a] = avg_particle_current(C, sys, a)
        out[1, a] = avg_energy_current(C, sys, a, t)
        out[2, a] = avg_measurement_energy(C, sys, a, t)
        out[3, a], out[4, a] = internal_currents(C, sys, a, t)
    return out


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

@dataclass
class Evolution:
    """Sampled unconditional evolution.

    ``C`` has shape ``(len(t), n, n)``.  When currents were integrated,
    ``integrated`` has shape ``(len(t), 5, n_leads)`` with the rows of
    :func:`current_vector` integrated from the start time.
    """

    t: np.ndarray
    C: np.ndarray
    integrated: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.C[-1]

    def heat(self, mu) -> np.ndarray:
        """External heat per lead, ``dE - mu dN``, along the samples."""
        return self.integrated[:, 1] - np.asarray(mu) * self.integrated[:, 0]

    def internal_heat(self, mu) -> np.ndarray:
        return self.integrated[:, 4] - np.asarray(mu) * self.integrated[:, 3]


def evolve(C0: np.ndarray, t_span, sys: ExtendedSystem, t_eval=None, rtol: float = 1e-10,
           atol: float = 1e-12, currents: bool = False, breakpoints=(), method: str = "RK45",
           max_step: float = np.inf, first_step: float | None = None) -> Evolution:
    """Integrate the Lyapunov equation with an adaptive Runge-Kutta 4(5) scheme.

    ``breakpoints`` split the span into pieces integrated separately, which
    keeps the step control away from kinks in driven protocols.  With
    ``currents=True`` the per-lead currents are integrated alongside ``C``.
    """
    C0 = hermitize(np.asarray(C0, dtype=complex))
    n = sys.n
    nl = sys.n_leads
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t_eval is None:
        t_eval = np.array([t0, t1])
    t_eval = np.asarray(t_eval, dtype=float)
    knots = sorted({t0, t1, *(float(b) for b in breakpoints if t0 < b < t1)})
    extra = 5 * nl if currents else 0

    def rhs(t, y):
        C = y[: n * n].reshape(n, n)
        dC = lyapunov_rhs(C, t, sys).ravel()
        if not currents:
            return dC
        return np.concatenate([dC, current_vector(C, sys, t).ravel().astype(complex)])

    y = np.concatenate([C0.ravel(), np.zeros(extra, dtype=complex)])
    kw = {} if first_step is None else {"first_step": first_step}
    ts, ys = [], []
    for a, b in zip(knots[:-1], knots[1:]):
        last = b == knots[-1]
        keep = (t_eval >= a) & ((t_eval < b) | (last & (t_eval <= b)))
        sel = np.union1d(t_eval[keep], [b])
        sol = solve_ivp(rhs, (a, b), y, method=method, t_eval=sel, rtol=rtol, atol=atol,
                        max_step=max_step, **kw)
        if not sol.success:
            raise IntegrationError(f"integration failed near t={sol.t[-1]:.6g}: {sol.message}")
        y = sol.y[:, -1]
        wanted = np.isin(sol.t, t_eval[keep])
        ts.append(sol.t[wanted])
        ys.append(sol.y.T[wanted])
    t = np.concatenate(ts)
    Y = np.concatenate(ys, axis=0)
    C = Y[:, : n * n].reshape(-1, n, n)
    C = 0.5 * (C + np.swapaxes(C.conj(), -1, -2))
    integrated = Y[:, n * n:].real.reshape(-1, 5, nl) if currents else None
    return Evolution(t, C, integrated)

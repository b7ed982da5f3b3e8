"""Quantum-jump trajectories of the conditional covariance matrix.

A trajectory alternates smooth no-jump stretches with jumps on lead modes.
Channel ``(k, +1)`` moves a particle from the residual reservoir into lead
mode ``k``; channel ``(k, -1)`` moves one out.  With detection efficiencies
``lam+`` and ``lam-`` the registered channels fire with rates

    lam+_k F_k (1 - C_kk)         and         lam-_k (Gamma_k - F_k) C_kk,

and the unregistered fractions enter the no-jump flow deterministically.

Along a trajectory each lead accumulates particle number, energy and
measurement energy (drift plus jump terms) and the entropy flux
``-sigma (eps_k - mu) / T`` per jump.  Drift rates for a quantity ``q`` have
the common form

    b_k base_q + a_k w+_q + d_k w-_q,
    b = Gamma - 2F,   a = (1 - lam+) F,   d = (1 - lam-)(Gamma - F),

where ``w+`` / ``w-`` are the jump increments multiplied by the channel's
occupation factor, so that averaging over registered jumps reproduces the
unconditional currents for any efficiencies.

Batches of trajectories advance in lockstep on a shared time grid; a
trajectory whose survival probability crosses its threshold inside a step is
resolved individually (crossing time by safeguarded Newton iteration on
``log p``) and then continues to the end of that step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lead_model import ExtendedSystem
from .riccati import RiccatiFlow
from .streams import BatchStreams, UniformStream

PIN_TOL = 1e-12
ROOT_TOL_LOGP = 1e-13
ROOT_TOL_TIME = 1e-12
NEWTON_POLISH = 1e-6
DEFAULT_STEP = 0.25

PLUS, MINUS = 1, -1


class ImpossibleJumpError(RuntimeError):
    """A jump was selected on a channel whose rate is numerically zero."""


@dataclass(frozen=True)
class JumpEvent:
    t: float
    k: int
    sigma: int


@dataclass
class TrajectoryResult:
    """Outcome of one trajectory; per-lead arrays have length ``n_leads``."""

    C: np.ndarray
    t: float
    dN: np.ndarray
    dE: np.ndarray
    dEM: np.ndarray
    entropy_flux: np.ndarray
    record: list[JumpEvent] | None
    mu: np.ndarray = field(repr=False, default=None)

    @property
    def heat(self) -> np.ndarray:
        return self.dE - self.mu * self.dN

    @property
    def n_jumps(self) -> int:
        return 0 if self.record is None else len(self.record)


@dataclass
class BatchResult:
    """Outcome of a batch; per-lead arrays have shape ``(B, n_leads)``."""

    C: np.ndarray
    t: float
    dN: np.ndarray
    dE: np.ndarray
    dEM: np.ndarray
    entropy_flux: np.ndarray
    n_jumps: np.ndarray
    mu: np.ndarray
    records: list | None = None  # per trajectory: (times, k, sigma) arrays
    spectrum_min: np.ndarray | None = None
    spectrum_max: np.ndarray | None = None

    def __len__(self) -> int:
        return self.C.shape[0]

    @property
    def heat(self) -> np.ndarray:
        return self.dE - self.mu * self.dN

    def record(self, i: int) -> list[JumpEvent]:
        if self.records is None:
            raise ValueError("records were not kept for this batch")
        t, k, s = self.records[i]
        return [JumpEvent(float(a), int(b), int(c)) for a, b, c in zip(t, k, s)]

    def trajectory(self, i: int) -> TrajectoryResult:
        rec = self.record(i) if self.records is not None else None
        return TrajectoryResult(
            self.C[i], self.t, self.dN[i], self.dE[i], self.dEM[i],
            self.entropy_flux[i], rec, self.mu,
        )


# ---------------------------------------------------------------------------
# single-matrix operations
# ---------------------------------------------------------------------------

def no_jump_rhs(C: np.ndarray, t: float, sys: ExtendedSystem) -> np.ndarray:
    """Deterministic part of the conditional flow between registered jumps."""
    C = np.asarray(C, dtype=complex)
    n = sys.n
    gam, F = sys.gamma, sys.F
    B = gam - 2.0 * F
    A = F * (1.0 - sys.lam_plus)
    D = (gam - F) * (1.0 - sys.lam_minus)
    V = 1j * sys.hamiltonian(t) + 0.5 * np.diag(B)
    Cb = np.eye(n) - C
    return (
        -(V @ C + C @ V.conj().T)
        + (C * B) @ C
        + (Cb * A) @ Cb
        - (C * D) @ C
    )


def survival_decay_rate(C: np.ndarray, sys: ExtendedSystem) -> float:
    """``K = Tr[lam+ F (1 - C)] + Tr[lam- (Gamma - F) C]``."""
    d = np.real(np.diagonal(C))
    K = float((1.0 - d) @ (sys.lam_plus * sys.F) + d @ (sys.lam_minus * (sys.gamma - sys.F)))
    return max(K, 0.0)


def channel_weights(C: np.ndarray, sys: ExtendedSystem) -> np.ndarray:
    """Registered-jump rates as an ``(n, 2)`` array, columns ``(+, -)``."""
    d = np.real(np.diagonal(C))
    plus = sys.lam_plus * sys.F * (1.0 - d)
    minus = sys.lam_minus * (sys.gamma - sys.F) * d
    return np.clip(np.stack([plus, minus], axis=-1), 0.0, None)


def select_channel(C: np.ndarray, sys: ExtendedSystem, R2: float) -> tuple[int, int]:
    """Pick ``(k, sigma)`` as the first channel whose cumulative weight reaches ``R2``.

    Channels are ordered by ascending ``k`` with ``+`` before ``-``.
    """
    k, s = _select(channel_weights(C, sys)[None], np.array([R2]))
    return int(k[0]), int(s[0])


def _select(W: np.ndarray, R2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = W.shape[0]
    cum = np.cumsum(W.reshape(m, -1), axis=1)
    tot = cum[:, -1]
    if np.any(tot <= 0):
        raise ImpossibleJumpError("all registered channel weights vanish")
    j = np.argmax(cum >= R2[:, None] * tot[:, None], axis=1)
    return j // 2, np.where(j % 2 == 0, PLUS, MINUS)


def jump_update(C: np.ndarray, k: int, sigma: int) -> np.ndarray:
    """Conditional covariance after a registered jump on mode ``k``."""
    out = _jump_batch(np.asarray(C, dtype=complex)[None], np.array([k]), np.array([sigma]))
    return out[0]


def _jump_batch(C: np.ndarray, k: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    m, n, _ = C.shape
    rows = np.arange(m)
    ckk = np.real(C[rows, k, k])
    plus = sigma == PLUS
    den = np.where(plus, 1.0 - ckk, ckk)
    if np.any(den <= PIN_TOL):
        bad = int(np.flatnonzero(den <= PIN_TOL)[0])
        raise ImpossibleJumpError(
            f"jump ({int(k[bad])}, {int(sigma[bad]):+d}) on a channel with weight {den[bad]:.3g}"
        )
    col = C[rows, :, k]  # C[:, k]
    v = np.where(plus[:, None], -col, col)
    v[rows, k] = np.where(plus, 1.0 - ckk, ckk)
    sign = np.where(plus, 1.0, -1.0)
    out = C + (sign / den)[:, None, None] * (v[:, :, None] * v.conj()[:, None, :])
    out[rows, k, :] = 0.0
    out[rows, :, k] = 0.0
    out[rows, k, k] = np.where(plus, 1.0, 0.0)
    return 0.5 * (out + np.swapaxes(out.conj(), -1, -2))


# ---------------------------------------------------------------------------
# stochastic increments
# ---------------------------------------------------------------------------

def _mode_terms(C: np.ndarray, H: np.ndarray, Hi: np.ndarray) -> dict:
    """Per-mode diagonal quantities entering drift and jump increments.

    ``C`` is ``(m, n, n)``; ``H`` and ``Hi`` are shared ``(n, n)`` or
    per-trajectory ``(m, n, n)``.
    """
    Cd = np.real(np.diagonal(C, axis1=-2, axis2=-1))
    C2d = np.sum(np.abs(C) ** 2, axis=-1)
    HC = H @ C
    HiC = Hi @ C
    reHC = np.real(np.diagonal(HC, axis1=-2, axis2=-1))
    reHiC = np.real(np.diagonal(HiC, axis1=-2, axis2=-1))
    CHC = np.real(np.einsum("mki,mik->mk", C, HC))
    CHiC = np.real(np.einsum("mki,mik->mk", C, HiC))
    Hd = np.real(np.diagonal(H, axis1=-2, axis2=-1))
    Hid = np.real(np.diagonal(Hi, axis1=-2, axis2=-1))
    # Re (Cbar H0 C)_kk with H0 = H - Hi
    reCbH0C = (reHC - reHiC) - (CHC - CHiC)
    return {
        "C": Cd,
        "C2": C2d,
        "Cb2": 1.0 - 2.0 * Cd + C2d,
        "CHC": CHC,
        "reHC": reHC,
        "CbHCb": Hd - 2.0 * reHC + CHC,
        "CHiC": CHiC,
        "CbHiCb": Hid - 2.0 * reHiC + CHiC,
        "reCbH0C": reCbH0C,
    }


def _jump_weighted(q: dict) -> tuple[np.ndarray, np.ndarray]:
    """Jump increments times the channel occupation factor, shape ``(m, 3, n)``.

    Rows are (particle, energy, measurement energy); the first array is for
    ``+`` jumps (factor ``1 - C_kk``), the second for ``-`` jumps (factor ``C_kk``).
    """
    wp = np.stack([q["Cb2"], q["CbHCb"], q["CbHiCb"] - q["reCbH0C"]], axis=1)
    wm = np.stack([-q["C2"], -q["CHC"], -q["CHiC"] + q["reCbH0C"]], axis=1)
    return wp, wm


def _drift_modes(q: dict, b, a, d) -> np.ndarray:
    base_n = q["C2"] - q["C"]
    base_e = q["CHC"] - q["reHC"]
    base = np.stack([base_n, base_e, base_e], axis=1)
    wp, wm = _jump_weighted(q)
    return b * base + a * wp + d * wm


def _jump_increments(q: dict, k: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    m = len(k)
    rows = np.arange(m)
    wp, wm = _jump_weighted(q)
    ckk = q["C"][rows, k]
    plus = sigma == PLUS
    w = np.where(plus[:, None], wp[rows, :, k], wm[rows, :, k])
    den = np.where(plus, 1.0 - ckk, ckk)
    return w / den[:, None]


def _efficiency_terms(sys: ExtendedSystem):
    b = sys.gamma - 2.0 * sys.F
    a = (1.0 - sys.lam_plus) * sys.F
    d = (1.0 - sys.lam_minus) * (sys.gamma - sys.F)
    return b, a, d


def drift_rates(C: np.ndarray, t: float, sys: ExtendedSystem) -> np.ndarray:
    """Per-lead drift rates ``(3, n_leads)`` for (particles, energy, measurement energy)."""
    q = _mode_terms(np.asarray(C, dtype=complex)[None], sys.hamiltonian(t), sys.h_int(t))
    return (_drift_modes(q, *_efficiency_terms(sys)) @ _lead_onehot(sys))[0]


def jump_increments(C: np.ndarray, t: float, sys: ExtendedSystem, k: int, sigma: int) -> np.ndarray:
    """Increments ``(dN, dE, dE_M)`` of a registered jump, from the pre-jump ``C``."""
    q = _mode_terms(np.asarray(C, dtype=complex)[None], sys.hamiltonian(t), sys.h_int(t))
    return _jump_increments(q, np.array([k]), np.array([sigma]))[0]


def _increment(which: int, C, t, sys, alpha, event, dt):
    if event is not None:
        if sys.lead_index[event.k] != alpha:
            return 0.0
        return float(jump_increments(C, event.t, sys, event.k, event.sigma)[which])
    if dt is None:
        raise ValueError("need either a jump event or a time step")
    return float(drift_rates(C, t, sys)[which, alpha] * dt)


def stochastic_particle_increment(C, sys, alpha: int, event: JumpEvent | None = None,
                                  t: float = 0.0, dt: float | None = None) -> float:
    """Particle-number change of lead ``alpha``'s side from a jump or a drift step."""
    return _increment(0, C, t, sys, alpha, event, dt)


def stochastic_energy_increment(C, sys, alpha: int, event: JumpEvent | None = None,
                                t: float = 0.0, dt: float | None = None) -> float:
    return _increment(1, C, t, sys, alpha, event, dt)


def stochastic_measurement_energy_increment(C, sys, alpha: int, event: JumpEvent | None = None,
                                            t: float = 0.0, dt: float | None = None) -> float:
    return _increment(2, C, t, sys, alpha, event, dt)


def entropy_flux_increment(event: JumpEvent, sys: ExtendedSystem) -> float:
    """``-sigma (eps_k - mu) / T`` for the reservoir that feeds mode ``k``."""
    alpha = int(sys.lead_index[event.k])
    if alpha < 0:
        raise ValueError(f"mode {event.k} is not a lead mode")
    res = sys.reservoirs[alpha]
    return -event.sigma * (sys.mode_energies[event.k] - res.mu) / res.T


def _lead_onehot(sys: ExtendedSystem) -> np.ndarray:
    M = np.zeros((sys.n, sys.n_leads))
    for a in range(sys.n_leads):
        M[sys.lead_modes(a), a] = 1.0
    return M


# ---------------------------------------------------------------------------
# time grid
# ---------------------------------------------------------------------------

def time_grid(t0: float, t1: float, h_max: float, breakpoints=()) -> np.ndarray:
    """Grid on ``[t0, t1]`` with steps ``<= h_max`` that contains every breakpoint."""
    if not t1 > t0:
        raise ValueError(f"empty time span [{t0}, {t1}]")
    if not h_max > 0:
        raise ValueError("step must be positive")
    knots = sorted({float(t0), float(t1), *(float(b) for b in breakpoints if t0 < b < t1)})
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        m = max(1, int(np.ceil((b - a) / h_max - 1e-9)))
        pieces.append(np.linspace(a, b, m + 1)[:-1])
    pieces.append(np.array([knots[-1]]))
    return np.concatenate(pieces)


# ---------------------------------------------------------------------------
# batched engine
# ---------------------------------------------------------------------------

class TrajectoryEngine:
    """Lockstep integrator for batches of conditional trajectories."""

    def __init__(self, sys: ExtendedSystem):
        self.sys = sys
        self.flow = RiccatiFlow(sys)
        self.onehot = _lead_onehot(sys)
        self.b, self.a, self.d = _efficiency_terms(sys)
        self.mode_lead = sys.lead_index
        self.mode_eps = sys.mode_energies
        self.mode_mu = np.nan_to_num(sys.mode_mu())
        self.mode_T = np.nan_to_num(sys.mode_temperature(), nan=1.0)
        self.lead_mu = np.array([r.mu for r in sys.reservoirs])
        self.W_plus = self.flow.rate_plus
        self.W_minus = self.flow.rate_minus

    # -- hamiltonians ---------------------------------------------------
    def _hams(self, t: float):
        return self.sys.hamiltonian(t), self.sys.h_int(t)

    def _hams_at(self, times: np.ndarray):
        if self.sys.is_static:
            return self._hams(0.0)
        H = np.stack([self.sys.hamiltonian(float(t)) for t in times])
        Hi = np.stack([self.sys.h_int(float(t)) for t in times])
        return H, Hi

    def _rates(self, C, H, Hi) -> np.ndarray:
        q = _mode_terms(C, H, Hi)
        return _drift_modes(q, self.b, self.a, self.d) @ self.onehot

    # -- crossing --------------------------------------------------------
    def _find_crossing(self, C, a, g_lo, g_hi, s_hi):
        """Solve ``log p(a + s) = log R1`` for each row with ``g`` the excess over ``log R1``.

        ``g_lo = g(0) >= 0`` and ``g_hi = g(s_hi) < 0`` bracket the root.
        """
        flow = self.flow
        m = C.shape[0]
        lo = np.zeros(m)
        hi = s_hi.copy()
        glo = g_lo.copy()
        ghi = g_hi.copy()
        s = hi * glo / (glo - ghi)
        s_out = np.empty(m)
        C_out = np.empty_like(C)
        dl_out = np.empty(m)
        act = np.arange(m)
        for _ in range(200):
            Cs, dl = flow.propagate(C[act], a[act], s[act])
            g = g_lo[act] + dl
            K = flow.survival_rate(Cs)
            width = hi[act] - lo[act]
            with np.errstate(divide="ignore", invalid="ignore"):
                delta = g / K
            # a tiny Newton correction is applied to first order instead of
            # propagating again; the neglected terms are O(delta^2)
            polish = (np.abs(delta) <= NEWTON_POLISH) & (s[act] + delta > lo[act]) & (s[act] + delta < hi[act])
            done = (np.abs(g) <= ROOT_TOL_LOGP) | (width <= ROOT_TOL_TIME * np.maximum(1.0, a[act] + s[act]))
            polish &= ~done
            if np.any(done):
                idx = act[done]
                s_out[idx] = s[idx]
                C_out[idx] = Cs[done]
                dl_out[idx] = dl[done]
            if np.any(polish):
                idx = act[polish]
                d = delta[polish]
                Cp = Cs[polish] + d[:, None, None] * flow.rhs(Cs[polish], a[idx] + s[idx])
                s_out[idx] = s[idx] + d
                C_out[idx] = 0.5 * (Cp + np.swapaxes(Cp.conj(), -1, -2))
                dl_out[idx] = dl[polish] - K[polish] * d
            keep = ~(done | polish)
            act, g, K = act[keep], g[keep], K[keep]
            if act.size == 0:
                return s_out, C_out, dl_out
            pos = g > 0
            lo[act] = np.where(pos, s[act], lo[act])
            glo[act] = np.where(pos, g, glo[act])
            hi[act] = np.where(pos, hi[act], s[act])
            ghi[act] = np.where(pos, ghi[act], g)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = s[act] + g / K
            inside = np.isfinite(newton) & (newton > lo[act]) & (newton < hi[act])
            s[act] = np.where(inside, newton, 0.5 * (lo[act] + hi[act]))
        raise RuntimeError("crossing-time iteration did not converge")

    # -- main loop -------------------------------------------------------
    def run(self, C0: np.ndarray, grid: np.ndarray, streams: BatchStreams,
            record: bool = False, track_spectrum: bool = False) -> BatchResult:
        sys = self.sys
        flow = self.flow
        C = np.array(C0, dtype=complex, copy=True)
        if C.ndim == 2:
            C = np.broadcast_to(C, (len(streams), *C.shape)).copy()
        Bn = C.shape[0]
        nl = sys.n_leads
        logp = np.zeros(Bn)
        logR1 = np.log(streams.open_unit(np.arange(Bn)))
        acc = np.zeros((Bn, 3, nl))
        flux = np.zeros((Bn, nl))
        njump = np.zeros(Bn, dtype=np.int64)
        events = [[] for _ in range(Bn)] if record else None
        spectral = [np.full(Bn, np.inf), np.full(Bn, -np.inf)] if track_spectrum else None
        ctx = _Ctx(acc, flux, njump, events, logR1, streams, spectral)
        if spectral is not None:
            self._track(C, np.arange(Bn), spectral)

        H0, Hi0 = self._hams(grid[0])
        r_prev = self._rates(C, H0, Hi0)
        for t0, t1 in zip(grid[:-1], grid[1:]):
            t0 = float(t0)
            t1 = float(t1)
            h = t1 - t0
            tm = t0 + 0.5 * h
            Pa = flow.step_matrix(t0, 0.5 * h)
            Pb = flow.step_matrix(tm, 0.5 * h)
            Cm, la = flow.apply(Pa, C, 0.5 * h)
            C1, lb = flow.apply(Pb, Cm, 0.5 * h)
            lp1 = logp + la + lb
            cross = lp1 < logR1 if flow.monitored else np.zeros(Bn, dtype=bool)
            Hm, Him = self._hams(tm)
            H1, Hi1 = self._hams(t1)
            r1 = np.empty_like(r_prev)
            ok = np.flatnonzero(~cross)
            if ok.size:
                rm = self._rates(Cm[ok], Hm, Him)
                r1[ok] = self._rates(C1[ok], H1, Hi1)
                acc[ok] += (h / 6.0) * (r_prev[ok] + 4.0 * rm + r1[ok])
                C[ok] = C1[ok]
                logp[ok] = lp1[ok]
                if spectral is not None:
                    self._track(C[ok], ok, spectral)
            rows = np.flatnonzero(cross)
            if rows.size:
                self._resolve(rows, C, logp, r1, r_prev[rows], t0, t1, lp1[rows] - logR1[rows], ctx)
            r_prev = r1

        records = None
        if record:
            records = [
                (np.array([e[0] for e in ev], dtype=float),
                 np.array([e[1] for e in ev], dtype=np.int64),
                 np.array([e[2] for e in ev], dtype=np.int64))
                for ev in events
            ]
        return BatchResult(
            C=C, t=float(grid[-1]), dN=acc[:, 0], dE=acc[:, 1], dEM=acc[:, 2],
            entropy_flux=flux, n_jumps=njump, mu=self.lead_mu, records=records,
            spectrum_min=None if spectral is None else spectral[0],
            spectrum_max=None if spectral is None else spectral[1],
        )

    def _resolve(self, rows, C, logp, r_end, r_a, t0, t1, g_hi, ctx):
        """Handle rows that cross inside ``[t0, t1]``, possibly several times."""
        flow = self.flow
        Ca = C[rows].copy()
        a = np.full(rows.size, t0)
        g_lo = logp[rows] - ctx.logR1[rows]
        H1, Hi1 = self._hams(t1)
        while rows.size:
            s_hi = t1 - a
            s, Cj, _ = self._find_crossing(Ca, a, g_lo, g_hi, s_hi)
            tJ = a + s
            Ch, _ = flow.propagate(Ca, a, 0.5 * s)
            Hh, Hih = self._hams_at(a + 0.5 * s)
            HJ, HiJ = self._hams_at(tJ)
            qJ = _mode_terms(Cj, HJ, HiJ)
            rJ = _drift_modes(qJ, self.b, self.a, self.d) @ self.onehot
            ctx.acc[rows] += (s / 6.0)[:, None, None] * (r_a + 4.0 * self._rates(Ch, Hh, Hih) + rJ)

            R2 = ctx.streams.open_unit(rows)
            Wd = np.stack([
                self.W_plus * (1.0 - qJ["C"]), self.W_minus * qJ["C"],
            ], axis=-1)
            k, sig = _select(np.clip(Wd, 0.0, None), R2)
            inc = _jump_increments(qJ, k, sig)
            lead = self.mode_lead[k]
            ctx.acc[rows, :, lead] += inc
            ctx.flux[rows, lead] += -sig * (self.mode_eps[k] - self.mode_mu[k]) / self.mode_T[k]
            ctx.njump[rows] += 1
            if ctx.events is not None:
                for r, tt, kk, ss in zip(rows, tJ, k, sig):
                    ctx.events[r].append((float(tt), int(kk), int(ss)))
            Cn = _jump_batch(Cj, k, sig)
            ctx.logR1[rows] = np.log(ctx.streams.open_unit(rows))
            if ctx.spectral is not None:
                self._track(Cn, rows, ctx.spectral)

            rest = t1 - tJ
            rn = self._rates(Cn, HJ, HiJ)
            Cmids, Ce, le = flow.propagate_pair(Cn, tJ, rest)
            again = le < ctx.logR1[rows]
            fin = np.flatnonzero(~again)
            if fin.size:
                Cmid = Cmids[fin]
                Hm, Him = self._hams_at(tJ[fin] + 0.5 * rest[fin])
                re = self._rates(Ce[fin], H1, Hi1)
                ctx.acc[rows[fin]] += (rest[fin] / 6.0)[:, None, None] * (
                    rn[fin] + 4.0 * self._rates(Cmid, Hm, Him) + re
                )
                C[rows[fin]] = Ce[fin]
                logp[rows[fin]] = le[fin]
                r_end[rows[fin]] = re
                if ctx.spectral is not None:
                    self._track(Ce[fin], rows[fin], ctx.spectral)
            nxt = np.flatnonzero(again)
            rows = rows[nxt]
            Ca = Cn[nxt]
            a = tJ[nxt]
            g_lo = -ctx.logR1[rows]
            g_hi = le[nxt] - ctx.logR1[rows]
            r_a = rn[nxt]

    @staticmethod
    def _track(C, rows, spectral):
        ev = np.linalg.eigvalsh(C)
        spectral[0][rows] = np.minimum(spectral[0][rows], ev[:, 0])
        spectral[1][rows] = np.maximum(spectral[1][rows], ev[:, -1])

    # -- single waiting time --------------------------------------------
    def first_jump_time(self, C: np.ndarray, t: float, R1: float, t_max: float,
                        h_max: float = DEFAULT_STEP):
        """Propagate one state until ``p = R1`` or ``t_max``.

        Returns ``(t_J or None, C at that time, log p)``.
        """
        C = np.asarray(C, dtype=complex)[None].copy()
        logR1 = np.log(R1)
        logp = 0.0
        grid = time_grid(t, t_max, h_max)
        for t0, t1 in zip(grid[:-1], grid[1:]):
            h = float(t1 - t0)
            C1, dl = self.flow.apply(self.flow.step_matrix(float(t0), h), C, h)
            if self.flow.monitored and logp + dl[0] < logR1:
                s, Cj, dlj = self._find_crossing(
                    C, np.array([float(t0)]), np.array([logp - logR1]),
                    np.array([logp + dl[0] - logR1]), np.array([h]),
                )
                return float(t0 + s[0]), Cj[0], float(logp + dlj[0])
            C = C1
            logp += float(dl[0])
        return None, C[0], logp


@dataclass
class _Ctx:
    acc: np.ndarray
    flux: np.ndarray
    njump: np.ndarray
    events: list | None
    logR1: np.ndarray
    streams: BatchStreams
    spectral: list | None


def sample_waiting_time(C: np.ndarray, t: float, R1: float, sys: ExtendedSystem, t_max: float,
                        h_max: float = DEFAULT_STEP):
    """Time at which the survival probability since ``t`` drops to ``R1``.

    Returns ``(t_J, C(t_J), log p)`` or ``(None, C(t_max), log p(t_max))``.
    """
    if not 0.0 < R1 <= 1.0:
        raise ValueError(f"R1 must lie in (0, 1], got {R1}")
    return TrajectoryEngine(sys).first_jump_time(C, t, R1, t_max, h_max)


def run_batch(sys: ExtendedSystem, C0: np.ndarray, t_span, master_seed: int, indices,
              h_max: float = DEFAULT_STEP, breakpoints=(), record: bool = False,
              track_spectrum: bool = False, streams: BatchStreams | None = None,
              engine: TrajectoryEngine | None = None) -> BatchResult:
    """Run trajectories ``indices`` of the ensemble with ``master_seed`` in lockstep.

    ``C0`` is a shared ``(n, n)`` start or a per-trajectory ``(B, n, n)`` stack.
    Pass ``streams`` to continue streams that already supplied initial draws.
    """
    if streams is None:
        streams = BatchStreams(master_seed, indices)
    engine = engine or TrajectoryEngine(sys)
    grid = time_grid(t_span[0], t_span[1], h_max, breakpoints)
    return engine.run(C0, grid, streams, record=record, track_spectrum=track_spectrum)


def run_trajectory(sys: ExtendedSystem, C0: np.ndarray, t_span, seed: int, index: int = 0,
                   h_max: float = DEFAULT_STEP, breakpoints=(),
                   streams: BatchStreams | None = None) -> TrajectoryResult:
    """One trajectory with the full jump record; deterministic in ``(seed, index)``."""
    res = run_batch(sys, np.asarray(C0)[None], t_span, seed, [index], h_max=h_max,
                    breakpoints=breakpoints, record=True, streams=streams)
    return res.trajectory(0)


__all__ = [
    "BatchResult", "ImpossibleJumpError", "JumpEvent", "TrajectoryEngine", "TrajectoryResult",
    "UniformStream", "channel_weights", "drift_rates", "entropy_flux_increment",
    "jump_increments", "jump_update", "no_jump_rhs", "run_batch", "run_trajectory",
    "sample_waiting_time", "select_channel", "stochastic_energy_increment",
    "stochastic_measurement_energy_increment", "stochastic_particle_increment",
    "survival_decay_rate", "time_grid",
]

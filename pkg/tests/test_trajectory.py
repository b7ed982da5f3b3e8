import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp
from scipy.integrate import solve_ivp

from mesoleads import ReservoirSpec, single_dot
from mesoleads.oracle import (
    DenseModel, annihilators, dense_covariance, dense_trajectory, gaussian_density, wick_residual,
)
from mesoleads.streams import BatchStreams, UniformStream
from mesoleads.trajectory import (
    ImpossibleJumpError, JumpEvent, TrajectoryEngine, channel_weights, drift_rates,
    entropy_flux_increment, jump_increments, jump_update, no_jump_rhs, run_batch,
    run_trajectory, sample_waiting_time, select_channel, stochastic_energy_increment,
    stochastic_measurement_energy_increment, stochastic_particle_increment,
    survival_decay_rate, time_grid,
)
from mesoleads.unconditional import evolve, lyapunov_rhs

from conftest import random_covariance, random_dot

seeds = st.integers(0, 2**32 - 1)


def lone_mode(f_mu, lam=1.0):
    """Decoupled dot plus one lead mode at energy 0 with occupation set by ``mu``."""
    res = ReservoirSpec(T=1e-3, mu=f_mu, L=1, Gamma=0.0, omega_max=0.5)
    return single_dot(0.0, res, lam_plus=lam, lam_minus=lam)


EMPTYING = -5.0  # mu far below the mode: f = 0
FILLING = 5.0  # mu far above: f = 1


class TestNoJumpFlow:
    def test_unmonitored_is_lyapunov(self, rng):
        sys = random_dot(rng, L=3, lam_plus=0.0, lam_minus=0.0)
        C = random_covariance(rng, 4)
        np.testing.assert_allclose(no_jump_rhs(C, 0.0, sys), lyapunov_rhs(C, 0.0, sys), atol=1e-14)

    def test_single_mode_closed_form(self):
        sys = lone_mode(EMPTYING)
        g = sys.gamma[1]
        c0 = 0.7
        C0 = np.diag([0.2, c0]).astype(complex)
        eng = TrajectoryEngine(sys)
        for t in (0.1, 0.5, 1.3):
            C, _ = eng.flow.propagate(C0[None], np.zeros(1), np.array([t]))
            exact = c0 * np.exp(-g * t) / (1 - c0 + c0 * np.exp(-g * t))
            assert C[0, 1, 1].real == pytest.approx(exact, abs=1e-12)

    def test_against_dense_effective_hamiltonian(self, rng):
        sys = random_dot(rng, L=2, lam_plus=0.6, lam_minus=0.8)
        C0 = random_covariance(rng, 3)
        model = DenseModel(sys)
        d = model.dim
        sol = solve_ivp(lambda t, y: model.no_jump_generator(y.reshape(d, d), t).ravel(),
                        (0, 1 / sys.gamma.max()), gaussian_density(C0).astype(complex).ravel(),
                        rtol=1e-12, atol=1e-14, method="DOP853")
        rho = sol.y[:, -1].reshape(d, d)
        C, lp = TrajectoryEngine(sys).flow.propagate(C0[None], np.zeros(1), np.array([sol.t[-1]]))
        assert np.abs(C[0] - dense_covariance(rho / np.trace(rho))).max() < 1e-6
        assert lp[0] == pytest.approx(np.log(np.trace(rho).real), abs=1e-8)


class TestSurvival:
    def test_empty_mode_absorbing(self):
        sys = lone_mode(FILLING)
        assert survival_decay_rate(np.zeros((2, 2)), sys) == pytest.approx(sys.gamma[1])

    def test_unmonitored(self, rng):
        sys = random_dot(rng, lam_plus=0.0, lam_minus=0.0)
        assert survival_decay_rate(random_covariance(rng, 3), sys) == 0.0

    def test_occupied_mode_emits(self):
        sys = lone_mode(EMPTYING)
        C = np.diag([0.0, 1.0])
        assert survival_decay_rate(C, sys) == pytest.approx(sys.gamma[1])

    @given(st.floats(1e-6, 1.0))
    def test_exponential_waiting_time(self, R1):
        sys = lone_mode(EMPTYING)
        tJ, C, _ = sample_waiting_time(np.diag([0.0, 1.0]), 0.0, R1, sys, t_max=1e3)
        exact = -np.log(R1) / sys.gamma[1]
        assert tJ == pytest.approx(exact, abs=1e-9)

    def test_unmonitored_survives(self, rng):
        sys = random_dot(rng, lam_plus=0.0, lam_minus=0.0)
        tJ, _, lp = sample_waiting_time(random_covariance(rng, 3), 0.0, 0.999, sys, t_max=20.0)
        assert tJ is None and lp == 0.0

    def test_rejects_bad_uniform(self, rng):
        with pytest.raises(ValueError):
            sample_waiting_time(np.eye(3), 0.0, 0.0, random_dot(rng), 1.0)

    def test_waiting_time_distribution_matches_dense(self):
        # first-jump times from the steady-state dot with two lead modes, against
        # samples drawn by inverting the dense survival curve
        sys = single_dot(0.25, ReservoirSpec(T=1.0, mu=0.0625, L=2, Gamma=0.125))
        C0 = np.diag([0.5, *sys.occupation[1:]])
        model = DenseModel(sys)
        d = model.dim
        grid = np.linspace(0, 15, 3001)
        sol = solve_ivp(lambda t, y: model.no_jump_generator(y.reshape(d, d), t).ravel(),
                        (0, grid[-1]), gaussian_density(C0).astype(complex).ravel(), t_eval=grid,
                        rtol=1e-11, atol=1e-13)
        surv = np.real(np.trace(sol.y.T.reshape(-1, d, d), axis1=1, axis2=2))
        u = np.random.default_rng(7).uniform(surv[-1], 1.0, 5000)
        dense = np.interp(-np.log(u), -np.log(surv), grid)
        eng = TrajectoryEngine(sys)
        streams = BatchStreams(99, np.arange(5000))
        logR1 = np.log(streams.open_unit(np.arange(5000)))
        R1 = np.exp(logR1[np.log(surv[-1]) < logR1])[:5000]
        samples = []
        for r in R1[:1500]:
            tJ, _, _ = eng.first_jump_time(C0, 0.0, r, grid[-1], h_max=0.5)
            samples.append(tJ)
        assert ks_2samp(samples, dense).pvalue > 0.01


class TestChannels:
    def test_single_open_channel(self):
        sys = lone_mode(EMPTYING)
        for R2 in (1e-9, 0.3, 1.0):
            assert select_channel(np.diag([0.3, 0.5]), sys, R2) == (1, -1)

    def test_symmetric_tie(self):
        res = ReservoirSpec(T=1.0, mu=0.0, L=2, Gamma=0.0, omega_max=1.0)
        sys = single_dot(0.0, res, lam_plus=0.0)
        sys.occupation[1:] = 0.0
        C = np.diag([0.0, 0.5, 0.5])
        assert select_channel(C, sys, 0.5) == (1, -1)
        assert select_channel(C, sys, 0.5 + 1e-12) == (2, -1)

    def test_all_blocked(self):
        sys = lone_mode(EMPTYING)
        with pytest.raises(ImpossibleJumpError):
            select_channel(np.zeros((2, 2)), sys, 0.5)

    def test_frequencies(self, rng):
        sys = random_dot(rng, L=3, lam_plus=0.7, lam_minus=0.4)
        C = random_covariance(rng, 4)
        w = channel_weights(C, sys).ravel()
        p = w / w.sum()
        R2 = 1.0 - np.random.default_rng(3).random(10_000)
        counts = np.zeros_like(p)
        for r in R2:
            k, s = select_channel(C, sys, r)
            counts[2 * k + (0 if s > 0 else 1)] += 1
        sd = np.sqrt(10_000 * p * (1 - p))
        assert np.all(np.abs(counts - 10_000 * p) <= 3 * sd + 1e-9)

    def test_detailed_balance(self, rng):
        sys = random_dot(rng, L=4)
        n = sys.n
        up = channel_weights(np.zeros((n, n)), sys)[1:, 0]
        down = channel_weights(np.eye(n), sys)[1:, 1]
        eps, mu, T = sys.h_lead, sys.reservoirs[0].mu, sys.reservoirs[0].T
        np.testing.assert_allclose(up / down, np.exp(-(eps - mu) / T), rtol=1e-10)


class TestJumpUpdate:
    def test_diagonal_plus(self):
        C = np.diag([0.3, 0.6, 0.2])
        out = jump_update(C, 1, +1)
        np.testing.assert_allclose(out, np.diag([0.3, 1.0, 0.2]), atol=1e-15)

    @given(seeds)
    def test_pinning(self, seed):
        rng = np.random.default_rng(seed)
        C = random_covariance(rng, 5)
        k = int(rng.integers(5))
        minus = jump_update(C, k, -1)
        assert abs(minus[k, k]) < 1e-10
        both = jump_update(minus, k, +1)
        assert abs(both[k, k] - 1) < 1e-10
        for M in (minus, both):
            lam = np.linalg.eigvalsh(M)
            assert lam.min() > -1e-10 and lam.max() < 1 + 1e-10

    def test_blocked_channel(self):
        with pytest.raises(ImpossibleJumpError):
            jump_update(np.diag([0.5, 1.0]), 1, +1)

    @pytest.mark.parametrize("sigma", [+1, -1])
    def test_against_dense(self, rng, sigma):
        C = random_covariance(rng, 3)
        rho = gaussian_density(C)
        c = annihilators(3)[2]
        L = c.T if sigma > 0 else c
        post = L @ rho @ L.conj().T
        ref = dense_covariance(post / np.trace(post))
        assert np.abs(jump_update(C, 2, sigma) - ref).max() < 1e-10


class TestIncrements:
    def test_plus_jump_particle_increment(self):
        sys = lone_mode(FILLING)
        C = np.diag([0.4, 0.3])
        ev = JumpEvent(0.0, 1, +1)
        assert stochastic_particle_increment(C, sys, 0, ev) == pytest.approx(0.7)
        assert stochastic_particle_increment(C, sys, 0, JumpEvent(0.0, 1, -1)) == pytest.approx(-0.3)

    def test_stationary_drift(self):
        res = ReservoirSpec(T=1.0, mu=0.1, L=3, Gamma=0.0)
        sys = single_dot(0.2, res, lam_plus=0.0, lam_minus=0.0)
        C = np.diag(np.r_[0.4, sys.occupation[1:]])
        np.testing.assert_allclose(drift_rates(C, 0.0, sys), 0.0, atol=1e-16)

    def test_measurement_energy_without_coupling(self, rng):
        # with H_int = 0 only the H_0 correction survives in the jump terms and
        # the drift equals the energy drift
        res = ReservoirSpec(T=1.0, mu=0.1, L=3, Gamma=0.0)
        sys = single_dot(0.2, res)
        C = random_covariance(rng, 4)
        r = drift_rates(C, 0.0, sys)
        assert r[2, 0] == pytest.approx(r[1, 0], abs=1e-14)
        H, k = sys.hamiltonian(), 2
        Cb = np.eye(4) - C
        corr = np.real(Cb @ H @ C)[k, k]
        plus = stochastic_measurement_energy_increment(C, sys, 0, JumpEvent(0.0, k, +1))
        minus = stochastic_measurement_energy_increment(C, sys, 0, JumpEvent(0.0, k, -1))
        assert plus == pytest.approx(-corr / (1 - C[k, k].real), abs=1e-13)
        assert minus == pytest.approx(corr / C[k, k].real, abs=1e-13)

    def test_drift_step(self, rng):
        sys = random_dot(rng)
        C = random_covariance(rng, 3)
        r = drift_rates(C, 0.0, sys)
        assert stochastic_energy_increment(C, sys, 0, dt=0.1) == pytest.approx(0.1 * r[1, 0])
        with pytest.raises(ValueError):
            stochastic_energy_increment(C, sys, 0)

    @given(seeds, st.floats(0, 1), st.floats(0, 1))
    def test_ito_identities(self, seed, lp, lm):
        # drift plus rate-weighted jumps equals the unconditional currents
        rng = np.random.default_rng(seed)
        sys = random_dot(rng, L=3, lam_plus=lp, lam_minus=lm)
        C = random_covariance(rng, 4)
        w = channel_weights(C, sys)
        total = drift_rates(C, 0.0, sys)[:, 0].copy()
        for k in range(1, 4):
            for j, s in enumerate((+1, -1)):
                if w[k, j] > 0:
                    total += w[k, j] * jump_increments(C, 0.0, sys, k, s)
        H, Hi, gam, F = sys.hamiltonian(), sys.h_int(), sys.gamma, sys.F
        IN = np.sum(F - gam * np.diag(C).real)
        IE = np.sum(F * np.diag(H).real - gam * np.diag(H @ C).real)
        IEM = -np.sum(gam * np.diag(Hi @ C).real)
        np.testing.assert_allclose(total, [IN, IE, IEM], atol=1e-13)

    def test_entropy_flux(self):
        res = ReservoirSpec(T=0.5, mu=0.0, L=2, Gamma=0.1, omega_max=1.0)
        sys = single_dot(0.0, res)
        eps = sys.mode_energies
        assert entropy_flux_increment(JumpEvent(0, 2, -1), sys) == pytest.approx(eps[2] / 0.5)
        res = ReservoirSpec(T=0.5, mu=0.5, L=2, Gamma=0.1, omega_max=1.0)
        sys = single_dot(0.0, res)
        assert entropy_flux_increment(JumpEvent(0, 2, -1), sys) == 0.0
        res = ReservoirSpec(T=0.25, mu=0.25, L=2, Gamma=0.1, omega_max=1.0)
        assert entropy_flux_increment(JumpEvent(0, 2, -1), single_dot(0.0, res)) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            entropy_flux_increment(JumpEvent(0, 0, -1), sys)


class TestTrajectories:
    def test_unmonitored_matches_unconditional(self, rng):
        sys = random_dot(rng, L=3, lam_plus=0.0, lam_minus=0.0)
        C0 = random_covariance(rng, 4)
        res = run_trajectory(sys, C0, (0, 5), seed=1)
        assert res.record == []
        assert np.abs(res.C - evolve(C0, (0, 5), sys).final).max() < 1e-10

    def test_deterministic(self, rng):
        sys = random_dot(rng, L=3)
        C0 = np.diag(np.r_[0.5, sys.occupation[1:]])
        a = run_trajectory(sys, C0, (0, 30), seed=5, index=2)
        b = run_trajectory(sys, C0, (0, 30), seed=5, index=2)
        assert a.record == b.record and len(a.record) > 0
        assert np.array_equal(a.C, b.C) and np.array_equal(a.dE, b.dE)

    def test_batch_matches_single(self, rng):
        sys = random_dot(rng, L=3)
        C0 = np.diag(np.r_[0.5, sys.occupation[1:]])
        batch = run_batch(sys, C0, (0, 20), 8, [3, 4, 5], record=True)
        for j, i in enumerate([3, 4, 5]):
            single = run_trajectory(sys, C0, (0, 20), seed=8, index=i)
            assert batch.record(j) == single.record
            assert np.abs(batch.C[j] - single.C).max() < 1e-12

    def test_seed_locked_against_dense(self, rng):
        sys = random_dot(rng, L=2, lam_plus=0.8, lam_minus=0.9)
        C0 = np.diag(np.r_[0.5, sys.occupation[1:]])
        rho0 = gaussian_density(C0)
        span = (0, 5 / sys.gamma[1:].min())
        for i in range(5):
            eng = run_trajectory(sys, C0, span, seed=21, index=i)
            ref = dense_trajectory(sys, rho0, span, 21, i)
            assert [(e.k, e.sigma) for e in eng.record] == [(k, s) for _, k, s in ref.record]
            np.testing.assert_allclose([e.t for e in eng.record], [t for t, _, _ in ref.record], atol=1e-8)
            assert np.abs(eng.C - dense_covariance(ref.rho)).max() < 1e-6
            assert wick_residual(ref.rho) < 1e-8

    def test_heat_identity_and_spectrum(self, steady_dot):
        C0 = np.diag(np.r_[0.5, steady_dot.occupation[1:]])
        res = run_batch(steady_dot, C0, (0, 60), 4, range(40), track_spectrum=True)
        mu = steady_dot.reservoirs[0].mu
        np.testing.assert_allclose(res.heat, res.dE - mu * res.dN, atol=1e-12, rtol=0)
        assert res.spectrum_min.min() > -1e-7 and res.spectrum_max.max() < 1 + 1e-7

    def test_flux_bookkeeping(self, steady_dot):
        C0 = np.diag(np.r_[0.5, steady_dot.occupation[1:]])
        res = run_trajectory(steady_dot, C0, (0, 40), seed=6)
        expected = sum(entropy_flux_increment(e, steady_dot) for e in res.record)
        assert res.entropy_flux[0] == pytest.approx(expected, abs=1e-12)

    def test_energy_balance_between_jumps(self, rng):
        sys = random_dot(rng, L=3)
        C0 = random_covariance(rng, 4)
        t1 = 0.5
        for i in range(200):
            res = run_trajectory(sys, C0, (0, t1), seed=11, index=i, h_max=0.05)
            if not res.record:
                break
        assert not res.record
        H = sys.hamiltonian()
        dE = np.trace(H @ res.C).real - np.trace(H @ C0).real
        assert res.dE[0] == pytest.approx(dE, abs=1e-7)
        dN = np.trace(res.C).real - np.trace(C0).real
        assert res.dN[0] == pytest.approx(dN, abs=1e-7)

    def test_driven_system_runs(self):
        res = ReservoirSpec(T=0.5, mu=0.0, L=3, Gamma=0.4)
        sys = single_dot(lambda t: 0.3 * np.sin(t), res, coupling_scale=lambda t: np.cos(0.3 * t) ** 2)
        C0 = np.diag(np.r_[0.5, sys.occupation[1:]])
        out = run_batch(sys, C0, (0, 10), 1, range(20), breakpoints=[5.0], track_spectrum=True)
        assert out.n_jumps.sum() > 0
        assert out.spectrum_min.min() > -1e-7 and out.spectrum_max.max() < 1 + 1e-7


def test_time_grid():
    g = time_grid(0, 1, 0.3, breakpoints=[0.5])
    assert 0.5 in g and g[0] == 0 and g[-1] == 1
    assert np.diff(g).max() <= 0.3 + 1e-12
    with pytest.raises(ValueError):
        time_grid(1, 1, 0.1)


def test_streams_are_order_independent():
    a = UniformStream(3, 7).random(10)
    b = BatchStreams(3, [5, 7], block=4)
    rows = np.array([1])
    got = np.array([b.uniform(rows)[0] for _ in range(10)])
    np.testing.assert_array_equal(a, got)

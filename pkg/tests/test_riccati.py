import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from mesoleads import ReservoirSpec, single_dot
from mesoleads.riccati import RiccatiFlow
from mesoleads.trajectory import no_jump_rhs, survival_decay_rate

from conftest import random_covariance, random_dot


def reference(sys, C0, t0, t1):
    """Integrate (C, log p) with a tight explicit solver."""
    n = sys.n

    def rhs(t, y):
        C = y[:-1].reshape(n, n)
        return np.r_[no_jump_rhs(C, t, sys).ravel(), -survival_decay_rate(C, sys)]

    y0 = np.r_[np.asarray(C0, dtype=complex).ravel(), 0.0]
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:-1, -1].reshape(n, n), sol.y[-1, -1].real


def driven_dot(rng):
    res = ReservoirSpec(T=0.8, mu=0.1, L=3, Gamma=0.6, omega_max=1.0)
    return single_dot(lambda t: 0.3 * np.sin(0.7 * t), res, lam_plus=rng.uniform(0, 1),
                      lam_minus=rng.uniform(0, 1), coupling_scale=lambda t: 0.5 + 0.5 * np.cos(t))


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.0))
def test_static_propagation(seed, s):
    rng = np.random.default_rng(seed)
    sys = random_dot(rng, L=3, lam_plus=rng.uniform(0, 1), lam_minus=rng.uniform(0, 1))
    C0 = random_covariance(rng, 4)
    flow = RiccatiFlow(sys)
    C, lp = flow.propagate(C0[None], np.array([0.0]), np.array([s]))
    Cref, lpref = reference(sys, C0, 0.0, s)
    assert np.abs(C[0] - Cref).max() < 1e-9
    assert lp[0] == pytest.approx(lpref, abs=1e-9)
    Cf, lf = flow.apply(flow.step_matrix(0.0, s), C0[None], s)
    assert np.abs(Cf[0] - Cref).max() < 1e-9
    assert lf[0] == pytest.approx(lpref, abs=1e-9)


def test_driven_propagation(rng):
    sys = driven_dot(rng)
    flow = RiccatiFlow(sys)
    C0 = random_covariance(rng, 4)
    t, h = 0.3, 0.05
    C, lp = C0[None], 0.0
    for k in range(40):
        C, dl = flow.apply(flow.step_matrix(t + k * h, h), C, h)
        lp += dl[0]
    Cref, lpref = reference(sys, C0, t, t + 40 * h)
    assert np.abs(C[0] - Cref).max() < 1e-8
    assert lp == pytest.approx(lpref, abs=1e-8)
    # arbitrary sub-steps through the Taylor path
    Cs, ls = flow.propagate(C0[None], np.array([t]), np.array([0.37]))
    Cref, lpref = reference(sys, C0, t, t + 0.37)
    assert np.abs(Cs[0] - Cref).max() < 1e-8
    assert ls[0] == pytest.approx(lpref, abs=1e-8)


def test_pair_is_consistent(rng):
    sys = random_dot(rng, L=2)
    flow = RiccatiFlow(sys)
    C0 = random_covariance(rng, 3)[None]
    a, s = np.array([0.0]), np.array([0.8])
    Ch, Cf, lf = flow.propagate_pair(C0, a, s)
    Ch2, _ = flow.propagate(C0, a, 0.5 * s)
    Cf2, lf2 = flow.propagate(C0, a, s)
    np.testing.assert_allclose(Ch, Ch2, atol=1e-12)
    np.testing.assert_allclose(Cf, Cf2, atol=1e-12)
    np.testing.assert_allclose(lf, lf2, atol=1e-12)


def test_rhs_matches_no_jump_rhs(rng):
    sys = driven_dot(rng)
    flow = RiccatiFlow(sys)
    C = np.stack([random_covariance(rng, 4) for _ in range(3)])
    t = np.array([0.1, 0.5, 2.0])
    out = flow.rhs(C, t)
    for i in range(3):
        np.testing.assert_allclose(out[i], no_jump_rhs(C[i], t[i], sys), atol=1e-13)


def test_unmonitored_has_no_survival_decay(rng):
    sys = random_dot(rng, L=2, lam_plus=0.0, lam_minus=0.0)
    flow = RiccatiFlow(sys)
    assert not flow.monitored
    _, lp = flow.propagate(random_covariance(rng, 3)[None], np.zeros(1), np.array([5.0]))
    assert abs(lp[0]) < 1e-12

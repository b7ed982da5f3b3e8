import numpy as np
import pytest
from hypothesis import settings

from mesoleads import ReservoirSpec, assemble, single_dot

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


def random_covariance(rng, n, lo=0.02, hi=0.98):
    """Random Hermitian matrix with spectrum in ``[lo, hi]``."""
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    U, _ = np.linalg.qr(Z)
    lam = rng.uniform(lo, hi, n)
    return (U * lam) @ U.conj().T


def random_dot(rng, L=2, lam_plus=1.0, lam_minus=1.0, T=None):
    res = ReservoirSpec(
        T=rng.uniform(0.5, 2.0) if T is None else T, mu=rng.uniform(-0.3, 0.3), L=L,
        Gamma=rng.uniform(0.2, 1.0), omega_max=1.0,
    )
    return single_dot(rng.uniform(-0.5, 0.5), res, lam_plus=lam_plus, lam_minus=lam_minus)


def two_lead_dot(bias=0.4, L=2):
    left = ReservoirSpec(T=1.0, mu=bias / 2, L=L, Gamma=0.5, omega_max=1.0)
    right = ReservoirSpec(T=1.0, mu=-bias / 2, L=L, Gamma=0.5, omega_max=1.0)
    return assemble(np.array([[0.1]]), [left, right])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def steady_dot():
    res = ReservoirSpec(T=1.0, mu=0.0625, L=10, Gamma=0.125, omega_max=1.0)
    return single_dot(0.25, res)

import numpy as np
import pytest


def multiplicative_fd_samples(n=2000, noise=0.3, seed=0,
                              rho_range=(0.02, 0.13), omega_range=(0.8, 1.2)):
    """Heterogeneous speed samples v = omega * 40 * (1 - rho / 0.2) + noise.

    The density range keeps speeds comfortably positive so that relative
    error metrics stay well conditioned.
    """
    rng = np.random.default_rng(seed)
    rho = rng.uniform(*rho_range, size=n)
    omega = rng.uniform(*omega_range, size=n)
    v = omega * 40.0 * (1.0 - rho / 0.2) + rng.normal(0.0, noise, size=n)
    return np.column_stack([rho, omega, v])


def greenshields_samples(n=600, seed=1, rho_range=(0.005, 0.13)):
    """Noiseless one-variable speed samples from V = 40 (1 - rho / 0.2)."""
    rng = np.random.default_rng(seed)
    rho = rng.uniform(*rho_range, size=n)
    v = 40.0 * (1.0 - rho / 0.2)
    return np.column_stack([rho, v])


@pytest.fixture(scope="session")
def fd_two_var_samples():
    return multiplicative_fd_samples()


@pytest.fixture(scope="session")
def fd_one_var_samples():
    return greenshields_samples()

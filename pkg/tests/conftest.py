import numpy as np
import pytest

from nsexpand.bilinear import growth_sweep
from nsexpand.dynamics import GalerkinConfig, integrate
from nsexpand.expansion import extract_expansion
from nsexpand.field import abc_flow, norms, random_field, single_mode

CUTOFF = 8
LONG = GalerkinConfig(cutoff=CUTOFF, dt=1e-3, t_end=16.0, snapshot_stride=10)
GENERIC_SEED = 3
GENERIC_AMPLITUDE = 0.13


def generic_initial(seed=GENERIC_SEED, amplitude=GENERIC_AMPLITUDE, cutoff=CUTOFF):
    u = random_field(cutoff, np.random.default_rng(seed), 1.0)
    return u * (amplitude / float(norms(u.coeffs, u.modes)))


@pytest.fixture(scope="session")
def generic_run():
    traj = integrate(generic_initial(), LONG)
    return traj, extract_expansion(traj, 3, sigma_extract=0.25)


@pytest.fixture(scope="session")
def beltrami_run():
    traj = integrate(abc_flow(CUTOFF, 0.3, 0.2, 0.1), LONG)
    return traj, extract_expansion(traj, 3, sigma_extract=0.25)


@pytest.fixture(scope="session")
def shell2_run():
    traj = integrate(single_mode(CUTOFF, (1, 1, 0), 0.1), LONG)
    return traj, extract_expansion(traj, 3, sigma_extract=0.25)


@pytest.fixture(scope="session")
def k_emp():
    k, _ = growth_sweep(0.0, 1000, 0, CUTOFF)
    return k

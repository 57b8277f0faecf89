import math

import numpy as np
import pytest

from nsexpand.dynamics import (
    BlowUpError,
    GalerkinConfig,
    Trajectory,
    energy_residual,
    integrate,
    load_trajectory,
    save_trajectory,
)
from nsexpand.field import abc_flow, gevrey_norm, random_field, single_mode


def exact_decay_error(u0, lam, t_end=5.0, dt=1e-3, cutoff=8):
    traj = integrate(u0, GalerkinConfig(cutoff, dt, t_end, snapshot_stride=500))
    expected = math.exp(-lam * t_end) * u0.coeffs
    return np.linalg.norm(traj.coeffs[-1] - expected) / np.linalg.norm(expected)


def test_exact_single_mode_decay():
    assert exact_decay_error(single_mode(8, (0, 0, 1), 0.5), 1) <= 1e-10
    assert exact_decay_error(single_mode(8, (1, 1, 0), 0.5), 2) <= 1e-10


def test_exact_beltrami_decay():
    assert exact_decay_error(abc_flow(8, 1.0, 0.7, 0.3), 1) <= 1e-10


def test_config_validation():
    with pytest.raises(ValueError):
        GalerkinConfig(0, 0.1, 1.0)
    with pytest.raises(ValueError):
        GalerkinConfig(4, -0.1, 1.0)
    with pytest.raises(ValueError):
        GalerkinConfig(4, 0.1, 1.0, snapshot_stride=0)
    with pytest.raises(ValueError):
        GalerkinConfig(4, 0.3, 1.0).steps


def test_snapshot_grid_and_lookup():
    traj = integrate(random_field(4, np.random.default_rng(0)), GalerkinConfig(4, 0.01, 1.0, snapshot_stride=5))
    assert len(traj) == 21
    assert np.allclose(traj.times, np.arange(21) * 0.05)
    assert traj.index_of(0.35) == 7
    with pytest.raises(KeyError):
        traj.at(0.33)
    sub = traj.subsample(2)
    assert len(sub) == 11 and np.array_equal(sub.coeffs[3], traj.coeffs[6])


def test_cutoff_mismatch_rejected():
    with pytest.raises(ValueError):
        integrate(random_field(4, np.random.default_rng(0)), GalerkinConfig(5, 0.01, 0.1))


def test_blow_up_detected():
    u0 = random_field(8, np.random.default_rng(0), 0.0) * 1e4
    with pytest.raises(BlowUpError):
        integrate(u0, GalerkinConfig(8, 0.5, 50.0))


def _generic(scale=2.0):
    u = random_field(8, np.random.default_rng(4))
    return u * (scale / gevrey_norm(u))


def test_energy_residual_small_at_production_step():
    traj = integrate(_generic(0.13), GalerkinConfig(8, 1e-3, 2.0, snapshot_stride=10))
    assert np.max(energy_residual(traj)) <= 1e-6


def test_energy_residual_fourth_order():
    u0 = _generic(2.0)
    res = [np.max(energy_residual(integrate(u0, GalerkinConfig(8, dt, 1.0)))) for dt in (0.02, 0.01, 0.005)]
    orders = [math.log2(res[i] / res[i + 1]) for i in range(2)]
    assert min(orders) >= 3.5, orders


def test_energy_decreases():
    traj = integrate(_generic(1.0), GalerkinConfig(8, 1e-2, 2.0))
    e = np.linalg.norm(traj.coeffs.reshape(len(traj), -1), axis=1)
    assert np.all(np.diff(e) < 0)


def test_save_load_round_trip(tmp_path):
    traj = integrate(_generic(0.5), GalerkinConfig(8, 0.01, 0.2, snapshot_stride=2))
    save_trajectory(traj, tmp_path / "t")
    back = load_trajectory(tmp_path / "t")
    assert back.config == traj.config
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.coeffs, traj.coeffs)


def test_trajectory_rejects_unordered_times():
    cfg = GalerkinConfig(2, 0.1, 0.2)
    c = np.zeros((2, 9, 3))
    with pytest.raises(ValueError):
        Trajectory(cfg, [0.1, 0.0], c)

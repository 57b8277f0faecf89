import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsexpand.field import (
    VOLUME,
    GevreyParams,
    SpectralField,
    abc_flow,
    apply_smoothing,
    gevrey_norm,
    inner_product,
    leray_project,
    low_pass,
    norms,
    random_field,
    read_snapshot,
    retruncate,
    shell_project,
    single_mode,
    smoothing_bound,
    snapshot_bytes,
    snapshot_from_bytes,
    stokes,
    write_snapshot,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def on_grid(u, n=9):
    """Real-space samples of u on an n^3 grid by direct summation."""
    x = 2 * np.pi * np.arange(n) / n
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    kf, uf = u.full_modes()
    return pts, (np.exp(1j * pts @ kf.T) @ uf).real


def test_single_mode_is_cosine_wave():
    u = single_mode(4, (1, 1, 0), 0.7)
    pts, vals = on_grid(u)
    d = u.coefficient((1, 1, 0)).real / 0.35
    expected = 0.7 * np.cos(pts @ np.array([1.0, 1.0, 0.0]))[:, None] * d
    assert np.allclose(vals, expected, atol=1e-13)
    assert np.isclose(np.linalg.norm(d), 1.0)


def test_abc_flow_matches_formula_and_is_beltrami():
    a, b, c = 0.3, 0.2, 0.1
    u = abc_flow(3, a, b, c)
    pts, vals = on_grid(u)
    x, y, z = pts.T
    expected = np.stack([a * np.sin(z) + c * np.cos(y), b * np.sin(x) + a * np.cos(z), c * np.sin(y) + b * np.cos(x)], axis=1)
    assert np.allclose(vals, expected, atol=1e-14)
    curl = 1j * np.cross(u.modes.k, u.coeffs)
    assert np.allclose(curl, u.coeffs, atol=1e-15)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_leray_projection_idempotent_and_divergence_free(seed):
    rng = np.random.default_rng(seed)
    raw = SpectralField(5, rng.standard_normal((mode_count(5), 3)) + 1j * rng.standard_normal((mode_count(5), 3)))
    p = leray_project(raw)
    assert p.divergence_free()
    assert np.allclose(leray_project(p).coeffs, p.coeffs, atol=1e-15)


def mode_count(cutoff):
    return SpectralField.zeros(cutoff).modes.size


@given(seeds)
@settings(max_examples=15, deadline=None)
def test_norm_matches_grid_quadrature(seed):
    u = random_field(3, np.random.default_rng(seed), 0.5)
    pts, vals = on_grid(u, n=7)
    l2 = math.sqrt(VOLUME * np.mean(np.sum(vals**2, axis=1)))
    assert math.isclose(gevrey_norm(u), l2, rel_tol=1e-12)
    assert math.isclose(inner_product(u, u), l2**2, rel_tol=1e-12)


@given(seeds, st.floats(0, 3), st.floats(0, 1))
@settings(max_examples=30, deadline=None)
def test_norm_monotone_in_parameters(seed, alpha, sigma):
    u = random_field(6, np.random.default_rng(seed))
    base = gevrey_norm(u, GevreyParams(alpha, sigma))
    assert gevrey_norm(u, GevreyParams(alpha + 0.5, sigma)) >= base
    assert gevrey_norm(u, GevreyParams(alpha, sigma + 0.1)) >= base


@given(seeds, st.floats(0, 4))
@settings(max_examples=30, deadline=None)
def test_smoothing_operator_bound(seed, alpha):
    u = random_field(16, np.random.default_rng(seed), 0.0)
    assert gevrey_norm(apply_smoothing(u, alpha)) <= smoothing_bound(alpha) * gevrey_norm(u) * (1 + 1e-12)


def test_smoothing_bound_values():
    assert math.isclose(smoothing_bound(1.0), (2 / math.e) ** 2)
    assert abs(smoothing_bound(1.0) - 0.5413) < 1e-4
    assert smoothing_bound(0.0) == 1.0


def test_shell_projections_partition():
    u = random_field(8, np.random.default_rng(1))
    total = sum((shell_project(u, n) for n in u.modes.shells), SpectralField.zeros(8))
    assert np.array_equal(total.coeffs, u.coeffs)
    assert shell_project(u, 7).is_zero()
    assert low_pass(u, 3).support() == [1, 2, 3]
    assert np.allclose(stokes(shell_project(u, 5)).coeffs, 5 * shell_project(u, 5).coeffs)


def test_retruncate_round_trip():
    u = random_field(5, np.random.default_rng(2))
    assert np.array_equal(retruncate(retruncate(u, 9), 5).coeffs, u.coeffs)
    assert retruncate(u, 2).support() == [1, 2]


def test_from_modes_rejects_inconsistent_pairs():
    with pytest.raises(ValueError):
        SpectralField.from_modes(2, {(1, 0, 0): (0, 1, 0), (-1, 0, 0): (0, 2, 0)})
    with pytest.raises(ValueError):
        SpectralField.from_modes(2, {(1, 0, 0): (1, 0, 0)}, solenoidal=True)
    with pytest.raises(ValueError):
        SpectralField.from_modes(2, {(0, 0, 0): (1, 0, 0)})


def test_arithmetic_checks_truncation_and_immutability():
    u = random_field(3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        u + random_field(4, np.random.default_rng(0))
    with pytest.raises(TypeError):
        u * 1j
    with pytest.raises(AttributeError):
        u.coeffs = None
    with pytest.raises(ValueError):
        u.coeffs[0, 0] = 1.0


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_snapshot_round_trip_is_exact(seed):
    u = random_field(6, np.random.default_rng(seed))
    data = snapshot_bytes(u)
    back = snapshot_from_bytes(data)
    assert np.array_equal(back.coeffs, u.coeffs)
    assert snapshot_bytes(back) == data


def test_snapshot_file_and_corruption(tmp_path):
    u = abc_flow(4)
    write_snapshot(tmp_path / "u.bin", u)
    assert np.array_equal(read_snapshot(tmp_path / "u.bin").coeffs, u.coeffs)
    data = bytearray(snapshot_bytes(u))
    with pytest.raises(ValueError):
        snapshot_from_bytes(b"XXXX" + bytes(data[4:]))
    with pytest.raises(ValueError):
        snapshot_from_bytes(bytes(data[:-8]))


def test_norm_stack_matches_single():
    rng = np.random.default_rng(5)
    fields = [random_field(6, rng) for _ in range(4)]
    stack = np.stack([f.coeffs for f in fields])
    out = norms(stack, fields[0].modes, 1.0, 0.3)
    assert np.allclose(out, [gevrey_norm(f, GevreyParams(1.0, 0.3)) for f in fields], rtol=1e-14)

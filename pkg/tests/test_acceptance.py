"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math
from pathlib import Path

import numpy as np
import pytest

from nsexpand.analysis import fit_decay_rate, verify_improved_decay, verify_small_data_decay
from nsexpand.bilinear import bilinear, bilinear_oracle
from nsexpand.dynamics import GalerkinConfig, energy_residual, integrate
from nsexpand.expansion import ode_residual, perturb_coefficient, remainder_series
from nsexpand.field import (
    GevreyParams,
    abc_flow,
    gevrey_norm,
    inner_product,
    norms,
    random_field,
    single_mode,
)
from nsexpand.lattice import enumerate_shell, is_sum_of_three_squares, stokes_spectrum
from nsexpand.pipeline import load_config, run_pipeline

from conftest import generic_initial

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def record(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def stack_norm(c, ms):
    return float(np.sqrt(np.sum(norms(c, ms) ** 2)))


def remainder_rates(traj, state, alpha, sigma, depth=2):
    p = GevreyParams(alpha, sigma)
    reference = float(np.max(remainder_series(traj, state, p, 0)))
    return [
        fit_decay_rate(traj.times, remainder_series(traj, state, p, n), reference=reference).rate
        for n in range(1, depth + 1)
    ]


def test_criterion_01_exact_solution_fidelity(record):
    cases = {
        "shell 1": (single_mode(8, (0, 0, 1), 0.5), 1),
        "shell 2": (single_mode(8, (1, 1, 0), 0.5), 2),
        "ABC": (abc_flow(8, 1.0, 0.7, 0.3), 1),
    }
    errors = {}
    for name, (u0, lam) in cases.items():
        traj = integrate(u0, GalerkinConfig(8, 1e-3, 5.0, snapshot_stride=5000))
        expected = math.exp(-5.0 * lam) * u0.coeffs
        errors[name] = np.linalg.norm(traj.coeffs[-1] - expected) / np.linalg.norm(expected)
    worst = max(errors.values())
    record(1, worst <= 1e-10, f"max relative error at t=5 is {worst:.2e} (<= 1e-10)")


def test_criterion_02_bilinear_oracle_equivalence(record):
    rng = np.random.default_rng(2024)
    worst_diff = worst_orth = 0.0
    for _ in range(100):
        u, v = random_field(6, rng), random_field(6, rng)
        b = bilinear(u, v)
        diff = np.linalg.norm(b.coeffs - bilinear_oracle(u, v).coeffs) / np.linalg.norm(b.coeffs)
        worst_diff = max(worst_diff, diff)
        enstrophy = gevrey_norm(u, GevreyParams(0.5, 0.0)) ** 2
        worst_orth = max(worst_orth, abs(inner_product(bilinear(u, u), u)) / (gevrey_norm(u) * enstrophy))
    ok = worst_diff <= 1e-12 and worst_orth <= 1e-12
    record(2, ok, f"oracle difference {worst_diff:.2e}, orthogonality {worst_orth:.2e} (both <= 1e-12)")


def test_criterion_03_expansion_exactness(record, beltrami_run, shell2_run):
    traj, state = beltrami_run
    ms, u0 = traj.modes, traj.coeffs[0]
    n0 = stack_norm(u0, ms)
    b_q1 = stack_norm(state.terms[0].q.stack - u0[None], ms) / n0
    b_q2 = stack_norm(state.terms[1].q.stack, ms) / n0**2
    traj, state = shell2_run
    u0 = traj.coeffs[0]
    n0 = stack_norm(u0, ms)
    s_q1 = stack_norm(state.terms[0].q.stack, ms) / n0
    s_q2 = stack_norm(state.terms[1].q.stack - u0[None], ms) / n0
    ok = b_q1 <= 1e-8 and b_q2 <= 1e-6 and s_q1 <= 1e-8 and s_q2 <= 1e-6
    record(
        3,
        ok,
        f"Beltrami |q1-u0|/|u0|={b_q1:.1e}, |q2|/|u0|^2={b_q2:.1e}; "
        f"shell 2 |q1|/|u0|={s_q1:.1e}, |q2-u0|/|u0|={s_q2:.1e}",
    )


def test_criterion_04_remainder_order(record, generic_run, k_emp):
    traj, state = generic_run
    a0 = gevrey_norm(traj.initial, GevreyParams(0.5, 0.0))
    hypothesis = a0 < 0.5 / (2 * k_emp**0.5)
    rates = {(a, s): remainder_rates(traj, state, a, s) for a, s in [(0.0, 0.25), (1.0, 0.1)]}
    ok = hypothesis and all(r1 >= 1.4 and r2 >= 2.4 for r1, r2 in rates.values())
    detail = ", ".join(f"(a,s)={k}: v1 {r[0]:.4f}, v2 {r[1]:.4f}" for k, r in rates.items())
    record(4, ok, f"{detail}; |A^1/2 u0|={a0:.3f} vs threshold {0.25 / k_emp**0.5:.3f} (K_emp={k_emp:.3g})")


def test_criterion_05_hierarchy_residual(record, generic_run, beltrami_run, shell2_run):
    rng = np.random.default_rng(5)
    worst = 0.0
    weakest = math.inf
    for traj, state in (generic_run, beltrami_run, shell2_run):
        for n in (1, 2, 3):
            worst = max(worst, ode_residual(state, n, traj.times))
            q = state.terms[n - 1].q
            if np.max(np.abs(q.stack)) < 1e-20:
                continue  # nothing to perturb: 1% of a vanishing polynomial is zero
            for degree in range(q.degree + 1):
                bumped = perturb_coefficient(state, n, degree, 0.01, rng)
                weakest = min(weakest, ode_residual(bumped, n, traj.times))
    ok = worst <= 1e-8 and weakest >= 1e-3
    record(5, ok, f"max residual {worst:.1e} (<= 1e-8); min perturbed residual {weakest:.1e} (>= 1e-3)")


def test_criterion_06_decay_bounds(record, k_emp):
    cfg = GalerkinConfig(8, 1e-3, 6.0, snapshot_stride=10)
    small_ok = improved_ok = 0
    worst = -math.inf
    for seed in range(100, 120):
        u = random_field(8, np.random.default_rng(seed))
        a_half = gevrey_norm(u, GevreyParams(0.5, 0.0))
        a_one = gevrey_norm(u, GevreyParams(1.0, 0.0))
        scale = 0.9 * min(0.5 / (2 * k_emp**0.5) / a_half, 1 / (12 * k_emp) / a_one)
        traj = integrate(u * scale, cfg)
        small = verify_small_data_decay(traj, 0.5, 0.25, 0.5, k_emp)
        improved = verify_improved_decay(traj, 0.5, 0.1, k_emp)
        small_ok += small.status == "pass"
        improved_ok += improved.status == "pass"
        worst = max(worst, small.max_relative_violation, improved.max_relative_violation)
    ok = small_ok == 20 and improved_ok == 20
    record(6, ok, f"small-data bound {small_ok}/20, improved bound {improved_ok}/20, worst relative margin {worst:.3f}")


def test_criterion_07_energy_law(record, generic_run, beltrami_run, shell2_run):
    worst = max(float(np.max(energy_residual(traj))) for traj, _ in (generic_run, beltrami_run, shell2_run))
    u0 = generic_initial(amplitude=2.0)
    res = [float(np.max(energy_residual(integrate(u0, GalerkinConfig(8, dt, 1.0))))) for dt in (0.02, 0.01, 0.005)]
    orders = [math.log2(res[i] / res[i + 1]) for i in range(2)]
    ok = worst <= 1e-6 and min(orders) >= 3.5
    record(7, ok, f"max residual at dt=1e-3 {worst:.1e} (<= 1e-6); observed orders {orders[0]:.2f}, {orders[1]:.2f}")


def test_criterion_08_spectrum_structure(record):
    spectrum = stokes_spectrum(16)
    expected = [1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 16]
    oracle = [n for n in range(1, 17) if is_sum_of_three_squares(n)]
    ok = spectrum == expected == oracle and enumerate_shell(7).empty
    record(8, ok, f"spectrum {spectrum}; shell 7 empty: {enumerate_shell(7).empty}")


def test_criterion_09_sigma_robustness(record, generic_run):
    traj, state = generic_run
    assert state.sigma_extract == 0.25
    rates = {(a, s): remainder_rates(traj, state, a, s) for a in (0.0, 1.0) for s in (0.1, 0.5)}
    ok = all(r1 >= 1.4 and r2 >= 2.4 for r1, r2 in rates.values())
    detail = ", ".join(f"{k}: {r[0]:.3f}/{r[1]:.3f}" for k, r in rates.items())
    record(9, ok, f"v1/v2 rates {detail}")


def test_criterion_10_determinism(record, tmp_path):
    cfg = load_config(ROOT / "configs" / "random_small.json").with_overrides(out=str(tmp_path / "run"))
    out = Path(cfg.output_dir)

    def snapshot():
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    run_pipeline(cfg)
    first = snapshot()
    run_pipeline(cfg)
    second = snapshot()
    ok = first == second and Path("report.json") in first
    record(10, ok, f"{len(first)} artifacts compared byte for byte across two executions")

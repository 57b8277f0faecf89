"""Decay-rate fitting and checks of the small-data Gevrey decay bounds."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import Trajectory
from .field import norms, smoothing_bound

FLOOR_REL = 1e-13
BOUND_SLACK = 1e-12
MIN_FIT_SAMPLES = 10


class DecayFitError(ValueError):
    """The series cannot support a log-linear fit in the requested window."""


class BelowFloorError(DecayFitError):
    """Too few samples in the window rise above the rounding floor."""


@dataclass(frozen=True)
class DecayFit:
    rate: float
    amplitude: float
    window: tuple[float, float]
    residual: float
    samples: int

    def as_record(self) -> dict:
        return asdict(self)


def fit_decay_rate(
    times,
    values,
    window: tuple[float, float] | None = None,
    floor_rel: float = FLOOR_REL,
    reference: float | None = None,
    min_samples: int = MIN_FIT_SAMPLES,
) -> DecayFit:
    """Least-squares line through (t, log value); rate = -slope.

    The default window is the last half of the time range. Samples at or
    below ``floor_rel * reference`` (reference defaults to the series max)
    are dropped before fitting.
    """
    t = np.asarray(times, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be matching 1-d arrays")
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"empty fit window {window}")
    inside = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.any(~np.isfinite(y[inside])) or np.any(y[inside] < 0):
        raise DecayFitError("series has non-finite or negative values in the fit window")
    ref = float(np.max(y)) if reference is None else float(reference)
    keep = inside & (y > floor_rel * ref)
    if np.count_nonzero(keep) < min_samples:
        raise BelowFloorError(
            f"only {np.count_nonzero(keep)} samples above the floor {floor_rel * ref:.3g} in window {window}"
        )
    tk, logy = t[keep], np.log(y[keep])
    slope, intercept = np.polyfit(tk, logy, 1)
    resid = logy - (slope * tk + intercept)
    return DecayFit(
        rate=float(-slope),
        amplitude=float(math.exp(intercept)),
        window=(float(tk[0]), float(tk[-1])),
        residual=float(np.sqrt(np.mean(resid**2))),
        samples=int(tk.size),
    )


@dataclass(frozen=True)
class LemmaReport:
    lemma: str
    hypothesis: dict
    hypothesis_ok: bool
    checked_samples: int
    check_window: tuple[float, float] | None
    max_violation: float | None
    max_relative_violation: float | None
    tolerance: float
    passed: bool
    notes: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if not self.hypothesis_ok:
            return "hypothesis_failed"
        if self.checked_samples == 0:
            return "unverifiable"
        return "pass" if self.passed else "fail"

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["status"] = self.status
        return rec


def _norm_series(traj: Trajectory, alpha: float, sigma: float) -> np.ndarray:
    return norms(traj.coeffs, traj.modes, alpha, sigma)


def _bound_check(
    lemma: str,
    traj: Trajectory,
    t_start: float,
    checks,
    hypothesis: dict,
    hypothesis_ok: bool,
    tolerance: float,
    notes: dict | None = None,
) -> LemmaReport:
    """``checks`` is a list of (lhs_series, rhs_series); the bound is lhs <= rhs."""
    sel = traj.times >= t_start - 1e-12
    n = int(np.count_nonzero(sel))
    if n == 0:
        return LemmaReport(lemma, hypothesis, hypothesis_ok, 0, None, None, None, tolerance, False, notes or {})
    worst = -math.inf
    worst_rel = -math.inf
    for lhs, rhs in checks:
        slack_rhs = rhs[sel] * (1.0 + BOUND_SLACK)
        viol = lhs[sel] - slack_rhs
        worst = max(worst, float(np.max(viol)))
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(slack_rhs > 0, viol / slack_rhs, np.inf)
        worst_rel = max(worst_rel, float(np.max(rel)))
    window = (float(traj.times[sel][0]), float(traj.times[sel][-1]))
    return LemmaReport(
        lemma=lemma,
        hypothesis=hypothesis,
        hypothesis_ok=hypothesis_ok,
        checked_samples=n,
        check_window=window,
        max_violation=worst,
        max_relative_violation=worst_rel,
        tolerance=tolerance,
        passed=worst <= tolerance,
        notes=notes or {},
    )


def verify_small_data_decay(
    traj: Trajectory, alpha: float, sigma: float, delta: float, K_emp: float, tolerance: float = 0.0
) -> LemmaReport:
    """|u(t)|_{alpha,sigma} <= exp(-(1-delta) t) |A^alpha u0| for t >= 4 sigma / delta."""
    if alpha < 0.5:
        raise ValueError("small-data decay needs alpha >= 1/2")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    u0 = traj.coeffs[0]
    a0 = float(norms(u0, traj.modes, alpha, 0.0))
    threshold = delta / (2.0 * K_emp**alpha)
    hyp = {
        "alpha": alpha,
        "sigma": sigma,
        "delta": delta,
        "K_emp": K_emp,
        "A_alpha_u0": a0,
        "threshold": threshold,
    }
    lhs = _norm_series(traj, alpha, sigma)
    rhs = np.exp(-(1.0 - delta) * traj.times) * a0
    return _bound_check("small_data_decay", traj, 4.0 * sigma / delta, [(lhs, rhs)], hyp, a0 < threshold, tolerance)


def verify_improved_decay(
    traj: Trajectory, alpha: float, sigma: float, K_emp: float, tolerance: float = 0.0
) -> LemmaReport:
    """|u(t)|_{alpha,sigma} <= sqrt(2) e^(4 sigma) |A^(alpha+1/2) u0| e^(-t) for t >= 24 sigma."""
    if alpha < 0.5:
        raise ValueError("improved decay needs alpha >= 1/2")
    u0 = traj.coeffs[0]
    a0 = float(norms(u0, traj.modes, alpha + 0.5, 0.0))
    threshold = 1.0 / (12.0 * K_emp ** (alpha + 0.5))
    hyp = {"alpha": alpha, "sigma": sigma, "K_emp": K_emp, "A_alpha_half_u0": a0, "threshold": threshold}
    lhs = _norm_series(traj, alpha, sigma)
    rhs = math.sqrt(2.0) * math.exp(4.0 * sigma) * a0 * np.exp(-traj.times)
    return _bound_check("improved_decay", traj, 24.0 * sigma, [(lhs, rhs)], hyp, a0 < threshold, tolerance)


def weak_decay_constants(sigma: float, alpha: float, u0_norm: float, K_emp: float) -> dict:
    """Entry time T and prefactors D_sigma, D_{alpha,sigma} with C_1 = K_emp."""
    c1 = K_emp
    arg = 12.0 * c1 * u0_norm
    log_part = max(0.0, math.log(arg)) if arg > 0 else 0.0
    d_sigma = math.sqrt(2.0) * math.exp(4.0 * sigma + 14.0) * max(u0_norm, 1.0 / (12.0 * c1))
    return {
        "T": 24.0 * sigma + 34.0 + log_part,
        "D_sigma": d_sigma,
        "D_alpha_sigma": smoothing_bound(alpha) * d_sigma,
    }


def verify_weak_decay_constants(
    traj: Trajectory, sigma: float, alpha: float, K_emp: float, tolerance: float = 0.0
) -> LemmaReport:
    """|u|_{1/2,sigma+1} <= D_sigma e^-t and |u|_{alpha+1/2,sigma} <= D_{alpha,sigma} e^-t for t >= T."""
    if alpha < 0 or sigma < 0:
        raise ValueError("alpha and sigma must be nonnegative")
    u0_norm = float(norms(traj.coeffs[0], traj.modes, 0.0, 0.0))
    consts = weak_decay_constants(sigma, alpha, u0_norm, K_emp)
    hyp = {"alpha": alpha, "sigma": sigma, "K_emp": K_emp, "u0_norm": u0_norm, **consts}
    decay = np.exp(-traj.times)
    checks = [
        (_norm_series(traj, 0.5, sigma + 1.0), consts["D_sigma"] * decay),
        (_norm_series(traj, alpha + 0.5, sigma), consts["D_alpha_sigma"] * decay),
    ]
    notes = {}
    if traj.times[-1] < consts["T"]:
        notes["required_horizon"] = consts["T"]
    return _bound_check("weak_decay_constants", traj, consts["T"], checks, hyp, True, tolerance, notes)

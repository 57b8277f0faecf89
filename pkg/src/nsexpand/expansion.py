"""Term-by-term extraction of u(t) ~ sum_n exp(-n t) q_n(t) from a trajectory.

Each q_n is a polynomial in t with field coefficients. Off the resonant
shell k = n it solves p' + (k - n) p = rhs_k uniquely; on the resonant shell
its constant term xi_n comes from the trajectory through
    xi_n = e^{n t0} R_n v(t0) - P(t0) + int_{t0}^inf e^{n s} R_n h(s) ds,
where v = u - sum_{m<n} u_m, P is the antiderivative of R_n rhs with P(0) = 0
and h is the forcing left over once the first n - 1 levels are removed.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .analysis import DecayFitError, fit_decay_rate
from .bilinear import convolve_batched
from .dynamics import Trajectory, load_trajectory
from .field import GevreyParams, SpectralField, norms, random_field, read_snapshot, write_snapshot
from .polyalg import (
    ExpansionTerm,
    FieldPolynomial,
    TailFit,
    bilinear_poly,
    eval_term_many,
    load_polynomial,
    save_polynomial,
    solve_poly_ode,
)

EXPANSION_MANIFEST = "expansion.json"
EXPANSION_FORMAT = "nsexpand-expansion/1"
SUMMARY_NAME = "summary.txt"
DEFAULT_SIGMA_EXTRACT = 0.25
TAIL_FRACTION = 0.25
NEGLIGIBLE_TAIL = 1e-9
NEGLIGIBLE_ABS = 1e-12
NOISE_FLOOR = 1e-6


class TailFitError(RuntimeError):
    """The resonant integrand does not decay on the stored horizon."""


@dataclass(frozen=True, eq=False)
class ExpansionState:
    source: Trajectory
    terms: tuple[ExpansionTerm, ...] = ()
    sigma_extract: float = DEFAULT_SIGMA_EXTRACT
    supports: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        for i, term in enumerate(self.terms):
            if term.n != i + 1:
                raise ValueError(f"terms must be q_1, q_2, ... in order; position {i} holds n = {term.n}")
            if term.q.cutoff != self.source.config.cutoff:
                raise ValueError("term truncation disagrees with the source trajectory")
        if len(self.supports) != len(self.terms):
            raise ValueError("one support bound per term is required")

    @property
    def depth(self) -> int:
        return len(self.terms)

    @property
    def tail_model(self) -> tuple[TailFit | None, ...]:
        return tuple(t.tail for t in self.terms)

    def appended(self, term: ExpansionTerm, support: int) -> "ExpansionState":
        return ExpansionState(self.source, self.terms + (term,), self.sigma_extract, self.supports + (support,))

    def truncated(self, depth: int) -> "ExpansionState":
        return ExpansionState(self.source, self.terms[:depth], self.sigma_extract, self.supports[:depth])


def support_bound(state: ExpansionState, n: int) -> int:
    """Largest shell that products of the earlier supports can reach, capped at the cutoff."""
    cutoff = state.source.config.cutoff
    reach = n
    for m in range(1, n):
        j = n - m
        if m <= state.depth and j <= state.depth:
            sm, sj = state.supports[m - 1], state.supports[j - 1]
            reach = max(reach, math.floor((math.sqrt(sm) + math.sqrt(sj)) ** 2 + 1e-9))
    return min(cutoff, reach)


def partial_sum(state: ExpansionState, depth: int | None = None) -> np.ndarray:
    """sum_{n <= depth} exp(-n t) q_n(t) at every stored sample, shape (S, M, 3)."""
    traj = state.source
    depth = state.depth if depth is None else depth
    acc = np.zeros_like(traj.coeffs)
    for term in state.terms[:depth]:
        acc += eval_term_many(term, traj.times)
    return acc


def _hN_stack(state: ExpansionState) -> np.ndarray:
    traj = state.source
    ms = traj.modes
    n_terms = state.depth
    u = traj.coeffs
    levels = [eval_term_many(t, traj.times) for t in state.terms]
    ubar = np.sum(levels, axis=0) if levels else np.zeros_like(u)
    v = u - ubar
    h = -convolve_batched(v, u, ms)
    if n_terms:
        h -= convolve_batched(ubar, v, ms)
    for m in range(1, n_terms + 1):
        for j in range(1, n_terms + 1):
            if m + j >= n_terms + 2:
                h -= convolve_batched(levels[m - 1], levels[j - 1], ms)
    return h


def hN_series(state: ExpansionState) -> np.ndarray:
    """h_N at every stored sample for N = state.depth, shape (S, M, 3)."""
    return _hN_stack(state)


def compute_hN(traj: Trajectory, state: ExpansionState, t: float) -> SpectralField:
    if state.source is not traj:
        state = ExpansionState(traj, state.terms, state.sigma_extract, state.supports)
    i = traj.index_of(t)
    single = Trajectory(traj.config, traj.times[i : i + 1], traj.coeffs[i : i + 1])
    h = _hN_stack(ExpansionState(single, state.terms, state.sigma_extract, state.supports))
    return SpectralField(traj.modes, h[0], solenoidal=True)


def _resonant_integral(
    times: np.ndarray, g: np.ndarray, ms_rows, sigma: float, scale: float
) -> tuple[np.ndarray, TailFit | None]:
    """Simpson over the samples plus an exponential tail fitted on the last quarter.

    No tail is added when the last quarter is negligible (below NEGLIGIBLE_TAIL
    of the integrand's peak, or below NEGLIGIBLE_ABS of ``scale``), or when it
    has flattened onto a rounding floor at least NOISE_FLOOR below the peak.
    """
    body = simpson(g, x=times, axis=0)
    gnorm = norms(g, ms_rows, 0.0, sigma)
    t_end = times[-1]
    lo = times[0] + (1.0 - TAIL_FRACTION) * (t_end - times[0])
    peak = float(np.max(gnorm))
    last = float(np.max(gnorm[times >= lo - 1e-12]))
    if last <= NEGLIGIBLE_TAIL * peak or last <= NEGLIGIBLE_ABS * scale:
        return body, None
    try:
        fit = fit_decay_rate(times, gnorm, window=(lo, t_end))
    except DecayFitError as exc:
        raise TailFitError(f"resonant integrand tail could not be fitted: {exc}") from exc
    if fit.rate > 0:
        return body + g[-1] / fit.rate, TailFit(fit.amplitude, fit.rate, fit.window)
    if last <= NOISE_FLOOR * peak:
        return body, None
    raise TailFitError(f"resonant integrand does not decay on [{lo:.4g}, {t_end:.4g}] (rate {fit.rate:.3g})")


class _Rows:
    """Minimal stand-in for a ModeSet restricted to some rows, for norm evaluation."""

    def __init__(self, ms, mask):
        self.k2 = ms.k2[mask]
        self.kabs = ms.kabs[mask]


def extract_next_term(traj: Trajectory, state: ExpansionState) -> ExpansionTerm:
    if state.source is not traj:
        raise ValueError("state was built from a different trajectory")
    ms = traj.modes
    n = state.depth + 1
    s_n = support_bound(state, n)

    rhs = FieldPolynomial.zero(ms.cutoff)
    for m in range(1, n):
        rhs = rhs - bilinear_poly(state.terms[m - 1].q, state.terms[n - m - 1].q)

    total = FieldPolynomial.zero(ms.cutoff)
    xi = None
    tail = None
    for k in ms.shells:
        if k > s_n:
            continue
        mask = ms.shell_mask(k)
        rhs_k = rhs.restrict(mask)
        if k != n:
            total = total + solve_poly_ode(float(k - n), rhs_k)
            continue
        t0 = traj.times[0]
        v0 = traj.coeffs[0].copy()
        for term in state.terms:
            v0 -= eval_term_many(term, traj.times[:1])[0]
        antider = solve_poly_ode(0.0, rhs_k, SpectralField.zeros(ms.cutoff))
        const = math.exp(n * t0) * np.where(mask[:, None], v0, 0) - antider(t0).coeffs
        h = _hN_stack(state)[:, mask, :]
        g = np.exp(n * traj.times)[:, None, None] * h
        scale = float(norms(traj.coeffs[0], ms)) ** 2
        integral, tail = _resonant_integral(traj.times, g, _Rows(ms, mask), state.sigma_extract, scale)
        const[mask] += integral
        xi = SpectralField(ms, const, solenoidal=True)
        total = total + solve_poly_ode(0.0, rhs_k, xi)
    if xi is None:
        xi = SpectralField.zeros(ms.cutoff)
    return ExpansionTerm(n=n, q=total, xi=xi, tail=tail)


def extract_q1(traj: Trajectory, sigma_extract: float = DEFAULT_SIGMA_EXTRACT) -> ExpansionTerm:
    return extract_next_term(traj, ExpansionState(traj, sigma_extract=sigma_extract))


def extract_expansion(
    traj: Trajectory, n_max: int, sigma_extract: float = DEFAULT_SIGMA_EXTRACT
) -> ExpansionState:
    if n_max < 1:
        raise ValueError("extraction depth must be at least 1")
    state = ExpansionState(traj, sigma_extract=sigma_extract)
    for _ in range(n_max):
        term = extract_next_term(traj, state)
        state = state.appended(term, support_bound(state, term.n))
    return state


def remainder_series(traj: Trajectory, state: ExpansionState, p: GevreyParams, N: int | None = None) -> np.ndarray:
    """|u(t) - sum_{n<=N} u_n(t)|_{alpha,sigma} at every stored sample."""
    if state.source is not traj and state.source.config != traj.config:
        raise ValueError("state and trajectory disagree on configuration")
    N = state.depth if N is None else N
    if not 0 <= N <= state.depth:
        raise ValueError(f"N = {N} outside 0..{state.depth}")
    acc = traj.coeffs.copy()
    for term in state.terms[:N]:
        acc -= eval_term_many(term, traj.times)
    return norms(acc, traj.modes, p.alpha, p.sigma)


def hierarchy_defect(terms, n: int) -> FieldPolynomial:
    """q_n' - n q_n + A q_n + sum_{m+j=n} B(q_m, q_j) as a polynomial."""
    q = terms[n - 1].q
    ms = q.modes
    lin = FieldPolynomial(ms, q.stack * (ms.k2.astype(np.float64) - n)[None, :, None])
    out = q.derivative() + lin
    for m in range(1, n):
        out = out + bilinear_poly(terms[m - 1].q, terms[n - m - 1].q)
    return out


def ode_residual(state: ExpansionState, n: int, t_samples) -> float:
    if not 1 <= n <= state.depth:
        raise ValueError(f"n = {n} outside 1..{state.depth}")
    t = np.asarray(t_samples, dtype=np.float64)
    q = state.terms[n - 1].q
    ms = q.modes
    defect = norms(hierarchy_defect(state.terms, n).evaluate(t), ms, 0.0, 0.0)
    size = norms(q.evaluate(t), ms, 0.0, 0.0)
    top = float(np.max(defect))
    bottom = float(np.max(size))
    if bottom == 0.0:
        return 0.0 if top == 0.0 else math.inf
    return top / bottom


def perturb_coefficient(
    state: ExpansionState, n: int, degree: int, rel: float, rng: np.random.Generator
) -> ExpansionState:
    """Copy of ``state`` with one coefficient of q_n moved by ``rel`` of the polynomial's size.

    The shift is a random solenoidal field over all shells, so it cannot hide
    in the resonant constant (a pure rescaling of a shell-n constant would).
    """
    term = state.terms[n - 1]
    q = term.q
    if not 0 <= degree <= q.degree:
        raise ValueError(f"q_{n} has no coefficient of degree {degree}")
    ms = q.modes
    t = state.source.times
    scale = float(np.max(norms(q.evaluate(t), ms, 0.0, 0.0)))
    direction = random_field(ms.cutoff, rng, decay=0.0).coeffs
    direction = direction / norms(direction, ms, 0.0, 0.0)
    stack = q.stack.copy()
    stack[degree] += rel * scale * direction
    new = ExpansionTerm(n, FieldPolynomial(ms, stack), term.xi, term.tail)
    terms = state.terms[: n - 1] + (new,) + state.terms[n:]
    return ExpansionState(state.source, terms, state.sigma_extract, state.supports)


# persistence and summaries ---------------------------------------------------


def term_summary(term: ExpansionTerm, support_bound_n: int | None = None) -> dict:
    ms = term.q.modes
    xi_norm = 0.0 if term.xi is None else float(norms(term.xi.coeffs, ms, 0.0, 0.0))
    return {
        "n": term.n,
        "degree": term.q.degree,
        "support": term.q.support(),
        "support_bound": support_bound_n,
        "xi_norm": xi_norm,
        "tail_rate": None if term.tail is None else term.tail.rate,
        "tail_amplitude": None if term.tail is None else term.tail.amplitude,
    }


def summarize(state: ExpansionState) -> list[dict]:
    return [term_summary(t, s) for t, s in zip(state.terms, state.supports)]


def summary_text(state: ExpansionState) -> str:
    lines = [f"expansion of depth {state.depth}, cutoff {state.source.config.cutoff}, sigma_extract {state.sigma_extract}"]
    for rec in summarize(state):
        tail = "negligible" if rec["tail_rate"] is None else f"rate {rec['tail_rate']:.6g}"
        lines.append(
            f"q_{rec['n']}: degree {rec['degree']}, shells {rec['support']}, bound {rec['support_bound']}, "
            f"|xi| {rec['xi_norm']:.6e}, tail {tail}"
        )
    return "\n".join(lines) + "\n"


def save_expansion(state: ExpansionState, directory, trajectory_dir=None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for term, bound in zip(state.terms, state.supports):
        sub = f"term_{term.n:02d}"
        save_polynomial(term.q, d / sub, n=term.n)
        xi_name = None
        if term.xi is not None:
            xi_name = f"{sub}/xi.bin"
            write_snapshot(d / xi_name, term.xi)
        tail = None if term.tail is None else [term.tail.amplitude, term.tail.rate, list(term.tail.window)]
        entries.append({"n": term.n, "dir": sub, "xi": xi_name, "tail": tail, "support_bound": bound})
    source = None
    if trajectory_dir is not None:
        source = os.path.relpath(Path(trajectory_dir).resolve(), d.resolve())
    manifest = {
        "format": EXPANSION_FORMAT,
        "sigma_extract": state.sigma_extract,
        "cutoff": state.source.config.cutoff,
        "trajectory": source,
        "terms": entries,
    }
    (d / EXPANSION_MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    (d / SUMMARY_NAME).write_text(summary_text(state))
    return d


def load_expansion(directory, traj: Trajectory | None = None) -> ExpansionState:
    d = Path(directory)
    manifest = json.loads((d / EXPANSION_MANIFEST).read_text())
    if manifest.get("format") != EXPANSION_FORMAT:
        raise ValueError(f"{d} does not hold an expansion")
    if traj is None:
        if manifest["trajectory"] is None:
            raise ValueError("expansion does not record its trajectory; pass one explicitly")
        traj = load_trajectory(d / manifest["trajectory"])
    terms, bounds = [], []
    for e in manifest["terms"]:
        q, n = load_polynomial(d / e["dir"])
        xi = read_snapshot(d / e["xi"]) if e["xi"] else None
        tail = None if e["tail"] is None else TailFit(e["tail"][0], e["tail"][1], tuple(e["tail"][2]))
        terms.append(ExpansionTerm(n=n, q=q, xi=xi, tail=tail))
        bounds.append(e["support_bound"])
    return ExpansionState(traj, tuple(terms), manifest["sigma_extract"], tuple(bounds))

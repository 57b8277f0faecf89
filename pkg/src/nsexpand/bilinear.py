"""The Galerkin-truncated advection map B(u, v) = P(u . grad v).

``bilinear`` sums the triads p + q = k exactly over the retained modes;
``bilinear_oracle`` evaluates the same product on a physical grid by
direct trigonometric summation and is kept independent of the triad tables.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .field import SpectralField, leray_project, norms, random_field
from .lattice import ModeSet, mode_set

DEFAULT_PROBE_CUTOFF = 8
GROWTH_ALPHAS = (0.5, 1.0, 2.0, 4.0)


class GridTooSmallError(ValueError):
    """The oracle grid cannot integrate the quadratic product exactly."""


@dataclass(frozen=True, eq=False)
class _Triads:
    p: np.ndarray  # index into the full (+k, -k) mode list
    q: np.ndarray
    qvec: np.ndarray  # (T, 3) float wavevector of the differentiated factor
    gather: sp.csr_matrix  # (M, T) sums triads into representative outputs


@lru_cache(maxsize=None)
def _triads(cutoff: int) -> _Triads:
    ms = mode_set(cutoff)
    m = ms.size
    full = np.concatenate([ms.k, -ms.k])
    lookup = {tuple(int(c) for c in k): i for i, k in enumerate(full)}
    outs, ps, qs = [], [], []
    for o, k in enumerate(ms.k):
        for i, p in enumerate(full):
            j = lookup.get((int(k[0] - p[0]), int(k[1] - p[1]), int(k[2] - p[2])))
            if j is not None:
                outs.append(o)
                ps.append(i)
                qs.append(j)
    outs = np.array(outs, dtype=np.int64)
    ps = np.array(ps, dtype=np.int64)
    qs = np.array(qs, dtype=np.int64)
    gather = sp.csr_matrix(
        (np.ones(outs.size), (outs, np.arange(outs.size))), shape=(m, outs.size)
    )
    return _Triads(p=ps, q=qs, qvec=full[qs].astype(np.float64), gather=gather)


def _full(coeffs: np.ndarray) -> np.ndarray:
    return np.concatenate([coeffs, coeffs.conj()], axis=-2)


def _project(coeffs: np.ndarray, ms: ModeSet) -> np.ndarray:
    k = ms.k.astype(np.float64)
    along = np.einsum("...ij,ij->...i", coeffs, k) / ms.k2
    return coeffs - along[..., None] * k


def convolve(u: np.ndarray, v: np.ndarray, ms: ModeSet) -> np.ndarray:
    """Projected triad sum on raw coefficient stacks shaped (..., M, 3)."""
    tr = _triads(ms.cutoff)
    uf, vf = _full(u), _full(v)
    coef = 1j * np.einsum("...ti,ti->...t", uf[..., tr.p, :], tr.qvec)
    contrib = coef[..., None] * vf[..., tr.q, :]
    lead = contrib.shape[:-2]
    flat = np.moveaxis(contrib.reshape(-1, tr.p.size, 3), 1, 0).reshape(tr.p.size, -1)
    summed = tr.gather @ flat
    out = np.moveaxis(summed.reshape(ms.size, -1, 3), 0, 1).reshape(*lead, ms.size, 3)
    return _project(out, ms)


def convolve_batched(u: np.ndarray, v: np.ndarray, ms: ModeSet, chunk: int = 256) -> np.ndarray:
    """``convolve`` over a leading sample axis, in memory-bounded chunks."""
    out = np.empty(np.broadcast_shapes(u.shape, v.shape), dtype=np.complex128)
    n = out.shape[0]
    u = np.broadcast_to(u, out.shape)
    v = np.broadcast_to(v, out.shape)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        out[start:stop] = convolve(u[start:stop], v[start:stop], ms)
    return out


def _check_pair(u: SpectralField, v: SpectralField) -> None:
    if u.cutoff != v.cutoff:
        raise ValueError(f"truncation mismatch: {u.cutoff} vs {v.cutoff}")


def bilinear(u: SpectralField, v: SpectralField) -> SpectralField:
    _check_pair(u, v)
    return SpectralField(u.modes, convolve(u.coeffs, v.coeffs, u.modes), solenoidal=True)


def oracle_grid_half_width(cutoff: int) -> int:
    """Smallest M whose (2M+1)-point grid resolves the product without aliasing."""
    kmax = math.isqrt(cutoff)
    return max(1, -(-3 * kmax // 2))


def bilinear_oracle(u: SpectralField, v: SpectralField, half_width: int | None = None) -> SpectralField:
    _check_pair(u, v)
    ms = u.modes
    kmax = math.isqrt(ms.cutoff)
    m = oracle_grid_half_width(ms.cutoff) if half_width is None else int(half_width)
    n = 2 * m + 1
    if n <= 3 * kmax:
        raise GridTooSmallError(
            f"grid of {n} points per axis aliases products of |k_i| <= {kmax}; need more than {3 * kmax}"
        )
    x = 2.0 * np.pi * np.arange(n) / n
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    kf, uf = u.full_modes()
    _, vf = v.full_modes()
    phase = np.exp(1j * pts @ kf.T)  # (points, modes)
    u_x = (phase @ uf).real
    # grad v: d v_c / d x_j  ->  i k_j v_hat_c
    grad_v = np.einsum("pm,mj,mc->pcj", phase, 1j * kf, vf).real
    product = np.einsum("pj,pcj->pc", u_x, grad_v)
    back = np.exp(-1j * pts @ ms.k.T).T @ product / pts.shape[0]
    return leray_project(SpectralField(ms, back))


@dataclass(frozen=True)
class BilinearRatioReport:
    """Empirical suprema of |B(u,v)|_{alpha,sigma} over the structural bound terms."""

    alpha: float
    sigma: float
    samples: int
    cutoff: int
    seed: int
    max_ratio_B1: float
    max_ratio_B2: float
    max_ratio_AalphaB: float | None

    def as_record(self) -> dict:
        return asdict(self)


def _structural_parts(u: np.ndarray, v: np.ndarray, ms: ModeSet, alpha: float, sigma: float):
    def nrm(c, a):
        return norms(c, ms, a, sigma)

    shared = np.sqrt(nrm(u, 0.5) * nrm(u, 1.0)) * nrm(v, alpha + 0.5)
    b1 = 4.0**alpha * (shared + nrm(u, alpha + 0.25) * nrm(v, 1.0))
    b2 = 4.0**alpha * (shared + nrm(u, alpha + 0.5) * nrm(v, 0.75))
    ab = nrm(u, alpha + 0.5) * nrm(v, alpha + 0.5)
    return b1, b2, ab


def random_pairs(samples: int, seed: int, cutoff: int, decay: float = 1.0):
    """Deterministic stacks of random solenoidal pairs, one child seed per sample."""
    ms = mode_set(cutoff)
    us = np.empty((samples, ms.size, 3), dtype=np.complex128)
    vs = np.empty_like(us)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(samples)):
        rng = np.random.default_rng(child)
        us[i] = random_field(cutoff, rng, decay).coeffs
        vs[i] = random_field(cutoff, rng, decay).coeffs
    return us, vs


def probe_inequalities(
    alpha: float,
    sigma: float,
    samples: int,
    seed: int,
    cutoff: int = DEFAULT_PROBE_CUTOFF,
    decay: float = 1.0,
) -> BilinearRatioReport:
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if samples < 1:
        raise ValueError("need at least one sample")
    ms = mode_set(cutoff)
    us, vs = random_pairs(samples, seed, cutoff, decay)
    b = convolve_batched(us, vs, ms)
    lhs = norms(b, ms, alpha, sigma)
    b1, b2, ab = _structural_parts(us, vs, ms, alpha, sigma)
    keep = (b1 > 0) & (b2 > 0) & (ab > 0)
    if not np.any(keep):
        raise ValueError("every sampled pair was degenerate")
    return BilinearRatioReport(
        alpha=float(alpha),
        sigma=float(sigma),
        samples=int(np.count_nonzero(keep)),
        cutoff=int(cutoff),
        seed=int(seed),
        max_ratio_B1=float(np.max(lhs[keep] / b1[keep])),
        max_ratio_B2=float(np.max(lhs[keep] / b2[keep])),
        max_ratio_AalphaB=float(np.max(lhs[keep] / ab[keep])) if alpha >= 0.5 else None,
    )


def empirical_base(reports) -> float:
    """Smallest K >= 1 with max_ratio_AalphaB(alpha) <= K^alpha on every report."""
    k = 1.0
    for r in reports:
        if r.max_ratio_AalphaB is None:
            continue
        k = max(k, r.max_ratio_AalphaB ** (1.0 / r.alpha))
    return k


def growth_sweep(
    sigma: float,
    samples: int,
    seed: int,
    cutoff: int = DEFAULT_PROBE_CUTOFF,
    alphas=GROWTH_ALPHAS,
) -> tuple[float, list[BilinearRatioReport]]:
    """Probe over several alpha >= 1/2 and return (K_emp, reports)."""
    reports = [probe_inequalities(a, sigma, samples, seed, cutoff) for a in alphas]
    return empirical_base(reports), reports


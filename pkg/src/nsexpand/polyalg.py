"""Polynomials in t with SpectralField coefficients."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bilinear import convolve
from .field import SpectralField, read_snapshot, write_snapshot
from .lattice import ModeSet, mode_set

POLY_MANIFEST = "polynomial.json"
POLY_FORMAT = "nsexpand-polynomial/1"


class FieldPolynomial:
    """sum_j c_j t^j, coefficients stacked as a (degree + 1, M, 3) array."""

    __slots__ = ("modes", "stack")

    def __init__(self, cutoff: int | ModeSet, stack):
        modes = cutoff if isinstance(cutoff, ModeSet) else mode_set(int(cutoff))
        arr = np.array(stack, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[1:] != (modes.size, 3) or arr.shape[0] == 0:
            raise ValueError(f"expected a (d+1, {modes.size}, 3) coefficient stack, got {arr.shape}")
        # trim exactly-zero leading coefficients, keep at least the constant term
        last = arr.shape[0]
        while last > 1 and not np.any(arr[last - 1]):
            last -= 1
        arr = arr[:last].copy()
        arr.setflags(write=False)
        self.modes = modes
        self.stack = arr

    @classmethod
    def zero(cls, cutoff: int) -> "FieldPolynomial":
        ms = mode_set(cutoff)
        return cls(ms, np.zeros((1, ms.size, 3)))

    @classmethod
    def constant(cls, field: SpectralField) -> "FieldPolynomial":
        return cls(field.modes, field.coeffs[None])

    @classmethod
    def from_fields(cls, fields) -> "FieldPolynomial":
        fields = list(fields)
        if not fields:
            raise ValueError("need at least one coefficient")
        cutoffs = {f.cutoff for f in fields}
        if len(cutoffs) != 1:
            raise ValueError(f"coefficients disagree on truncation: {sorted(cutoffs)}")
        return cls(fields[0].modes, np.stack([f.coeffs for f in fields]))

    @property
    def cutoff(self) -> int:
        return self.modes.cutoff

    @property
    def degree(self) -> int:
        return self.stack.shape[0] - 1

    @property
    def coeffs(self) -> list[SpectralField]:
        return [SpectralField(self.modes, c, solenoidal=True) for c in self.stack]

    def is_zero(self) -> bool:
        return not np.any(self.stack)

    def __call__(self, t: float) -> SpectralField:
        acc = np.zeros_like(self.stack[0])
        for c in self.stack[::-1]:
            acc = acc * t + c
        return SpectralField(self.modes, acc, solenoidal=True)

    def evaluate(self, times) -> np.ndarray:
        """Values at many times as a (len(times), M, 3) stack (Horner, vectorized)."""
        times = np.asarray(times, dtype=np.float64)
        acc = np.zeros((times.size,) + self.stack.shape[1:], dtype=np.complex128)
        for c in self.stack[::-1]:
            acc = acc * times[:, None, None] + c
        return acc

    def derivative(self) -> "FieldPolynomial":
        if self.degree == 0:
            return FieldPolynomial(self.modes, np.zeros_like(self.stack))
        powers = np.arange(1, self.degree + 1, dtype=np.float64)
        return FieldPolynomial(self.modes, self.stack[1:] * powers[:, None, None])

    def _check(self, other: "FieldPolynomial") -> None:
        if other.cutoff != self.cutoff:
            raise ValueError(f"truncation mismatch: {self.cutoff} vs {other.cutoff}")

    def __add__(self, other: "FieldPolynomial") -> "FieldPolynomial":
        self._check(other)
        n = max(self.stack.shape[0], other.stack.shape[0])
        out = np.zeros((n,) + self.stack.shape[1:], dtype=np.complex128)
        out[: self.stack.shape[0]] += self.stack
        out[: other.stack.shape[0]] += other.stack
        return FieldPolynomial(self.modes, out)

    def __neg__(self) -> "FieldPolynomial":
        return FieldPolynomial(self.modes, -self.stack)

    def __sub__(self, other: "FieldPolynomial") -> "FieldPolynomial":
        return self + (-other)

    def __mul__(self, scalar: float) -> "FieldPolynomial":
        return FieldPolynomial(self.modes, float(scalar) * self.stack)

    __rmul__ = __mul__

    def restrict(self, mask: np.ndarray) -> "FieldPolynomial":
        """Zero every mode outside ``mask`` (e.g. a shell projection)."""
        return FieldPolynomial(self.modes, np.where(mask[None, :, None], self.stack, 0))

    def support(self) -> list[int]:
        nz = np.any(self.stack != 0, axis=(0, 2))
        return sorted(int(n) for n in np.unique(self.modes.k2[nz]))

    def __repr__(self) -> str:
        return f"FieldPolynomial(cutoff={self.cutoff}, degree={self.degree}, support={self.support()})"


@dataclass(frozen=True)
class TailFit:
    """Exponential model amplitude * exp(-rate t) of an integrand's tail."""

    amplitude: float
    rate: float
    window: tuple[float, float]


@dataclass(frozen=True)
class ExpansionTerm:
    """u_n(t) = exp(-n t) q(t); ``xi`` is the resonant integration constant."""

    n: int
    q: FieldPolynomial
    xi: SpectralField | None = None
    tail: TailFit | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"decay index must be >= 1, got {self.n}")


class ResonanceError(ValueError):
    """Resonant constant supplied (or omitted) inconsistently with lambda."""


def solve_poly_ode(lam: float, rhs: FieldPolynomial, resonant_constant: SpectralField | None = None) -> FieldPolynomial:
    """Polynomial solution of p' + lam p = rhs.

    For lam != 0 the solution is unique and found by back-substitution from
    the top degree: p_d = r_d / lam, p_j = (r_j - (j+1) p_{j+1}) / lam.
    For lam == 0 it is the antiderivative with p(0) = resonant_constant.
    """
    if lam == 0:
        if resonant_constant is None:
            raise ResonanceError("lambda = 0 needs the value p(0)")
        if resonant_constant.cutoff != rhs.cutoff:
            raise ValueError("resonant constant and right-hand side disagree on truncation")
        d = rhs.degree
        out = np.empty((d + 2,) + rhs.stack.shape[1:], dtype=np.complex128)
        out[0] = resonant_constant.coeffs
        out[1:] = rhs.stack / np.arange(1, d + 2, dtype=np.float64)[:, None, None]
        return FieldPolynomial(rhs.modes, out)
    if resonant_constant is not None:
        raise ResonanceError("a resonant constant only applies when lambda = 0")
    d = rhs.degree
    out = np.empty_like(rhs.stack)
    out[d] = rhs.stack[d] / lam
    for j in range(d - 1, -1, -1):
        out[j] = (rhs.stack[j] - (j + 1) * out[j + 1]) / lam
    return FieldPolynomial(rhs.modes, out)


def exp_poly_tail_integral(d: int, beta: float) -> list[float]:
    """Coefficients c_n with int_t^inf tau^d e^(-beta tau) dtau = e^(-beta t) sum_n c_n t^n."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if d < 0 or int(d) != d:
        raise ValueError(f"degree must be a nonnegative integer, got {d}")
    return [math.factorial(d) / (math.factorial(n) * beta ** (d + 1 - n)) for n in range(d + 1)]


def tail_integral_value(d: int, beta: float, t: float) -> float:
    coeffs = exp_poly_tail_integral(d, beta)
    return math.exp(-beta * t) * sum(c * t**n for n, c in enumerate(coeffs))


def bilinear_poly(a: FieldPolynomial, b: FieldPolynomial) -> FieldPolynomial:
    a._check(b)
    ms = a.modes
    da, db = a.degree, b.degree
    out = np.zeros((da + db + 1, ms.size, 3), dtype=np.complex128)
    ia, ib = np.meshgrid(np.arange(da + 1), np.arange(db + 1), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    products = convolve(a.stack[ia], b.stack[ib], ms)
    for i, j, p in zip(ia, ib, products):
        out[i + j] += p
    return FieldPolynomial(ms, out)


def eval_term(term: ExpansionTerm, t: float) -> SpectralField:
    return term.q(t) * math.exp(-term.n * t)


def eval_term_many(term: ExpansionTerm, times) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    return term.q.evaluate(times) * np.exp(-term.n * times)[:, None, None]


# persistence -----------------------------------------------------------------


def save_polynomial(q: FieldPolynomial, directory, n: int | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for j, c in enumerate(q.coeffs):
        name = f"coeff_{j:02d}.bin"
        write_snapshot(d / name, c)
        names.append(name)
    manifest = {"format": POLY_FORMAT, "n": n, "degree": q.degree, "cutoff": q.cutoff, "coefficients": names}
    (d / POLY_MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    return d


def load_polynomial(directory) -> tuple[FieldPolynomial, int | None]:
    d = Path(directory)
    manifest = json.loads((d / POLY_MANIFEST).read_text())
    if manifest.get("format") != POLY_FORMAT:
        raise ValueError(f"{d} does not hold a field polynomial")
    q = FieldPolynomial.from_fields(read_snapshot(d / name) for name in manifest["coefficients"])
    if q.degree != manifest["degree"]:
        raise ValueError("polynomial manifest degree disagrees with stored coefficients")
    return q, manifest["n"]

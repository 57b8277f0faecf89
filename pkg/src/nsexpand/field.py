"""Truncated spectral vector fields on the 2*pi-torus.

A real field u(x) = sum_k u_hat(k) exp(i k.x) is stored through one
representative k of every +-k pair; u_hat(-k) = conj(u_hat(k)) is implied.
Norms and inner products carry the (2*pi)^3 = 8*pi^3 volume factor.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import ModeSet, Truncation, mode_set, stokes_spectrum

VOLUME = 8.0 * math.pi**3
RTOL = 1e-12

SNAPSHOT_MAGIC = b"NSSF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_RECORD = np.dtype([("k", "<i4", (3,)), ("a", "<f8", (6,))])


@dataclass(frozen=True)
class GevreyParams:
    """Selects the norm |A^alpha exp(sigma A^(1/2)) u|."""

    alpha: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not (self.alpha >= 0 and self.sigma >= 0):
            raise ValueError(f"Gevrey parameters must be nonnegative, got {self}")


class SpectralField:
    """Immutable truncated Fourier representation of a real zero-average field."""

    __slots__ = ("modes", "coeffs", "solenoidal")

    def __init__(self, cutoff: int | ModeSet, coeffs, solenoidal: bool = False):
        modes = cutoff if isinstance(cutoff, ModeSet) else mode_set(int(cutoff))
        arr = np.array(coeffs, dtype=np.complex128)
        if arr.shape != (modes.size, 3):
            raise ValueError(f"expected coefficient array of shape {(modes.size, 3)}, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "solenoidal", bool(solenoidal))

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    # construction -----------------------------------------------------

    @classmethod
    def zeros(cls, cutoff: int) -> "SpectralField":
        ms = mode_set(cutoff)
        return cls(ms, np.zeros((ms.size, 3), dtype=np.complex128), solenoidal=True)

    @classmethod
    def from_modes(cls, cutoff: int, amplitudes: dict, solenoidal: bool | None = None) -> "SpectralField":
        """Build a field from ``{k: u_hat(k)}``; either member of a +-k pair may be given."""
        ms = mode_set(cutoff)
        coeffs = np.zeros((ms.size, 3), dtype=np.complex128)
        seen: dict[int, np.ndarray] = {}
        for k, vec in amplitudes.items():
            if tuple(k) == (0, 0, 0):
                raise ValueError("zero-average fields carry no k = 0 coefficient")
            row, conj = ms.index(k)
            value = np.asarray(vec, dtype=np.complex128)
            if conj:
                value = value.conj()
            if row in seen and not np.allclose(seen[row], value, rtol=RTOL, atol=0.0):
                raise ValueError(f"coefficients at {tuple(k)} and its negative are not conjugate")
            seen[row] = value
            coeffs[row] = value
        field = cls(ms, coeffs, solenoidal=False)
        if solenoidal is None:
            solenoidal = field.divergence_free()
        elif solenoidal and not field.divergence_free():
            raise ValueError("field marked solenoidal has k.u_hat(k) != 0")
        return cls(ms, coeffs, solenoidal=solenoidal)

    # basic views ------------------------------------------------------

    @property
    def cutoff(self) -> int:
        return self.modes.cutoff

    @property
    def truncation(self) -> Truncation:
        return Truncation(self.cutoff)

    def coefficient(self, k) -> np.ndarray:
        row, conj = self.modes.index(k)
        value = self.coeffs[row]
        return value.conj() if conj else value.copy()

    def full_modes(self) -> tuple[np.ndarray, np.ndarray]:
        """Both members of every +-k pair: (k_full, u_hat_full)."""
        return (
            np.concatenate([self.modes.k, -self.modes.k]),
            np.concatenate([self.coeffs, self.coeffs.conj()]),
        )

    def divergence_free(self, rtol: float = RTOL) -> bool:
        div = np.abs(np.einsum("ij,ij->i", self.modes.k, self.coeffs))
        scale = self.modes.kabs * np.linalg.norm(self.coeffs, axis=1)
        return bool(np.all(div <= rtol * np.maximum(scale, np.finfo(float).tiny)))

    def support(self) -> list[int]:
        """Shells carrying a nonzero coefficient."""
        nz = np.any(self.coeffs != 0, axis=1)
        return sorted(int(n) for n in np.unique(self.modes.k2[nz]))

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    # arithmetic -------------------------------------------------------

    def _check(self, other: "SpectralField") -> None:
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.cutoff != self.cutoff:
            raise ValueError(f"truncation mismatch: {self.cutoff} vs {other.cutoff}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.modes, self.coeffs + other.coeffs, self.solenoidal and other.solenoidal)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.modes, self.coeffs - other.coeffs, self.solenoidal and other.solenoidal)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.modes, -self.coeffs, self.solenoidal)

    def __mul__(self, scalar: float) -> "SpectralField":
        if isinstance(scalar, complex) or np.iscomplexobj(scalar):
            raise TypeError("real fields only admit real scalar multiples")
        return SpectralField(self.modes, float(scalar) * self.coeffs, self.solenoidal)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "SpectralField":
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        return (
            f"SpectralField(cutoff={self.cutoff}, modes={self.modes.size}, "
            f"solenoidal={self.solenoidal}, support={self.support()})"
        )


# multipliers and norms ----------------------------------------------------


def multiplier(modes: ModeSet, alpha: float, sigma: float) -> np.ndarray:
    """Per-mode symbol |k|^(2 alpha) exp(sigma |k|); any real alpha, sigma."""
    return modes.k2.astype(np.float64) ** alpha * np.exp(sigma * modes.kabs)


def leray_project(f: SpectralField) -> SpectralField:
    k = f.modes.k.astype(np.float64)
    along = np.einsum("ij,ij->i", f.coeffs, k) / f.modes.k2
    return SpectralField(f.modes, f.coeffs - along[:, None] * k, solenoidal=True)


def apply_gevrey_multiplier(u: SpectralField, p: GevreyParams) -> SpectralField:
    w = multiplier(u.modes, p.alpha, p.sigma)
    return SpectralField(u.modes, u.coeffs * w[:, None], u.solenoidal)


def apply_smoothing(u: SpectralField, alpha: float) -> SpectralField:
    """A^alpha exp(-A^(1/2)) u, bounded by (2 alpha / e)^(2 alpha) in operator norm."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    w = multiplier(u.modes, alpha, -1.0)
    return SpectralField(u.modes, u.coeffs * w[:, None], u.solenoidal)


def smoothing_bound(alpha: float) -> float:
    """max_{x >= 0} x^(2 alpha) e^(-x)."""
    if alpha == 0:
        return 1.0
    return (2.0 * alpha / math.e) ** (2.0 * alpha)


def norms(coeffs: np.ndarray, modes: ModeSet, alpha: float = 0.0, sigma: float = 0.0) -> np.ndarray:
    """Gevrey norms of a stack of coefficient arrays shaped (..., M, 3)."""
    w2 = multiplier(modes, alpha, sigma) ** 2
    power = np.einsum("...ij,...ij->...i", coeffs, coeffs.conj()).real
    return np.sqrt(2.0 * VOLUME * (power @ w2))


def gevrey_norm(u: SpectralField, p: GevreyParams = GevreyParams()) -> float:
    return float(norms(u.coeffs, u.modes, p.alpha, p.sigma))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    u._check(v)
    return float(2.0 * VOLUME * np.vdot(v.coeffs, u.coeffs).real)


def shell_project(u: SpectralField, n: int) -> SpectralField:
    mask = u.modes.shell_mask(n)
    return SpectralField(u.modes, np.where(mask[:, None], u.coeffs, 0), u.solenoidal)


def low_pass(u: SpectralField, n: int) -> SpectralField:
    """P_n = R_1 + ... + R_n."""
    mask = u.modes.k2 <= n
    return SpectralField(u.modes, np.where(mask[:, None], u.coeffs, 0), u.solenoidal)


def stokes(u: SpectralField) -> SpectralField:
    """The Stokes operator A, multiplication by |k|^2."""
    return SpectralField(u.modes, u.coeffs * u.modes.k2[:, None], u.solenoidal)


def retruncate(u: SpectralField, cutoff: int) -> SpectralField:
    """Embed into (or cut down to) another spherical truncation."""
    target = mode_set(cutoff)
    out = np.zeros((target.size, 3), dtype=np.complex128)
    lookup = target._lookup
    for i, k in enumerate(u.modes.k):
        row = lookup.get(tuple(int(c) for c in k))
        if row is not None:
            out[row] = u.coeffs[i]
    return SpectralField(target, out, u.solenoidal)


# sample fields ------------------------------------------------------------


def random_field(cutoff: int, rng: np.random.Generator, decay: float = 1.0) -> SpectralField:
    """Complex Gaussian amplitudes damped by exp(-decay |k|), Leray-projected."""
    ms = mode_set(cutoff)
    raw = rng.standard_normal((ms.size, 3)) + 1j * rng.standard_normal((ms.size, 3))
    raw *= np.exp(-decay * ms.kabs)[:, None]
    return leray_project(SpectralField(ms, raw))


def _transverse_direction(k: np.ndarray) -> np.ndarray:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(k)))] = 1.0
    d = np.cross(k, axis)
    return d / np.linalg.norm(d)


def single_mode(cutoff: int, k, amplitude: float, direction=None) -> SpectralField:
    """u(x) = amplitude * d * cos(k.x) with a unit direction d orthogonal to k."""
    kv = np.asarray(k, dtype=np.float64)
    if direction is None:
        d = _transverse_direction(kv)
    else:
        d = np.asarray(direction, dtype=np.float64)
        d = d - (d @ kv) / (kv @ kv) * kv
        nd = np.linalg.norm(d)
        if nd == 0:
            raise ValueError("direction is parallel to k")
        d = d / nd
    return SpectralField.from_modes(cutoff, {tuple(int(c) for c in k): 0.5 * amplitude * d}, solenoidal=True)


def abc_flow(cutoff: int, a: float = 1.0, b: float = 1.0, c: float = 1.0) -> SpectralField:
    """Arnold-Beltrami-Childress field on shell 1, curl u = u.

    u = (a sin z + c cos y, b sin x + a cos z, c sin y + b cos x).
    """
    return SpectralField.from_modes(
        cutoff,
        {
            (1, 0, 0): (0.0, -0.5j * b, 0.5 * b),
            (0, 1, 0): (0.5 * c, 0.0, -0.5j * c),
            (0, 0, 1): (-0.5j * a, 0.5 * a, 0.0),
        },
        solenoidal=True,
    )


# snapshot format ----------------------------------------------------------


def snapshot_bytes(u: SpectralField) -> bytes:
    records = np.zeros(u.modes.size, dtype=_RECORD)
    records["k"] = u.modes.k
    records["a"] = u.coeffs.view(np.float64).reshape(-1, 6)
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, u.cutoff, len(stokes_spectrum(u.cutoff)), u.modes.size
    )
    return header + records.tobytes()


def snapshot_from_bytes(data: bytes) -> SpectralField:
    if len(data) < _HEADER.size:
        raise ValueError("snapshot shorter than its header")
    magic, version, cutoff, shells, count = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    ms = mode_set(cutoff)
    if shells != len(ms.shells) or count != ms.size:
        raise ValueError("snapshot header inconsistent with its cutoff")
    records = np.frombuffer(data, dtype=_RECORD, count=count, offset=_HEADER.size)
    if len(data) != _HEADER.size + count * _RECORD.itemsize:
        raise ValueError("snapshot length does not match record count")
    if not np.array_equal(records["k"], ms.k):
        raise ValueError("snapshot wavevectors out of canonical order")
    coeffs = np.ascontiguousarray(records["a"]).view(np.complex128).reshape(-1, 3)
    field = SpectralField(ms, coeffs)
    return SpectralField(ms, coeffs, solenoidal=field.divergence_free())


def write_snapshot(path, u: SpectralField) -> None:
    Path(path).write_bytes(snapshot_bytes(u))


def read_snapshot(path) -> SpectralField:
    return snapshot_from_bytes(Path(path).read_bytes())

"""Integer wavevector lattice on the 2*pi-periodic torus.

Eigenvalues of the Stokes operator are the integers n = |k|^2 with k in Z^3
minus the origin; the eigenspace for n is spanned by the modes of one shell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Shell:
    """All lattice vectors with |k|^2 == n, lexicographically ordered."""

    n: int
    members: tuple[tuple[int, int, int], ...]

    def __len__(self) -> int:
        return len(self.members)

    @property
    def empty(self) -> bool:
        return not self.members


@dataclass(frozen=True)
class Truncation:
    """Spherical Galerkin cutoff: keep modes with 1 <= |k|^2 <= cutoff."""

    cutoff: int

    def __post_init__(self) -> None:
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"truncation cutoff must be a positive integer, got {self.cutoff!r}")


def _check_positive(n: int, name: str) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


@lru_cache(maxsize=None)
def enumerate_shell(n: int) -> Shell:
    n = _check_positive(n, "shell index")
    r = math.isqrt(n)
    members = []
    for k1 in range(-r, r + 1):
        rest1 = n - k1 * k1
        r2 = math.isqrt(rest1)
        for k2 in range(-r2, r2 + 1):
            rest2 = rest1 - k2 * k2
            k3 = math.isqrt(rest2)
            if k3 * k3 != rest2:
                continue
            if k3 == 0:
                members.append((k1, k2, 0))
            else:
                members.append((k1, k2, -k3))
                members.append((k1, k2, k3))
    return Shell(n, tuple(sorted(members)))


def stokes_spectrum(cutoff: int) -> list[int]:
    """Eigenvalues n <= cutoff of the Stokes operator, increasing."""
    cutoff = _check_positive(cutoff, "cutoff")
    return [n for n in range(1, cutoff + 1) if not enumerate_shell(n).empty]


def is_sum_of_three_squares(n: int) -> bool:
    """Legendre's criterion: n is not of the form 4^a (8b + 7)."""
    while n > 0 and n % 4 == 0:
        n //= 4
    return n % 8 != 7


def is_representative(k: tuple[int, int, int]) -> bool:
    """True for the member of each {k, -k} pair whose first nonzero entry is positive."""
    for c in k:
        if c != 0:
            return c > 0
    return False


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Index tables for the modes retained by a truncation.

    ``k`` holds one representative per +-k pair (first nonzero coordinate
    positive), sorted lexicographically; the partner -k is implied by
    Hermitian symmetry of real fields.
    """

    cutoff: int
    k: np.ndarray  # (M, 3) int64
    k2: np.ndarray  # (M,) int64
    kabs: np.ndarray  # (M,) float64

    @property
    def size(self) -> int:
        return self.k.shape[0]

    @property
    def shells(self) -> list[int]:
        return stokes_spectrum(self.cutoff)

    def index(self, k) -> tuple[int, bool]:
        """Return (row, conjugate) locating wavevector ``k`` in the table."""
        key = tuple(int(c) for c in k)
        try:
            return self._lookup[key], False
        except KeyError:
            pass
        neg = tuple(-c for c in key)
        if neg in self._lookup:
            return self._lookup[neg], True
        raise KeyError(f"wavevector {key} not retained at cutoff {self.cutoff}")

    @property
    def _lookup(self) -> dict[tuple[int, int, int], int]:
        table = self.__dict__.get("_lookup_cache")
        if table is None:
            table = {tuple(int(c) for c in row): i for i, row in enumerate(self.k)}
            object.__setattr__(self, "_lookup_cache", table)
        return table

    def shell_mask(self, n: int) -> np.ndarray:
        return self.k2 == n


@lru_cache(maxsize=None)
def mode_set(cutoff: int) -> ModeSet:
    Truncation(cutoff)
    reps = []
    for n in range(1, cutoff + 1):
        reps.extend(k for k in enumerate_shell(n).members if is_representative(k))
    reps.sort()
    k = np.array(reps, dtype=np.int64).reshape(-1, 3)
    k2 = np.einsum("ij,ij->i", k, k)
    ms = ModeSet(cutoff=cutoff, k=k, k2=k2, kabs=np.sqrt(k2.astype(np.float64)))
    k.setflags(write=False)
    k2.setflags(write=False)
    ms.kabs.setflags(write=False)
    return ms

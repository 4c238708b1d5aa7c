"""Finite decreasing mass configurations and their arithmetic.

The state of a fragmentation at a fixed time is a finite non-increasing
vector of fragment masses together with a scalar ``dust`` account for the
mass that has been ground below resolution.  Instances are immutable value
objects; all simulation state lives elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MassPartition",
    "ZERO",
    "decreasing_rearrangement",
    "l1_distance",
    "split_at",
]

# Fractions coming out of floating-point normalisation may overshoot 1 by
# rounding; anything past this is a caller bug.
FRACTION_SUM_TOL = 1e-9


@dataclass(frozen=True)
class MassPartition:
    """Non-increasing tuple of positive masses plus a dust accumulator."""

    masses: tuple[float, ...] = ()
    dust: float = 0.0

    def __post_init__(self):
        if self.dust < 0.0:
            raise ValueError(f"dust must be non-negative, got {self.dust}")
        prev = np.inf
        for m in self.masses:
            if not m > 0.0:
                raise ValueError(f"masses must be positive, got {m}")
            if m > prev * (1.0 + 1e-12):
                raise ValueError("masses must be non-increasing")
            prev = m
        if not np.isfinite(self.total()):
            raise ValueError("total mass must be finite")

    def total(self) -> float:
        return float(sum(self.masses) + self.dust)

    def largest(self, k: int = 1) -> tuple[float, ...]:
        """First k masses, zero-padded."""
        out = self.masses[:k]
        return out + (0.0,) * (k - len(out))

    def __len__(self) -> int:
        return len(self.masses)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)


ZERO = MassPartition()


def decreasing_rearrangement(values, dust: float = 0.0,
                             mass_floor: float = 0.0) -> MassPartition:
    """Sort non-negative values into a MassPartition, dropping zeros.

    Entries below ``mass_floor`` are moved to dust instead of being kept,
    which is how a finite representation absorbs arbitrarily fine fragments.
    The total (masses + dust) is preserved exactly up to float rounding.
    """
    arr = np.asarray(list(values), dtype=float)
    if arr.size and arr.min() < 0.0:
        raise ValueError("negative mass in rearrangement input")
    if arr.size:
        fine = arr <= mass_floor
        dust = float(dust + arr[fine].sum())
        arr = arr[~fine & (arr > 0.0)]
        arr = np.sort(arr)[::-1]
    return MassPartition(tuple(arr.tolist()), dust)


def l1_distance(a: MassPartition, b: MassPartition) -> float:
    """Sum of |a_i - b_i| over mass entries, shorter side zero-padded.

    Dust is excluded: this is the fragment-configuration metric only.
    """
    n = max(len(a), len(b))
    if n == 0:
        return 0.0
    av = np.zeros(n)
    bv = np.zeros(n)
    av[: len(a)] = a.masses
    bv[: len(b)] = b.masses
    return float(np.abs(av - bv).sum())


def split_at(p: MassPartition, index: int, fractions,
             mass_floor: float = 0.0) -> MassPartition:
    """Replace the mass at ``index`` by its pieces ``mass * f_j``.

    Any deficit ``mass * (1 - sum(fractions))`` goes to dust, as do pieces
    at or below ``mass_floor``.  Fractions must sum to at most 1 (within
    tolerance).
    """
    if not 0 <= index < len(p):
        raise IndexError(f"index {index} out of range for {len(p)} masses")
    fr = np.asarray(list(fractions), dtype=float)
    if fr.size and fr.min() < 0.0:
        raise ValueError("fractions must be non-negative")
    s = fr.sum()
    if s > 1.0 + FRACTION_SUM_TOL:
        raise ValueError(f"fractions sum to {s} > 1")
    m = p.masses[index]
    rest = p.masses[:index] + p.masses[index + 1:]
    children = m * fr
    dust = p.dust + m * max(0.0, 1.0 - s)
    return decreasing_rearrangement(
        list(rest) + children.tolist(), dust=dust, mass_floor=mass_floor
    )

"""Mass-dependent splitting-rate functions.

A fragment of mass ``s`` dislocates at ``tau(s)`` times the dislocation
measure.  Power laws get a dedicated kind so that time changes and engine
kernels can exploit the closed form; anything else is wrapped as a callable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["RateFunction", "power_rate", "constant_rate"]


@dataclass(frozen=True)
class RateFunction:
    kind: str                      # "power" | "constant" | "callable"
    alpha: float = 0.0             # exponent, power kind only
    value: float = 1.0             # level for constant kind, prefactor for power
    fn: Callable | None = None

    def evaluate(self, s):
        if self.kind == "power":
            return self.value * np.asarray(s, dtype=float) ** self.alpha
        if self.kind == "constant":
            return np.full_like(np.asarray(s, dtype=float), self.value)
        return self.fn(s)

    def __call__(self, s):
        out = self.evaluate(s)
        if np.ndim(s) == 0:
            return float(out)
        return out

    @property
    def is_homogeneous(self) -> bool:
        """True when tau is identically 1 (constant-rate case)."""
        return (self.kind == "constant" and self.value == 1.0) or (
            self.kind == "power" and self.alpha == 0.0 and self.value == 1.0
        )

    def describe(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "alpha": self.alpha, "value": self.value}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "callable"}


def power_rate(alpha: float, value: float = 1.0) -> RateFunction:
    if not np.isfinite(alpha):
        raise ValueError("alpha must be finite")
    if value <= 0:
        raise ValueError("rate prefactor must be positive")
    return RateFunction("power", alpha=alpha, value=value)


def constant_rate(value: float = 1.0) -> RateFunction:
    if value <= 0:
        raise ValueError("rate level must be positive")
    return RateFunction("constant", value=value)

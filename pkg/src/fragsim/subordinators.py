"""Pure-jump subordinator paths: construction, evaluation, and time changes.

A path is the pair (drift, jumps above a floor); the mean of the discarded
small jumps is folded into the drift so that totals stay unbiased as the
floor shrinks.  The log-mass process of a tagged fragment and its
mass-dependent time change are built on top of the same representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .rates import RateFunction

__all__ = [
    "JumpPath",
    "HorizonExhausted",
    "stable_tail_scale",
    "stable_path",
    "stable_totals",
    "stable_jump_sequences",
    "xi_path",
    "extend_xi_path",
    "rho_time_change",
    "rho_integral",
    "lambda_process",
    "largest_jumps",
]


class HorizonExhausted(RuntimeError):
    """The path does not extend far enough to answer the query."""


@dataclass(frozen=True)
class JumpPath:
    """Drift plus time-sorted positive jumps on [0, horizon]."""

    horizon: float
    drift: float
    times: np.ndarray
    sizes: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.sizes, dtype=float)
        if t.shape != s.shape:
            raise ValueError("times and sizes must have equal length")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if t[0] < 0 or t[-1] > self.horizon:
                raise ValueError("jump times must lie in [0, horizon]")
            if s.min() <= 0:
                raise ValueError("jump sizes must be positive")
        if self.drift < 0:
            raise ValueError("drift must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sizes", s)
        object.__setattr__(self, "_cum", np.cumsum(s))

    def evaluate(self, t):
        """drift*t + sum of jumps at times <= t (cadlag)."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right")
        jumps = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        out = self.drift * t_arr + jumps
        return float(out) if np.ndim(t) == 0 else out

    def total(self) -> float:
        return self.evaluate(self.horizon)

    def n_jumps(self) -> int:
        return int(self.times.size)


def largest_jumps(path: JumpPath, t: float, k: int) -> np.ndarray:
    """k largest jump sizes among jumps at times <= t, descending, 0-padded."""
    if t > path.horizon:
        raise ValueError(f"t={t} beyond path horizon {path.horizon}")
    idx = np.searchsorted(path.times, t, side="right")
    top = np.sort(path.sizes[:idx])[::-1][:k]
    out = np.zeros(k)
    out[: top.size] = top
    return out


def stable_tail_scale(gamma: float, laplace_scale: float) -> float:
    """Tail constant C with Levy tail C*y^-gamma giving exponent laplace_scale*q^gamma."""
    return laplace_scale / gamma_fn(1.0 - gamma)


def _check_stable_args(gamma, scale, jump_floor):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"stable index must be in (0,1), got {gamma}")
    if scale <= 0:
        raise ValueError("tail scale must be positive")
    if jump_floor <= 0:
        raise ValueError("jump floor must be positive")


def stable_path(gamma: float, scale: float, horizon: float, jump_floor: float,
                rng: np.random.Generator) -> JumpPath:
    """Stable subordinator with Levy tail ``scale * y**-gamma``.

    Jumps above the floor arrive at rate scale*floor^-gamma with Pareto
    sizes; the discarded small jumps contribute their mean as drift
    scale*gamma/(1-gamma)*floor^(1-gamma).  The Laplace exponent of the
    exact process is scale*Gamma(1-gamma)*q^gamma.
    """
    _check_stable_args(gamma, scale, jump_floor)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    lam = scale * jump_floor ** (-gamma)
    n = rng.poisson(lam * horizon)
    times = np.sort(rng.random(n)) * horizon
    sizes = jump_floor * rng.random(n) ** (-1.0 / gamma)
    drift = scale * gamma / (1.0 - gamma) * jump_floor ** (1.0 - gamma)
    return JumpPath(horizon=horizon, drift=drift, times=times, sizes=sizes)


def stable_totals(gamma: float, scale: float, t: float, jump_floor: float,
                  n: int, rng: np.random.Generator,
                  return_max: bool = False, batch: int = 200_000):
    """n independent samples of sigma(t), vectorised over paths.

    Equivalent in law to evaluating n stable_path draws at t, without
    materialising the paths.  With return_max, also returns the largest
    jump of each path before t.
    """
    _check_stable_args(gamma, scale, jump_floor)
    lam = scale * jump_floor ** (-gamma) * t
    drift_t = scale * gamma / (1.0 - gamma) * jump_floor ** (1.0 - gamma) * t
    counts = rng.poisson(lam, n)
    totals = np.empty(n)
    maxima = np.empty(n) if return_max else None
    start = 0
    while start < n:
        stop = start
        acc = 0
        while stop < n and (acc == 0 or acc + counts[stop] <= batch):
            acc += counts[stop]
            stop += 1
        c = counts[start:stop]
        sizes = jump_floor * rng.random(int(c.sum())) ** (-1.0 / gamma)
        offsets = np.concatenate(([0], np.cumsum(c)))[:-1]
        sums = np.add.reduceat(sizes, offsets) if sizes.size else np.zeros(len(c))
        sums[c == 0] = 0.0
        totals[start:stop] = drift_t + sums
        if return_max:
            mx = np.maximum.reduceat(sizes, offsets) if sizes.size else np.zeros(len(c))
            mx[c == 0] = 0.0
            maxima[start:stop] = mx
        start = stop
    if return_max:
        return totals, maxima
    return totals


def stable_jump_sequences(gamma: float, scale: float, horizon: float,
                          jump_floor: float, count: int,
                          rng: np.random.Generator):
    """count independent jump sequences over [0, horizon], each sorted descending.

    Returns (values, offsets, totals, compensation): values is a flat array,
    sequence i occupying values[offsets[i]:offsets[i+1]]; totals include the
    compensation term (mean of sub-floor jumps), which is reported separately
    so callers can flag it as an aggregate pseudo-entry.
    """
    _check_stable_args(gamma, scale, jump_floor)
    lam = scale * jump_floor ** (-gamma) * horizon
    comp = scale * gamma / (1.0 - gamma) * jump_floor ** (1.0 - gamma) * horizon
    counts = rng.poisson(lam, count)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    flat = jump_floor * rng.random(int(offsets[-1])) ** (-1.0 / gamma)
    values = np.empty_like(flat)
    totals = np.empty(count)
    for i in range(count):
        seq = np.sort(flat[offsets[i]:offsets[i + 1]])[::-1]
        values[offsets[i]:offsets[i + 1]] = seq
        totals[i] = seq.sum() + comp
    return values, offsets, totals, comp


def xi_path(nu, epsilon: float, horizon: float,
            rng: np.random.Generator) -> JumpPath:
    """Log-mass subordinator of the tagged largest fragment.

    Dislocations restricted to {s1 < 1-epsilon} arrive at rate nu.rate(epsilon);
    each contributes -log(s1) of an independent draw.  No drift.
    """
    rate = nu.rate(epsilon)
    n = rng.poisson(rate * horizon)
    times = np.sort(rng.random(n)) * horizon
    s1 = nu.sample_s1(epsilon, rng, n)
    return JumpPath(horizon=horizon, drift=0.0, times=times, sizes=-np.log(s1))


def extend_xi_path(path: JumpPath, nu, epsilon: float, new_horizon: float,
                   rng: np.random.Generator) -> JumpPath:
    """Fresh events on (horizon, new_horizon]; exact by memorylessness."""
    if new_horizon <= path.horizon:
        return path
    extra = xi_path(nu, epsilon, new_horizon - path.horizon, rng)
    times = np.concatenate([path.times, extra.times + path.horizon])
    sizes = np.concatenate([path.sizes, extra.sizes])
    return JumpPath(horizon=new_horizon, drift=path.drift, times=times,
                    sizes=sizes)


def _integrand_levels(xi: JumpPath, tau: RateFunction, m: float):
    """1/tau(m*exp(-xi)) on each constant segment of xi, in overflow-safe form."""
    levels = np.concatenate(([0.0], xi._cum))  # xi value on each segment
    if tau.kind == "power":
        # 1/tau(s) = s^-alpha / value, s = m e^-xi  ->  exp(-alpha(log m - xi))/value
        log_c = -tau.alpha * (np.log(m) - levels) - np.log(tau.value)
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(log_c)
    s = m * np.exp(-levels)
    vals = np.asarray(tau.evaluate(s), dtype=float)
    if np.any(~np.isfinite(vals) & (s > 0)):
        raise FloatingPointError("rate overflow in time-change integrand")
    with np.errstate(divide="ignore"):
        return np.where(vals > 0, 1.0 / vals, np.inf)


def rho_time_change(xi: JumpPath, tau: RateFunction, m: float, t: float) -> float:
    """Inverse of u -> int_0^u dr / tau(m exp(-xi(r))), computed exactly.

    xi is piecewise constant so the integral is piecewise linear; the
    inverse is solved segment by segment with no tolerance.  Returns +inf
    when the integrand has provably decayed to zero before the target is
    reached (the tagged fragment is dust at every later time).  Raises
    HorizonExhausted when the answer needs xi beyond its horizon.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    c = _integrand_levels(xi, tau, m)
    if np.any(np.isnan(c)):
        raise FloatingPointError("non-finite integrand level")
    edges = np.concatenate(([0.0], xi.times, [xi.horizon]))
    widths = np.diff(edges)
    seg = np.where(widths > 0, c * widths, 0.0)  # guard inf * 0
    acc = np.concatenate(([0.0], np.cumsum(seg)))
    if acc[-1] > t:
        # last edge index with accumulated integral <= t; the next segment
        # (possibly after a run of flat ones at exactly t) crosses the target
        k = int(np.searchsorted(acc, t, side="right")) - 1
        if np.isinf(c[k]):
            return float(edges[k])
        return float(edges[k] + (t - acc[k]) / c[k])
    if acc[-1] == t:
        return float(xi.horizon)
    # target not reached within the horizon
    if c[-1] == 0.0 and tau.kind == "power" and tau.alpha < 0:
        # integrand exp(alpha*(log m - xi)) underflowed and is non-increasing
        # in xi, which only grows: the integral can never reach t
        return np.inf
    raise HorizonExhausted(
        f"time-change integral reaches only {acc[-1]:.6g} < t={t:.6g} "
        f"within horizon {xi.horizon}; extend the path"
    )


def rho_integral(xi: JumpPath, tau: RateFunction, m: float, u: float) -> float:
    """int_0^u dr / tau(m exp(-xi(r))) for u within the horizon."""
    if u < 0 or u > xi.horizon:
        raise ValueError("u outside path horizon")
    c = _integrand_levels(xi, tau, m)
    edges = np.concatenate(([0.0], xi.times, [xi.horizon]))
    k = int(np.searchsorted(edges, u, side="right")) - 1
    k = min(k, len(c) - 1)
    widths = np.diff(edges[: k + 1])
    head = np.where(widths > 0, c[:k] * widths, 0.0).sum()
    tail = c[k] * (u - edges[k]) if u > edges[k] else 0.0
    return float(head + tail)


def lambda_process(xi: JumpPath, tau: RateFunction, m: float, t: float) -> float:
    """Tagged largest-fragment mass m*exp(-xi(rho(t))); 0 once rho is infinite."""
    rho = rho_time_change(xi, tau, m, t)
    if np.isinf(rho):
        return 0.0
    return float(m * np.exp(-xi.evaluate(rho)))

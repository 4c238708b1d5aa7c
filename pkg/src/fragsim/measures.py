"""Samplable dislocation and immigration measures.

Dislocation measures are described by their truncated total rate
R(eps) = nu(s1 < 1-eps) together with a sampler of fraction sequences from
the normalised restriction to {s1 < 1-eps}.  Infinite measures are only
ever touched through such truncations.  Immigration measures expose the
analogous pair (atom rate above a mass cut, conditional atom sampler).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .partitions import MassPartition, decreasing_rearrangement
from .subordinators import stable_jump_sequences

__all__ = [
    "DislocationMeasure",
    "BrownianDislocation",
    "StableDislocation",
    "FiniteDislocation",
    "BinaryPowerLaw",
    "ImmigrationMeasure",
    "BrownianImmigration",
    "StableImmigration",
    "PhiUndefined",
    "nu_brownian",
    "nu_stable",
    "immigration_brownian",
    "immigration_stable",
    "phi_nu",
    "phi_nu_inverse",
    "estimate_regular_variation_index",
    "rescaled_sample",
    "parse_dislocation",
    "parse_immigration",
]

QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-8, limit=400)


class PhiUndefined(ValueError):
    """nu(s1 < 1 - 1/m) vanishes, so phi has no value at this m."""


def _check_eps(eps: float):
    if not 0.0 < eps <= 0.5:
        raise ValueError(f"truncation eps must lie in (0, 1/2], got {eps}")


class DislocationMeasure:
    """Base interface; concrete measures fill in rate/sampling."""

    is_binary: bool = False
    is_conservative: bool = False

    def rate(self, eps: float) -> float:
        raise NotImplementedError

    def sample(self, eps: float, rng: np.random.Generator) -> np.ndarray:
        """One fraction sequence, descending, with s1 < 1-eps."""
        raise NotImplementedError

    def sample_s1(self, eps: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
        """n draws of the largest fraction under the truncated measure."""
        raise NotImplementedError

    def deficit_integral(self, lo: float, hi: float) -> float | None:
        """int (1-s1) nu(ds) over {lo < 1-s1 <= hi}, or None if unknown."""
        return None

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


# ---------------------------------------------------------------------------
# Brownian dislocation: nu(s1 in dx) = (2 pi x^3 (1-x)^3)^(-1/2), x in [1/2,1)

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class BrownianDislocation(DislocationMeasure):
    """Binary conservative measure of the Brownian fragmentation."""

    is_binary = True
    is_conservative = True

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return (2.0 * np.pi * x ** 3 * (1.0 - x) ** 3) ** -0.5

    def rate(self, eps: float) -> float:
        """nu(s1 < 1-eps) by adaptive quadrature.

        Substituting w = (1-x)^(-1/2) removes the endpoint blow-up, leaving
        a bounded smooth integrand on [sqrt(2), eps^(-1/2)].
        """
        _check_eps(eps)
        if eps == 0.5:
            return 0.0

        def g(w):
            x = 1.0 - 1.0 / (w * w)
            return 2.0 * (2.0 * np.pi * x ** 3) ** -0.5

        val, _ = quad(g, math.sqrt(2.0), eps ** -0.5, **QUAD_OPTS)
        return val

    def rate_closed(self, eps: float) -> float:
        """Closed form of the same truncated rate; used in hot loops."""
        _check_eps(eps)
        return _SQRT_2_OVER_PI * (1.0 - 2.0 * eps) / math.sqrt(eps * (1.0 - eps))

    def deficit_integral(self, lo: float, hi: float) -> float:
        lo = max(lo, 0.0)
        hi = min(hi, 0.5)
        if hi <= lo:
            return 0.0

        def g(w):  # w = 1 - x
            return math.sqrt(w / (1.0 - w))

        return _SQRT_2_OVER_PI * (g(hi) - g(lo))

    def sample_s1(self, eps: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
        """Rejection with proposal density prop. to (1-x)^(-3/2) on [1/2, 1-eps).

        The ratio of target to proposal is x^(-3/2), bounded by 2^(3/2)
        uniformly in eps, so acceptance never degenerates as eps -> 0.
        """
        _check_eps(eps)
        if eps >= 0.5:
            raise ValueError("measure has no mass on s1 < 1/2")
        out = np.empty(n)
        filled = 0
        span = eps ** -0.5 - math.sqrt(2.0)
        while filled < n:
            todo = n - filled
            draw = max(64, int(todo * 1.8))
            u = rng.random(draw)
            v = rng.random(draw)
            x = 1.0 - (math.sqrt(2.0) + u * span) ** -2.0
            keep = v * (2.0 ** 1.5) <= x ** -1.5
            got = x[keep][:todo]
            out[filled:filled + got.size] = got
            filled += got.size
        return out

    def sample(self, eps: float, rng: np.random.Generator) -> np.ndarray:
        x = float(self.sample_s1(eps, rng, 1)[0])
        return np.array([x, 1.0 - x])

    def describe(self) -> dict:
        return {"kind": "brownian"}


# ---------------------------------------------------------------------------
# Stable dislocation nu^beta via size-biased resampling of subordinator jumps


class StableDislocation(DislocationMeasure):
    """Dislocation measure of the stable tree with index beta in (1, 2).

    Fractions are the normalised jumps of a stable subordinator with
    Laplace exponent q^(1/beta) over [0, 1]; realisations are resampled
    from a pool with probability proportional to their total, which is the
    size-bias the defining formula prescribes.  The residual bias of the
    resampling is O(1/pool).
    """

    is_binary = False
    is_conservative = True

    def __init__(self, beta: float, jump_floor: float = 1e-6,
                 pool: int = 4096, rng: np.random.Generator | None = None):
        if not 1.0 < beta < 2.0:
            raise ValueError(f"beta must be in (1,2), got {beta}")
        if pool < 1000:
            raise ValueError("pool must be at least 1000 realisations")
        if jump_floor <= 0:
            raise ValueError("jump floor must be positive")
        self.beta = beta
        self.jump_floor = jump_floor
        self.pool = pool
        self.c_beta = beta ** 2 * gamma_fn(2.0 - 1.0 / beta) / gamma_fn(2.0 - beta)
        rng = np.random.default_rng(0) if rng is None else rng
        tail_scale = 1.0 / gamma_fn(1.0 - 1.0 / beta)
        vals, offs, totals, comp = stable_jump_sequences(
            1.0 / beta, tail_scale, 1.0, jump_floor, pool, rng
        )
        self._values = vals
        self._offsets = offs
        self._totals = totals
        self.compensation = comp  # aggregate stand-in for sub-floor jumps
        self._delta1 = np.array([
            vals[offs[i]] if offs[i + 1] > offs[i] else 0.0
            for i in range(pool)
        ])
        # the compensation entry can in principle exceed every real jump
        self._delta1 = np.maximum(self._delta1, comp)

    @property
    def pool_totals(self) -> np.ndarray:
        return self._totals

    @property
    def gamma_hint(self) -> float:
        return 1.0 - 1.0 / self.beta

    def _weights(self, eps: float) -> np.ndarray:
        _check_eps(eps)
        w = self._totals * (self._delta1 < (1.0 - eps) * self._totals)
        if w.sum() <= 0:
            raise ValueError(f"no pool realisation satisfies s1 < 1-{eps}")
        return w

    def rate(self, eps: float) -> float:
        """Monte Carlo estimate C_beta * E[T 1{Delta1/T < 1-eps}] on the pool."""
        _check_eps(eps)
        w = self._totals * (self._delta1 < (1.0 - eps) * self._totals)
        return float(self.c_beta * w.mean())

    def deficit_integral(self, lo: float, hi: float) -> float:
        frac = 1.0 - self._delta1 / self._totals
        band = (frac > lo) & (frac <= hi)
        return float(self.c_beta * np.mean((self._totals - self._delta1) * band))

    def _resample_index(self, eps: float, rng: np.random.Generator,
                        n: int) -> np.ndarray:
        w = self._weights(eps)
        p = w / w.sum()
        return rng.choice(self.pool, size=n, p=p)

    def sample(self, eps: float, rng: np.random.Generator) -> np.ndarray:
        i = int(self._resample_index(eps, rng, 1)[0])
        seq = self._values[self._offsets[i]:self._offsets[i + 1]]
        out = np.empty(seq.size + 1)
        k = np.searchsorted(-seq, -self.compensation)
        out[:k] = seq[:k]
        out[k] = self.compensation
        out[k + 1:] = seq[k:]
        return out / self._totals[i]

    def sample_s1(self, eps: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
        idx = self._resample_index(eps, rng, n)
        return self._delta1[idx] / self._totals[idx]

    def describe(self) -> dict:
        return {"kind": "stable", "beta": self.beta,
                "jump_floor": self.jump_floor, "pool": self.pool}


# ---------------------------------------------------------------------------
# Finite measures and synthetic power laws


class FiniteDislocation(DislocationMeasure):
    """Finite measure given by weighted atoms on fraction sequences."""

    def __init__(self, atoms):
        self.atoms = [(float(w), tuple(sorted(f, reverse=True)))
                      for w, f in atoms]
        for w, f in self.atoms:
            if w <= 0:
                raise ValueError("atom weights must be positive")
            if not f or f[0] >= 1.0:
                raise ValueError("atom fractions need s1 < 1")
            if sum(f) > 1.0 + 1e-9:
                raise ValueError("atom fractions must sum to at most 1")
        self.is_binary = all(len(f) <= 2 for _, f in self.atoms)
        self.is_conservative = all(abs(sum(f) - 1.0) <= 1e-9
                                   for _, f in self.atoms)

    def rate(self, eps: float) -> float:
        _check_eps(eps)
        return sum(w for w, f in self.atoms if f[0] < 1.0 - eps)

    def deficit_integral(self, lo: float, hi: float) -> float:
        return sum(w * (1.0 - f[0]) for w, f in self.atoms
                   if lo < 1.0 - f[0] <= hi)

    def _eligible(self, eps: float):
        el = [(w, f) for w, f in self.atoms if f[0] < 1.0 - eps]
        if not el:
            raise ValueError(f"measure has no mass on s1 < 1-{eps}")
        return el

    def sample(self, eps: float, rng: np.random.Generator) -> np.ndarray:
        el = self._eligible(eps)
        w = np.array([a[0] for a in el])
        i = rng.choice(len(el), p=w / w.sum())
        return np.asarray(el[i][1], dtype=float)

    def sample_s1(self, eps: float, rng: np.random.Generator,
                  n: int) -> np.ndarray:
        el = self._eligible(eps)
        w = np.array([a[0] for a in el])
        idx = rng.choice(len(el), size=n, p=w / w.sum())
        s1 = np.array([el[i][1][0] for i in range(len(el))])
        return s1[idx]

    def describe(self) -> dict:
        return {"kind": "finite", "atoms": [
            {"weight": w, "fractions": list(f)} for w, f in self.atoms]}


class BinaryPowerLaw(DislocationMeasure):
    """Synthetic binary measure with exactly R(eps) = scale * eps^(-index).

    The small-fragment fraction w = 1-s1 has tail scale*w^(-index); draws
    beyond 1/2 are clipped to an atom at (1/2, 1/2) so sequences stay
    ordered.  Intended for calibrating the regular-variation estimator.
    """

    is_binary = True
    is_conservative = True

    def __init__(self, index: float, scale: float = 1.0):
        if not 0.0 < index < 1.0:
            raise ValueError("tail index must be in (0,1)")
        self.index = index
        self.scale = scale

    def rate(self, eps: float) -> float:
        _check_eps(eps)
        return self.scale * eps ** -self.index

    def _sample_w(self, eps, rng, n):
        w = eps * rng.random(n) ** (-1.0 / self.index)
        return np.minimum(w, 0.5)

    def sample(self, eps: float, rng: np.random.Generator) -> np.ndarray:
        w = float(self._sample_w(eps, rng, 1)[0])
        return np.array([1.0 - w, w])

    def sample_s1(self, eps, rng, n):
        return 1.0 - self._sample_w(eps, rng, n)

    def deficit_integral(self, lo: float, hi: float) -> float:
        lo = max(lo, 0.0)
        hi = min(hi, 0.5)
        if hi <= lo:
            return 0.0
        # density scale*index*w^(-1-index) on the small-fragment size w
        return self.scale * self.index / (1.0 - self.index) * (
            hi ** (1.0 - self.index) - lo ** (1.0 - self.index))

    def describe(self) -> dict:
        return {"kind": "power_law", "index": self.index, "scale": self.scale}


# ---------------------------------------------------------------------------
# phi_nu and regular variation


def phi_nu(nu: DislocationMeasure, m: float) -> float:
    """1 / nu(s1 < 1 - 1/m): the macroscopic dislocation time scale at mass m."""
    if m <= 2.0:
        raise ValueError(f"phi_nu needs m > 2, got {m}")
    r = nu.rate(1.0 / m)
    if r <= 0.0:
        raise PhiUndefined(f"phi undefined at m={m}: rate(1/m) = 0")
    return 1.0 / r


def phi_nu_inverse(nu: DislocationMeasure, eps: float,
                   bracket: tuple[float, float] = (2.0 + 1e-9, 1e18)) -> float:
    """inf{m : phi_nu(m) < eps} by monotone bracketing and root finding."""
    lo, hi = bracket
    f = lambda log_m: math.log(phi_nu(nu, math.exp(log_m))) - math.log(eps)
    a, b = math.log(lo), math.log(hi)
    fa, fb = f(a), f(b)
    if fa <= 0:
        return lo
    if fb > 0:
        raise ValueError(
            f"phi_nu never drops below {eps} on bracket {bracket}; "
            "phi_nu_inverse bracket failure"
        )
    return math.exp(brentq(f, a, b, xtol=1e-12, rtol=1e-13))


def estimate_regular_variation_index(nu: DislocationMeasure,
                                     m_grid) -> float:
    """Least-squares slope of log phi_nu against log m (estimates -gamma)."""
    grid = np.asarray(sorted(m_grid), dtype=float)
    if grid.size < 4:
        raise ValueError("need at least 4 grid points")
    if grid[-1] / grid[0] < 1e3:
        raise ValueError("grid must span at least 3 decades")
    phis = np.array([phi_nu(nu, m) for m in grid])
    slope, _ = np.polyfit(np.log(grid), np.log(phis), 1)
    return float(slope)


def rescaled_sample(nu: DislocationMeasure, m: float,
                    rng: np.random.Generator) -> MassPartition:
    """Draw from nu restricted to {s1 < 1-1/m}, rescale the small fragments by m.

    This realises one atom of the measure nu_m whose convergence (after
    multiplication by tau(m)) drives the large-mass limit.
    """
    if m <= 2.0:
        raise ValueError(f"rescaled_sample needs m > 2, got {m}")
    if nu.rate(1.0 / m) <= 0.0:
        raise PhiUndefined(f"rate(1/m) = 0 at m={m}")
    s = nu.sample(1.0 / m, rng)
    return decreasing_rearrangement(m * s[1:])


# ---------------------------------------------------------------------------
# Immigration measures


class ImmigrationMeasure:
    gamma: float | None = None  # self-similarity index when known

    def atom_rate(self, delta: float) -> float:
        """Poisson rate of atoms with total mass above delta."""
        raise NotImplementedError

    def sample_atom(self, delta: float,
                    rng: np.random.Generator) -> np.ndarray:
        """Masses of one atom (descending) conditioned on total > delta."""
        raise NotImplementedError

    def mean_small_mass(self, delta: float) -> float | None:
        """Expected mass per unit time arriving in atoms below the cut."""
        return None

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class BrownianImmigration(ImmigrationMeasure):
    """I(s1 in dx) = (2 pi x^3)^(-1/2) dx on x > 0, single-mass atoms."""

    gamma = 0.5
    levy_tail_scale = _SQRT_2_OVER_PI  # atom_rate(delta) = C * delta^-1/2

    def atom_rate(self, delta: float) -> float:
        if delta <= 0:
            raise ValueError("delta must be positive")
        return math.sqrt(2.0 / (math.pi * delta))

    def sample_atom(self, delta: float,
                    rng: np.random.Generator) -> np.ndarray:
        return np.array([self.sample_masses(delta, rng, 1)[0]])

    def sample_masses(self, delta: float, rng: np.random.Generator,
                      n: int) -> np.ndarray:
        """Vectorised single-mass atoms: tail P(x > y) = sqrt(delta/y)."""
        if delta <= 0:
            raise ValueError("delta must be positive")
        return delta * rng.random(n) ** -2.0

    def mean_small_mass(self, delta: float) -> float:
        return math.sqrt(2.0 * delta / math.pi)

    def describe(self) -> dict:
        return {"kind": "brownian"}


class StableImmigration(ImmigrationMeasure):
    """Limit immigration measure of the stable fragmentations.

    An atom is x^beta times an independent jump sequence of the stable
    subordinator with exponent q^(1/beta), with x carrying intensity
    beta(beta-1)/Gamma(2-beta) * x^-beta dx.  Conditioning an atom's total
    mass above delta size-biases the sequence law by T^((beta-1)/beta) and
    pins x above (delta/T)^(1/beta); sampling draws the sequence from an
    importance-resampled pool and then x from its exact conditional Pareto
    law, so every atom clears the mass cut by construction.
    """

    def __init__(self, beta: float, jump_floor: float = 1e-5,
                 pool: int = 4096, rng: np.random.Generator | None = None):
        if not 1.0 < beta < 2.0:
            raise ValueError(f"beta must be in (1,2), got {beta}")
        self.beta = beta
        self.gamma = 1.0 - 1.0 / beta
        self.jump_floor = jump_floor
        self.pool = pool
        self.lead_const = beta * (beta - 1.0) / gamma_fn(2.0 - beta)
        rng = np.random.default_rng(0) if rng is None else rng
        tail_scale = 1.0 / gamma_fn(1.0 - 1.0 / beta)
        vals, offs, totals, comp = stable_jump_sequences(
            1.0 / beta, tail_scale, 1.0, jump_floor, pool, rng
        )
        self._values = vals
        self._offsets = offs
        self._totals = totals
        self.compensation = comp
        self._sb_weights = totals ** self.gamma
        self._sb_p = self._sb_weights / self._sb_weights.sum()

    def atom_rate(self, delta: float) -> float:
        if delta <= 0:
            raise ValueError("delta must be positive")
        # lead_const/(beta-1) * E[T^gamma] * delta^-gamma
        return float(self.lead_const / (self.beta - 1.0)
                     * self._sb_weights.mean() * delta ** -self.gamma)

    def sample_atom(self, delta: float,
                    rng: np.random.Generator) -> np.ndarray:
        i = int(rng.choice(self.pool, p=self._sb_p))
        t_total = self._totals[i]
        x_lo = (delta / t_total) ** (1.0 / self.beta)
        # conditional x-law: density prop. to x^-beta on [x_lo, inf)
        x = x_lo * rng.random() ** (-1.0 / (self.beta - 1.0))
        seq = self._values[self._offsets[i]:self._offsets[i + 1]]
        out = np.empty(seq.size + 1)
        k = np.searchsorted(-seq, -self.compensation)
        out[:k] = seq[:k]
        out[k] = self.compensation
        out[k + 1:] = seq[k:]
        return x ** self.beta * out

    def sample_atom_tops(self, delta: float, rng: np.random.Generator,
                         n: int):
        """(largest, total) for n atoms without materialising sequences."""
        idx = rng.choice(self.pool, size=n, p=self._sb_p)
        t_total = self._totals[idx]
        x = (delta / t_total) ** (1.0 / self.beta) \
            * rng.random(n) ** (-1.0 / (self.beta - 1.0))
        scale = x ** self.beta
        d1 = np.array([
            max(self._values[self._offsets[i]] if
                self._offsets[i + 1] > self._offsets[i] else 0.0,
                self.compensation)
            for i in idx
        ])
        return scale * d1, scale * t_total

    def mean_small_mass(self, delta: float) -> float:
        # int_{mass<=delta} mass I(d.) = K E[T int_0^{(d/T)^(1/b)} dx]
        #                              = K E[T^gamma] delta^(1/beta)
        return float(self.lead_const * self._sb_weights.mean()
                     * delta ** (1.0 / self.beta))

    def describe(self) -> dict:
        return {"kind": "stable", "beta": self.beta,
                "jump_floor": self.jump_floor, "pool": self.pool}


# ---------------------------------------------------------------------------
# Constructors matching the measure identifiers used in experiment configs


def nu_brownian() -> BrownianDislocation:
    return BrownianDislocation()


def nu_stable(beta: float, jump_floor: float = 1e-6, pool: int = 4096,
              rng: np.random.Generator | None = None) -> StableDislocation:
    return StableDislocation(beta, jump_floor=jump_floor, pool=pool, rng=rng)


def immigration_brownian() -> BrownianImmigration:
    return BrownianImmigration()


def immigration_stable(beta: float, jump_floor: float = 1e-5,
                       pool: int = 4096,
                       rng: np.random.Generator | None = None
                       ) -> StableImmigration:
    return StableImmigration(beta, jump_floor=jump_floor, pool=pool, rng=rng)


def _parse_kv(spec: str) -> dict:
    out = {}
    for part in spec.split(","):
        if not part:
            continue
        key, _, val = part.partition("=")
        out[key.strip()] = float(val)
    return out


def parse_dislocation(spec, rng: np.random.Generator | None = None
                      ) -> DislocationMeasure:
    """Build a dislocation measure from a config identifier.

    Accepts either a string ("brownian", "stable:beta=1.5",
    "finite:binary-half", "powerlaw:index=0.7") or an equivalent dict.
    """
    if isinstance(spec, dict):
        kind = spec["kind"]
        args = {k: v for k, v in spec.items() if k != "kind"}
    else:
        kind, _, rest = str(spec).partition(":")
        args = _parse_kv(rest) if kind != "finite" else {"name": rest}
    kind = kind.strip().lower()
    if kind == "brownian":
        return BrownianDislocation()
    if kind == "stable":
        return StableDislocation(
            beta=args["beta"],
            jump_floor=args.get("jump_floor", 1e-6),
            pool=int(args.get("pool", 4096)),
            rng=rng,
        )
    if kind == "finite":
        name = args.get("name", "binary-half")
        if name in ("binary-half", ""):
            return FiniteDislocation([(1.0, (0.5, 0.5))])
        if "atoms" in args:
            return FiniteDislocation(
                [(a["weight"], tuple(a["fractions"])) for a in args["atoms"]]
            )
        raise ValueError(f"unknown finite measure {name!r}")
    if kind in ("powerlaw", "power_law"):
        return BinaryPowerLaw(index=args["index"], scale=args.get("scale", 1.0))
    raise ValueError(f"unknown dislocation measure {spec!r}")


def parse_immigration(spec, rng: np.random.Generator | None = None
                      ) -> ImmigrationMeasure:
    if isinstance(spec, dict):
        kind = spec["kind"]
        args = {k: v for k, v in spec.items() if k != "kind"}
    else:
        kind, _, rest = str(spec).partition(":")
        args = _parse_kv(rest)
    kind = kind.strip().lower()
    if kind == "brownian":
        return BrownianImmigration()
    if kind == "stable":
        return StableImmigration(
            beta=args["beta"],
            jump_floor=args.get("jump_floor", 1e-5),
            pool=int(args.get("pool", 4096)),
            rng=rng,
        )
    raise ValueError(f"unknown immigration measure {spec!r}")

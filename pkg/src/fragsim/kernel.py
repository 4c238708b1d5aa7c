"""Batch probe kernels for power-law rates with the Brownian dislocation.

The recording engine keeps history and pays for it; these kernels walk each
fragment lineage depth-first, consume pre-drawn uniforms, and accumulate
only the statistics experiments need (top two fragments, totals, dust at
probe times).  Fragment order is irrelevant for those statistics, so the
depth-first schedule realises the same law as the event queue.

The inner loop is compiled with numba when available; the pure-Python body
is identical and consumes the identical random stream.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["probe_brownian", "probe_brownian_fi", "HAVE_NUMBA"]

_SQ2PI = math.sqrt(2.0 / math.pi)
_RESERVE = 200          # uniforms guaranteed available per event
_STATUS_DONE = 0
_STATUS_YIELD = 1       # out of randomness or stack headroom; call again


def _kernel_py(stack, stack_n, u, tau0, alpha, eps, theta, delta,
               horizon, probes, top1, top2, totals, dust_delta):
    """Process stacked fragments depth-first; resumable.

    stack rows: (mass, birth/current time).  Returns (status, stack_n).
    Yields with the in-flight fragment pushed back whenever fewer than
    _RESERVE uniforms remain or the stack is nearly full, so the caller
    can refill/grow and call again.
    """
    u_pos = 0
    u_len = u.shape[0]
    cap = stack.shape[0]
    n_probes = probes.shape[0]
    while stack_n > 0:
        stack_n -= 1
        s = stack[stack_n, 0]
        t = stack[stack_n, 1]
        while True:
            if u_pos > u_len - _RESERVE or stack_n > cap - 4:
                stack[stack_n, 0] = s
                stack[stack_n, 1] = t
                stack_n += 1
                return _STATUS_YIELD, stack_n
            a = theta / s
            if a < eps:
                a = eps
            if a >= 0.5:
                # truncated measure has no dislocations left for this mass
                j = np.searchsorted(probes, t)
                while j < n_probes:
                    totals[j] += s
                    if s > top1[j]:
                        top2[j] = top1[j]
                        top1[j] = s
                    elif s > top2[j]:
                        top2[j] = s
                    j += 1
                break
            rate = tau0 * s ** alpha * _SQ2PI * (1.0 - 2.0 * a) \
                / math.sqrt(a * (1.0 - a))
            gap = -math.log(u[u_pos]) / rate
            u_pos += 1
            t_next = t + gap
            j = np.searchsorted(probes, t)
            while j < n_probes and probes[j] < t_next:
                totals[j] += s
                if s > top1[j]:
                    top2[j] = top1[j]
                    top1[j] = s
                elif s > top2[j]:
                    top2[j] = s
                j += 1
            if t_next > horizon:
                break
            # largest fraction x: inverse-CDF proposal (1-x)^(-3/2), then
            # rejection against the x^(-3/2) factor (bounded by 2^1.5)
            span = 1.0 / math.sqrt(a) - math.sqrt(2.0)
            x = 0.5
            tries = 0
            while tries < 98:
                v = math.sqrt(2.0) + u[u_pos] * span
                u_pos += 1
                x = 1.0 - 1.0 / (v * v)
                w = u[u_pos]
                u_pos += 1
                if x ** 1.5 * w * 2.8284271247461903 <= 1.0:
                    break
                tries += 1
            child = s * (1.0 - x)
            s = s * x
            t = t_next
            if child > delta:
                stack[stack_n, 0] = child
                stack[stack_n, 1] = t
                stack_n += 1
            else:
                j = np.searchsorted(probes, t)
                if j < n_probes:
                    dust_delta[j] += child
            if s <= delta:
                j = np.searchsorted(probes, t)
                if j < n_probes:
                    dust_delta[j] += s
                break
    return _STATUS_DONE, stack_n


try:
    from numba import njit

    _kernel_jit = njit(cache=True)(_kernel_py)
    HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is a declared dependency
    _kernel_jit = _kernel_py
    HAVE_NUMBA = False


def _run_stack(stack, stack_n, rng, tau0, alpha, eps, theta, delta,
               horizon, probes, top1, top2, totals, dust_delta,
               bufsize=65536):
    while True:
        u = rng.random(bufsize)
        status, stack_n = _kernel_jit(
            stack, stack_n, u, tau0, alpha, eps, theta, delta,
            horizon, probes, top1, top2, totals, dust_delta)
        if status == _STATUS_DONE:
            return
        if stack_n > stack.shape[0] - 8:
            grown = np.empty((stack.shape[0] * 2, 2))
            grown[: stack.shape[0]] = stack
            stack = grown
        # the unconsumed tail of u is discarded on yield; consumption order
        # is fixed, so runs with equal seeds stay identical


def probe_brownian(tau0, alpha, m, probes, eps, delta_mass, resolution,
                   rng: np.random.Generator):
    """One replica: (top1, top2, total, dust) at probe times.

    Law: (tau0 * s^alpha, nu_Br)-fragmentation from mass m, dislocations
    thinned to non-principal mass >= max(eps * s, resolution).
    """
    probes = np.ascontiguousarray(np.sort(np.asarray(probes, dtype=float)))
    horizon = float(probes[-1])
    n = probes.size
    top1 = np.zeros(n)
    top2 = np.zeros(n)
    totals = np.zeros(n)
    dust_delta = np.zeros(n)
    if m <= delta_mass:
        dust_delta[0] += m
    else:
        stack = np.empty((4096, 2))
        stack[0, 0] = m
        stack[0, 1] = 0.0
        _run_stack(stack, 1, rng, tau0, alpha, eps, resolution, delta_mass,
                   horizon, probes, top1, top2, totals, dust_delta)
    return top1, top2, totals, np.cumsum(dust_delta)


def probe_brownian_fi(tau0, alpha, probes, eps, delta_mass, resolution,
                      delta_atom, rng: np.random.Generator):
    """One fragmentation-with-immigration replica under Brownian atoms.

    Atoms arrive as a Poisson process with the single-mass Brownian
    immigration intensity truncated at delta_atom; each atom fragments
    independently from its arrival time.  Returns per-probe
    (top1, top2, total, dust, sigma) where sigma is cumulative immigrant
    mass (every atom above delta_atom counts; those below the engine floor
    go straight to dust).
    """
    probes = np.ascontiguousarray(np.sort(np.asarray(probes, dtype=float)))
    horizon = float(probes[-1])
    n = probes.size
    rate = math.sqrt(2.0 / (math.pi * delta_atom))
    count = rng.poisson(rate * horizon)
    times = rng.random(count) * horizon
    masses = delta_atom * rng.random(count) ** -2.0
    order = np.argsort(times, kind="stable")
    times = times[order]
    masses = masses[order]

    csum = np.concatenate(([0.0], np.cumsum(masses)))
    sigma = csum[np.searchsorted(times, probes, side="right")]
    top1 = np.zeros(n)
    top2 = np.zeros(n)
    totals = np.zeros(n)
    dust_delta = np.zeros(n)

    small = ~(masses > delta_mass)
    if small.any():
        bins = np.searchsorted(probes, times[small])
        keep = bins < n
        np.add.at(dust_delta, bins[keep], masses[small][keep])
    big = ~small
    n_big = int(big.sum())
    if n_big:
        stack = np.empty((max(4096, 2 * n_big), 2))
        stack[:n_big, 0] = masses[big]
        stack[:n_big, 1] = times[big]
        _run_stack(stack, n_big, rng, tau0, alpha, eps, resolution,
                   delta_mass, horizon, probes, top1, top2, totals,
                   dust_delta)
    return top1, top2, totals, np.cumsum(dust_delta), sigma

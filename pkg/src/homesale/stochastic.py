"""Stochastic drivers: short rate, demand intensity, offer arrivals.

All samplers take either an integer seed or a numpy Generator.  Code
that needs several independent streams derives them from one root seed
with substream(), so adding replications never perturbs earlier ones.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "RATE_FLOOR",
    "substream",
    "CirParams",
    "RatePath",
    "DemandParams",
    "OfferEvent",
    "simulate_cir",
    "simulate_cir_ensemble",
    "demand_intensity",
    "cumulative_intensity",
    "sample_nhpp",
    "sample_offer_value",
    "sample_withdrawal",
]

# Rates are clamped here before feeding the demand function, which is
# singular at zero.
RATE_FLOOR = 1e-4

DEFAULT_DT = 1.0 / 252.0


def _encode_key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)):
        return int(part)
    raise TypeError(f"substream key parts must be str or int, got {type(part)}")


def substream(seed: int, *key) -> np.random.Generator:
    """Independent generator for (seed, key...) under a counter scheme.

    Distinct keys give statistically independent streams; the same key
    always reproduces the same stream.
    """
    entropy = [int(seed)] + [_encode_key(p) for p in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class CirParams:
    """Mean-reverting square-root short-rate dynamics."""

    kappa: float
    theta: float
    sigma: float
    r0: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.r0 > 0):
            raise ValueError("kappa, theta, r0 must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def mean_at(self, t: float) -> float:
        """Exact expectation of the rate at time t."""
        return self.theta + (self.r0 - self.theta) * math.exp(-self.kappa * t)


@dataclass
class RatePath:
    """Short-rate realization on the uniform grid t = 0, dt, 2*dt, ..."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError("values must be a non-empty 1-D array")
        if np.any(self.values < 0):
            raise ValueError("rate path must be non-negative")

    @property
    def horizon(self) -> float:
        return (self.values.size - 1) * self.dt

    @cached_property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    @cached_property
    def _cum(self) -> np.ndarray:
        # trapezoid cumulative integral of r on the native grid
        mids = (self.values[1:] + self.values[:-1]) / 2.0 * self.dt
        return np.concatenate(([0.0], np.cumsum(mids)))

    def rate_at(self, t):
        """Linear interpolation of the rate, clamped to the grid range."""
        return np.interp(t, self.times, self.values)

    def cumulative_rate(self, t):
        """Integral of the rate from 0 to t (trapezoid on the native grid)."""
        return np.interp(t, self.times, self._cum)

    def shifted(self, start: float, horizon: float) -> "RatePath":
        """Path segment [start, start + horizon] re-based to time zero."""
        n = int(math.ceil(horizon / self.dt - 1e-12)) + 1
        local_times = start + np.arange(n + 1) * self.dt
        return RatePath(self.dt, np.interp(local_times, self.times, self.values))


@dataclass(frozen=True)
class DemandParams:
    """Coefficients of the offer-intensity function k1/r + k2/L."""

    k1: float
    k2: float

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be non-negative")
        if self.k1 == 0 and self.k2 == 0:
            raise ValueError("k1 and k2 cannot both be zero")


@dataclass(frozen=True)
class OfferEvent:
    """A single buyer offer: when it arrived, its value, and how long it stands."""

    arrival: float
    value: float
    withdrawal_delay: float

    def __post_init__(self):
        if not (self.arrival >= 0 and self.withdrawal_delay > 0 and self.value > 0):
            raise ValueError(f"malformed offer {self!r}")


def simulate_cir(p: CirParams, horizon: float, dt: float = DEFAULT_DT,
                 seed=0) -> RatePath:
    """Full-truncation Euler path of the short rate, floored at zero.

    r_{n+1} = r_n + kappa*(theta - max(r_n,0))*dt + sigma*sqrt(max(r_n,0))*sqrt(dt)*Z_n,
    then clipped at 0.  Deterministic for a fixed seed.
    """
    paths = simulate_cir_ensemble(p, horizon, dt, 1, seed)
    return RatePath(dt, paths[0])


def simulate_cir_ensemble(p: CirParams, horizon: float, dt: float,
                          n_paths: int, seed=0) -> np.ndarray:
    """n_paths independent Euler paths, shape (n_paths, n_steps + 1)."""
    if not (horizon >= dt > 0):
        raise ValueError(f"need horizon >= dt > 0, got horizon={horizon}, dt={dt}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    rng = _as_rng(seed)
    n_steps = int(math.ceil(horizon / dt - 1e-12))
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = p.r0
    sdt = math.sqrt(dt)
    cur = np.full(n_paths, p.r0)
    for k in range(n_steps):
        pos = np.maximum(cur, 0.0)
        cur = cur + p.kappa * (p.theta - pos) * dt + p.sigma * np.sqrt(pos) * sdt \
            * rng.standard_normal(n_paths)
        np.maximum(cur, 0.0, out=cur)
        out[:, k + 1] = cur
    return out


def demand_intensity(r, L, d: DemandParams):
    """Offer arrival intensity k1/r + k2/L; decreasing in both arguments.

    Rejects non-positive r or L outright -- clamping rates that touch
    zero (see RATE_FLOOR) is the caller's responsibility.
    """
    r = np.asarray(r, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(r <= 0) or np.any(L <= 0):
        raise ValueError("demand_intensity needs r > 0 and L > 0")
    out = d.k1 / r + d.k2 / L
    return float(out) if out.ndim == 0 else out


def cumulative_intensity(intensity: Callable, t: float, n_nodes: int = 201) -> float:
    """Integral of the intensity over [0, t] by composite Simpson."""
    from .quadrature import composite_simpson

    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return 0.0
    return composite_simpson(intensity, 0.0, t, n_nodes)


def sample_nhpp(intensity: Callable, horizon: float, intensity_bound: float,
                seed=0) -> np.ndarray:
    """Arrival times of a non-homogeneous Poisson process on [0, horizon].

    Thinning of a dominating homogeneous Poisson(intensity_bound)
    stream: candidates are kept with probability intensity(t)/bound.
    The bound must dominate the intensity everywhere; a detected
    violation aborts rather than silently under-sampling.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    if not (intensity_bound > 0) or not math.isfinite(intensity_bound):
        raise ValueError(f"intensity_bound must be positive and finite, got {intensity_bound}")
    rng = _as_rng(seed)
    n_cand = rng.poisson(intensity_bound * horizon)
    cands = np.sort(rng.uniform(0.0, horizon, n_cand))
    u = rng.uniform(0.0, 1.0, n_cand)
    vals = np.asarray(intensity(cands), dtype=float)
    if vals.shape != cands.shape:
        vals = np.array([float(intensity(c)) for c in cands])
    bad = vals > intensity_bound * (1.0 + 1e-12)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"intensity {vals[i]:.6g} exceeds bound {intensity_bound:.6g} at t={cands[i]:.6g}")
    return cands[u * intensity_bound < vals]


def sample_offer_value(p_min: float, p_max: float, seed=0, size=None):
    """Uniform offer value(s) on (p_min, p_max)."""
    if not (p_max > p_min):
        raise ValueError("need p_max > p_min")
    rng = _as_rng(seed)
    out = rng.uniform(p_min, p_max, size)
    return float(out) if size is None else out


def sample_withdrawal(mu: float, seed=0, size=None):
    """Exponential withdrawal delay(s) with mean 1/mu."""
    if not (mu > 0):
        raise ValueError("need mu > 0")
    rng = _as_rng(seed)
    out = rng.exponential(1.0 / mu, size)
    return float(out) if size is None else out

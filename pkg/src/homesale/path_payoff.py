"""Expected discounted payoffs along a realized rate path.

The offer stream is a non-homogeneous Poisson process whose intensity is
driven by the rate path and the (non-increasing) list schedule.  The
three conditional payoff evaluations cover a decaying list price, a
constant list price, and no list price at all; each integrates the
published probability structure with nested composite Simpson rules.
Expectations over random rate paths are plain Monte Carlo averages of
the conditional values.

The rate integral inside the discount factor uses the path's native
grid (trapezoid), so conditional values carry an O(dt^2) path
discretization error on top of the quadrature error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import simpson_nodes
from .stochastic import (DEFAULT_DT, RATE_FLOOR, CirParams, DemandParams,
                         RatePath, simulate_cir, substream)

__all__ = [
    "UniformOffers",
    "GenericOffers",
    "ExponentialWithdrawals",
    "NoWithdrawals",
    "PathContext",
    "below_list_probability",
    "surviving_offer_tail",
    "crossing_survival",
    "conditional_payoff_changing_list",
    "conditional_payoff_constant_list",
    "conditional_payoff_no_list",
    "conditional_payoff",
    "expected_payoff",
]

DEFAULT_NODES = 201

# Treat F(L) this close to one as "no offer can beat the list here".
_SATURATED = 1.0 - 1e-12


@dataclass(frozen=True)
class UniformOffers:
    """Offer values uniform on (p_min, p_max)."""

    p_min: float
    p_max: float

    def __post_init__(self):
        if not (self.p_max > self.p_min > 0):
            raise ValueError("need p_max > p_min > 0")

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.p_min)
                       / (self.p_max - self.p_min), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.p_min) & (x <= self.p_max)
        return np.where(inside, 1.0 / (self.p_max - self.p_min), 0.0)

    def mean_above(self, cut):
        """E[value | value >= cut] for cut < p_max."""
        lo = np.maximum(np.asarray(cut, dtype=float), self.p_min)
        return (lo + self.p_max) / 2.0

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.p_min, self.p_max, size)


@dataclass(frozen=True)
class GenericOffers:
    """Pluggable offer-value distribution given by its CDF and density."""

    cdf_fn: Callable
    pdf_fn: Callable
    p_min: float
    p_max: float
    sampler: Callable = None

    def cdf(self, x):
        return np.asarray(self.cdf_fn(np.asarray(x, dtype=float)), dtype=float)

    def pdf(self, x):
        return np.asarray(self.pdf_fn(np.asarray(x, dtype=float)), dtype=float)

    def sample(self, rng: np.random.Generator, size=None):
        if self.sampler is None:
            raise ValueError("this offer distribution has no sampler attached")
        return self.sampler(rng, size)


@dataclass(frozen=True)
class ExponentialWithdrawals:
    """Standing offers retract after an Exponential(mu) delay."""

    mu: float

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError("mu must be positive")

    def cdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u > 0, -np.expm1(-self.mu * u), 0.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.mu, size)


class NoWithdrawals:
    """Offers never retract."""

    def cdf(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    def sample(self, rng: np.random.Generator, size=None):
        return np.full(size if size is not None else (), np.inf)


@dataclass
class PathContext:
    """Everything a conditional payoff evaluation needs.

    list_schedule maps elapsed time to the posted list price; it must be
    non-increasing with values >= reservation, vectorized over numpy
    arrays.  Rates feeding the demand function are clamped below at
    rate_floor because the intensity is singular at zero.
    """

    path: RatePath
    list_schedule: Callable
    offers: UniformOffers | GenericOffers
    withdrawals: ExponentialWithdrawals | NoWithdrawals
    reservation: float
    demand: DemandParams
    rate_floor: float = RATE_FLOOR

    def __post_init__(self):
        L0 = float(self.list_schedule(0.0))
        if not (L0 >= self.reservation > 0):
            raise ValueError(f"need L(0) >= reservation > 0, got L0={L0}, R={self.reservation}")

    @property
    def initial_list(self) -> float:
        return float(self.list_schedule(0.0))

    def intensity(self, a):
        r = np.maximum(self.path.rate_at(a), self.rate_floor)
        L = np.asarray(self.list_schedule(a), dtype=float)
        return self.demand.k1 / r + self.demand.k2 / L


def _a_grid(ctx: PathContext, t: float, n_nodes: int):
    a, w = simpson_nodes(0.0, t, n_nodes)
    lam = np.asarray(ctx.intensity(a), dtype=float)
    big_lam = float(w @ lam)
    return a, w, lam, big_lam


def below_list_probability(ctx: PathContext, t: float,
                           n_nodes: int = DEFAULT_NODES) -> float:
    """Chance that a single offer arriving in [0, t] is below the list.

    Arrival times condition to density lam(a)/Lambda(t), so this is
    (1/Lambda) Int lam(a) F(L(a)) da.
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    a, w, lam, big_lam = _a_grid(ctx, t, n_nodes)
    if big_lam <= 0.0:
        raise ValueError("cumulative intensity is zero; probability undefined")
    p = float(w @ (lam * ctx.offers.cdf(ctx.list_schedule(a)))) / big_lam
    return min(max(p, 0.0), 1.0)


def surviving_offer_tail(ctx: PathContext, t: float, y,
                         n_nodes: int = DEFAULT_NODES):
    """Tail probability that one offer is in [R, L(arrival)), still
    standing at t, and worth more than y.

    Vectorized over y; identically zero for y >= L(0).
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr < 0):
        raise ValueError("y must be non-negative")
    a, w, lam, big_lam = _a_grid(ctx, t, n_nodes)
    if big_lam <= 0.0:
        raise ValueError("cumulative intensity is zero; probability undefined")
    L_a = np.asarray(ctx.list_schedule(a), dtype=float)
    standing = 1.0 - ctx.withdrawals.cdf(t - a)
    band = (ctx.offers.cdf(np.maximum(L_a[None, :], y_arr[:, None]))
            - ctx.offers.cdf(np.maximum(ctx.reservation, y_arr))[:, None])
    out = (lam[None, :] * standing[None, :] * band) @ w / big_lam
    out = np.where(y_arr >= ctx.initial_list, 0.0, np.clip(out, 0.0, 1.0))
    return float(out[0]) if np.isscalar(y) or np.asarray(y).ndim == 0 else out


def crossing_survival(ctx: PathContext, t: float, n: int,
                      n_nodes: int = DEFAULT_NODES) -> float:
    """Chance that none of n offers beat the list price at arrival."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 1.0
    return below_list_probability(ctx, t, n_nodes) ** n


def _best_standing_integral(t: float, L0: float, breaks: list[float],
                            big_lam: float, tail_fn: Callable,
                            n_nodes: int) -> float:
    """Int_0^{L0} exp(-Lambda * tail(y)) dy with nodes pinned at the kinks.

    The tail is constant in y below the first break (the reservation
    price), so that panel is exact; remaining panels get a Simpson grid
    each.
    """
    pts = sorted({0.0, *[min(max(b, 0.0), L0) for b in breaks], L0})
    total = 0.0
    first = True
    for lo, hi in zip(pts, pts[1:]):
        if hi - lo < 1e-12:
            continue
        if first:
            total += (hi - lo) * math.exp(-big_lam * float(tail_fn(np.array([lo]))[0]))
            first = False
            continue
        y, wy = simpson_nodes(lo, hi, n_nodes)
        total += float(wy @ np.exp(-big_lam * tail_fn(y)))
    return total


def _mean_above_list(ctx: PathContext, L_a: np.ndarray, F_L: np.ndarray,
                     n_nodes: int) -> np.ndarray:
    """E[offer | offer >= L(a)] per arrival node.

    A list strictly above the offer support admits no crossing at all,
    so those arrival times contribute nothing (the inner integral over
    offer values vanishes).  A list exactly at the top of the support is
    an isolated boundary case and takes the continuous limit p_max;
    zeroing it instead would puncture the integrand and degrade the
    quadrature to first order.
    """
    p_max = ctx.offers.p_max
    out = np.zeros_like(L_a)
    beyond = L_a > p_max
    at_top = ~beyond & (F_L >= _SATURATED)
    out[at_top] = p_max
    live = ~beyond & ~at_top
    if not np.any(live):
        return out
    if hasattr(ctx.offers, "mean_above"):
        out[live] = ctx.offers.mean_above(L_a[live])
        return out
    s, ws = simpson_nodes(0.0, 1.0, n_nodes)
    lo = L_a[live]
    x = lo[:, None] + (p_max - lo)[:, None] * s[None, :]
    num = ((ctx.offers.pdf(x) * x) @ ws) * (p_max - lo)
    out[live] = num / (1.0 - F_L[live])
    return out


def conditional_payoff_changing_list(ctx: PathContext, t: float,
                                     n_nodes: int = DEFAULT_NODES) -> float:
    """Expected discounted payoff at t under a time-varying list price.

    Two branches: no offer ever beat the list (the seller keeps the best
    surviving in-band offer at t), or some offer crossed and the sale
    happened at the first crossing.  The crossing branch is evaluated
    exactly as published, which spreads the first-crossing time with
    density lam(a)/Lambda(t); the validation report quantifies the
    resulting gap against simulation rather than patching it here.
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    a, w, lam, big_lam = _a_grid(ctx, t, n_nodes)
    if big_lam <= 0.0:
        return 0.0
    L_a = np.asarray(ctx.list_schedule(a), dtype=float)
    F_L = np.asarray(ctx.offers.cdf(L_a), dtype=float)
    phi = min(max(float(w @ (lam * F_L)) / big_lam, 0.0), 1.0)
    disc_t = math.exp(-float(ctx.path.cumulative_rate(t)))
    no_cross = math.exp(big_lam * (phi - 1.0))
    L0 = ctx.initial_list
    Lt = float(ctx.list_schedule(t))
    integral = _best_standing_integral(
        t, L0, [ctx.reservation, Lt], big_lam,
        lambda y: np.atleast_1d(surviving_offer_tail(ctx, t, y, n_nodes)), n_nodes)
    best_standing = disc_t * no_cross * (L0 - integral)

    disc_a = np.exp(-np.asarray(ctx.path.cumulative_rate(a), dtype=float))
    mean_above = _mean_above_list(ctx, L_a, F_L, n_nodes)
    crossing = (1.0 - no_cross) * float(w @ (lam * disc_a * mean_above)) / big_lam
    return best_standing + crossing


def conditional_payoff_constant_list(ctx: PathContext, t: float,
                                     n_nodes: int = DEFAULT_NODES) -> float:
    """Changing-list payoff specialized to a constant list price.

    Uses L = list_schedule(0); the below-list probability collapses to
    F(L) and the survivor tail factorizes into a value band times a
    not-withdrawn weight.
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    a, w, lam, big_lam = _a_grid(ctx, t, n_nodes)
    if big_lam <= 0.0:
        return 0.0
    L = ctx.initial_list
    F_L = float(ctx.offers.cdf(np.array([L]))[0])
    standing_weight = 1.0 - float(w @ (lam * ctx.withdrawals.cdf(t - a))) / big_lam
    disc_t = math.exp(-float(ctx.path.cumulative_rate(t)))
    no_cross = math.exp(big_lam * (F_L - 1.0))

    def tail(y):
        band = (ctx.offers.cdf(np.maximum(L, y))
                - ctx.offers.cdf(np.maximum(ctx.reservation, y)))
        return band * standing_weight

    integral = _best_standing_integral(t, L, [ctx.reservation], big_lam, tail, n_nodes)
    best_standing = disc_t * no_cross * (L - integral)

    crossing = 0.0
    if F_L < _SATURATED:
        mean_above = _mean_above_list(ctx, np.array([L]), np.array([F_L]), n_nodes)[0]
        disc_a = np.exp(-np.asarray(ctx.path.cumulative_rate(a), dtype=float))
        crossing = (1.0 - no_cross) * mean_above * float(w @ (lam * disc_a)) / big_lam
    return best_standing + crossing


def conditional_payoff_no_list(ctx: PathContext, t: float,
                               n_nodes: int = DEFAULT_NODES) -> float:
    """Expected discounted payoff at t when no list price is announced.

    The seller simply keeps the best offer above the reservation price
    that is still standing at t.
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t}")
    a, w, lam, big_lam = _a_grid(ctx, t, n_nodes)
    if big_lam <= 0.0:
        return 0.0
    standing_weight = 1.0 - float(w @ (lam * ctx.withdrawals.cdf(t - a))) / big_lam
    disc_t = math.exp(-float(ctx.path.cumulative_rate(t)))
    p_max = ctx.offers.p_max

    def tail(y):
        return (1.0 - ctx.offers.cdf(np.maximum(ctx.reservation, y))) * standing_weight

    # integrand vanishes beyond the offer support, so truncate at p_max
    pts = sorted({0.0, min(ctx.reservation, p_max), p_max})
    total = 0.0
    first = True
    for lo, hi in zip(pts, pts[1:]):
        if hi - lo < 1e-12:
            continue
        if first:
            total += (hi - lo) * -math.expm1(-big_lam * float(tail(np.array([lo]))[0]))
            first = False
            continue
        y, wy = simpson_nodes(lo, hi, n_nodes)
        total += float(wy @ -np.expm1(-big_lam * tail(y)))
    return disc_t * total


_MODES = {
    "changing": conditional_payoff_changing_list,
    "constant": conditional_payoff_constant_list,
    "none": conditional_payoff_no_list,
}


def conditional_payoff(ctx: PathContext, t: float, mode: str,
                       n_nodes: int = DEFAULT_NODES) -> float:
    """Dispatch to the changing/constant/no-list conditional payoff."""
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {sorted(_MODES)}, got {mode!r}")
    return _MODES[mode](ctx, t, n_nodes)


def expected_payoff(ctx_factory: Callable[[RatePath], PathContext],
                    cir: CirParams, t: float, n_paths: int, seed: int,
                    mode: str = "changing", dt: float = None,
                    n_nodes: int = DEFAULT_NODES,
                    workers: int = 1) -> tuple[float, float]:
    """Monte Carlo mean of a conditional payoff over independent rate paths.

    ctx_factory builds the evaluation context for each simulated path.
    Returns (mean, standard error); per-path substreams are derived from
    the seed by index, so results do not depend on scheduling and adding
    paths never changes earlier ones.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {sorted(_MODES)}, got {mode!r}")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    dt = DEFAULT_DT if dt is None else dt
    conditional = _MODES[mode]

    def one(i: int) -> float:
        path = simulate_cir(cir, max(t, dt), dt, substream(seed, "payoff-path", i))
        return conditional(ctx_factory(path), t, n_nodes)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = np.fromiter(pool.map(one, range(n_paths)), dtype=float, count=n_paths)
    else:
        vals = np.fromiter((one(i) for i in range(n_paths)), dtype=float, count=n_paths)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_paths))
    return mean, stderr

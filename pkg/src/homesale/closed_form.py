"""Closed-form expected discounted payoffs for a seller of an illiquid asset.

Constant-rate, constant-intensity setting.  Buyers arrive as a Poisson
stream with intensity lam, offer values are iid Uniform(p_min, p_max),
and each standing offer is withdrawn after an independent Exponential(mu)
delay.  The seller either waits a horizon T and takes the best surviving
offer above a reservation price, or additionally posts a list price and
sells immediately on the first offer that meets it.

All functions are pure scalar maps and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "MarketParams",
    "SellerPolicy",
    "withdrawal_fraction",
    "auxiliary_payoff",
    "thinned_payoff",
    "listed_payoff",
    "listed_payoff_exact",
    "asymptotic_listed_payoff",
    "expected_utility",
]

# Below this, x-dividing expressions switch to their series expansions.
SMALL_ARG = 1e-4


def _require_finite(**kwargs) -> None:
    for name, v in kwargs.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class MarketParams:
    """Static market environment.

    lam   -- offer arrivals per unit time
    mu    -- withdrawals per unit time
    r     -- continuously compounded interest rate per unit time
    p_min -- lower edge of the offer-value support
    p_max -- upper edge of the offer-value support
    """

    lam: float
    mu: float
    r: float
    p_min: float
    p_max: float

    def __post_init__(self):
        _require_finite(lam=self.lam, mu=self.mu, r=self.r,
                        p_min=self.p_min, p_max=self.p_max)
        if self.lam < 0 or self.mu < 0 or self.r < 0:
            raise ValueError("rates lam, mu, r must be non-negative")
        if not (self.p_max > self.p_min > 0):
            raise ValueError(f"need p_max > p_min > 0, got ({self.p_min}, {self.p_max})")


@dataclass(frozen=True)
class SellerPolicy:
    """Seller-side controls: reservation price, list price, impatience.

    zeta is the list-decay rate used by the market simulator; zeta == 0
    means a constant list price.
    """

    reservation: float
    list_price: float
    gamma: float
    zeta: float = 1.0

    def __post_init__(self):
        _require_finite(reservation=self.reservation, list_price=self.list_price,
                        gamma=self.gamma, zeta=self.zeta)
        if self.reservation <= 0:
            raise ValueError("reservation must be positive")
        if self.list_price < self.reservation:
            raise ValueError("list price must not be below the reservation price")
        if self.gamma < 0 or self.zeta < 0:
            raise ValueError("gamma and zeta must be non-negative")


def withdrawal_fraction(T: float, mu: float) -> float:
    """Probability that an offer with uniform arrival on [0, T] is gone by T.

    Equals 1 - (1 - exp(-mu T))/(mu T).  A direct evaluation cancels
    catastrophically for small mu*T, so below SMALL_ARG the series
    x/2 - x^2/6 is used instead; withdrawal_fraction(T, 0) == 0.
    """
    _require_finite(T=T, mu=mu)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    if mu < 0:
        raise ValueError(f"mu must be non-negative, got {mu}")
    x = mu * T
    if x < SMALL_ARG:
        return x / 2.0 - x * x / 6.0
    return 1.0 + math.expm1(-x) / x


def _em1mx_over_x(x: float) -> float:
    """(exp(x) - 1 - x)/x, series-switched near zero."""
    if abs(x) < SMALL_ARG:
        return x * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    return (math.expm1(x) - x) / x


def auxiliary_payoff(T: float, m: MarketParams) -> float:
    """Expected discounted payoff when every offer beats the reservation price.

    Offers surviving to T form a thinned Poisson stream: each of the
    Poisson(lam*T) arrivals is still standing with probability
    1 - withdrawal_fraction, independently of its value.  With
    x = lam*T*(1 - withdrawal_fraction) the expected maximum of the
    survivors' uniform values, discounted to time zero, collapses to

        exp(-r*T - x) * (p_max*(e^x - 1) - (p_max - p_min)*(e^x - 1 - x)/x)

    which is the Poisson-summed rank expansion in closed form.  The
    (e^x - 1 - x)/x factor is series-switched near x = 0, so the
    lam*T -> 0 and mu*T -> 0 limits are continuous; no surviving offer
    pays zero.
    """
    _require_finite(T=T)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    f = withdrawal_fraction(T, m.mu)
    x = m.lam * T * (1.0 - f)
    if x == 0.0:
        return 0.0
    spread = m.p_max - m.p_min
    return math.exp(-m.r * T - x) * (m.p_max * math.expm1(x) - spread * _em1mx_over_x(x))


def thinned_payoff(T: float, m: MarketParams, R: float) -> float:
    """Expected discounted payoff with a private reservation price R, no list.

    Offers below R never matter, so the stream thins to intensity
    lam*(p_max - R)/(p_max - p_min) with values uniform on (R, p_max).
    """
    _require_finite(R=R)
    if not (m.p_min <= R <= m.p_max):
        raise ValueError(f"R={R} outside offer support [{m.p_min}, {m.p_max}]")
    if R == m.p_max:
        return 0.0
    lam_thin = m.lam * (m.p_max - R) / (m.p_max - m.p_min)
    return auxiliary_payoff(T, MarketParams(lam_thin, m.mu, m.r, R, m.p_max))


def _below_list_payoff(T: float, m: MarketParams, R: float, L: float) -> float:
    """Payoff of the in-band offer stream, values in (R, L)."""
    x = (L - R) / (m.p_max - m.p_min)
    if x <= 0.0:
        return 0.0
    return auxiliary_payoff(T, MarketParams(m.lam * x, m.mu, m.r, R, L))


def _check_prices(m: MarketParams, R: float, L: float) -> None:
    _require_finite(R=R, L=L)
    if not (m.p_min <= R <= L <= m.p_max):
        raise ValueError(
            f"need p_min <= R <= L <= p_max, got p_min={m.p_min}, R={R}, L={L}, p_max={m.p_max}")


def listed_payoff(T: float, m: MarketParams, R: float, L: float) -> float:
    """Expected discounted payoff with a public list price L and private R.

    Two regions: an offer at or above L sells immediately at its arrival
    (the first such arrival is Exponential(lam*y) with
    y = (p_max - L)/(p_max - p_min)), otherwise the seller runs the
    in-band auction at T.  The above-list region discounts with the
    unconditional factor lam*y/(lam*y + r) times the crossing probability,
    which overstates the discount for crossings that land beyond T; see
    listed_payoff_exact for the exact truncated expectation.
    """
    _check_prices(m, R, L)
    _require_finite(T=T)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    y = (m.p_max - L) / (m.p_max - m.p_min)
    lam_y = m.lam * y
    if lam_y > 0.0:
        crossing = -math.expm1(-lam_y * T) * ((m.p_max + L) / 2.0) * (lam_y / (lam_y + m.r))
    else:
        crossing = 0.0
    return crossing + math.exp(-lam_y * T) * _below_list_payoff(T, m, R, L)


def listed_payoff_exact(T: float, m: MarketParams, R: float, L: float) -> float:
    """listed_payoff with the above-list discount evaluated jointly.

    Replaces P{cross by T} * E[discount] by E[discount * 1{cross by T}]
    = lam*y*(1 - exp(-(lam*y + r)*T))/(lam*y + r).  Coincides with
    listed_payoff at r = 0 and as T -> inf.
    """
    _check_prices(m, R, L)
    _require_finite(T=T)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    y = (m.p_max - L) / (m.p_max - m.p_min)
    lam_y = m.lam * y
    if lam_y > 0.0:
        crossing = ((m.p_max + L) / 2.0) * lam_y * -math.expm1(-(lam_y + m.r) * T) / (lam_y + m.r)
    else:
        crossing = 0.0
    return crossing + math.exp(-lam_y * T) * _below_list_payoff(T, m, R, L)


def asymptotic_listed_payoff(m: MarketParams, L: float) -> float:
    """Long-horizon limit of the listed payoff: ((p_max+L)/2) * lam*y/(lam*y+r)."""
    _require_finite(L=L)
    if L > m.p_max:
        raise ValueError(f"L={L} above p_max={m.p_max}")
    lam_y = m.lam * (m.p_max - L) / (m.p_max - m.p_min)
    if lam_y + m.r == 0.0:
        return 0.0
    return ((m.p_max + L) / 2.0) * lam_y / (lam_y + m.r)


def expected_utility(T: float, m: MarketParams, R: float, L: float,
                     gamma: float, exact: bool = False) -> float:
    """Impatience-discounted expected payoff exp(-gamma*T) * listed payoff.

    exact selects listed_payoff_exact as the base; the default matches
    the plain listed payoff used for the curve figures.
    """
    _require_finite(gamma=gamma)
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    base = listed_payoff_exact(T, m, R, L) if exact else listed_payoff(T, m, R, L)
    return math.exp(-gamma * T) * base

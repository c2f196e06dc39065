"""Closed forms for logarithmic utility, with and without portfolio bounds.

Bounds are passed as ``IntervalBounds`` or an ``(a, b)`` tuple; ``None`` means
unconstrained. ``m = 0`` switches to the classical (non-exploratory) formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketParams, merton_fraction, sharpe_ratio
from .stats import PI, GaussianPolicy, TruncatedGaussianPolicy, std_normal_cdf, trunc_ratios


@dataclass(frozen=True)
class IntervalBounds:
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.a) and math.isinf(self.b)


def as_bounds(bounds) -> IntervalBounds:
    if bounds is None:
        return IntervalBounds()
    if isinstance(bounds, IntervalBounds):
        return bounds
    a, b = bounds
    return IntervalBounds(float(a), float(b))


def _check_x(x):
    if np.any(np.asarray(x) <= 0):
        raise ValueError("log utility needs positive wealth")


def _check_m(m):
    if m < 0:
        raise ValueError(f"exploration weight must be nonnegative, got {m}")


def merton_value(t, x, mkt: MarketParams, T):
    _check_x(x)
    return np.log(x) + (mkt.r + 0.5 * sharpe_ratio(mkt) ** 2) * (T - t)


def _entropy_rate(m, mkt):
    # (m/2) ln(2 pi m / sigma^2): the entropy bonus net of the variance penalty
    return 0.5 * m * math.log(2.0 * PI * m / mkt.sigma**2)


def log_value_unconstrained(t, x, m, mkt: MarketParams, T):
    _check_m(m)
    if m == 0:
        return merton_value(t, x, mkt, T)
    _check_x(x)
    return merton_value(t, x, mkt, T) + _entropy_rate(m, mkt) * (T - t)


def log_policy_unconstrained(mkt: MarketParams, m) -> GaussianPolicy:
    if not m > 0:
        raise ValueError("the exploratory policy needs m > 0 (m = 0 is a point mass)")
    return GaussianPolicy(merton_fraction(mkt), m / mkt.sigma**2)


def log_policy_constrained(mkt: MarketParams, m, bounds) -> TruncatedGaussianPolicy:
    bd = as_bounds(bounds)
    g = log_policy_unconstrained(mkt, m)
    return TruncatedGaussianPolicy(g.mean, g.var, bd.a, bd.b)


def z_ab(m, mkt: MarketParams, bounds) -> float:
    bd = as_bounds(bounds)
    if bd.unbounded:
        return 1.0
    _, _, Z = trunc_ratios(log_policy_constrained(mkt, m, bd))
    return float(Z)


def log_value_constrained(t, x, m, mkt: MarketParams, T, bounds):
    _check_m(m)
    if m == 0:
        return constrained_value_no_exploration(t, x, mkt, T, bounds)
    return log_value_unconstrained(t, x, m, mkt, T) + m * math.log(z_ab(m, mkt, bounds)) * (T - t)


def constrained_merton(mkt: MarketParams, bounds) -> float:
    bd = as_bounds(bounds)
    return float(np.clip(merton_fraction(mkt), bd.a, bd.b))


def _clip_penalty(mkt, bounds) -> float:
    """f(pi0) = sigma^2/2 (pi0 - pi^M)^2: drift lost by clipping the Merton fraction."""
    p0 = constrained_merton(mkt, bounds)
    return 0.5 * mkt.sigma**2 * (p0 - merton_fraction(mkt)) ** 2


def constrained_value_no_exploration(t, x, mkt: MarketParams, T, bounds):
    _check_x(x)
    p0 = constrained_merton(mkt, bounds)
    rate = mkt.r + (mkt.mu - mkt.r) * p0 - 0.5 * p0**2 * mkt.sigma**2
    return np.log(x) + rate * (T - t)


def exploration_premium_log(t, m, mkt: MarketParams, T, bounds):
    """Exploratory constrained value minus the classical constrained value (x-free)."""
    _check_m(m)
    if m == 0:
        return 0.0 * (T - t)
    tau = T - t
    return (_entropy_rate(m, mkt) + m * math.log(z_ab(m, mkt, bounds)) + _clip_penalty(mkt, bounds)) * tau


def exploration_cost_unconstrained(m, T):
    _check_m(m)
    return m * T / 2.0


def exploration_cost_constrained(m, T, mkt: MarketParams, bounds):
    """Classical value minus (exploratory value net of the accumulated entropy bonus).

    Matches mT/2 + mT (A phi(A) - B phi(B)) / (2Z) whenever the Merton
    fraction is inside the bounds; otherwise the clipping loss of the
    classical problem is subtracted as well.
    """
    _check_m(m)
    if m == 0:
        return 0.0
    bd = as_bounds(bounds)
    _, second, _ = trunc_ratios(log_policy_constrained(mkt, m, bd))
    return m * T / 2.0 + m * T * float(second) / 2.0 - _clip_penalty(mkt, bd) * T


def standardized_bounds(m, mkt: MarketParams, bounds):
    """(A, B) = ((a - pi^M) sigma / sqrt(m), (b - pi^M) sigma / sqrt(m))."""
    bd = as_bounds(bounds)
    s = mkt.sigma / math.sqrt(m)
    pm = merton_fraction(mkt)
    return (bd.a - pm) * s, (bd.b - pm) * s


def z_ab_direct(m, mkt: MarketParams, bounds) -> float:
    """Phi(B) - Phi(A) written out literally; a cross-check for :func:`z_ab`."""
    A, B = standardized_bounds(m, mkt, bounds)
    return std_normal_cdf(B) - std_normal_cdf(A)

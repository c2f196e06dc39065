"""Closed forms for quadratic utility U(x) = K x - eps x^2 / 2.

Actions here are dollar amounts. Portfolio bounds are affine in wealth,
``[-pi^M x + a0(t), -pi^M x + b0(t)]``, with the offsets ``a0``, ``b0`` given as
piecewise-linear tables in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .market import MarketParams, merton_fraction, sharpe_ratio
from .stats import PI, Z_FLOOR, DegenerateSupportError, GaussianPolicy, TruncatedGaussianPolicy, normal_mass, std_normal_pdf


@dataclass(frozen=True)
class QuadUtilityParams:
    K: float = 1.0
    eps: float = 1.0

    def __post_init__(self):
        if not (self.K > 0 and self.eps > 0):
            raise ValueError("K and eps must be positive")

    @property
    def bliss(self) -> float:
        return self.K / self.eps

    def utility(self, x):
        return self.K * x - 0.5 * self.eps * np.asarray(x) ** 2


def _as_table(v):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    return arr


@dataclass(frozen=True)
class AffineBounds:
    """Offsets a0(t) < b0(t) as breakpoint tables; a single value is a constant."""

    a0: tuple | float = -math.inf
    b0: tuple | float = math.inf
    times: tuple | None = None

    def __post_init__(self):
        a, b = _as_table(self.a0), _as_table(self.b0)
        if a.shape != b.shape:
            raise ValueError("a0 and b0 tables must have the same length")
        if len(a) > 1:
            if self.times is None or len(self.times) != len(a):
                raise ValueError("multi-entry tables need matching breakpoint times")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("breakpoint times must increase")
            if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise ValueError("time-varying offsets must be finite")
        if np.any(a >= b):
            raise ValueError("need a0(t) < b0(t)")

    @property
    def unbounded(self) -> bool:
        return bool(np.all(np.isneginf(_as_table(self.a0))) and np.all(np.isposinf(_as_table(self.b0))))

    def _eval(self, table, t):
        tab = _as_table(table)
        if len(tab) == 1:
            return tab[0] + 0.0 * np.asarray(t, dtype=float)
        return np.interp(t, self.times, tab)

    def lower_offset(self, t):
        return self._eval(self.a0, t)

    def upper_offset(self, t):
        return self._eval(self.b0, t)


def _affine(affine) -> AffineBounds:
    return AffineBounds() if affine is None else affine


def _target(t, mkt, quad, T):
    # discounted bliss amount: the policy mean is (target - x) pi^M
    return quad.bliss * np.exp(-mkt.r * (T - np.asarray(t, dtype=float)))


def quad_policy_var(t, mkt: MarketParams, quad: QuadUtilityParams, m, T):
    rho2 = sharpe_ratio(mkt) ** 2
    return m / (quad.eps * mkt.sigma**2) * np.exp((rho2 - 2.0 * mkt.r) * (T - np.asarray(t, dtype=float)))


def quad_q_tilde(t, m, mkt: MarketParams, quad: QuadUtilityParams, affine, T):
    """Standardised affine offsets (Q_a, Q_b) at time t."""
    aff = _affine(affine)
    shift = _target(t, mkt, quad, T) * merton_fraction(mkt)
    scale = 1.0 / np.sqrt(quad_policy_var(t, mkt, quad, m, T))
    with np.errstate(invalid="ignore"):
        qa = (aff.lower_offset(t) - shift) * scale
        qb = (aff.upper_offset(t) - shift) * scale
    return qa, qb


def quad_f(t, m, mkt: MarketParams, quad: QuadUtilityParams, affine, T):
    qa, qb = quad_q_tilde(t, m, mkt, quad, affine, T)
    f = normal_mass(qa, qb)
    return f.item() if np.ndim(f) == 0 else f


def _simpson_grid(t, T, n):
    if n < 2 or n % 2:
        raise ValueError("Simpson needs an even number of panels")
    return np.linspace(t, T, n + 1)


def quad_F(t, m, mkt, quad, affine, T, quadrature_n=200):
    """F(t, m) = integral over [t, T] of ln f(s, m) ds."""
    if affine is None or affine.unbounded or t >= T:
        return 0.0
    s = _simpson_grid(t, T, quadrature_n)
    f = np.asarray(quad_f(s, m, mkt, quad, affine, T))
    if np.any(f < Z_FLOOR):
        raise DegenerateSupportError("affine window carries no policy mass")
    return float(integrate.simpson(np.log(f), x=s))


def quad_value_classical(t, x, mkt: MarketParams, quad: QuadUtilityParams, T):
    tau = T - np.asarray(t, dtype=float)
    rho2 = sharpe_ratio(mkt) ** 2
    r = mkt.r
    return (
        -0.5 * quad.eps * x**2 * np.exp(-(rho2 - 2 * r) * tau)
        + quad.K * x * np.exp(-(rho2 - r) * tau)
        + quad.K**2 / (2 * quad.eps) * (1 - np.exp(-rho2 * tau))
    )


def quad_exploration_rate(t, m, mkt: MarketParams, quad: QuadUtilityParams, T):
    """x-free exploratory terms of the unconstrained value."""
    if m == 0:
        return 0.0 * np.asarray(t, dtype=float)
    tau = T - np.asarray(t, dtype=float)
    rho2 = sharpe_ratio(mkt) ** 2
    return 0.25 * m * (rho2 - 2 * mkt.r) * tau**2 + 0.5 * m * math.log(2 * PI * m / (quad.eps * mkt.sigma**2)) * tau


def quad_value_unconstrained(t, x, m, mkt: MarketParams, quad: QuadUtilityParams, T):
    return quad_value_classical(t, x, mkt, quad, T) + quad_exploration_rate(t, m, mkt, quad, T)


def quad_value_constrained(t, x, m, mkt: MarketParams, quad: QuadUtilityParams, affine, T, quadrature_n=200):
    out = quad_value_unconstrained(t, x, m, mkt, quad, T)
    if m > 0:
        out = out + m * quad_F(t, m, mkt, quad, affine, T, quadrature_n)
    return out


def quad_policy(t, x, mkt: MarketParams, quad: QuadUtilityParams, m, affine=None, T=1.0):
    """Optimal amount policy at (t, x); truncated when affine bounds are finite."""
    if not m > 0:
        raise ValueError("the exploratory policy needs m > 0")
    pm = merton_fraction(mkt)
    mean = (_target(t, mkt, quad, T) - x) * pm
    var = quad_policy_var(t, mkt, quad, m, T) * np.ones_like(mean)
    if affine is None or affine.unbounded:
        return GaussianPolicy(mean, var)
    lo = -pm * x + affine.lower_offset(t)
    hi = -pm * x + affine.upper_offset(t)
    return TruncatedGaussianPolicy(mean, var, lo, hi)


def quad_exploration_cost(m, T, mkt: MarketParams, quad: QuadUtilityParams, affine, quadrature_n=200):
    if m == 0:
        return 0.0
    if affine is None or affine.unbounded:
        return m * T / 2.0
    s = _simpson_grid(0.0, T, quadrature_n)
    qa, qb = quad_q_tilde(s, m, mkt, quad, affine, T)
    f = normal_mass(qa, qb)
    if np.any(f < Z_FLOOR):
        raise DegenerateSupportError("affine window carries no policy mass")
    ya = np.where(np.isfinite(qa), qa, 0.0) * std_normal_pdf(qa)
    yb = np.where(np.isfinite(qb), qb, 0.0) * std_normal_pdf(qb)
    return m * T / 2.0 + m * float(integrate.simpson((ya - yb) / f, x=s)) / 2.0


def quad_mean_terminal_wealth(x0, mkt: MarketParams, quad: QuadUtilityParams, T):
    rho2 = sharpe_ratio(mkt) ** 2
    return quad.bliss + (x0 * math.exp(mkt.r * T) - quad.bliss) * math.exp(-rho2 * T)


def quad_exploratory_sde_coeffs(t, x, mkt: MarketParams, quad: QuadUtilityParams, m, affine=None, T=1.0):
    """Absolute (drift, volatility) of optimally explored wealth at (t, x)."""
    from .market import policy_moments

    pol = quad_policy(t, x, mkt, quad, m, affine, T)
    m1, m2 = policy_moments(pol)
    return mkt.r * x + (mkt.mu - mkt.r) * m1, mkt.sigma * np.sqrt(m2)

"""Gaussian and truncated-Gaussian algebra for exploratory policies.

All functions accept scalars or numpy arrays; policy fields broadcast, so a
single ``TruncatedGaussianPolicy`` can describe one distribution per path.
Infinite bounds are plain ``-inf``/``+inf`` floats and every formula takes
the analytic limit (phi(+-inf) = 0, y*phi(y) -> 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

PI = math.pi  # the circle constant; never a portfolio fraction
LOG_2PI = math.log(2.0 * PI)
NEG_INF = -math.inf
POS_INF = math.inf

# Z below this means the window sits so far in a tail that nothing is reliable.
Z_FLOOR = 1e-300


class DegenerateSupportError(ValueError):
    """Truncation window carries (numerically) zero Gaussian mass."""


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float)
    return x.item() if x.ndim == 0 else x


def std_normal_pdf(y):
    """Standard normal density; returns 0 at +-inf."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-0.5 * y * y) / math.sqrt(2.0 * PI)
    return _scalar_or_array(out)


def std_normal_cdf(y):
    """Standard normal cdf (scipy's ndtr, accurate to ~1e-16 absolute)."""
    return _scalar_or_array(special.ndtr(np.asarray(y, dtype=float)))


def _y_pdf(y):
    # y * phi(y) with the limit 0 at +-inf
    y = np.asarray(y, dtype=float)
    out = np.where(np.isfinite(y), y, 0.0) * std_normal_pdf(y)
    return out


def normal_mass(A, B):
    """Phi(B) - Phi(A), evaluated on the side of the mean that avoids cancellation."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    upper_tail = A > 0
    return np.where(
        upper_tail,
        special.ndtr(-A) - special.ndtr(-B),
        special.ndtr(B) - special.ndtr(A),
    )


@dataclass(frozen=True)
class GaussianPolicy:
    """Normal policy N(mean, var) over the action (fraction or amount)."""

    mean: float | np.ndarray
    var: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.var) <= 0):
            raise ValueError(f"policy variance must be positive, got {self.var}")

    @property
    def std(self):
        return np.sqrt(self.var)

    def logpdf(self, x):
        return -0.5 * LOG_2PI - 0.5 * np.log(self.var) - 0.5 * (x - self.mean) ** 2 / self.var

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def truncated(self, lower=NEG_INF, upper=POS_INF) -> "TruncatedGaussianPolicy":
        return TruncatedGaussianPolicy(self.mean, self.var, lower, upper)


@dataclass(frozen=True)
class TruncatedGaussianPolicy:
    """N(mean, var) restricted and renormalised to [lower, upper].

    ``mean`` and ``var`` are the *untruncated* location and scale; use
    :func:`trunc_mean` / :func:`trunc_variance` for the moments of the law.
    """

    mean: float | np.ndarray
    var: float | np.ndarray
    lower: float | np.ndarray = NEG_INF
    upper: float | np.ndarray = POS_INF

    def __post_init__(self):
        if np.any(np.asarray(self.var) <= 0):
            raise ValueError(f"policy variance must be positive, got {self.var}")
        if np.any(np.asarray(self.lower) >= np.asarray(self.upper)):
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def std(self):
        return np.sqrt(self.var)

    @property
    def is_truncated(self) -> bool:
        return bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))

    def standardized_bounds(self):
        beta = self.std
        A = (np.asarray(self.lower, dtype=float) - self.mean) / beta
        B = (np.asarray(self.upper, dtype=float) - self.mean) / beta
        return A, B

    def mass(self):
        """Gaussian mass Z of the window; raises if it underflows."""
        A, B = self.standardized_bounds()
        Z = normal_mass(A, B)
        if np.any(Z < Z_FLOOR):
            raise DegenerateSupportError(
                f"truncation window [{self.lower}, {self.upper}] has mass below {Z_FLOOR:g}"
            )
        return Z

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        Z = self.mass()
        out = -0.5 * LOG_2PI - 0.5 * np.log(self.var) - 0.5 * (x - self.mean) ** 2 / self.var - np.log(Z)
        inside = (x >= self.lower) & (x <= self.upper)
        return _scalar_or_array(np.where(inside, out, -np.inf))

    def pdf(self, x):
        return _scalar_or_array(np.exp(self.logpdf(x)))

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        A, B = self.standardized_bounds()
        return _scalar_or_array(normal_mass(A, (x - self.mean) / self.std) / self.mass())


def as_truncated(p: GaussianPolicy | TruncatedGaussianPolicy) -> TruncatedGaussianPolicy:
    if isinstance(p, TruncatedGaussianPolicy):
        return p
    return TruncatedGaussianPolicy(p.mean, p.var)


def trunc_ratios(p: TruncatedGaussianPolicy):
    """``((phi(A)-phi(B))/Z, (A phi(A) - B phi(B))/Z, Z)`` for the window of ``p``."""
    A, B = p.standardized_bounds()
    Z = p.mass()
    first = (std_normal_pdf(A) - std_normal_pdf(B)) / Z
    second = (_y_pdf(A) - _y_pdf(B)) / Z
    return first, second, Z


def trunc_mean(p: TruncatedGaussianPolicy):
    first, _, _ = trunc_ratios(p)
    return _scalar_or_array(p.mean + p.std * first)


def trunc_variance(p: TruncatedGaussianPolicy):
    first, second, _ = trunc_ratios(p)
    return _scalar_or_array(p.var * (1.0 + second - first * first))


def trunc_second_moment(p: TruncatedGaussianPolicy):
    """E[pi^2] under the truncated law: (trunc mean)^2 + trunc variance."""
    mu = trunc_mean(p)
    return _scalar_or_array(np.asarray(mu) ** 2 + trunc_variance(p))


def gaussian_entropy(p: GaussianPolicy):
    """Differential entropy in nats."""
    return _scalar_or_array(0.5 + 0.5 * np.log(2.0 * PI * np.asarray(p.var, dtype=float)))


def trunc_entropy(p: TruncatedGaussianPolicy):
    _, second, Z = trunc_ratios(p)
    return _scalar_or_array(0.5 * np.log(2.0 * PI * np.asarray(p.var, dtype=float)) + 0.5 + np.log(Z) + 0.5 * second)


def trunc_sample(p: TruncatedGaussianPolicy, u):
    """Inverse-cdf draw(s) from ``p`` given uniform variate(s) ``u`` in (0, 1).

    Windows lying above the mean are sampled through the reflected law so the
    inverse cdf is never evaluated next to 1.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("uniform variates must lie strictly inside (0, 1)")
    A, B = p.standardized_bounds()
    Z = p.mass()
    # lower side: Phi^{-1}(Phi(A) + u Z); upper side: -Phi^{-1}(Phi(-B) + (1-u) Z)
    if np.ndim(A) == 0:
        # one window for every draw: evaluate only the branch we need
        if A > 0:
            y = -special.ndtri(special.ndtr(-B) + (1.0 - u) * Z)
        else:
            y = special.ndtri(special.ndtr(A) + u * Z)
    else:
        lo = special.ndtri(special.ndtr(A) + u * Z)
        hi = -special.ndtri(special.ndtr(-B) + (1.0 - u) * Z)
        y = np.where(A > 0, hi, lo)
    x = p.mean + p.std * y
    return _scalar_or_array(np.clip(x, p.lower, p.upper))


def _effective_support(p: TruncatedGaussianPolicy, width: float = 40.0):
    lo = max(float(p.lower), float(p.mean) - width * float(p.std))
    hi = min(float(p.upper), float(p.mean) + width * float(p.std))
    return lo, hi


def kl_trunc(p: TruncatedGaussianPolicy, q: TruncatedGaussianPolicy) -> float:
    """KL(p || q) in nats by adaptive quadrature over the support of p."""
    p, q = as_truncated(p), as_truncated(q)
    if float(p.lower) < float(q.lower) or float(p.upper) > float(q.upper):
        raise ValueError("support of p must lie inside the support of q")
    lo, hi = _effective_support(p)

    def integrand(x):
        lp = p.logpdf(x)
        return math.exp(lp) * (lp - q.logpdf(x))

    mid = float(np.clip(p.mean, lo, hi))
    points = [mid] if lo < mid < hi else None
    val, _ = integrate.quad(integrand, lo, hi, points=points, epsabs=1e-13, epsrel=1e-11, limit=200)
    # quadrature noise can leave a tiny negative residue when p == q
    return max(val, 0.0)

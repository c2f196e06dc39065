"""Policy improvement via the Gaussian (Boltzmann) map, and exact values of
constant Gaussian policies under log utility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closedform_log import _check_x, as_bounds
from .market import MarketParams, policy_moments
from .stats import GaussianPolicy, TruncatedGaussianPolicy, gaussian_entropy, trunc_entropy


@dataclass(frozen=True)
class ValueDerivatives:
    vx: float
    vxx: float

    def __post_init__(self):
        if not self.vxx < 0:
            raise ValueError(f"improvement needs a strictly concave value (vxx < 0), got {self.vxx}")


def improve(x, d: ValueDerivatives, mkt: MarketParams, m, bounds=None):
    """Gaussian maximiser of the Hamiltonian plus entropy at wealth ``x``.

    Returns a ``GaussianPolicy`` or, when bounds are given, its truncation.
    """
    if not m > 0:
        raise ValueError("improvement needs m > 0")
    x_vx = x * d.vx
    x2_vxx = x * x * d.vxx
    mean = -(mkt.mu - mkt.r) * x_vx / (mkt.sigma**2 * x2_vxx)
    var = -m / (mkt.sigma**2 * x2_vxx)
    if bounds is None:
        return GaussianPolicy(mean, var)
    bd = as_bounds(bounds)
    return TruncatedGaussianPolicy(mean, var, bd.a, bd.b)


def _entropy(pol):
    if isinstance(pol, TruncatedGaussianPolicy) and pol.is_truncated:
        return trunc_entropy(pol)
    return gaussian_entropy(GaussianPolicy(pol.mean, pol.var))


def gaussian_policy_value_log(pol, t, x, m, mkt: MarketParams, T):
    """Entropy-regularised log-utility value of holding the constant policy ``pol``.

    Works for truncated laws too, through their first two moments and entropy.
    """
    _check_x(x)
    m1, m2 = policy_moments(pol)
    rate = mkt.r + (mkt.mu - mkt.r) * m1 - 0.5 * mkt.sigma**2 * m2 + m * _entropy(pol)
    return np.log(x) + rate * (T - t)


def _log_family_derivatives() -> ValueDerivatives:
    # every constant policy has value ln x + c(T - t): x vx = 1 and x^2 vxx = -1
    return ValueDerivatives(vx=1.0, vxx=-1.0)


def improvement_iteration_log(pol0, m, mkt: MarketParams, bounds=None, tol=1e-12, max_iter=50):
    """Iterates [pol0, pol1, ...] of repeated improvement, stopping once two agree within ``tol``."""
    iterates = [pol0]
    d = _log_family_derivatives()
    for _ in range(max_iter):
        nxt = improve(1.0, d, mkt, m, bounds)
        prev = iterates[-1]
        iterates.append(nxt)
        if abs(nxt.mean - prev.mean) < tol and abs(nxt.var - prev.var) < tol and type(nxt) is type(prev):
            break
    return iterates

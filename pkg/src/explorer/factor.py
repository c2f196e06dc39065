"""Random-coefficient market driven by a scalar factor y.

Stock drift and volatility are functions of y, and y follows its own
diffusion dy = mu_Y(y) dt + sigma_Y(y) dW. Under log utility the value splits
as ln x + f(t, y), and f is estimated here by Monte Carlo over Euler paths of
the factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .market import MarketParams, draw_noise
from .stats import PI, GaussianPolicy

Coef = Callable[[np.ndarray], np.ndarray]


def _const(c):
    return lambda y: np.full(np.shape(y), float(c))


@dataclass(frozen=True)
class FactorModel:
    mu_of_y: Coef
    sigma_of_y: Coef
    muY_of_y: Coef
    sigmaY_of_y: Coef
    r: float

    @classmethod
    def constant(cls, mkt: MarketParams, muY=0.0, sigmaY=0.0):
        """Factor-free market; ``muY``/``sigmaY`` may still move an irrelevant factor."""
        return cls(_const(mkt.mu), _const(mkt.sigma), _const(muY), _const(sigmaY), mkt.r)

    @classmethod
    def ornstein_uhlenbeck(cls, mu_of_y, sigma_of_y, r, kappa=1.0, ybar=0.0, eta=0.5):
        return cls(mu_of_y, sigma_of_y, lambda y: kappa * (ybar - np.asarray(y)), _const(eta), r)


def _sigma(model, y):
    s = np.asarray(model.sigma_of_y(y), dtype=float)
    if np.any(s <= 0):
        raise ValueError("stock volatility must be positive along the factor path")
    return s


def h_of_y(y, model: FactorModel, m):
    """Instantaneous value growth rate at factor level y."""
    s = _sigma(model, y)
    out = model.r + 0.5 * (np.asarray(model.mu_of_y(y)) - model.r) ** 2 / s**2
    if m > 0:
        out = out + 0.5 * m * np.log(2 * PI * m / s**2)
    return out.item() if np.ndim(out) == 0 else out


def factor_policy(y, model: FactorModel, m) -> GaussianPolicy:
    if not m > 0:
        raise ValueError("the exploratory policy needs m > 0")
    s2 = _sigma(model, y) ** 2
    return GaussianPolicy((np.asarray(model.mu_of_y(y)) - model.r) / s2, m / s2)


def factor_paths(t, y, model: FactorModel, T, n_paths, n_steps, seed, key=()):
    """Euler paths of the factor from y at time t, shape ``(n_paths, n_steps + 1)``."""
    dt = (T - t) / n_steps
    z, _ = draw_noise(seed, n_paths, n_steps, key=key)
    ys = np.empty((n_paths, n_steps + 1))
    ys[:, 0] = y
    sq = math.sqrt(dt)
    for k in range(n_steps):
        cur = ys[:, k]
        ys[:, k + 1] = cur + model.muY_of_y(cur) * dt + model.sigmaY_of_y(cur) * sq * z[:, k]
    return ys


def feynman_kac_f(t, y, m, model: FactorModel, T, n_paths=10_000, n_steps=250, seed=0, key=()):
    """(estimate, stderr) of E[int_t^T h(y_s) ds] with a left-endpoint sum."""
    if not t < T:
        raise ValueError("need t < T")
    dt = (T - t) / n_steps
    ys = factor_paths(t, y, model, T, n_paths, n_steps, seed, key)
    integral = np.asarray(h_of_y(ys[:, :-1], model, m)).sum(axis=1) * dt
    stderr = integral.std(ddof=1) / math.sqrt(n_paths) if n_paths > 1 else math.nan
    return float(integral.mean()), float(stderr)


def factor_value(t, x, y, m, model: FactorModel, T, n_paths=10_000, n_steps=250, seed=0):
    if np.any(np.asarray(x) <= 0):
        raise ValueError("log utility needs positive wealth")
    if t >= T:
        return np.log(x), 0.0
    f, se = feynman_kac_f(t, y, m, model, T, n_paths, n_steps, seed)
    return np.log(x) + f, se

"""Black-Scholes market, Merton quantities and wealth simulation.

Two wealth conventions are supported. In *fraction* units the action is the
share of wealth held in the stock and wealth is stepped with the exact
lognormal solution (so it stays positive). In *amount* units the action is
the dollar amount in the stock and wealth follows an Euler scheme.

Random numbers come from numpy PCG64 streams keyed by
``SeedSequence(seed, spawn_key=key + (block,))`` where each block covers a
fixed number of paths. Results therefore depend only on the seed, the key and
the path count, never on how many worker threads drew the blocks.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, Union

import numpy as np
from scipy import special

from .stats import GaussianPolicy, TruncatedGaussianPolicy, as_truncated, trunc_mean, trunc_sample, trunc_second_moment

PATH_BLOCK = 256

PolicyLike = Union[GaussianPolicy, TruncatedGaussianPolicy, float]
PolicyMap = Callable[[float, np.ndarray], PolicyLike]


@dataclass(frozen=True)
class MarketParams:
    r: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mu <= self.r:
            warnings.warn(f"mu={self.mu} <= r={self.r}: no risk premium", stacklevel=3)

    @property
    def merton(self) -> float:
        return merton_fraction(self)

    @property
    def sharpe(self) -> float:
        return sharpe_ratio(self)


def merton_fraction(mkt: MarketParams) -> float:
    return (mkt.mu - mkt.r) / mkt.sigma**2


def sharpe_ratio(mkt: MarketParams) -> float:
    return (mkt.mu - mkt.r) / mkt.sigma


@dataclass(frozen=True)
class SimGrid:
    T: float = 1.0
    dt: float = 1.0 / 250

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("T and dt must be positive")
        if abs(self.n_steps * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not a whole number of steps of dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class Trajectory:
    """One simulated path: ``states[i]`` is wealth at ``times[i]``; ``actions[i]`` was held on [t_i, t_{i+1})."""

    times: np.ndarray
    states: np.ndarray
    actions: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.shape != self.states.shape or self.times.ndim != 1:
            raise ValueError("times and states must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite wealth in trajectory")
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=float)
            if self.actions.shape != (len(self.times) - 1,):
                raise ValueError("need one action per step")


@dataclass
class TrajectoryBatch:
    """Many paths on a shared grid, stored as ``(n_paths, n_steps + 1)`` arrays."""

    times: np.ndarray
    states: np.ndarray
    actions: np.ndarray | None = None
    units: str = "fraction"

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.n_paths

    def __getitem__(self, i) -> Trajectory:
        acts = None if self.actions is None else self.actions[i]
        return Trajectory(self.times, self.states[i], acts)

    def __iter__(self) -> Iterator[Trajectory]:
        return (self[i] for i in range(self.n_paths))

    @classmethod
    def from_trajectories(cls, trajs, units="fraction") -> "TrajectoryBatch":
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty batch")
        times = trajs[0].times
        for tr in trajs:
            if tr.times.shape != times.shape or not np.array_equal(tr.times, times):
                raise ValueError("trajectories must share a time grid")
        states = np.stack([tr.states for tr in trajs])
        actions = None
        if all(tr.actions is not None for tr in trajs):
            actions = np.stack([tr.actions for tr in trajs])
        return cls(times, states, actions, units)

    def to_csv(self, path) -> None:
        """Write long-format rows ``path,t,x[,action]``; the last state of a path has no action."""
        header = ["path", "t", "x"] + (["action"] if self.actions is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for p in range(self.n_paths):
                for i, t in enumerate(self.times):
                    row = [p, f"{t:.12g}", f"{self.states[p, i]:.12g}"]
                    if self.actions is not None:
                        row.append(f"{self.actions[p, i]:.12g}" if i < len(self.times) - 1 else "")
                    w.writerow(row)


# ---------------------------------------------------------------- random numbers


def block_rng(seed: int, key: tuple = (), block: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key) + (int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def draw_noise(seed: int, n_paths: int, n_steps: int, key: tuple = (), uniforms: bool = False, threads: int = 1):
    """Standard normals (and optionally uniforms) of shape ``(n_paths, n_steps)``.

    Path ``p`` always receives the same numbers for a given ``(seed, key)``,
    whatever ``n_paths`` or ``threads`` are.
    """
    n_blocks = -(-n_paths // PATH_BLOCK)

    def one(b):
        g = block_rng(seed, key, b)
        z = g.standard_normal((PATH_BLOCK, n_steps))
        u = g.random((PATH_BLOCK, n_steps)) if uniforms else None
        return z, u

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one, range(n_blocks)))
    else:
        parts = [one(b) for b in range(n_blocks)]
    z = np.concatenate([p[0] for p in parts])[:n_paths]
    if not uniforms:
        return z, None
    u = np.concatenate([p[1] for p in parts])[:n_paths]
    # Generator.random lies in [0, 1); nudge an exact zero into the open interval
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return z, u


# ---------------------------------------------------------------- stepping


def step_exploratory(x, drift_coef, vol2_coef, dt, z, mode="exact-lognormal"):
    """Advance wealth by one step.

    ``exact-lognormal``: coefficients multiply wealth, dX = a X dt + sqrt(b) X dW.
    ``euler``: coefficients are absolute, X + A dt + sqrt(B2 dt) z.
    """
    if np.any(np.asarray(vol2_coef) < 0):
        raise ValueError("squared volatility must be nonnegative")
    if mode == "exact-lognormal":
        return x * np.exp((drift_coef - 0.5 * vol2_coef) * dt + np.sqrt(vol2_coef * dt) * z)
    if mode == "euler":
        return x + drift_coef * dt + np.sqrt(vol2_coef * dt) * z
    raise ValueError(f"unknown stepping mode {mode!r}")


def policy_moments(pol: PolicyLike):
    """(E[a], E[a^2]) of a policy; a bare number is a deterministic action."""
    if isinstance(pol, (GaussianPolicy, TruncatedGaussianPolicy)):
        tp = as_truncated(pol)
        if not tp.is_truncated:
            mean = np.asarray(tp.mean, dtype=float)
            return mean, mean * mean + tp.var
        return np.asarray(trunc_mean(tp)), np.asarray(trunc_second_moment(tp))
    a = np.asarray(pol, dtype=float)
    return a, a * a


def policy_sample(pol: PolicyLike, u):
    if isinstance(pol, GaussianPolicy):
        return pol.mean + pol.std * special.ndtri(u)
    if isinstance(pol, TruncatedGaussianPolicy):
        return np.asarray(trunc_sample(pol, u))
    return np.broadcast_to(np.asarray(pol, dtype=float), np.shape(u)).copy()


def _is_constant(policy) -> bool:
    return isinstance(policy, (GaussianPolicy, TruncatedGaussianPolicy, int, float))


def rollout(
    policy: PolicyLike | PolicyMap,
    mkt: MarketParams,
    grid: SimGrid,
    x0: float,
    seed: int,
    n_paths: int = 1,
    stepping: str = "exploratory-moments",
    units: str = "fraction",
    key: tuple = (),
    threads: int = 1,
) -> TrajectoryBatch:
    """Simulate ``n_paths`` wealth paths under a feedback policy.

    ``policy`` is either a fixed distribution (or a plain number) or a map
    ``(t, x_array) -> distribution`` returning per-path parameters.

    ``stepping='exploratory-moments'`` uses the policy-averaged drift and
    volatility; ``'action-sampled'`` draws one action per step by inverse cdf
    and records it.
    """
    if stepping not in ("exploratory-moments", "action-sampled"):
        raise ValueError(f"unknown stepping {stepping!r}")
    if units not in ("fraction", "amount"):
        raise ValueError(f"unknown units {units!r}")
    if units == "fraction" and not x0 > 0:
        raise ValueError("fraction-based wealth needs x0 > 0")
    sampled = stepping == "action-sampled"
    n, dt = grid.n_steps, grid.dt
    z, u = draw_noise(seed, n_paths, n, key=key, uniforms=sampled, threads=threads)
    excess = mkt.mu - mkt.r
    s2 = mkt.sigma**2
    times = grid.times

    if units == "fraction" and _is_constant(policy):
        # state-independent policy: log-increments are i.i.d., vectorise over time
        if sampled:
            acts = policy_sample(policy, u)
            incr = (mkt.r + excess * acts - 0.5 * s2 * acts**2) * dt + mkt.sigma * acts * math.sqrt(dt) * z
        else:
            acts = None
            m1, m2 = policy_moments(policy)
            incr = (mkt.r + excess * m1 - 0.5 * s2 * m2) * dt + np.sqrt(s2 * m2 * dt) * z
        logx = np.empty((n_paths, n + 1))
        logx[:, 0] = math.log(x0)
        np.cumsum(incr, axis=1, out=logx[:, 1:])
        logx[:, 1:] += math.log(x0)
        return TrajectoryBatch(times, np.exp(logx), acts, units)

    states = np.empty((n_paths, n + 1))
    states[:, 0] = x0
    acts = np.empty((n_paths, n)) if sampled else None
    x = states[:, 0].copy()
    for i in range(n):
        pol = policy(times[i], x) if callable(policy) else policy
        if sampled:
            a = policy_sample(pol, u[:, i]) * np.ones_like(x)
            acts[:, i] = a
            if units == "fraction":
                # signed volatility sigma * a, matching the vectorised branch path by path
                x = x * np.exp((mkt.r + excess * a - 0.5 * s2 * a * a) * dt + mkt.sigma * a * math.sqrt(dt) * z[:, i])
            else:
                x = x + (mkt.r * x + excess * a) * dt + mkt.sigma * a * math.sqrt(dt) * z[:, i]
        else:
            m1, m2 = policy_moments(pol)
            if units == "fraction":
                x = step_exploratory(x, mkt.r + excess * m1, s2 * m2, dt, z[:, i])
            else:
                x = step_exploratory(x, mkt.r * x + excess * m1, s2 * m2, dt, z[:, i], mode="euler")
        states[:, i + 1] = x
    return TrajectoryBatch(times, states, acts, units)

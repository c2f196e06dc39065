"""Martingale-based actor-critic for exploratory portfolio selection.

The critic J^theta and actor lambda^phi use the parametric families below.
Each iteration simulates a batch of paths with sampled actions. The critic
takes a descent step on the martingale-orthogonality loss, and the actor
takes an ascent step along the policy-gradient estimate.

Variants
--------
``log-unconstrained``   theta = (theta1,),          phi = (mean, log-variance scale)
``log-constrained``     theta = (theta1, theta2),   phi as above, truncated to [a, b]
``quadratic``           theta = (theta1, theta2, theta3), phi = (phi1, phi2, phi3)

All batch routines take a ``TrajectoryBatch`` (or a list of ``Trajectory``)
and work on ``(n_paths, n_steps + 1)`` arrays.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .closedform_log import IntervalBounds, as_bounds, z_ab
from .closedform_quad import QuadUtilityParams
from .market import MarketParams, SimGrid, TrajectoryBatch, block_rng, merton_fraction, rollout, sharpe_ratio
from .stats import PI, GaussianPolicy, TruncatedGaussianPolicy, normal_mass, std_normal_pdf, trunc_entropy

LOG_KINDS = ("log-unconstrained", "log-constrained")
KINDS = LOG_KINDS + ("quadratic",)
DIVERGENCE_LIMIT = 1e6
PE_FORMS = ("mean", "pathwise", "terminal")


class DivergenceError(RuntimeError):
    """Parameters left the finite range during training."""


@dataclass(frozen=True)
class ModelVariant:
    """Which parametric family to learn.

    The quadratic critic discounts the bliss gap at the risk-free rate, so
    that variant also records ``r``.
    """

    kind: str
    bounds: IntervalBounds | None = None
    quad: QuadUtilityParams | None = None
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variant {self.kind!r}; choose from {KINDS}")
        if self.kind == "log-constrained" and self.bounds is None:
            raise ValueError("log-constrained needs bounds")
        if self.kind == "quadratic" and self.quad is None:
            raise ValueError("quadratic needs utility parameters")

    @classmethod
    def log_unconstrained(cls):
        return cls("log-unconstrained")

    @classmethod
    def log_constrained(cls, a=0.0, b=1.0):
        return cls("log-constrained", bounds=as_bounds((a, b)))

    @classmethod
    def quadratic(cls, r, K=1.0, eps=1.0):
        return cls("quadratic", quad=QuadUtilityParams(K, eps), r=r)

    @property
    def theta_dim(self) -> int:
        return {"log-unconstrained": 1, "log-constrained": 2, "quadratic": 3}[self.kind]

    @property
    def phi_dim(self) -> int:
        return 3 if self.kind == "quadratic" else 2

    @property
    def units(self) -> str:
        return "amount" if self.kind == "quadratic" else "fraction"

    @property
    def is_log(self) -> bool:
        return self.kind in LOG_KINDS


def _vec(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def _as_batch(batch, units) -> TrajectoryBatch:
    if isinstance(batch, TrajectoryBatch):
        return batch
    return TrajectoryBatch.from_trajectories(batch, units)


# ---------------------------------------------------------------- true parameters


def true_theta(variant: ModelVariant, mkt: MarketParams, m) -> np.ndarray:
    if variant.is_log:
        th1 = mkt.r + 0.5 * sharpe_ratio(mkt) ** 2 - m * math.log(mkt.sigma)
        if variant.kind == "log-unconstrained":
            return np.array([th1])
        return np.array([th1, m * math.log(z_ab(m, mkt, variant.bounds))])
    rho2 = sharpe_ratio(mkt) ** 2
    return np.array([
        0.5 * m * math.log(2 * PI * m / (variant.quad.eps * mkt.sigma**2)),
        0.25 * m * (rho2 - 2 * mkt.r),
        rho2,
    ])


def true_phi(variant: ModelVariant, mkt: MarketParams, m) -> np.ndarray:
    pm = merton_fraction(mkt)
    if variant.is_log:
        return np.array([pm, -2.0 * math.log(mkt.sigma)])
    rho2 = sharpe_ratio(mkt) ** 2
    return np.array([pm, math.log(m / (variant.quad.eps * mkt.sigma**2)), rho2 - 2 * mkt.r])


def default_phi_init(variant: ModelVariant, sigma_guess=0.25) -> np.ndarray:
    """Starting actor when none is supplied: mean 0.5 and a deliberately wide variance."""
    if variant.is_log:
        return np.array([0.5, -2.0 * math.log(sigma_guess)])
    return np.array([0.5, 2.0 * math.log(sigma_guess), 0.0])


# ---------------------------------------------------------------- critic


def _quad_parts(t, x, theta3, variant, T):
    q = variant.quad
    tau = T - np.asarray(t, dtype=float)
    decay = np.exp(-theta3 * tau)
    gap = x * np.exp(variant.r * tau) - q.K / q.eps
    # the theta3-dependent block of J: -eps/2 gap^2 e^{-theta3 tau}
    core = -0.5 * q.eps * gap**2 * decay
    return tau, core


def j_theta(t, x, theta, m, variant: ModelVariant, T):
    theta = _vec(theta, variant.theta_dim, "theta")
    if variant.is_log:
        if np.any(np.asarray(x) <= 0):
            raise ValueError("log variants need positive wealth")
        tau = T - np.asarray(t, dtype=float)
        return np.log(x) + (theta.sum() + 0.5 * m * math.log(2 * PI * m)) * tau
    tau, core = _quad_parts(t, x, theta[2], variant, T)
    q = variant.quad
    return core + 0.5 * q.K**2 / q.eps + theta[1] * tau**2 + theta[0] * tau


def test_function(t, x, theta, variant: ModelVariant, T):
    """dJ/dtheta, stacked along the first axis."""
    theta = _vec(theta, variant.theta_dim, "theta")
    shape = np.broadcast(np.asarray(t), np.asarray(x)).shape
    tau = np.broadcast_to(T - np.asarray(t, dtype=float), shape)
    if variant.is_log:
        return np.stack([tau] * variant.theta_dim)
    tau, core = _quad_parts(t, x, theta[2], variant, T)
    tau = np.broadcast_to(tau, shape)
    return np.stack([tau, tau**2, np.broadcast_to(-tau * core, shape)])


def test_function_jacobian(t, x, theta, variant: ModelVariant, T):
    """d^2 J / dtheta^2 with shape ``(d, d, *batch)``; only theta3 enters nonlinearly."""
    theta = _vec(theta, variant.theta_dim, "theta")
    shape = np.broadcast(np.asarray(t), np.asarray(x)).shape
    d = variant.theta_dim
    out = np.zeros((d, d) + shape)
    if not variant.is_log:
        tau, core = _quad_parts(t, x, theta[2], variant, T)
        out[2, 2] = tau * tau * core
    return out


# ---------------------------------------------------------------- actor


def policy_dist(t, x, phi, m, variant: ModelVariant, T=1.0):
    phi = _vec(phi, variant.phi_dim, "phi")
    if variant.is_log:
        var = math.exp(phi[1]) * m
        if variant.kind == "log-constrained":
            return TruncatedGaussianPolicy(phi[0], var, variant.bounds.a, variant.bounds.b)
        return GaussianPolicy(phi[0], var)
    q = variant.quad
    tau = T - np.asarray(t, dtype=float)
    target = q.K / q.eps * np.exp(-variant.r * tau)
    mean = (target - x) * phi[0]
    var = np.exp(phi[1] + phi[2] * tau) * np.ones_like(mean)
    return GaussianPolicy(mean, var)


def policy_entropy(t, phi, m, variant: ModelVariant, T=1.0):
    phi = _vec(phi, variant.phi_dim, "phi")
    if variant.kind == "log-unconstrained":
        return 0.5 + 0.5 * (phi[1] + math.log(2 * PI * m)) + 0.0 * np.asarray(t, dtype=float)
    if variant.kind == "log-constrained":
        return trunc_entropy(policy_dist(t, None, phi, m, variant)) + 0.0 * np.asarray(t, dtype=float)
    tau = T - np.asarray(t, dtype=float)
    return 0.5 * (math.log(2 * PI) + 1.0 + phi[1] + phi[2] * tau)


def _log_policy_terms(phi, m, variant):
    """(s, A, B, Z) for the log-variant actor; infinite window when unconstrained."""
    s = math.sqrt(math.exp(phi[1]) * m)
    if variant.kind == "log-unconstrained":
        return s, -math.inf, math.inf, 1.0
    A = (variant.bounds.a - phi[0]) / s
    B = (variant.bounds.b - phi[0]) / s
    return s, A, B, float(normal_mass(A, B))


def _ypdf(y):
    return 0.0 if math.isinf(y) else y * std_normal_pdf(y)


def loglik(action, t, x, phi, m, variant: ModelVariant, T=1.0):
    """ln lambda^phi(action | t, x)."""
    phi = _vec(phi, variant.phi_dim, "phi")
    action = np.asarray(action, dtype=float)
    if variant.is_log:
        s, _, _, Z = _log_policy_terms(phi, m, variant)
        if variant.kind == "log-constrained":
            _check_support(action, variant.bounds)
        return -0.5 * math.log(2 * PI * s * s) - 0.5 * ((action - phi[0]) / s) ** 2 - math.log(Z)
    pol = policy_dist(t, x, phi, m, variant, T)
    return -0.5 * np.log(2 * PI * pol.var) - 0.5 * (action - pol.mean) ** 2 / pol.var


def _check_support(action, bounds):
    if np.any((action < bounds.a) | (action > bounds.b)):
        raise ValueError(f"action outside the support [{bounds.a}, {bounds.b}]")


def _loglik_grad_parts(action, t, x, phi, m, variant):
    action = np.asarray(action, dtype=float)
    if variant.is_log:
        s, A, B, Z = _log_policy_terms(phi, m, variant)
        if variant.kind == "log-constrained":
            _check_support(action, variant.bounds)
        y = (action - phi[0]) / s
        g1 = y / s
        g2 = -0.5 + 0.5 * y * y
        if variant.kind == "log-constrained":
            # derivative of -ln Z through A and B
            g1 = g1 + (std_normal_pdf(B) - std_normal_pdf(A)) / (s * Z)
            g2 = g2 + (_ypdf(B) - _ypdf(A)) / (2 * Z)
        return [g1, g2]
    return None


def loglik_grad(action, t, x, phi, m, variant: ModelVariant, T=1.0):
    """d ln lambda^phi(action) / d phi, stacked along the first axis."""
    phi = _vec(phi, variant.phi_dim, "phi")
    if variant.is_log:
        return np.stack(_loglik_grad_parts(action, t, x, phi, m, variant))
    action = np.asarray(action, dtype=float)
    q = variant.quad
    tau = T - np.asarray(t, dtype=float)
    c = q.K / q.eps * np.exp(-variant.r * tau) - x
    var = np.exp(phi[1] + phi[2] * tau)
    dev = action - c * phi[0]
    g1 = dev * c / var
    g2 = -0.5 + 0.5 * dev * dev / var
    return np.stack(np.broadcast_arrays(g1, g2, g2 * tau))


# ---------------------------------------------------------------- gradient estimators


def _grid_arrays(b: TrajectoryBatch):
    t = b.times[None, :]
    dt = np.diff(b.times)[None, :]
    return t, dt


class _BatchTerms:
    """Quantities shared by the critic and actor estimators on one batch."""

    def __init__(self, batch, theta, phi, m, variant: ModelVariant, T):
        self.b = b = _as_batch(batch, variant.units)
        self.theta = _vec(theta, variant.theta_dim, "theta")
        self.phi = _vec(phi, variant.phi_dim, "phi")
        self.m, self.variant, self.T = m, variant, T
        self.t, self.dt = _grid_arrays(b)
        self.J = j_theta(self.t, b.states, self.theta, m, variant, T)
        self.dJ = np.diff(self.J, axis=1)
        self.H = np.broadcast_to(policy_entropy(b.times[:-1], self.phi, m, variant, T), self.dt.shape[1:])[None, :]
        self.inc = self.dJ + m * self.H * self.dt

    def g_and_jac(self):
        """G per path (d, N) and dG/dtheta per path (d, d, N)."""
        v, b = self.variant, self.b
        d, N = v.theta_dim, b.n_paths
        if v.is_log:
            # every test-function component is T - t, whatever the state
            tau = self.T - b.times
            g = self.inc @ tau[:-1]
            slope = float(tau[:-1] @ np.diff(tau))
            return np.broadcast_to(g, (d, N)), np.full((d, d, N), slope)
        h = test_function(self.t, b.states, self.theta, v, self.T)
        hl = h[..., :-1]
        G = np.einsum("dni,ni->dn", hl, self.inc)
        jac = np.einsum("jni,kni->jkn", hl, np.diff(h, axis=-1))
        hess = test_function_jacobian(self.t, b.states, self.theta, v, self.T)[..., :-1]
        return G, jac + np.einsum("jkni,ni->jkn", hess, self.inc)

    def terminal_residuals(self):
        # J(t_i, x_i) against the realised terminal utility plus the entropy still to come
        tail = np.cumsum((self.m * self.H * self.dt)[:, ::-1], axis=1)[:, ::-1]
        return self.J[:, :-1] - (self.J[:, -1:] + tail)

    def pe_loss(self, form):
        if form == "terminal":
            return 0.5 * float(np.mean(np.sum(self.terminal_residuals() ** 2 * self.dt, axis=1)))
        G, _ = self.g_and_jac()
        if form == "mean":
            Gbar = G.mean(axis=1)
            return float(Gbar @ Gbar)
        if form == "pathwise":
            return float(np.mean(np.sum(G * G, axis=0)))
        raise ValueError(f"unknown PE form {form!r}; choose from {PE_FORMS}")

    def delta_theta(self, form):
        v, b = self.variant, self.b
        if b.states.shape[1] < 2:
            return np.zeros(v.theta_dim)
        if form == "terminal":
            h = test_function(self.t, b.states, self.theta, v, self.T)
            dres = h[..., :-1] - h[..., -1:]  # J(T, .) does not depend on theta
            return np.einsum("dni,ni->d", dres, self.terminal_residuals() * self.dt) / b.n_paths
        G, jac = self.g_and_jac()
        if form == "mean":
            return 2.0 * jac.mean(axis=2).T @ G.mean(axis=1)
        if form == "pathwise":
            return 2.0 * np.einsum("jn,jkn->k", G, jac) / b.n_paths
        raise ValueError(f"unknown PE form {form!r}; choose from {PE_FORMS}")

    def pg_terms(self):
        v, b = self.variant, self.b
        if b.actions is None:
            raise ValueError("policy gradient needs trajectories with sampled actions")
        tl, xl = self.t[:, :-1], b.states[:, :-1]
        lnl = loglik(b.actions, tl, xl, self.phi, self.m, v, self.T)
        weight = self.dJ - self.m * (lnl + 1.0) * self.dt
        if v.is_log:
            parts = _loglik_grad_parts(b.actions, tl, xl, self.phi, self.m, v)
            return np.stack([np.einsum("ni,ni->n", g, weight) for g in parts])
        g = loglik_grad(b.actions, tl, xl, self.phi, self.m, v, self.T)
        return np.einsum("dni,ni->dn", g, weight)

    def delta_phi(self):
        if self.b.states.shape[1] < 2:
            return np.zeros(self.variant.phi_dim)
        return self.pg_terms().mean(axis=1)


def martingale_increments(batch, theta, phi, m, variant: ModelVariant, T):
    """Per-step dJ + m H dt, shape ``(n_paths, n_steps)``."""
    return _BatchTerms(batch, theta, phi, m, variant, T).inc


def pe_loss(batch, theta, phi, m, variant: ModelVariant, T, form="mean"):
    """Policy-evaluation loss whose gradient :func:`delta_theta` returns."""
    return _BatchTerms(batch, theta, phi, m, variant, T).pe_loss(form)


def delta_theta(batch, theta, phi, m, variant: ModelVariant, T, form="mean"):
    """Gradient in theta of :func:`pe_loss`; descend along it.

    ``mean`` (default) is ``|E_N[G]|^2`` with G the per-path sum of test
    function times martingale increment; ``pathwise`` is ``E_N[|G|^2]``;
    ``terminal`` is the offline squared-error loss against realised outcomes.
    """
    return _BatchTerms(batch, theta, phi, m, variant, T).delta_theta(form)


def pg_terms(batch, theta, phi, m, variant: ModelVariant, T):
    """Per-path policy-gradient samples, shape ``(d, n_paths)``."""
    return _BatchTerms(batch, theta, phi, m, variant, T).pg_terms()


def delta_phi(batch, theta, phi, m, variant: ModelVariant, T):
    """Batch-mean policy-gradient estimate; ascend along it to raise the value."""
    return _BatchTerms(batch, theta, phi, m, variant, T).delta_phi()


# ---------------------------------------------------------------- training


@dataclass
class LearnConfig:
    eta_theta: float = 0.01
    eta_phi: float = 0.001
    m: float = 0.01
    iterations: int = 2000
    n_paths: int = 1000
    grid: SimGrid = field(default_factory=SimGrid)
    decay: float = 0.51
    seed: int = 0
    x0: float = 1.0
    theta_init: np.ndarray | None = None
    theta_init_noise: float = 0.01
    phi_init: np.ndarray | None = None
    phi_init_noise: float = 0.0
    pe_form: str = "mean"
    threads: int = 1

    def __post_init__(self):
        if not (self.eta_theta > 0 and self.eta_phi > 0):
            raise ValueError("step sizes must be positive")
        if self.iterations < 1 or self.n_paths < 1:
            raise ValueError("need at least one iteration and one path")
        if not self.m > 0:
            raise ValueError("learning needs m > 0")
        if self.pe_form not in PE_FORMS:
            raise ValueError(f"unknown PE form {self.pe_form!r}")


@dataclass
class TrainResult:
    theta: np.ndarray  # (iterations + 1, d_theta); row 0 is the initial guess
    phi: np.ndarray
    grad_norm_theta: np.ndarray  # (iterations + 1,); row 0 is nan
    grad_norm_phi: np.ndarray
    seed: int
    wall_clock: float

    @property
    def final_theta(self):
        return self.theta[-1]

    @property
    def final_phi(self):
        return self.phi[-1]

    def trace_rows(self):
        for k in range(len(self.theta)):
            yield [k, *self.theta[k], *self.phi[k], self.grad_norm_theta[k], self.grad_norm_phi[k]]

    def trace_header(self):
        d1, d2 = self.theta.shape[1], self.phi.shape[1]
        return ["iter"] + [f"theta{i + 1}" for i in range(d1)] + [f"phi{i + 1}" for i in range(d2)] + [
            "grad_norm_theta",
            "grad_norm_phi",
        ]


def initial_parameters(variant: ModelVariant, mkt: MarketParams, cfg: LearnConfig):
    """Critic starts at the truth plus Gaussian noise unless given; actor at ``phi_init`` plus optional noise."""
    g = block_rng(cfg.seed, key=(0,), block=0)
    if cfg.theta_init is None:
        theta = true_theta(variant, mkt, cfg.m) + cfg.theta_init_noise * g.standard_normal(variant.theta_dim)
    else:
        theta = _vec(cfg.theta_init, variant.theta_dim, "theta_init").copy()
    phi = default_phi_init(variant) if cfg.phi_init is None else _vec(cfg.phi_init, variant.phi_dim, "phi_init").copy()
    if cfg.phi_init_noise > 0:
        phi = phi + cfg.phi_init_noise * g.standard_normal(variant.phi_dim)
    return theta, phi


def _behaviour(phi, m, variant, T):
    if variant.is_log:
        return policy_dist(0.0, None, phi, m, variant)
    return lambda t, x: policy_dist(t, x, phi, m, variant, T)


def train(variant: ModelVariant, mkt: MarketParams, cfg: LearnConfig, callback=None) -> TrainResult:
    """Run the actor-critic loop for ``cfg.iterations`` outer iterations.

    Iteration k uses the step scale ``1 / k**cfg.decay`` and draws its paths from
    the substream keyed by k, so identical configs give identical traces.
    """
    start = time.perf_counter()
    T = cfg.grid.T
    theta, phi = initial_parameters(variant, mkt, cfg)
    M = cfg.iterations
    th_tr = np.empty((M + 1, variant.theta_dim))
    ph_tr = np.empty((M + 1, variant.phi_dim))
    gn_th = np.full(M + 1, np.nan)
    gn_ph = np.full(M + 1, np.nan)
    th_tr[0], ph_tr[0] = theta, phi
    for k in range(1, M + 1):
        batch = rollout(
            _behaviour(phi, cfg.m, variant, T),
            mkt,
            cfg.grid,
            cfg.x0,
            cfg.seed,
            n_paths=cfg.n_paths,
            stepping="action-sampled",
            units=variant.units,
            key=(k,),
            threads=cfg.threads,
        )
        terms = _BatchTerms(batch, theta, phi, cfg.m, variant, T)
        d_th = terms.delta_theta(cfg.pe_form)
        d_ph = terms.delta_phi()
        lr = 1.0 / k**cfg.decay
        theta = theta - lr * cfg.eta_theta * d_th
        phi = phi + lr * cfg.eta_phi * d_ph
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))) or max(
            np.max(np.abs(theta)), np.max(np.abs(phi))
        ) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"parameters diverged at iteration {k}: theta={theta}, phi={phi}")
        th_tr[k], ph_tr[k] = theta, phi
        gn_th[k], gn_ph[k] = np.linalg.norm(d_th), np.linalg.norm(d_ph)
        if callback is not None:
            callback(k, theta, phi)
    return TrainResult(th_tr, ph_tr, gn_th, gn_ph, cfg.seed, time.perf_counter() - start)


# ---------------------------------------------------------------- diagnostics


@dataclass
class MartingaleReport:
    edges: np.ndarray  # bucket boundaries in time
    mean: np.ndarray  # mean increment of the value process over each bucket
    stderr: np.ndarray

    @property
    def z_scores(self):
        return self.mean / self.stderr


def martingale_residuals(
    J,
    policy,
    mkt: MarketParams,
    grid: SimGrid,
    m,
    n_paths,
    seed,
    entropy=None,
    n_buckets=10,
    x0=1.0,
    units="fraction",
    stepping="exploratory-moments",
):
    """Bucketed increments of Y_s = J(s, X_s) + m * int_0^s entropy du.

    ``J`` maps ``(t, x)`` arrays to values. ``entropy`` maps a time array to
    the policy entropy there (a constant is fine); by default it is read off
    a fixed ``policy``. For the true value and policy, every bucket mean is
    zero up to sampling error.
    """
    if entropy is None:
        from .improve import _entropy

        entropy = float(_entropy(policy))
    n = grid.n_steps
    if n % n_buckets:
        raise ValueError("the number of steps must be a multiple of the number of buckets")
    b = rollout(policy, mkt, grid, x0, seed, n_paths=n_paths, stepping=stepping, units=units, key=(1,))
    t = b.times
    H = entropy(t[:-1]) if callable(entropy) else np.full(n, float(entropy))
    ent = np.concatenate([[0.0], np.cumsum(m * H * np.diff(t))])
    Y = J(t[None, :], b.states) + ent[None, :]
    idx = np.arange(0, n + 1, n // n_buckets)
    incr = np.diff(Y[:, idx], axis=1)
    return MartingaleReport(t[idx], incr.mean(axis=0), incr.std(axis=0, ddof=1) / math.sqrt(n_paths))

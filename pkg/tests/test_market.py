import csv
import math

import numpy as np
import pytest

from explorer.closedform_log import log_policy_constrained, log_policy_unconstrained
from explorer.market import (
    PATH_BLOCK,
    MarketParams,
    SimGrid,
    Trajectory,
    TrajectoryBatch,
    draw_noise,
    merton_fraction,
    policy_moments,
    policy_sample,
    rollout,
    sharpe_ratio,
    step_exploratory,
)
from explorer.stats import GaussianPolicy, trunc_mean, trunc_second_moment

MKT = MarketParams(0.03, 0.08, 0.3)


def test_market_validation():
    with pytest.raises(ValueError):
        MarketParams(0.03, 0.08, 0.0)
    with pytest.warns(UserWarning):
        MarketParams(0.05, 0.05, 0.2)
    assert MKT.merton == merton_fraction(MKT) and MKT.sharpe == sharpe_ratio(MKT)


def test_grid():
    g = SimGrid(1.0, 1 / 250)
    assert g.n_steps == 250 and g.times[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SimGrid(1.0, 0.3)
    with pytest.raises(ValueError):
        SimGrid(1.0, -0.1)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [1.0, np.nan])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [1.0, 1.1], [0.1, 0.2])
    with pytest.raises(ValueError):
        TrajectoryBatch.from_trajectories([Trajectory([0.0, 1.0], [1, 2]), Trajectory([0.0, 0.5], [1, 2])])


def test_noise_is_keyed_and_prefix_stable():
    z1, _ = draw_noise(7, 300, 10, key=(2,))
    z2, _ = draw_noise(7, 900, 10, key=(2,))
    z3, _ = draw_noise(7, 900, 10, key=(2,), threads=3)
    assert np.array_equal(z1, z2[:300]) and np.array_equal(z2, z3)
    z4, _ = draw_noise(7, 300, 10, key=(3,))
    assert not np.array_equal(z1, z4)
    _, u = draw_noise(1, PATH_BLOCK + 1, 5, uniforms=True)
    assert u.shape == (PATH_BLOCK + 1, 5) and np.all((u > 0) & (u < 1))


def test_step_modes():
    x = np.array([1.0, 2.0])
    assert step_exploratory(x, 0.05, 0.0, 0.1, np.zeros(2)) == pytest.approx(x * math.exp(0.005))
    assert step_exploratory(x, 0.05, 0.04, 0.25, np.ones(2), mode="euler") == pytest.approx(x + 0.0125 + 0.1)
    with pytest.raises(ValueError):
        step_exploratory(x, 0.0, -1.0, 0.1, np.zeros(2))
    with pytest.raises(ValueError):
        step_exploratory(x, 0.0, 1.0, 0.1, np.zeros(2), mode="rk4")


def test_policy_moments_and_sampling():
    g = GaussianPolicy(0.4, 0.09)
    m1, m2 = policy_moments(g)
    assert float(m1) == 0.4 and float(m2) == pytest.approx(0.25)
    tp = log_policy_constrained(MKT, 0.01, (0.0, 1.0))
    m1, m2 = policy_moments(tp)
    assert float(m1) == trunc_mean(tp) and float(m2) == trunc_second_moment(tp)
    assert policy_moments(0.7)[1] == pytest.approx(0.49)
    assert policy_sample(g, 0.5) == pytest.approx(0.4)
    assert np.all(policy_sample(0.3, np.full(4, 0.2)) == 0.3)


def test_log_wealth_mean_is_exact_under_moment_stepping():
    m = 0.01
    pol = log_policy_unconstrained(MKT, m)
    b = rollout(pol, MKT, SimGrid(1.0, 1 / 250), 1.0, seed=5, n_paths=20_000)
    lx = np.log(b.states[:, -1])
    rho2 = sharpe_ratio(MKT) ** 2
    exact = MKT.r + 0.5 * rho2 - 0.5 * m
    assert abs(lx.mean() - exact) < 3 * lx.std(ddof=1) / math.sqrt(lx.size)
    # volatility sqrt(E[a^2]) sigma gives the exact log-variance as well
    var = MKT.sigma**2 * (merton_fraction(MKT) ** 2 + m / MKT.sigma**2)
    assert lx.var(ddof=1) == pytest.approx(var, rel=0.05)


def test_action_sampled_matches_moment_stepping_in_mean():
    pol = log_policy_constrained(MKT, 0.05, (0.0, 1.0))
    grid = SimGrid(1.0, 1 / 50)
    a = rollout(pol, MKT, grid, 1.0, seed=2, n_paths=20_000, stepping="action-sampled")
    b = rollout(pol, MKT, grid, 1.0, seed=3, n_paths=20_000)
    la, lb = np.log(a.states[:, -1]), np.log(b.states[:, -1])
    se = math.hypot(la.std(), lb.std()) / math.sqrt(la.size)
    assert abs(la.mean() - lb.mean()) < 4 * se
    assert a.actions.shape == (20_000, 50) and np.all((a.actions >= 0) & (a.actions <= 1))
    assert b.actions is None


def test_rollout_reproducible_and_feedback_path_agrees():
    pol = log_policy_unconstrained(MKT, 0.02)
    grid = SimGrid(1.0, 1 / 20)
    a = rollout(pol, MKT, grid, 1.0, seed=9, n_paths=50, stepping="action-sampled")
    b = rollout(pol, MKT, grid, 1.0, seed=9, n_paths=50, stepping="action-sampled")
    assert np.array_equal(a.states, b.states)
    # a constant callable takes the step loop but must give the same paths
    c = rollout(lambda t, x: pol, MKT, grid, 1.0, seed=9, n_paths=50, stepping="action-sampled")
    assert np.allclose(a.states, c.states, rtol=1e-12)
    assert np.array_equal(a.actions, c.actions)


def test_amount_units_euler():
    grid = SimGrid(1.0, 1 / 4)
    b = rollout(0.0, MKT, grid, 2.0, seed=0, n_paths=3, units="amount")
    assert b.states[:, -1] == pytest.approx(2.0 * (1 + 0.03 / 4) ** 4)
    with pytest.raises(ValueError):
        rollout(0.5, MKT, grid, -1.0, seed=0)
    with pytest.raises(ValueError):
        rollout(0.5, MKT, grid, 1.0, seed=0, stepping="other")


def test_batch_csv(tmp_path):
    b = rollout(GaussianPolicy(0.5, 0.1), MKT, SimGrid(1.0, 0.5), 1.0, seed=1, n_paths=2, stepping="action-sampled")
    p = tmp_path / "paths.csv"
    b.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["path", "t", "x", "action"]
    assert len(rows) == 1 + 2 * 3 and rows[3][3] == ""
    assert float(rows[2][2]) == pytest.approx(b.states[0, 1], rel=1e-11)
    assert len(b) == 2 and isinstance(b[1], Trajectory) and len(list(b)) == 2

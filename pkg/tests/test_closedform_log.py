import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explorer.closedform_log import (
    IntervalBounds,
    constrained_merton,
    constrained_value_no_exploration,
    exploration_cost_constrained,
    exploration_cost_unconstrained,
    exploration_premium_log,
    log_policy_constrained,
    log_policy_unconstrained,
    log_value_constrained,
    log_value_unconstrained,
    merton_value,
    z_ab,
    z_ab_direct,
)
from explorer.improve import gaussian_policy_value_log
from explorer.market import MarketParams, merton_fraction, sharpe_ratio
from explorer.stats import TruncatedGaussianPolicy, trunc_entropy

MKT = MarketParams(0.03, 0.08, 0.3)
UNIT = (0.0, 1.0)


def test_merton_quantities():
    assert merton_fraction(MKT) == pytest.approx(0.555556, abs=1e-6)
    assert sharpe_ratio(MKT) == pytest.approx(1 / 6, rel=1e-14)
    assert merton_value(0.0, 1.0, MKT, 1.0) == pytest.approx(0.03 + 1 / 72, rel=1e-14)


def test_unconstrained_value_examples():
    assert log_value_unconstrained(1.0, 2.5, 0.01, MKT, 1.0) == pytest.approx(math.log(2.5), abs=1e-15)
    # direct arithmetic of the rate decomposition
    expected = 0.03 + 0.5 / 36 + 0.005 * math.log(2 * math.pi * 0.01 / 0.09)
    assert log_value_unconstrained(0.0, 1.0, 0.01, MKT, 1.0) == pytest.approx(expected, abs=1e-15)
    assert log_value_unconstrained(0.0, 1.0, 0.01, MKT, 1.0) == pytest.approx(0.0420917, abs=1e-6)
    assert log_value_unconstrained(0.2, 3.0, 0.0, MKT, 1.0) == merton_value(0.2, 3.0, MKT, 1.0)
    with pytest.raises(ValueError):
        log_value_unconstrained(0.0, 0.0, 0.01, MKT, 1.0)
    with pytest.raises(ValueError):
        log_value_unconstrained(0.0, 1.0, -0.1, MKT, 1.0)


def test_m_to_zero_limit():
    vals = [log_value_unconstrained(0.0, 1.0, m, MKT, 1.0) for m in (1e-4, 1e-6, 1e-8, 1e-10)]
    errs = [abs(v - merton_value(0.0, 1.0, MKT, 1.0)) for v in vals]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-8


def test_unconstrained_value_matches_policy_oracle():
    # value of holding lambda* computed from its moments and entropy
    for m in (0.001, 0.01, 0.3):
        pol = log_policy_unconstrained(MKT, m)
        assert gaussian_policy_value_log(pol, 0.1, 1.7, m, MKT, 1.0) == pytest.approx(
            log_value_unconstrained(0.1, 1.7, m, MKT, 1.0), abs=1e-12)


def test_z_ab_examples():
    assert z_ab(0.01, MKT, UNIT) == pytest.approx(0.86100, abs=1e-5)
    assert z_ab(0.01, MKT, UNIT) == pytest.approx(z_ab_direct(0.01, MKT, UNIT), abs=1e-14)
    assert z_ab(0.01, MKT, None) == 1.0
    assert 0.01 * math.log(z_ab(0.01, MKT, UNIT)) == pytest.approx(-0.0014965, abs=1e-6)


def test_constrained_value_example():
    v = log_value_constrained(0.0, 1.0, 0.01, MKT, 1.0, UNIT)
    assert v == pytest.approx(0.0405952, abs=1e-6)
    assert v == pytest.approx(log_value_unconstrained(0.0, 1.0, 0.01, MKT, 1.0) + 0.01 * math.log(z_ab(0.01, MKT, UNIT)), abs=1e-15)
    assert log_value_constrained(0.0, 1.0, 0.01, MKT, 1.0, None) == log_value_unconstrained(0.0, 1.0, 0.01, MKT, 1.0)


@pytest.mark.parametrize("bounds", [(0.0, 1.0), (-0.5, 0.6), (0.7, 2.0), (-1.0, 0.2), (0.0, math.inf), (-math.inf, 0.3)])
@pytest.mark.parametrize("m", [0.001, 0.01, 0.5])
def test_constrained_value_matches_truncated_policy_oracle(bounds, m):
    # the HJB maximiser is the truncated law; evaluating it through quadrature-free
    # moments and entropy must reproduce the closed form exactly
    pol = log_policy_constrained(MKT, m, bounds)
    assert gaussian_policy_value_log(pol, 0.3, 2.0, m, MKT, 1.0) == pytest.approx(
        log_value_constrained(0.3, 2.0, m, MKT, 1.0, bounds), abs=1e-12)


@pytest.mark.parametrize("bounds", [(0.0, 1.0), (0.7, 2.0), (-1.0, 0.2)])
def test_truncated_law_beats_nearby_truncated_laws(bounds):
    m = 0.05
    best = log_value_constrained(0.0, 1.0, m, MKT, 1.0, bounds)
    opt = log_policy_constrained(MKT, m, bounds)
    for dm, dv in [(0.02, 0), (-0.02, 0), (0, 0.1), (0, -0.1), (0.05, 0.05)]:
        alt = TruncatedGaussianPolicy(opt.mean + dm, opt.var * (1 + dv), *bounds)
        assert gaussian_policy_value_log(alt, 0.0, 1.0, m, MKT, 1.0) < best


def test_hjb_residual_by_finite_differences():
    m, bd = 0.02, (0.0, 1.0)
    t, x, h = 0.4, 1.3, 1e-4
    V = lambda tt, xx: log_value_constrained(tt, xx, m, MKT, 1.0, bd)
    vt = (V(t + h, x) - V(t - h, x)) / (2 * h)
    vx = (V(t, x + h) - V(t, x - h)) / (2 * h)
    vxx = (V(t, x + h) - 2 * V(t, x) + V(t, x - h)) / h**2
    pol = log_policy_constrained(MKT, m, bd)
    from explorer.market import policy_moments

    m1, m2 = policy_moments(pol)
    ham = (MKT.r + (MKT.mu - MKT.r) * m1) * x * vx + 0.5 * MKT.sigma**2 * m2 * x * x * vxx + m * trunc_entropy(pol)
    assert vt + float(ham) == pytest.approx(0.0, abs=1e-6)


def test_decomposition_identity_on_grid():
    for t in (0.0, 0.5, 0.9):
        for x in (0.5, 1.0, 4.0):
            for m in (0.001, 0.05, 1.0):
                for bd in [(0.0, 1.0), (0.8, 2.0), (-2.0, 0.1), None]:
                    lhs = log_value_constrained(t, x, m, MKT, 1.0, bd)
                    rhs = constrained_value_no_exploration(t, x, MKT, 1.0, bd) + exploration_premium_log(t, m, MKT, 1.0, bd)
                    assert lhs == pytest.approx(rhs, abs=1e-13)


def test_m_zero_constrained_routes_to_classical():
    assert log_value_constrained(0.0, 1.0, 0.0, MKT, 1.0, (0.7, 1.0)) == constrained_value_no_exploration(0.0, 1.0, MKT, 1.0, (0.7, 1.0))
    assert constrained_merton(MKT, (0.7, 1.0)) == 0.7
    assert constrained_merton(MKT, (0.0, 1.0)) == pytest.approx(5 / 9)


def test_bounds_validation():
    with pytest.raises(ValueError):
        IntervalBounds(1.0, 1.0)
    assert IntervalBounds().unbounded


@given(st.floats(1e-4, 5.0), st.floats(0.1, 10.0))
def test_unconstrained_cost_law(m, T):
    assert exploration_cost_unconstrained(m, T) == m * T / 2


def test_constrained_cost_example_and_definitional_oracle():
    m = 0.01
    c = exploration_cost_constrained(m, 1.0, MKT, UNIT)
    assert c == pytest.approx(0.0027671, abs=1e-6)
    # classical value - (exploratory value - accumulated entropy bonus)
    ent = trunc_entropy(log_policy_constrained(MKT, m, UNIT))
    oracle = constrained_value_no_exploration(0.0, 1.0, MKT, 1.0, UNIT) - log_value_constrained(0.0, 1.0, m, MKT, 1.0, UNIT) + m * ent
    assert c == pytest.approx(oracle, abs=1e-13)
    assert exploration_cost_constrained(m, 1.0, MKT, None) == pytest.approx(m / 2, abs=1e-15)


@pytest.mark.parametrize("bd", [(0.7, 2.0), (-1.0, 0.3)])
def test_constrained_cost_definitional_oracle_when_merton_clipped(bd):
    m = 0.05
    ent = trunc_entropy(log_policy_constrained(MKT, m, bd))
    oracle = constrained_value_no_exploration(0.0, 1.0, MKT, 2.0, bd) - log_value_constrained(0.0, 1.0, m, MKT, 2.0, bd) + 2.0 * m * ent
    assert exploration_cost_constrained(m, 2.0, MKT, bd) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("bd", [(0.0, 1.0), (-0.5, 0.6), (0.5, 0.6), (0.55, math.inf)])
def test_comparison_lemma(bd):
    for m in np.geomspace(0.001, 2.0, 25):
        assert exploration_cost_constrained(m, 1.0, MKT, bd) <= m / 2 + 1e-15


def test_costs_vanish_as_m_shrinks():
    ms = [0.1, 0.01, 0.001, 1e-4, 1e-5]
    costs = [exploration_cost_unconstrained(m, 1.0) for m in ms]
    assert all(b <= a / 10 for a, b in zip(costs, costs[1:]))
    # constrained: cost/m climbs to 1/2 from below, so each decade ratio sits just under 10
    cons = [exploration_cost_constrained(m, 1.0, MKT, UNIT) for m in ms]
    per_m = [c / m for c, m in zip(cons, ms)]
    assert all(b >= a for a, b in zip(per_m, per_m[1:]))
    assert per_m[-1] == pytest.approx(0.5, abs=1e-12)
    ratios = [a / b for a, b in zip(cons, cons[1:])]
    assert all(r > 1 for r in ratios) and ratios[-2] > 9.99


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.0, 0.5), st.floats(0.6, 2.0), st.floats(1e-3, 1.0))
def test_constrained_value_below_unconstrained(a, b, m):
    assert log_value_constrained(0.0, 1.0, m, MKT, 1.0, (a, b)) <= log_value_unconstrained(0.0, 1.0, m, MKT, 1.0) + 1e-15

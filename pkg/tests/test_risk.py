import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from conftest import rotate
from helpers import static_predictions, straight_trajectory
from pedrisk.cli import random_box_case
from pedrisk.prediction import GaussianState, PredictionSet
from pedrisk.risk import (BoxParams, EgoBox, HarmCoeffs, RiskThresholds, assess_trajectory, bvn_cdf,
                          collision_probability, delta_v, harm, maximin, mc_collision_probability)

prob = st.floats(-4.0, 4.0)
corr = st.floats(-0.999, 0.999)


def test_bvn_spot_values():
    assert abs(bvn_cdf(0.0, 0.0, 0.0) - 0.25) <= 1e-9
    assert abs(bvn_cdf(0.0, 0.0, 0.5) - (0.25 + math.asin(0.5) / (2 * math.pi))) <= 1e-6
    assert bvn_cdf(0.0, 0.0, 0.5) == pytest.approx(1 / 3, abs=1e-12)


@given(prob, corr)
def test_bvn_marginal(y, rho):
    assert bvn_cdf(math.inf, y, rho) == pytest.approx(ndtr(y), abs=1e-14)
    assert bvn_cdf(y, math.inf, rho) == pytest.approx(ndtr(y), abs=1e-14)
    assert bvn_cdf(-math.inf, y, rho) == 0.0


@given(prob, prob, corr)
def test_bvn_matches_scipy(x, y, rho):
    ref = multivariate_normal([0, 0], [[1, rho], [rho, 1]]).cdf([x, y])
    assert bvn_cdf(x, y, rho) == pytest.approx(ref, abs=1e-9)


def test_bvn_origin_closed_form_mc():
    rng = np.random.default_rng(0)
    z = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]], size=10_000_000, method="cholesky")
    frac = np.mean((z[:, 0] <= 0) & (z[:, 1] <= 0))
    assert abs(frac - 1 / 3) < 3 * math.sqrt(2 / 9 / 1e7)


def _centered():
    return GaussianState(0.0, [0.0, 0.0], np.eye(2)), EgoBox((0.0, 0.0), 0.0, 1.0, 1.0)


def test_centered_box():
    g, box = _centered()
    assert collision_probability(g, box) == pytest.approx((2 * ndtr(1.0) - 1) ** 2, abs=1e-12)
    assert collision_probability(g, box) == pytest.approx(0.466065, abs=1e-6)
    assert abs(mc_collision_probability(g, box, 1_000_000, seed=5) - 0.4661) <= 0.0015


def test_far_box():
    g = GaussianState(0.0, [100.0, 0.0], np.eye(2))
    assert collision_probability(g, EgoBox((0.0, 0.0), 0.3, 1.0, 1.0)) < 1e-12


def test_mc_full_and_empty_boxes():
    g = GaussianState(0.0, [1.0, -2.0], np.diag([0.25, 1.0]))
    assert mc_collision_probability(g, EgoBox((1.0, -2.0), 0.0, 4.0, 8.0), 100_000, seed=1) == 1.0
    empty = EgoBox((1.0, -2.0), 0.4, 1.0, 0.0)
    assert mc_collision_probability(g, empty, 100_000, seed=1) == 0.0
    assert collision_probability(g, empty) == 0.0


def test_analytic_vs_mc_20_cases():
    rng = np.random.default_rng(20)
    n = 1_000_000
    for _ in range(20):
        g, box = random_box_case(rng)
        p = collision_probability(g, box)
        q = mc_collision_probability(g, box, n, seed=int(rng.integers(2**32)))
        assert abs(p - q) <= 3 * math.sqrt(max(p * (1 - p), 1 / n) / n)


def _case(seed):
    return random_box_case(np.random.default_rng(seed))


@given(st.integers(0, 2**32 - 1))
def test_probability_bounds(seed):
    g, box = _case(seed)
    p = collision_probability(g, box)
    assert 0.0 <= p <= 1.0


@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi))
def test_rotation_invariance(seed, theta):
    g, box = _case(seed)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    g2 = GaussianState(0.0, R @ g.mean, R @ g.cov @ R.T)
    box2 = EgoBox(tuple(rotate(box.center, theta)), box.heading + theta, box.half_length, box.half_width,
                  box.inflation)
    assert collision_probability(g2, box2) == pytest.approx(collision_probability(g, box), abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_inflation_monotone(seed, extra):
    g, box = _case(seed)
    bigger = EgoBox(box.center, box.heading, box.half_length, box.half_width, box.inflation + extra)
    assert collision_probability(g, bigger) >= collision_probability(g, box) - 1e-15


def test_delta_v():
    assert delta_v(1500, 1500, 7.0, 7.0, 0.0) == 0.0
    assert delta_v(80, 80, 3.0, 3.0, math.pi) == pytest.approx(3.0)
    assert delta_v(1500, 75, 10.0, 0.0, 0.0) == pytest.approx(75 / 1575 * 10)
    assert delta_v(75, 1500, 0.0, 10.0, 0.0) == pytest.approx(1500 / 1575 * 10)
    assert delta_v(75, 1500, 0.0, 10.0, 0.0) == pytest.approx(9.524, abs=1e-3)


def test_harm_limits():
    c = HarmCoeffs()
    assert harm(0.0, c) == pytest.approx(1 / (1 + math.exp(c.c0 - c.c_area)))
    assert harm(1e4, c) == pytest.approx(1.0)


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=50), st.floats(1e-3, 5.0))
def test_harm_monotone(dvs, eps):
    c = HarmCoeffs()
    dv = np.array(dvs)
    assert np.all(harm(dv + eps, c) > harm(dv, c))


@given(st.floats(40.0, 120.0), st.floats(500.0, 3000.0), st.floats(1.0, 3000.0), st.floats(0.5, 20.0))
def test_heavier_striker_more_harm(m_ped, m_car, extra, v):
    lo = harm(delta_v(m_ped, m_car, 0.0, v, 0.0))
    hi = harm(delta_v(m_ped, m_car + extra, 0.0, v, 0.0))
    assert hi >= lo


@given(st.integers(0, 2**32 - 1))
def test_risk_bounds_and_maximin(seed):
    rng = np.random.default_rng(seed)
    traj = straight_trajectory(speed=float(rng.uniform(0, 10)))
    pts = rng.uniform([-5, -4], [45, 4], size=(int(rng.integers(1, 6)), 2))
    preds = static_predictions(pts, sigma=float(rng.uniform(0.05, 1.5)))
    th = RiskThresholds()
    rep = assess_trajectory(traj, preds, BoxParams(), HarmCoeffs(), th)
    for a in (rep.p, rep.harm, rep.risk):
        assert np.all((0.0 <= a) & (a <= 1.0))
    assert np.all(rep.risk <= np.minimum(rep.p, rep.harm) + 1e-15)
    # adding an obstacle never lowers R*
    more = static_predictions(np.vstack([pts, rng.uniform([-5, -4], [45, 4], size=(1, 2))]), sigma=float(
        np.sqrt(preds.covs[0, 0, 0, 0])))
    rep2 = assess_trajectory(traj, more, BoxParams(), HarmCoeffs(), th)
    assert rep2.max_risk >= rep.max_risk
    if rep.valid:
        assert np.all(rep.risk <= th.r_max)


def test_no_obstacles():
    rep = assess_trajectory(straight_trajectory(), PredictionSet(np.arange(41) * 0.1), BoxParams(), HarmCoeffs(),
                            RiskThresholds(0.01, 1e-6))
    assert rep.p.size == 0 and rep.max_risk == 0.0 and rep.valid


@pytest.mark.parametrize("speed", [1.0, 5.0, 9.0])
def test_deterministic_collision_limit(speed):
    traj = straight_trajectory(speed=speed)
    k = 10
    preds = static_predictions([[traj.x[k], 0.0]], sigma=1e-4)
    box = BoxParams(half_length=0.05, half_width=0.05, inflation=0.0)
    coeffs = HarmCoeffs()
    rep = assess_trajectory(traj, preds, box, coeffs, RiskThresholds())
    assert rep.p[k, 0] == pytest.approx(1.0, abs=1e-9)
    h = harm(delta_v(75.0, box.mass, 0.0, speed, 0.0), coeffs)
    assert rep.max_risk == pytest.approx(h, abs=1e-9)
    for th in (RiskThresholds(0.99, 0.075), RiskThresholds(0.99, 0.5), RiskThresholds(0.2, 0.9)):
        rep = assess_trajectory(traj, preds, box, coeffs, th)
        assert rep.valid == (h < min(th.h_max, th.r_max))


def test_maximin_gate():
    p = np.array([[1e-5, 0.2]])
    h = np.array([[0.999, 0.3]])
    h_star, r_star, valid = maximin(p, h, RiskThresholds(0.99, 0.075))
    assert h_star == 0.3 and r_star == pytest.approx(0.06) and valid

import math

import numpy as np
import pytest

from pawf.curve import MonomialCurve
from pawf.fields import Box
from pawf.geometry import (MINUS, PLUS, GeometryError, ParamIntervalSet, beta_box,
                           beta_rectangle_scale, build_setup, crux_coverage,
                           curve_pair_params, param_preimage_rect)

from conftest import UNIT

PAR = MonomialCurve.parabola()


def brute_force_W(setup, a, sign, lo, hi, dt=1e-4):
    """Endpoints of ``{t in [lo, hi] : a + sign*gamma(t) in W}`` by scanning."""
    t = np.arange(lo, hi + dt, dt)
    g1, g2 = setup.curve(t)
    inside = setup.in_W(a[0] + sign * g1, a[1] + sign * g2)
    idx = np.flatnonzero(inside)
    assert idx.size and np.all(np.diff(idx) == 1), "scan found a non-connected set"
    return t[idx[0]], t[idx[-1]]


# ---------------------------------------------------------------- preimages

def test_preimage_rect_examples():
    s = param_preimage_rect(PAR, (0.5, 0.3), PLUS, Box(10, 11, 0, 200))
    assert s.intervals == ((9.5, 10.5),)
    s = param_preimage_rect(PAR, (0.0, 0.0), PLUS, Box(1, 2, 1, 2))
    assert s.intervals == ((1.0, math.sqrt(2)),)
    assert param_preimage_rect(PAR, (0.0, 0.0), PLUS, Box(1, 2, 5, 6)).empty


def test_preimage_rect_both_branches():
    # x2 = t^2 in [1, 4] with |x1| = |t| <= 3: both t in [1,2] and t in [-2,-1]
    s = param_preimage_rect(PAR, (0.0, 0.0), PLUS, Box(-3, 3, 1, 4))
    assert s.intervals == ((-2.0, -1.0), (1.0, 2.0))
    assert s.total_length == 2.0


def test_param_interval_set_ops():
    s = ParamIntervalSet.from_pairs([(3, 4), (1, 2), (1.5, 2.5)])
    assert s.intervals == ((1, 2.5), (3, 4))
    assert s.contains(3.5) and not s.contains(2.7)
    assert s.intersect(2, 3.5).intervals == ((2, 2.5), (3, 3.5))
    assert s.negated().intervals == ((-4, -3), (-2.5, -1))


def test_beta_rectangles():
    assert beta_rectangle_scale(Box(0, 2, 0, 4), (1, 2)) == 2
    with pytest.raises(ValueError):
        beta_rectangle_scale(Box(0, 2, 0, 3), (1, 2))
    b = beta_box((1, 1), 3, (1, 2))
    assert b == Box(1, 4, 1, 10)


# ---------------------------------------------------------------- setup

def test_build_setup_examples(setup10):
    assert setup10.P == Box(21, 22, 0, 1)
    assert setup10.I_A == (10, 11)
    s = build_setup(PAR, Box(0, 2, 0, 4), 10, 1)
    assert s.P == Box(42, 44, 0, 4) and s.I_A == (20, 22)
    assert s.search_window == (16, 26)


def test_build_setup_rejects():
    with pytest.raises(Exception):
        build_setup(MonomialCurve((1, 2), (1, 1), (-1, -1)), UNIT, 10, 1)
    with pytest.raises(ValueError):
        build_setup(PAR, UNIT, 2, 1)


def test_membership_examples(setup10):
    y = (0.5 + 10.5, 0.5 + 10.5 ** 2)
    assert y == (11.0, 110.75)
    assert setup10.membership("Qt", y)
    z = (21.5 - 10.5, 0.5 + 10.5 ** 2)
    assert z == y
    assert setup10.membership("Pt", y) and setup10.membership("W", y)
    assert not setup10.membership("W", (0.5, 0.5))


def test_W_separated_from_Q_and_P(setup10, rng):
    for box in (setup10.Q, setup10.P):
        pts = box.sample(rng, 500)
        assert not setup10.in_W(pts[:, 0], pts[:, 1]).any()


def test_W_membership_two_routes(setup10, rng):
    box = setup10.W_bounding_box()
    pts = box.sample(rng, 4000)
    a = setup10.in_W(pts[:, 0], pts[:, 1])
    b = setup10.in_W_sections(pts[:, 0], pts[:, 1])
    assert a.any() and np.array_equal(a, b)


@pytest.mark.parametrize("A", [10, 100])
def test_W_area(A):
    """|W| is comparable to the swept region with A-free constants, and at
    least |Q| (W contains a translate of Q); against |Q| it grows with A."""
    s = build_setup(PAR, UNIT, A, 1)
    box = s.W_bounding_box()
    pts = box.sample(np.random.default_rng(1), 200_000)
    mc = box.area * s.in_W(pts[:, 0], pts[:, 1]).mean()
    exact = s.W_area()
    assert abs(mc - exact) <= 0.05 * exact
    assert 0.2 <= exact / s.Qtilde_area() <= 5.0
    assert exact >= s.Q.area


# ---------------------------------------------------------------- W preimages

def test_preimage_W_limit_at_large_A():
    s = build_setup(PAR, UNIT, 100, 1)
    lo, hi = s.preimage_W_batch([0.5], [0.5], PLUS, "Q")
    assert 0.49 <= (hi[0] - lo[0]) / s.ell <= 0.52


def test_preimage_W_matches_brute_force(setup10, rng):
    pts = setup10.Q.sample(rng, 10)
    lo, hi = setup10.preimage_W_batch(pts[:, 0], pts[:, 1], PLUS, "Q")
    win = setup10.search_window
    for p, a, b in zip(pts, lo, hi):
        ba, bb = brute_force_W(setup10, p, PLUS, *win)
        assert abs(a - ba) <= 2e-4 and abs(b - bb) <= 2e-4
        assert 0.2 <= b - a <= 0.9


def test_preimage_W_from_P(setup10):
    z = (21.5, 0.5)
    s = setup10.param_preimage_W(z, PLUS, "P")
    (a, b), = s.intervals
    assert -11.1 <= a < b <= -9.9
    ba, bb = brute_force_W(setup10, z, PLUS, -11.1, -9.9)
    assert abs(a - ba) <= 2e-4 and abs(b - bb) <= 2e-4


# ---------------------------------------------------------------- reflection

def test_reflection_axis_and_map(setup10, rng):
    assert abs(setup10.w_d - 11.0) <= 1e-9
    r1, r2 = setup10.reflect(10.5, 120.0)
    assert (float(r1), float(r2)) == (11.5, 120.0)
    pts = rng.uniform(0, 30, (100, 2))
    b1, b2 = setup10.reflect(*setup10.reflect(pts[:, 0], pts[:, 1]))
    assert np.allclose(b1, pts[:, 0], atol=1e-12) and np.array_equal(b2, pts[:, 1])


def test_W_reflection_symmetric(setup10, rng):
    assert setup10.check_reflection_symmetry(rng, 200) == 0


# ---------------------------------------------------------------- corners

def test_corner_regions(setup10):
    c = setup10.corner_regions(1)
    assert c.lb == Box(21, 21.1, 0, 0.5)
    assert bool(setup10.in_center(21.55, 0.75))
    assert bool(c.lb.contains(21.01, 0.2)) and not bool(setup10.in_center(21.01, 0.2))
    with pytest.raises(ValueError):
        setup10.corner_regions(0)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_preimage_length_near_corner(setup10, rng, r):
    """On the inner edges of the r-th corner box, |I(y,-,P)| is about 2^-r l/A."""
    s = setup10
    z = s.corner_regions(r).sample_delta(rng, 20, "lb")
    lo, hi = s.preimage_W_batch(z[:, 0], z[:, 1], PLUS, "P")
    t = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.05, 0.95, 9)[None, :]
    g1, g2 = s.curve(t)
    L = s.len_I_minus_P(z[:, 0, None] + g1, z[:, 1, None] + g2)
    ratio = L * s.A / (2.0 ** -r * s.ell)
    assert ratio.min() >= 1 / 8 and ratio.max() <= 8


# ---------------------------------------------------------------- inversion

def test_curve_pair_params_closed_form():
    t, s = curve_pair_params(PAR, (21.5, 0.5), (np.array([0.5]), np.array([0.5])))
    assert (t[0], s[0]) == (-10.5, 10.5)
    t, s = curve_pair_params(PAR, (21.5, 0.5), (np.array([0.5]), np.array([0.8])))
    assert abs(t[0] - s[0] + 21) <= 1e-13 and abs(t[0] + s[0] + 1 / 70) <= 1e-14
    with pytest.raises(GeometryError):
        curve_pair_params(PAR, (0.5, 0.5), (np.array([0.5]), np.array([0.7])))


def test_curve_pair_params_newton_matches_closed_form(rng):
    """The Newton route for general curves agrees with the parabola formula."""
    z = (21.5, 0.5)
    x = UNIT.sample(rng, 50)
    t0, s0 = curve_pair_params(PAR, z, (x[:, 0], x[:, 1]))
    stretched = MonomialCurve((1.0, 2.0 + 1e-300), (1, 1), (-1, 1))
    t1, s1 = curve_pair_params(stretched, z, (x[:, 0], x[:, 1]), seed=(-10.0, 10.0))
    assert np.allclose(t0, t1, atol=1e-10) and np.allclose(s0, s1, atol=1e-10)


@pytest.mark.parametrize("z", [(21.5, 0.5), (21.0, 0.0), (22.0, 1.0), (21.01, 0.2)])
def test_crux_coverage(setup10, z):
    rep = crux_coverage(setup10, z, 200, np.random.default_rng(3))
    assert rep.passed, rep


def test_crux_coverage_rejects_outside_point(setup10):
    with pytest.raises(ValueError):
        crux_coverage(setup10, (0.5, 0.5))


def test_second_coordinate_flip_class(rng):
    """A curve flipping the second coordinate gets P shifted vertically."""
    c = MonomialCurve((2, 1), (1, 1), (1, -1))
    s = build_setup(c, Box(0, 1, 0, 1), 10, 1)
    assert s.P == Box(0, 1, 21, 22)
    x = s.Q.sample(rng, 5)
    lo, hi = s.preimage_W_batch(x[:, 0], x[:, 1], PLUS, "Q")
    assert np.all(hi > lo)
    assert s.check_reflection_symmetry(rng, 100) == 0

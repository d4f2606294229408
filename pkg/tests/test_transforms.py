import math

import numpy as np
import pytest

from pawf.curve import LineCurve, MonomialCurve
from pawf.fields import Box, ScalarField, constant, from_function, make_indicator, zero_field
from pawf.geometry import PLUS, ParamIntervalSet
from pawf.quadrature import integrate_2d_batch
from pawf.transforms import (commutator_apply, commutator_two_term, dilate,
                             fractional_integral, fractional_scaling, hilbert_batch,
                             hilbert_curve, hilbert_curve_adjoint, hilbert_directional,
                             integral_restricted)

PAR = MonomialCurve.parabola()
UNIT = Box(0, 1, 0, 1)
ONE_Q = make_indicator(UNIT)
SLAB = ScalarField(lambda a, b: np.ones(np.shape(a)), Box(0, 1, -np.inf, np.inf), 1.0, "slab")
ONE = constant(1.0)
E1 = (1.0, 0.0)


def test_hilbert_symmetric_preimage_is_zero():
    assert abs(hilbert_curve(PAR, ONE_Q, (0.5, 0.5)).value) <= 1e-12


def test_hilbert_log_ratio():
    v = hilbert_curve(PAR, ONE_Q, (1.25, 0.5)).value
    assert abs(v - math.log(math.sqrt(0.5) / 0.25)) <= 1e-10


def test_adjoint_log_ratio_and_bounds():
    R1 = make_indicator(Box(10, 11, 0, 1))
    v = hilbert_curve_adjoint(LineCurve(E1), R1, (0.5, 0.3)).value
    assert abs(v - math.log(10.5 / 9.5)) <= 1e-12
    assert 1 / 11 <= v <= 1 / 9


def test_zero_input():
    for fn in (hilbert_curve, hilbert_curve_adjoint):
        assert fn(PAR, zero_field(), (0.3, 0.4)).value == 0
    assert fractional_integral(PAR, 0.2, zero_field(), (0.3, 0.4)).value == 0


def test_directional_examples():
    assert abs(hilbert_directional(E1, SLAB, (2.0, 0.3)).value - math.log(2)) <= 1e-12
    assert abs(hilbert_directional(E1, SLAB, (0.5, 0.3)).value) <= 1e-12


def test_directional_sign_flip(rng):
    f = ScalarField(lambda a, b: np.exp(-a * a) * np.cos(b), Box(-3, 3, -3, 3), 1.0, "bump")
    sigma = (0.6, 0.8)
    for x in rng.uniform(-2, 2, (20, 2)):
        a = hilbert_directional(sigma, f, x).value
        b = hilbert_directional((-0.6, -0.8), f, x).value
        assert abs(a + b) <= 1e-9


def test_restricted_integrals():
    s = ParamIntervalSet(((9.5, 10.5),))
    assert abs(integral_restricted(PAR, ONE, (0, 0), PLUS, s).value - math.log(10.5 / 9.5)) <= 1e-12
    v = integral_restricted(PAR, ONE, (0, 0), PLUS, s.negated()).value
    assert abs(v + math.log(10.5 / 9.5)) <= 1e-12
    assert integral_restricted(PAR, ONE, (0, 0), PLUS, ParamIntervalSet()).value == 0
    with pytest.raises(ValueError):
        integral_restricted(PAR, ONE, (0, 0), PLUS, ParamIntervalSet(((-1.0, 1.0),)))


def test_fractional_unit_kernel():
    v = fractional_integral(PAR, 1 / 3, ONE_Q, (1.25, 0.5)).value
    assert abs(v - (math.sqrt(0.5) - 0.25)) <= 1e-10


def test_fractional_scaling_identity(rng):
    pts = Box(-0.5, 1.5, 0.2, 2.0).sample(rng, 10)
    chk = fractional_scaling(PAR, 0.2, ONE_Q, 2.0, pts)
    assert chk.rel_error <= 1e-6


def test_dilate():
    d = dilate(ONE_Q, (2.0, 4.0))
    assert d.support == Box(0, 0.5, 0, 0.25)
    assert d.at((0.4, 0.2)) == 1 and d.at((0.6, 0.2)) == 0
    with pytest.raises(ValueError):
        dilate(ONE_Q, (0.0, 1.0))


def test_commutator_examples(rng):
    b = from_function(lambda a, c: a)
    assert abs(commutator_apply(E1, b, SLAB, (2.0, 0.3)).value - 1.0) <= 1e-12
    c = constant(2.5)
    assert commutator_apply(PAR, c, ONE_Q, (1.25, 0.5)).value == 0
    s = from_function(lambda a, c: np.sin(a))
    for x in rng.uniform(-0.5, 1.5, (10, 2)):
        one = commutator_apply(PAR, s, ONE_Q, x).value
        two = commutator_two_term(PAR, s, ONE_Q, x).value
        assert abs(one - two) <= 1e-6


def test_unbounded_support_needs_window():
    with pytest.raises(ValueError):
        hilbert_curve(PAR, ONE, (0, 0))


def test_adjointness_on_separated_supports():
    """<H f, g> = <f, H* g> for smooth bumps whose supports are joined by
    the curve at parameters away from zero."""
    bump = lambda c1, c2: (lambda a, b: np.where(
        (np.abs(a - c1) < 0.5) & (np.abs(b - c2) < 0.5),
        np.cos(np.pi * (a - c1)) ** 2 * np.cos(np.pi * (b - c2)) ** 2, 0.0))
    fbox, gbox = Box(-0.5, 0.5, -0.5, 0.5), Box(2.5, 3.5, 8.5, 9.5)
    f = ScalarField(bump(0.0, 0.0), fbox, 1.0, "f")
    g = ScalarField(bump(3.0, 9.0), gbox, 1.0, "g")
    n = 12
    from pawf.quadrature import tensor_rule
    xg, wg = tensor_rule(gbox.intervals, n, 2)
    xf, wf = tensor_rule(fbox.intervals, n, 2)
    Hf = hilbert_batch(PAR, f, xg).value
    Hsg = hilbert_batch(PAR, g, xf, adjoint=True).value
    lhs = np.sum(wg * Hf * g(xg[:, 0], xg[:, 1]))
    rhs = np.sum(wf * f(xf[:, 0], xf[:, 1]) * Hsg)
    assert abs(lhs) > 1e-3
    assert abs(lhs - rhs) <= 1e-6 * abs(lhs)

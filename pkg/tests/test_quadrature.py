import math

import numpy as np
import pytest

from pawf.fields import Box
from pawf.quadrature import (QuadratureError, adaptive_rule, gauss_legendre, integrate,
                             integrate_2d_batch, integrate_batch, tensor_rule)


def test_integrate_smooth_against_closed_form():
    val, err, _ = integrate(np.exp, 0.0, 1.0, abs_tol=1e-14, rel_tol=1e-14)
    assert abs(val - (math.e - 1)) <= 1e-13
    assert err >= 0


def test_integrate_batch_rows_are_independent():
    lo = np.array([0.0, 1.0, 2.0])
    hi = np.array([1.0, 3.0, 2.5])
    res = integrate_batch(lambda ids, t: t ** 2 * (ids + 1), lo, hi, abs_tol=1e-13)
    expect = [(1 / 3) * 1, (27 - 1) / 3 * 2, (2.5 ** 3 - 8) / 3 * 3]
    assert np.allclose(res.value, expect, rtol=0, atol=1e-12)


def test_breakpoints_resolve_a_jump():
    f = lambda ids, t: np.where(t < 0.3, 1.0, 0.0)
    res = integrate_batch(f, [0.0], [1.0], breaks=[[0.3]], abs_tol=1e-14)
    assert abs(res.value[0] - 0.3) <= 1e-14


def test_log_singular_endpoint_integrable():
    val, _, _ = integrate(lambda t: np.log(t), 0.0, 1.0, abs_tol=1e-10, rel_tol=1e-10)
    assert abs(val + 1.0) <= 1e-8


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(-1.0, 2.0, 5, panels=3)
    assert abs(np.sum(w * x ** 9) - (2.0 ** 10 - 1.0) / 10) <= 1e-10
    assert abs(w.sum() - 3.0) <= 1e-14


def test_tensor_rule_area_and_moment():
    nodes, w = tensor_rule(((0, 2), (1, 2)), n=6, panels=2)
    assert abs(w.sum() - 2.0) <= 1e-14
    assert abs(np.sum(w * nodes[:, 0] * nodes[:, 1]) - 2.0 * 1.5) <= 1e-13


def test_integrate_2d_triangle():
    # int_0^1 int_0^x y dy dx = 1/6
    res = integrate_2d_batch(lambda ids, x, y: y, [0.0], [1.0],
                             lambda ids, x: np.zeros_like(x), lambda ids, x: x,
                             abs_tol=1e-13, rel_tol=1e-13)
    assert abs(res.value[0] - 1 / 6) <= 1e-12


def test_adaptive_rule_reusable_on_other_integrands():
    box = Box(0, 1, 0, 2)
    rule, val, _ = adaptive_rule(lambda a, b: np.cos(a * b), box.intervals,
                                 abs_tol=1e-12, rel_tol=1e-12)
    assert abs(rule.weights.sum() - 2.0) <= 1e-12
    assert abs(rule.apply(lambda a, b: a + b) - (1.0 + 2.0)) <= 1e-11


def test_nonconvergence_is_reported():
    f = lambda ids, t: np.sin(1.0 / t)
    res = integrate_batch(f, [1e-6], [1.0], abs_tol=1e-15, rel_tol=1e-15, max_depth=4)
    assert not res.converged[0]
    with pytest.raises(QuadratureError):
        integrate_batch(f, [1e-6], [1.0], abs_tol=1e-15, rel_tol=1e-15, max_depth=4,
                        raise_on_failure=True)

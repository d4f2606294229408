import threading

import numpy as np
import pytest

from pawf.fields import (Box, FieldEvaluationError, MemoCache, ScalarField, combine,
                         constant, from_function, level_crossings, make_indicator,
                         memoize, restrict, zero_field)

UNIT = Box(0, 1, 0, 1)


def test_indicator_inside_outside_and_boundary():
    one = make_indicator(UNIT)
    assert one.at((0.5, 0.5)) == 1
    assert one.at((2, 0)) == 0
    assert make_indicator(Box(21, 22, 0, 1)).at((21.5, 1.0)) == 1
    assert one.support == UNIT and one.sup == 1


def test_indicator_rejects_degenerate_box():
    with pytest.raises(ValueError):
        make_indicator(Box(0, 0, 0, 1))


def test_combinators():
    one = make_indicator(UNIT)
    assert combine("add", one, one).at((0.5, 0.5)) == 2
    far = make_indicator(Box(2, 3, 2, 3))
    prod = combine("mul", one, far)
    assert prod.support.empty
    assert prod.at((0.5, 0.5)) == 0 and prod.at((2.5, 2.5)) == 0
    half = constant(0.5)
    assert combine("div", one, half, div_floor=1e-3).at((0.5, 0.5)) == 2


def test_div_floor_fires_with_point():
    one = make_indicator(UNIT)
    tiny = from_function(lambda a, b: 1e-6 * np.ones(np.shape(a)))
    q = combine("div", one, tiny, div_floor=1e-3)
    with pytest.raises(FieldEvaluationError) as exc:
        q.at((0.25, 0.75))
    assert exc.value.point == (0.25, 0.75)
    with pytest.raises(ValueError):
        combine("div", one, tiny)


def test_div_floor_only_on_numerator_support():
    one = make_indicator(UNIT)
    zero_den = from_function(lambda a, b: np.zeros(np.shape(a)))
    q = combine("div", one, zero_den, div_floor=1e-3)
    assert q.at((5.0, 5.0)) == 0


def test_support_hint_is_sound(rng):
    f = restrict(from_function(lambda a, b: 3 + a * b), UNIT)
    pts = rng.uniform(-3, 4, size=(500, 2))
    outside = ~UNIT.contains(pts[:, 0], pts[:, 1])
    assert np.all(f(pts[outside, 0], pts[outside, 1]) == 0)


def test_zero_field_and_operator_sugar():
    one = make_indicator(UNIT)
    assert zero_field().at((0.3, 0.3)) == 0
    assert (one - one).at((0.5, 0.5)) == 0
    assert (2.0 * one).at((0.5, 0.5)) == 2
    assert (-one).at((0.5, 0.5)) == -1


def test_memoize_contract():
    f = from_function(lambda a, b: a)
    m = memoize(f, 1e-6)
    v = m.at((0.1234567, 0.0))
    assert abs(v - 0.1234567) <= 1e-6
    assert m.at((0.1234567, 0.0)) == v
    assert memoize(constant(3.0), 1e-6).at((17.3, -2.2)) == 3.0
    with pytest.raises(ValueError):
        MemoCache(0.0)


def test_memo_cache_hits_and_threads():
    calls = []

    def ev(a, b):
        calls.append(np.size(a))
        return np.sin(a) + b

    cache = MemoCache(1e-3)
    m = memoize(from_function(ev), 1e-3, cache)
    pts = np.random.default_rng(0).uniform(0, 1, (200, 2))
    first = m(pts[:, 0], pts[:, 1])
    results = []

    def worker():
        results.append(m(pts[:, 0], pts[:, 1]))

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for r in results:
        assert np.array_equal(r, first)
    assert cache.hits >= 4 * 200


def test_level_crossings_finds_jump():
    f = from_function(lambda a, b: b - 0.3 - 0.1 * a)
    roots = level_crossings(f, 0.0, 0.0, 1.0)
    out = roots(np.array([0.0, 1.0]))
    assert abs(out[0][0] - 0.3) <= 1e-12 and abs(out[1][0] - 0.4) <= 1e-12


def test_box_helpers(rng):
    b = Box.from_intervals((0, 2), (1, 4))
    assert b.area == 6 and b.center == (1, 2.5)
    assert b.intersect(Box(1, 3, 0, 2)) == Box(1, 2, 1, 2)
    assert b.hull(Box(5, 6, 0, 1)) == Box(0, 6, 0, 4)
    s = b.sample(rng, 50)
    assert np.all(b.contains(s[:, 0], s[:, 1]))


def test_complex_values_survive_masking():
    f = ScalarField(lambda a, b: np.exp(1j * a), UNIT, 1.0, "phase")
    v = f(np.array([0.5, 3.0]), np.array([0.5, 0.5]))
    assert v.dtype.kind == "c" and v[1] == 0 and abs(v[0] - np.exp(0.5j)) < 1e-15

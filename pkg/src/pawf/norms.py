"""Mean oscillation and sampled function-space norms.

Every ``sup`` over an infinite family of rectangles or point pairs is
estimated by a maximum over a reproducible finite family, so estimates
are lower bounds that grow with the family.  Each estimate reports the
rectangle (or pair) attaining it.

Oscillations are computed from ``b - b(x_0)`` for a fixed node ``x_0``,
which makes them vanish exactly on constants and scale exactly under
multiplication by powers of two.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .curve import MonomialCurve
from .fields import Box, ScalarField, level_crossings, restrict
from .quadrature import QuadRule, adaptive_rule, gauss_legendre, tensor_rule


@dataclass
class NormEstimate:
    value: float
    witness: object
    samples: int


# ---------------------------------------------------------------------------
# mean oscillation


def _tensor(box: Box, n: int, panels: int) -> QuadRule:
    nodes, weights = tensor_rule(box.intervals, n, panels)
    return QuadRule(nodes, weights)


def oscillation_on_rule(b: ScalarField, rule: QuadRule):
    """``(mean, average |b - mean|)`` from one rule, shift-exact."""
    vals = np.asarray(b(rule.x1, rule.x2))
    d = vals - vals[0]
    area = rule.weights.sum()
    mean_d = np.sum(rule.weights * d) / area
    osc = np.sum(rule.weights * np.abs(d - mean_d)) / area
    return vals[0] + mean_d, float(osc)


def mean_oscillation(b: ScalarField, Q, *, method: str = "adaptive",
                     tol: float = 1e-10, n: int = 12, panels: int = 4) -> float:
    """``avg_Q |b - avg_Q b|``.

    ``method='adaptive'`` first integrates ``b`` for the mean, then fits a
    nested adaptive rule to ``|b - mean|`` with breakpoints at the level
    set ``b = mean`` (real ``b``).  ``method='tensor'`` uses one composite
    Gauss-Legendre rule, which is what the norm families use.
    """
    Q = Q if isinstance(Q, Box) else Box.from_intervals(*Q)
    if method == "tensor":
        return oscillation_on_rule(b, _tensor(Q, n, panels))[1]
    ref = np.asarray(b(np.array([Q.lo1]), np.array([Q.lo2])))[0]
    shifted = ScalarField(lambda x1, x2: b(x1, x2) - ref, None, None, "b-b0")
    _, total, _ = adaptive_rule(shifted, Q.intervals, abs_tol=tol * Q.area,
                                rel_tol=tol)
    mean_d = total / Q.area
    breaks = None
    if not np.iscomplexobj(mean_d) and np.isrealobj(ref):
        breaks = level_crossings(shifted, float(np.real(mean_d)), Q.lo2, Q.hi2)
    dev = ScalarField(lambda x1, x2: np.abs(shifted(x1, x2) - mean_d), None, None,
                      "|b-<b>|")
    _, osc, _ = adaptive_rule(dev, Q.intervals, abs_tol=tol * Q.area,
                              rel_tol=tol, x2_breaks=breaks)
    return float(np.real(osc)) / Q.area


# ---------------------------------------------------------------------------
# rectangle families


@dataclass(frozen=True)
class RectangleFamily:
    """Rectangles centred on a grid over ``domain`` at dyadic scales.

    ``beta`` given: beta-rectangles with sides ``s^beta_1 x s^beta_2`` for
    ``s = 2^k``.  ``beta=None``: all products ``2^k1 x 2^k2`` (the family
    for little bmo).
    """

    domain: Box = Box(-2.0, 2.0, -2.0, 2.0)
    centers: int = 5
    scales: tuple[int, ...] = (-3, -2, -1, 0, 1, 2)
    beta: tuple[float, float] | None = (1.0, 2.0)

    def rectangles(self) -> list[Box]:
        c1 = np.linspace(self.domain.lo1, self.domain.hi1, self.centers)
        c2 = np.linspace(self.domain.lo2, self.domain.hi2, self.centers)
        if self.beta is not None:
            sides = [(2.0 ** (k * self.beta[0]), 2.0 ** (k * self.beta[1]))
                     for k in self.scales]
        else:
            sides = [(2.0 ** k1, 2.0 ** k2)
                     for k1, k2 in itertools.product(self.scales, repeat=2)]
        out = []
        for w, h in sides:
            for a in c1:
                for b in c2:
                    out.append(Box(a - w / 2, a + w / 2, b - h / 2, b + h / 2))
        return out

    def __len__(self) -> int:
        per = len(self.scales) if self.beta is not None else len(self.scales) ** 2
        return per * self.centers ** 2


def _key(box: Box):
    return (box.lo1, box.lo2, box.hi1, box.hi2)


def _sup(values, witnesses) -> NormEstimate:
    values = np.asarray(values, dtype=float)
    best = values.max()
    # deterministic tie-break: lexicographically smallest rectangle
    ties = [w for v, w in zip(values, witnesses) if v == best]
    witness = min(ties, key=_key) if isinstance(ties[0], Box) else ties[0]
    return NormEstimate(float(best), witness, int(values.size))


def bmo_norm(b: ScalarField, family: RectangleFamily, *, n: int = 10,
             panels: int = 4) -> NormEstimate:
    """Sampled ``sup_Q avg_Q |b - avg_Q b|`` over the family."""
    rects = family.rectangles()
    if not rects:
        raise ValueError("empty rectangle family")
    vals = [oscillation_on_rule(b, _tensor(R, n, panels))[1] for R in rects]
    return _sup(vals, rects)


def holder_norm_beta(b: ScalarField, alpha: float, family: RectangleFamily, *,
                     n: int = 10, panels: int = 4) -> NormEstimate:
    """Sampled ``sup_Q |Q|^-alpha avg_Q |b - avg_Q b|``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rects = family.rectangles()
    vals = [R.area ** (-alpha) * oscillation_on_rule(b, _tensor(R, n, panels))[1]
            for R in rects]
    return _sup(vals, rects)


def holder_norm_curve(curve: MonomialCurve, b: ScalarField, alpha: float, *,
                      domain: Box = Box(-2.0, 2.0, -2.0, 2.0), points: int = 9,
                      t_values=None) -> NormEstimate:
    """Sampled ``sup |b(x) - b(y)| / prod |x_i - y_i|^alpha`` over
    ``y = x +- gamma(t)``; pairs with a coinciding coordinate are skipped."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if t_values is None:
        t_values = 2.0 ** np.linspace(-6, 3, 46)
    t = np.concatenate([-np.asarray(t_values), np.asarray(t_values)])
    g1, g2 = curve(t)
    a1 = np.linspace(domain.lo1, domain.hi1, points)
    a2 = np.linspace(domain.lo2, domain.hi2, points)
    X1, X2 = np.meshgrid(a1, a2, indexing="ij")
    x1 = X1.ravel()[:, None]
    x2 = X2.ravel()[:, None]
    bx = b(x1, x2)
    best, witness, count = -np.inf, None, 0
    for sgn in (1.0, -1.0):
        d1 = sgn * g1[None, :]
        d2 = sgn * g2[None, :]
        den = (np.abs(d1) * np.abs(d2)) ** alpha
        ok = np.broadcast_to(den > 0, (x1.shape[0], t.size))
        num = np.abs(bx - b(x1 + d1, x2 + d2))
        ratio = np.where(ok, num / np.where(ok, den, 1.0), -np.inf)
        count += int(ok.sum())
        k = int(np.argmax(ratio))
        if ratio.ravel()[k] > best:
            i, j = np.unravel_index(k, ratio.shape)
            best = float(ratio[i, j])
            witness = ((float(x1[i, 0]), float(x2[i, 0])),
                       (float(x1[i, 0] + d1[0, j]), float(x2[i, 0] + d2[0, j])))
    return NormEstimate(max(best, 0.0), witness, count)


# ---------------------------------------------------------------------------
# slices


def _osc_1d(values, weights):
    d = values - values[..., :1]
    area = weights.sum()
    mean_d = np.sum(weights * d, axis=-1, keepdims=True) / area
    return np.sum(weights * np.abs(d - mean_d), axis=-1) / area


def slice_bmo(b: ScalarField, direction: int, frozen_values, *,
              centers=None, scales=(-3, -2, -1, 0, 1), n: int = 16,
              panels: int = 8) -> NormEstimate:
    """Sampled ``sup`` over slices of the 1-D BMO norm.

    ``direction`` (1 or 2) is the coordinate that varies along a slice;
    the other coordinate is frozen at each of ``frozen_values``.
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    if centers is None:
        centers = np.linspace(-2.0, 2.0, 9)
    best, witness, count = -np.inf, None, 0
    for r in (2.0 ** k for k in scales):
        base, w = gauss_legendre(-r / 2, r / 2, n, panels)
        for c in centers:
            u = c + base
            for v in frozen_values:
                vals = b(u, np.full_like(u, v)) if direction == 1 else b(np.full_like(u, v), u)
                osc = float(_osc_1d(np.asarray(vals), w))
                count += 1
                if osc > best:
                    best, witness = osc, {"frozen": float(v), "interval": (c - r / 2, c + r / 2)}
    return NormEstimate(best, witness, count)


# ---------------------------------------------------------------------------
# L^r distance to constants


def lr_distance(b: ScalarField, r: float, box, *, n: int = 12, panels: int = 4
                ) -> float:
    """``min_c ||b - c||_{L^r(box)}`` (real or complex ``c``)."""
    if not r > 1:
        raise ValueError("r must exceed 1")
    box = box if isinstance(box, Box) else Box.from_intervals(*box)
    rule = _tensor(box, n, panels)
    vals = np.asarray(b(rule.x1, rule.x2))
    d = vals - vals[0]
    if not np.any(d):
        return 0.0
    w = rule.weights

    def norm(c):
        return np.sum(w * np.abs(d - c) ** r) ** (1.0 / r)

    if np.isrealobj(d):
        res = minimize_scalar(norm, bounds=(d.min(), d.max()), method="bounded",
                              options={"xatol": 1e-13 * (d.max() - d.min())})
        return float(min(res.fun, norm(0.0)))
    c0 = np.sum(w * d) / w.sum()
    res = minimize(lambda p: norm(p[0] + 1j * p[1]), [c0.real, c0.imag],
                   method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    return float(min(res.fun, norm(0.0)))


# ---------------------------------------------------------------------------
# dualization


@dataclass
class Dualized:
    """``f = (sigma - <sigma>_Q) 1_Q`` with ``sigma = sign(b - <b>_Q)``."""

    f: ScalarField
    rule: QuadRule            # rule on Q fitted to f (exact jump breakpoints)
    mean_b: complex | float
    mean_sigma: complex | float
    lhs: float                # int_Q |b - <b>_Q|
    breaks: object = field(default=None, repr=False)


def _complex_sign(v):
    mag = np.abs(v)
    return np.where(mag > 0, np.conj(v) / np.where(mag > 0, mag, 1.0), 0.0)


def dualize(b: ScalarField, Q, *, tol: float = 1e-13) -> Dualized:
    """Zero-mean, bounded ``f`` on ``Q`` with ``int b f = int_Q |b - <b>|``.

    The returned rule has breakpoints on the level set ``b = <b>_Q`` (real
    ``b``), so it integrates ``f`` times smooth weights to high accuracy;
    ``<sigma>`` is computed on that same rule, making ``f`` integrate to
    zero on it up to rounding.
    """
    Q = Q if isinstance(Q, Box) else Box.from_intervals(*Q)
    vals0 = np.asarray(b(np.array([Q.lo1]), np.array([Q.lo2])))
    ref = vals0[0]
    real = np.isrealobj(vals0)
    shifted = ScalarField(lambda x1, x2: b(x1, x2) - ref, None, None, "b-b0")
    _, total, _ = adaptive_rule(shifted, Q.intervals, abs_tol=tol * Q.area,
                                rel_tol=tol)
    mean_d = total / Q.area
    if real:
        mean_d = float(np.real(mean_d))

    def sigma(x1, x2):
        v = shifted(x1, x2) - mean_d
        return np.sign(v) if real else _complex_sign(v)

    breaks = level_crossings(shifted, mean_d, Q.lo2, Q.hi2) if real else None
    # fit to sigma times a smooth non-constant weight so panels suit
    # later products with smooth kernels
    probe = ScalarField(lambda x1, x2: sigma(x1, x2) * (2.0 + np.cos(3 * x1 + 2 * x2)),
                        None, None, "probe")
    rule, _, _ = adaptive_rule(probe, Q.intervals, abs_tol=tol * Q.area,
                               rel_tol=tol, x2_breaks=breaks)
    s_vals = sigma(rule.x1, rule.x2)
    mean_sigma = np.sum(rule.weights * s_vals) / np.sum(rule.weights)
    if real:
        mean_sigma = float(mean_sigma)
    lhs_vals = np.abs(shifted(rule.x1, rule.x2) - mean_d)
    lhs = float(np.sum(rule.weights * lhs_vals))

    def fval(x1, x2):
        return sigma(x1, x2) - mean_sigma

    f = ScalarField(fval, Q, 2.0, "dualized")
    return Dualized(f, rule, ref + mean_d, mean_sigma, lhs, breaks)

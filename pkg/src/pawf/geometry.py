"""Rectangles, curve preimages and the two-rectangle setup.

For a curve ``gamma``, a reference point ``a`` and a set ``B`` the
parameter preimage is ``I(a, +-, B) = {t : a +- gamma(t) in B}``.  For boxes
and monomial curves it is computed in closed form, branch by branch.

:class:`AwfSetup` holds the geometry used by the factorization: a source
box ``Q``, the parameter window ``I_A = [A l, (A+N) l]``, the target box
``P`` (``Q`` translated along the flipped coordinate), the swept regions

    Qt = {x + gamma(t) : x in Q, t in I_A},
    Pt = {z + gamma(t) : z in P, t in -I_A},   W = Qt & Pt,

and the corner regions of ``P``.  Internally every in-class curve is put
in a canonical frame where the flipped coordinate comes first and
``eps = (+1, +1)``; in that frame ``Qt``, ``Pt`` and ``W`` have exact
vertical sections, which give ``W`` membership, its area and its lowest
point without sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .curve import LineCurve, MonomialCurve
from .fields import Box

PLUS, MINUS = 1, -1


class GeometryError(RuntimeError):
    pass


def _sign(sign) -> int:
    if sign in (1, "+", "plus"):
        return PLUS
    if sign in (-1, "-", "minus"):
        return MINUS
    raise ValueError(f"sign must be +1/-1, got {sign!r}")


# ---------------------------------------------------------------------------
# parameter interval sets


@dataclass(frozen=True)
class ParamIntervalSet:
    """Sorted union of disjoint closed intervals in the curve parameter."""

    intervals: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "ParamIntervalSet":
        items = sorted((float(a), float(b)) for a, b in pairs if b >= a)
        merged: list[list[float]] = []
        for a, b in items:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        return cls(tuple((a, b) for a, b in merged))

    @property
    def empty(self) -> bool:
        return not self.intervals

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def contains(self, t: float) -> bool:
        return any(a <= t <= b for a, b in self.intervals)

    def intersect(self, lo: float, hi: float) -> "ParamIntervalSet":
        return ParamIntervalSet.from_pairs(
            (max(a, lo), min(b, hi)) for a, b in self.intervals
            if max(a, lo) <= min(b, hi))

    def intersects(self, lo: float, hi: float) -> bool:
        return any(max(a, lo) <= min(b, hi) for a, b in self.intervals)

    def negated(self) -> "ParamIntervalSet":
        return ParamIntervalSet.from_pairs((-b, -a) for a, b in self.intervals)


# ---------------------------------------------------------------------------
# closed-form preimages


_ROOTS = {1.0: lambda v: v, 2.0: np.sqrt, 3.0: np.cbrt}


def _branch_interval(curve: MonomialCurve, signs, a1, a2, sign, box: Box):
    """Range of ``u = |t| >= 0`` with ``a_i + sign*s_i*u^b_i`` in the box."""
    a = (a1, a2)
    bounds = ((box.lo1, box.hi1), (box.lo2, box.hi2))
    lo = np.zeros(np.shape(a1))
    hi = np.full(np.shape(a1), np.inf)
    for i in range(2):
        s = sign * signs[i]
        c_lo = bounds[i][0] - a[i]
        c_hi = bounds[i][1] - a[i]
        if s < 0:
            c_lo, c_hi = -c_hi, -c_lo
        # u^b in [c_lo, c_hi] intersected with u >= 0
        root = _ROOTS.get(curve.beta[i])
        if root is None:
            inv = 1.0 / curve.beta[i]
            root = lambda v, inv=inv: v ** inv
        u_lo = root(np.maximum(c_lo, 0.0))
        u_hi = np.where(c_hi >= 0, root(np.abs(c_hi)), -np.inf)
        lo = np.maximum(lo, u_lo)
        hi = np.minimum(hi, u_hi)
    return lo, hi


def preimage_batch(curve, a1, a2, sign, box: Box):
    """Vectorized ``I(a, sign, box)``.

    Returns ``(pos_lo, pos_hi, neg_lo, neg_hi)``: the (possibly empty,
    ``lo > hi``) pieces of the preimage with ``t > 0`` and ``t <= 0``.  A
    line curve returns its single interval in the first pair.
    """
    sign = _sign(sign)
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    a1, a2 = np.broadcast_arrays(a1, a2)
    if isinstance(curve, LineCurve):
        lo = np.full(a1.shape, -np.inf)
        hi = np.full(a1.shape, np.inf)
        bounds = ((box.lo1, box.hi1), (box.lo2, box.hi2))
        for i, ai in enumerate((a1, a2)):
            s = sign * curve.sigma[i]
            if s == 0:
                ok = (ai >= bounds[i][0]) & (ai <= bounds[i][1])
                hi = np.where(ok, hi, -np.inf)
                continue
            e1 = (bounds[i][0] - ai) / s
            e2 = (bounds[i][1] - ai) / s
            lo = np.maximum(lo, np.minimum(e1, e2))
            hi = np.minimum(hi, np.maximum(e1, e2))
        empty = np.full(a1.shape, np.inf), np.full(a1.shape, -np.inf)
        return lo, hi, empty[0], empty[1]
    p_lo, p_hi = _branch_interval(curve, curve.eps, a1, a2, sign, box)
    n_lo, n_hi = _branch_interval(curve, curve.delta, a1, a2, sign, box)
    # the positive branch is t > 0: a lone point at u = 0 is not on it
    p_hi = np.where(p_hi <= 0, -np.inf, p_hi)
    return p_lo, p_hi, -n_hi, -n_lo


def param_preimage_rect(curve, a, sign, box) -> ParamIntervalSet:
    """Exact ``I(a, sign, box)`` as a :class:`ParamIntervalSet`."""
    if not isinstance(box, Box):
        box = Box.from_intervals(*box)
    p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, a[0], a[1], sign, box)
    pairs = []
    if p_hi >= p_lo:
        pairs.append((float(p_lo), float(p_hi)))
    if n_hi >= n_lo:
        pairs.append((float(n_lo), float(n_hi)))
    return ParamIntervalSet.from_pairs(pairs)


def preimage_length_batch(curve, a1, a2, sign, box: Box) -> np.ndarray:
    p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, a1, a2, sign, box)
    total = np.maximum(p_hi - p_lo, 0.0) + np.maximum(n_hi - n_lo, 0.0)
    # a touching pair at t = 0 would double count nothing: both pieces
    # meet only in the single point 0, which has zero length
    return np.where(np.isfinite(total), total, 0.0)


# ---------------------------------------------------------------------------
# rectangles


def beta_rectangle_scale(box: Box, beta, tol: float = 1e-9) -> float:
    """Common scale ``l(Q)`` of a beta-rectangle, validating the shape."""
    if not (box.width > 0 and box.height > 0):
        raise ValueError("rectangle sides must have positive length")
    s1 = box.width ** (1.0 / beta[0])
    s2 = box.height ** (1.0 / beta[1])
    if abs(s1 - s2) > tol * max(s1, s2):
        raise ValueError(
            f"box {box} is not a beta-rectangle for beta={tuple(beta)}: "
            f"scales {s1:.12g} and {s2:.12g} differ")
    return s1


def beta_box(corner, ell: float, beta=(1.0, 2.0)) -> Box:
    """The beta-rectangle with lower-left corner ``corner`` and scale ``ell``."""
    return Box(corner[0], corner[0] + ell ** beta[0],
               corner[1], corner[1] + ell ** beta[1])


# ---------------------------------------------------------------------------
# canonical frame


@dataclass(frozen=True)
class Frame:
    """Coordinate permutation and reflections normalizing an in-class curve.

    Canonical coordinates are ``c_0 = s_0 x_k`` and ``c_1 = s_1 x_j`` where
    ``k`` is the flipped index, ``j`` the fixed one and ``s`` the signs
    that make ``eps = (+1, +1)``.
    """

    k: int
    j: int
    s: tuple[int, int]

    @classmethod
    def for_curve(cls, curve: MonomialCurve) -> "Frame":
        fc = curve.flip_class()
        if not fc.in_class:
            raise GeometryError(
                f"curve must flip exactly one coordinate, flips {fc.flip}")
        k = fc.flip[0]
        j = 1 - k
        return cls(k, j, (curve.eps[k], curve.eps[j]))

    def to_canon(self, x1, x2):
        x = (np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return self.s[0] * x[self.k], self.s[1] * x[self.j]

    def from_canon(self, c0, c1):
        out = [None, None]
        out[self.k] = self.s[0] * np.asarray(c0, dtype=float)
        out[self.j] = self.s[1] * np.asarray(c1, dtype=float)
        return out[0], out[1]

    def box_to_canon(self, box: Box) -> Box:
        iv = box.intervals
        a = sorted(self.s[0] * np.asarray(iv[self.k]))
        b = sorted(self.s[1] * np.asarray(iv[self.j]))
        return Box(a[0], a[1], b[0], b[1])

    def box_from_canon(self, box: Box) -> Box:
        iv = box.intervals
        out = [None, None]
        out[self.k] = sorted(self.s[0] * np.asarray(iv[0]))
        out[self.j] = sorted(self.s[1] * np.asarray(iv[1]))
        return Box(out[0][0], out[0][1], out[1][0], out[1][1])

    def curve_to_canon(self, curve: MonomialCurve) -> MonomialCurve:
        beta = (curve.beta[self.k], curve.beta[self.j])
        eps = (1, 1)
        delta = (self.s[0] * curve.delta[self.k], self.s[1] * curve.delta[self.j])
        return MonomialCurve(beta, eps, delta)


# ---------------------------------------------------------------------------
# the setup


@dataclass(frozen=True)
class CornerRegions:
    r: int
    lb: Box            # P^lb(r)
    rt: Box            # P^rt(r)
    setup: "AwfSetup" = field(repr=False)

    def in_corner(self, x1, x2):
        return self.lb.contains(x1, x2) | self.rt.contains(x1, x2)

    def in_center(self, x1, x2):
        """Membership in ``P^c = P minus (P^lb(1) u P^rt(1))``."""
        c1 = self.setup.corner_regions(1)
        return (self.setup.P.contains(x1, x2)
                & ~c1.lb.contains(x1, x2) & ~c1.rt.contains(x1, x2))

    def sample_delta(self, rng: np.random.Generator, n: int, which: str = "lb"):
        """Points on the inner edges of ``P^lb(r)`` or ``P^rt(r)``."""
        s = self.setup
        box_c = s.frame.box_to_canon(self.lb if which == "lb" else self.rt)
        u = rng.random(n)
        on_vertical = rng.random(n) < 0.5
        if which == "lb":
            x_edge, y_edge = box_c.hi1, box_c.hi2
        else:
            x_edge, y_edge = box_c.lo1, box_c.lo2
        c0 = np.where(on_vertical, x_edge, box_c.lo1 + u * box_c.width)
        c1 = np.where(on_vertical, box_c.lo2 + u * box_c.height, y_edge)
        x1, x2 = s.frame.from_canon(c0, c1)
        return np.column_stack([x1, x2])


@dataclass(frozen=True)
class AwfSetup:
    curve: MonomialCurve
    Q: Box
    A: float
    N: float
    ell: float
    P: Box
    frame: Frame
    canon_curve: MonomialCurve
    Qc: Box
    Pc: Box

    # ----- basic data
    @property
    def I_A(self) -> tuple[float, float]:
        return (self.A * self.ell, (self.A + self.N) * self.ell)

    @property
    def search_window(self) -> tuple[float, float]:
        return ((self.A - 2) * self.ell, (self.A + self.N + 2) * self.ell)

    @property
    def vertices(self) -> dict[str, tuple[float, float]]:
        """Corners of ``P`` labelled in the canonical frame."""
        c = self.Pc
        pts = {"lb": (c.lo1, c.lo2), "lt": (c.lo1, c.hi2),
               "rb": (c.hi1, c.lo2), "rt": (c.hi1, c.hi2)}
        return {k: tuple(float(v) for v in self.frame.from_canon(*p))
                for k, p in pts.items()}

    # ----- membership
    def in_Qtilde(self, y1, y2):
        lo, hi, _, _ = preimage_batch(self.curve, y1, y2, MINUS, self.Q)
        a, b = self.I_A
        return np.maximum(lo, a) <= np.minimum(hi, b)

    def in_Ptilde(self, y1, y2):
        _, _, lo, hi = preimage_batch(self.curve, y1, y2, MINUS, self.P)
        a, b = self.I_A
        return np.maximum(lo, -b) <= np.minimum(hi, -a)

    def in_W(self, y1, y2):
        return self.in_Qtilde(y1, y2) & self.in_Ptilde(y1, y2)

    def membership(self, which: str, y) -> bool:
        fn = {"Qt": self.in_Qtilde, "Pt": self.in_Ptilde, "W": self.in_W}[which]
        return bool(fn(np.array([y[0]]), np.array([y[1]]))[0])

    # ----- exact vertical sections in the canonical frame
    def _section(self, w, only: str | None = None):
        """Canonical section ``{c1 : (w, c1) in W}`` as ``(lo, hi)``;
        ``only='Q'`` gives the section of ``Qt`` instead."""
        w = np.asarray(w, dtype=float)
        bk, bj = self.canon_curve.beta
        a, b = self.I_A

        def t_range(c_lo, c_hi):
            # t in I_A with t^bk in [c_lo, c_hi]
            with np.errstate(invalid="ignore"):
                t0 = np.where(c_lo > 0, np.abs(c_lo) ** (1 / bk), 0.0)
                t1 = np.where(c_hi >= 0, np.abs(c_hi) ** (1 / bk), -np.inf)
            return np.maximum(t0, a), np.minimum(t1, b)

        q, p = self.Qc, self.Pc
        # Qt: c = x + (t^bk, t^bj), x in Q
        t0, t1 = t_range(w - q.hi1, w - q.lo1)
        q_ok = t1 >= t0
        q_lo = q.lo2 + np.where(q_ok, t0, 0) ** bj
        q_hi = q.hi2 + np.where(q_ok, t1, 0) ** bj
        # Pt: c = z + (-s^bk, s^bj), z in P
        s0, s1 = t_range(p.lo1 - w, p.hi1 - w)
        p_ok = s1 >= s0
        p_lo = p.lo2 + np.where(p_ok, s0, 0) ** bj
        p_hi = p.hi2 + np.where(p_ok, s1, 0) ** bj
        if only == "Q":
            p_ok, p_lo, p_hi = True, -np.inf, np.inf
        lo = np.maximum(q_lo, p_lo)
        hi = np.minimum(q_hi, p_hi)
        ok = q_ok & p_ok & (hi >= lo)
        return np.where(ok, lo, np.inf), np.where(ok, hi, -np.inf)

    def in_W_sections(self, y1, y2):
        """``W`` membership through exact sections (independent route)."""
        c0, c1 = self.frame.to_canon(y1, y2)
        lo, hi = self._section(c0)
        return (c1 >= lo) & (c1 <= hi)

    @property
    def W_canon_range(self) -> tuple[float, float]:
        """Range of the canonical flipped coordinate over ``W``."""
        bk = self.canon_curve.beta[0]
        a, b = self.I_A
        lo = max(self.Qc.lo1 + a ** bk, self.Pc.lo1 - b ** bk)
        hi = min(self.Qc.hi1 + b ** bk, self.Pc.hi1 - a ** bk)
        return lo, hi

    def _extremum(self, fn):
        """Minimize a unimodal function of the flipped coordinate on W."""
        lo, hi = self.W_canon_range
        grid = np.linspace(lo, hi, 401)
        i = int(np.argmin(fn(grid)))
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(lambda w: float(fn(np.array(w))), bounds=(a, b),
                              method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(b))})
        return float(res.x), float(res.fun)

    def W_bounding_box(self) -> Box:
        """Exact bounding box of ``W``: the lower section edge is the max of
        an increasing and a decreasing function, the upper one the min."""
        lo, hi = self.W_canon_range
        _, bottom = self._extremum(lambda w: self._section(w)[0])
        _, top = self._extremum(lambda w: -self._section(w)[1])
        return self.frame.box_from_canon(Box(lo, hi, bottom, -top))

    def W_area(self, rtol: float = 1e-10) -> float:
        """Area of ``W`` by integrating exact section lengths."""
        return self._area(self._section, *self.W_canon_range, rtol)

    def Qtilde_area(self, rtol: float = 1e-10) -> float:
        bk = self.canon_curve.beta[0]
        a, b = self.I_A
        lo, hi = self.Qc.lo1 + a ** bk, self.Qc.hi1 + b ** bk
        return self._area(lambda w: self._section(w, only="Q"), lo, hi, rtol)

    def _area(self, section, lo, hi, rtol):
        from .quadrature import integrate

        def length(w):
            s_lo, s_hi = section(w)
            return np.maximum(s_hi - s_lo, 0.0)

        val, _, _ = integrate(length, lo, hi, abs_tol=rtol * self.Q.area,
                              rel_tol=rtol, pieces=16)
        return float(val)

    # ----- W preimages
    def preimage_W_batch(self, a1, a2, sign=PLUS, side: str = "Q",
                         tol: float | None = None, step: float = 0.02):
        """``I(a, sign, W)`` for many reference points.

        ``side='Q'`` searches the positive window (for ``a`` in ``Q``),
        ``side='P'`` the mirrored negative one (for ``a`` in ``P``).
        Returns ``(lo, hi)`` arrays; raises when some preimage is empty
        or not an interval.
        """
        sign = _sign(sign)
        tol = 1e-6 * self.ell if tol is None else tol
        a1 = np.atleast_1d(np.asarray(a1, dtype=float))
        a2 = np.atleast_1d(np.asarray(a2, dtype=float))
        w_lo, w_hi = self.search_window
        if side == "P":
            w_lo, w_hi = -w_hi, -w_lo
        n_grid = int(np.ceil((w_hi - w_lo) / (step * self.ell))) + 1
        grid = np.linspace(w_lo, w_hi, n_grid)

        def member(t, i1, i2):
            g1, g2 = self.curve(t)
            return self.in_W(i1 + sign * g1, i2 + sign * g2)

        inside = member(grid[None, :], a1[:, None], a2[:, None])
        counts = inside.sum(axis=1)
        if np.any(counts == 0):
            bad = np.flatnonzero(counts == 0)[0]
            raise GeometryError(
                f"empty W-preimage for reference point ({a1[bad]}, {a2[bad]})")
        runs = np.count_nonzero(np.diff(inside.astype(np.int8), axis=1) == 1, axis=1)
        runs += inside[:, 0]
        if np.any(runs > 1):
            bad = np.flatnonzero(runs > 1)[0]
            raise GeometryError(
                f"W-preimage not connected for reference point ({a1[bad]}, {a2[bad]})")
        if np.any(inside[:, 0] | inside[:, -1]):
            raise GeometryError("W-preimage touches the search window edge")
        first = np.argmax(inside, axis=1)
        last = n_grid - 1 - np.argmax(inside[:, ::-1], axis=1)
        lo = self._bisect(member, a1, a2, grid[first - 1], grid[first], tol)
        hi = self._bisect(member, a1, a2, grid[last + 1], grid[last], tol)
        return lo, hi

    @staticmethod
    def _bisect(member, a1, a2, out_t, in_t, tol):
        out_t = out_t.copy()
        in_t = in_t.copy()
        while True:
            gap = np.abs(in_t - out_t)
            if gap.max() <= tol:
                break
            mid = 0.5 * (in_t + out_t)
            if np.all((mid == in_t) | (mid == out_t)):
                break
            m = member(mid, a1, a2)
            in_t = np.where(m, mid, in_t)
            out_t = np.where(m, out_t, mid)
        # the closed set's endpoint lies between; report the midpoint
        return 0.5 * (in_t + out_t)

    def param_preimage_W(self, a, sign=PLUS, side: str | None = None,
                         tol: float | None = None) -> ParamIntervalSet:
        if side is None:
            side = "P" if self.P.contains(a[0], a[1]) else "Q"
        lo, hi = self.preimage_W_batch([a[0]], [a[1]], sign, side, tol)
        return ParamIntervalSet(((float(lo[0]), float(hi[0])),))

    def len_I_minus_P(self, y1, y2) -> np.ndarray:
        """``|I(y, -, P)|`` for many points."""
        return preimage_length_batch(self.curve, y1, y2, MINUS, self.P)

    # ----- reflection
    @property
    def w_canon(self) -> float:
        return self._extremum(lambda w: self._section(w)[0])[0]

    @property
    def w_d(self) -> float:
        """Flipped coordinate (actual frame) of the lowest point of ``W``."""
        return float(self.frame.s[0] * self._w_canon_cached())

    def _w_canon_cached(self) -> float:
        cache = self.__dict__.get("_wc")
        if cache is None:
            cache = self.w_canon
            object.__setattr__(self, "_wc", cache)
        return cache

    def reflect(self, x1, x2):
        """Reflection across the line through the lowest point of ``W``
        perpendicular to the flipped axis."""
        x = [np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)]
        x[self.frame.k] = 2.0 * self.w_d - x[self.frame.k]
        return x[0], x[1]

    def check_reflection_symmetry(self, rng: np.random.Generator, n: int = 200,
                                  margin: float | None = None) -> int:
        """Count points whose ``W`` membership changes under reflection,
        skipping points within ``margin`` of the boundary of ``W``."""
        margin = 1e-6 * self.ell if margin is None else margin
        box = self.W_bounding_box()
        pts = box.sample(rng, 4 * n)
        c0, c1 = self.frame.to_canon(pts[:, 0], pts[:, 1])
        lo, hi = self._section(c0)
        far = np.isinf(lo) | ((np.abs(c1 - lo) > margin) & (np.abs(c1 - hi) > margin))
        pts = pts[far][:n]
        r1, r2 = self.reflect(pts[:, 0], pts[:, 1])
        return int(np.count_nonzero(self.in_W(pts[:, 0], pts[:, 1]) != self.in_W(r1, r2)))

    # ----- corners
    def corner_regions(self, r: int) -> CornerRegions:
        if r < 1:
            raise ValueError("r must be >= 1")
        bk, bj = self.canon_curve.beta
        w = 2.0 ** (-(r - 1)) * self.ell ** bk / self.A
        h = 2.0 ** (-r) * self.ell ** bj
        p = self.Pc
        lb = Box(p.lo1, p.lo1 + w, p.lo2, p.lo2 + h)
        rt = Box(p.hi1 - w, p.hi1, p.hi2 - h, p.hi2)
        return CornerRegions(r, self.frame.box_from_canon(lb),
                             self.frame.box_from_canon(rt), self)

    def in_center(self, x1, x2):
        return self.corner_regions(1).in_center(x1, x2)

    def in_W_center(self, y1, y2, n_scan: int = 2001):
        """Membership in ``W^c = {y in W : y in phi(z, +, W), z in P^c}``.

        ``y = z + gamma(t)`` with ``z = y - gamma(t)``, so this asks
        whether ``t -> y - gamma(t)`` meets ``P^c`` for some admissible
        ``t``; decided on a fine scan of ``-I_A``-side parameters.
        """
        y1 = np.atleast_1d(np.asarray(y1, dtype=float))
        y2 = np.atleast_1d(np.asarray(y2, dtype=float))
        _, _, lo, hi = preimage_batch(self.curve, y1, y2, MINUS, self.P)
        ok = hi >= lo
        out = np.zeros(y1.shape, dtype=bool)
        if not ok.any():
            return out & self.in_W(y1, y2)
        u = np.linspace(0.0, 1.0, n_scan)
        t = lo[ok, None] + (hi[ok] - lo[ok])[:, None] * u[None, :]
        g1, g2 = self.curve(t)
        z1 = y1[ok, None] - g1
        z2 = y2[ok, None] - g2
        out[ok] = self.in_center(z1, z2).any(axis=1)
        return out & self.in_W(y1, y2)


def build_setup(curve: MonomialCurve, Q, A: float, N: float = 1.0) -> AwfSetup:
    """Two-rectangle setup: ``P`` is ``Q`` shifted along the flipped
    coordinate so that the swept regions ``Qt`` and ``Pt`` meet."""
    if not isinstance(Q, Box):
        Q = Box.from_intervals(*Q)
    frame = Frame.for_curve(curve)
    if not A > 2:
        raise ValueError(f"separation A must exceed 2, got {A}")
    if not N >= 1:
        raise ValueError(f"N must be >= 1, got {N}")
    ell = beta_rectangle_scale(Q, curve.beta)
    canon = frame.curve_to_canon(curve)
    Qc = frame.box_to_canon(Q)
    bk = canon.beta[0]
    shift = 2.0 * ((A + 0.5 * N) * ell) ** bk
    Pc = Qc.shift(shift, 0.0)
    P = frame.box_from_canon(Pc)
    return AwfSetup(curve, Q, float(A), float(N), ell, P, frame, canon, Qc, Pc)


# ---------------------------------------------------------------------------
# inverting z + gamma(t) - gamma(s)


def curve_pair_params(curve: MonomialCurve, z, x, seed=None, tol: float = 1e-13,
                      max_iter: int = 60):
    """Solve ``z + gamma(t) - gamma(s) = x`` for ``(t, s)``.

    For the parabola this is closed form: ``t - s = x1 - z1`` and
    ``t + s = (x2 - z2)/(x1 - z1)``.  Other curves use Newton's method
    from ``seed``.  Vectorized over ``x`` (arrays of shape ``(n,)``).
    """
    z1, z2 = float(z[0]), float(z[1])
    x1 = np.asarray(x[0], dtype=float)
    x2 = np.asarray(x[1], dtype=float)
    d1 = x1 - z1
    d2 = x2 - z2
    if curve.is_parabola:
        if np.any(d1 == 0):
            raise GeometryError("degenerate inversion: x1 == z1")
        diff = d1
        total = d2 / d1
        return 0.5 * (total + diff), 0.5 * (total - diff)
    if seed is None:
        raise GeometryError("Newton inversion needs a seed (t0, s0)")
    t = np.full(x1.shape, float(seed[0]))
    s = np.full(x1.shape, float(seed[1]))
    for _ in range(max_iter):
        gt1, gt2 = curve(t)
        gs1, gs2 = curve(s)
        r1 = gt1 - gs1 - d1
        r2 = gt2 - gs2 - d2
        dt = curve.derivative(t)
        ds = curve.derivative(s)
        # Jacobian [[g1'(t), -g1'(s)], [g2'(t), -g2'(s)]]
        j11, j12 = dt[..., 0], -ds[..., 0]
        j21, j22 = dt[..., 1], -ds[..., 1]
        det = j11 * j22 - j12 * j21
        step_t = (r1 * j22 - r2 * j12) / det
        step_s = (j11 * r2 - j21 * r1) / det
        t = t - step_t
        s = s - step_s
        scale = np.maximum(1.0, np.maximum(np.abs(t), np.abs(s)))
        if np.all(np.abs(step_t) + np.abs(step_s) <= tol * scale):
            break
    else:
        raise GeometryError("Newton inversion did not converge")
    return t, s


@dataclass
class CoverageReport:
    z: tuple[float, float]
    samples: int
    max_outside: float       # largest distance of an image point from Q
    max_roundtrip: float     # largest |h_z(t_x, s_x) - x| over inverted x
    sign_ok: bool            # t_x and s_x carry the expected signs

    @property
    def passed(self) -> bool:
        return self.sign_ok and self.max_outside <= 1e-9 and self.max_roundtrip <= 1e-9


def crux_coverage(setup: AwfSetup, z, n: int = 200,
                  rng: np.random.Generator | None = None) -> CoverageReport:
    """Check that ``z + gamma(t) - gamma(s)`` with ``t in I(z,+,W)`` and
    ``s in I(z+gamma(t),-,Q)`` lands in ``Q``, and that every ``x in Q``
    is reached by solving for ``(t, s)``."""
    rng = np.random.default_rng(0) if rng is None else rng
    z1, z2 = float(z[0]), float(z[1])
    if not setup.P.contains(z1, z2):
        raise ValueError(f"reference point {z} is not in P")
    curve, Q = setup.curve, setup.Q
    lo, hi = setup.preimage_W_batch([z1], [z2], PLUS, "P", tol=1e-13 * setup.ell)
    t = lo[0] + (hi[0] - lo[0]) * rng.random(n)
    g1, g2 = curve(t)
    y1, y2 = z1 + g1, z2 + g2
    s_lo, s_hi, _, _ = preimage_batch(curve, y1, y2, MINUS, Q)
    s = s_lo + (s_hi - s_lo) * rng.random(n)
    h1, h2 = curve(s)
    x1, x2 = y1 - h1, y2 - h2
    out = np.maximum.reduce([Q.lo1 - x1, x1 - Q.hi1, Q.lo2 - x2, x2 - Q.hi2,
                             np.zeros(n)])
    pts = Q.sample(rng, n)
    ts, ss = curve_pair_params(curve, (z1, z2), (pts[:, 0], pts[:, 1]),
                               seed=(-setup.A * setup.ell, setup.A * setup.ell))
    a1, a2 = curve(ts)
    b1, b2 = curve(ss)
    err = np.hypot(z1 + a1 - b1 - pts[:, 0], z2 + a2 - b2 - pts[:, 1])
    sign_ok = bool(np.all(ts * ss < 0))
    return CoverageReport((z1, z2), n, float(out.max()), float(err.max() / setup.ell),
                          sign_ok)

"""Scalar fields on the plane.

A :class:`ScalarField` wraps a vectorized evaluator ``f(x1, x2) -> array``
together with an optional bounding box of its support and an optional
bound on its modulus.  Combinators build new fields lazily and propagate
those hints conservatively.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo1, hi1] x [lo2, hi2]`` (may be empty)."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self):
        for name in ("lo1", "hi1", "lo2", "hi2"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_intervals(cls, i1, i2) -> "Box":
        return cls(float(i1[0]), float(i1[1]), float(i2[0]), float(i2[1]))

    @property
    def empty(self) -> bool:
        return self.hi1 < self.lo1 or self.hi2 < self.lo2

    @property
    def width(self) -> float:
        return self.hi1 - self.lo1

    @property
    def height(self) -> float:
        return self.hi2 - self.lo2

    @property
    def area(self) -> float:
        return 0.0 if self.empty else self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.lo1 + self.hi1), 0.5 * (self.lo2 + self.hi2))

    @property
    def intervals(self):
        return (self.lo1, self.hi1), (self.lo2, self.hi2)

    def contains(self, x1, x2, pad: float = 0.0):
        x1 = np.asarray(x1)
        x2 = np.asarray(x2)
        return ((x1 >= self.lo1 - pad) & (x1 <= self.hi1 + pad)
                & (x2 >= self.lo2 - pad) & (x2 <= self.hi2 + pad))

    def intersect(self, other: "Box") -> "Box":
        return Box(max(self.lo1, other.lo1), min(self.hi1, other.hi1),
                   max(self.lo2, other.lo2), min(self.hi2, other.hi2))

    def hull(self, other: "Box") -> "Box":
        if self.empty:
            return other
        if other.empty:
            return self
        return Box(min(self.lo1, other.lo1), max(self.hi1, other.hi1),
                   min(self.lo2, other.lo2), max(self.hi2, other.hi2))

    def shift(self, d1: float, d2: float) -> "Box":
        return Box(self.lo1 + d1, self.hi1 + d1, self.lo2 + d2, self.hi2 + d2)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, 2))
        return np.column_stack([self.lo1 + u[:, 0] * self.width,
                                self.lo2 + u[:, 1] * self.height])


EMPTY_BOX = Box(0.0, -1.0, 0.0, -1.0)


class FieldEvaluationError(ArithmeticError):
    """A field could not be evaluated at ``point`` (e.g. tiny denominator)."""

    def __init__(self, message: str, point):
        super().__init__(f"{message} at point {tuple(map(float, point))}")
        self.point = tuple(float(p) for p in point)


class ScalarField:
    """Deterministic complex- or real-valued function on the plane.

    ``support`` is a :class:`Box` outside of which the field vanishes, or
    ``None`` for unbounded support.  ``sup`` bounds ``|f|`` when known.
    Evaluation masks points outside the support box to exactly zero, so
    the hint is sound by construction.
    """

    def __init__(self, evaluator: Evaluator, support: Box | None = None,
                 sup: float | None = None, label: str = "field"):
        self._evaluator = evaluator
        self.support = support
        self.sup = sup
        self.label = label

    def __call__(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        if self.support is None:
            return np.asarray(self._evaluator(x1, x2))
        inside = self.support.contains(x1, x2)
        if self.support.empty or not inside.any():
            return np.zeros(x1.shape)
        if inside.all():
            return np.asarray(self._evaluator(x1, x2))
        vals = np.asarray(self._evaluator(x1[inside], x2[inside]))
        out = np.zeros(x1.shape, dtype=vals.dtype)
        out[inside] = vals
        return out

    def at(self, point) -> complex | float:
        """Evaluate at a single point."""
        v = self(np.array([point[0]]), np.array([point[1]]))[0]
        return v.item()

    def evaluate_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return self(pts[:, 0], pts[:, 1])

    def __repr__(self) -> str:
        return f"ScalarField({self.label!r}, support={self.support}, sup={self.sup})"

    # operator sugar
    def __add__(self, other):
        return combine("add", self, other)

    def __radd__(self, other):
        return combine("add", self, other)

    def __mul__(self, other):
        return combine("mul", self, other)

    def __rmul__(self, other):
        return combine("mul", self, other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return combine("add", self, combine("scale", other, -1.0))
        return combine("sub_const", self, other)

    def __neg__(self):
        return combine("scale", self, -1.0)


def constant(value: complex | float, label: str | None = None) -> ScalarField:
    value = complex(value) if isinstance(value, complex) else float(value)
    return ScalarField(lambda x1, x2: np.full(np.shape(x1), value),
                       None, abs(value), label or f"const({value})")


def zero_field() -> ScalarField:
    return ScalarField(lambda x1, x2: np.zeros(np.shape(x1)), EMPTY_BOX, 0.0, "0")


def from_function(func: Evaluator, support: Box | None = None,
                  sup: float | None = None, label: str = "f") -> ScalarField:
    return ScalarField(func, support, sup, label)


def make_indicator(box) -> ScalarField:
    """Indicator of a closed box (boundary points have value 1)."""
    if not isinstance(box, Box):
        box = Box.from_intervals(*box)
    if not (box.width > 0 and box.height > 0):
        raise ValueError(f"indicator box must have positive side lengths, got {box}")
    return ScalarField(lambda x1, x2: np.ones(np.shape(x1)), box, 1.0,
                       f"1[{box.lo1:g},{box.hi1:g}]x[{box.lo2:g},{box.hi2:g}]")


def restrict(f: ScalarField, box: Box) -> ScalarField:
    """``f * 1_box`` without an extra multiplication."""
    support = box if f.support is None else f.support.intersect(box)
    return ScalarField(f._evaluator, support, f.sup, f"{f.label}|box")


def _sup_or_none(*vals):
    return None if any(v is None for v in vals) else vals


def combine(op: str, a: ScalarField, b, *, div_floor: float | None = None
            ) -> ScalarField:
    """Lazy pointwise combination of ``a`` with a field or scalar ``b``.

    ``op`` is one of ``add``, ``mul``, ``div``, ``scale``, ``sub_const``.
    Division requires ``div_floor``: evaluating where ``|b| < div_floor``
    raises :class:`FieldEvaluationError` with the offending point.
    Division is only carried out on the support of ``a``.
    """
    if op in ("scale", "sub_const"):
        c = b
        if op == "scale":
            sup = None if a.sup is None else a.sup * abs(c)
            return ScalarField(lambda x1, x2: c * a(x1, x2),
                               EMPTY_BOX if c == 0 else a.support, sup,
                               f"{c}*{a.label}")
        sup = None if a.sup is None else a.sup + abs(c)
        return ScalarField(lambda x1, x2: a(x1, x2) - c, None if c != 0 else a.support,
                           sup, f"{a.label}-{c}")
    if not isinstance(b, ScalarField):
        b = constant(b)
    if op == "add":
        if a.support is None or b.support is None:
            support = None
        else:
            support = a.support.hull(b.support)
        s = _sup_or_none(a.sup, b.sup)
        return ScalarField(lambda x1, x2: a(x1, x2) + b(x1, x2), support,
                           None if s is None else s[0] + s[1],
                           f"({a.label}+{b.label})")
    if op == "mul":
        if a.support is None:
            support = b.support
        elif b.support is None:
            support = a.support
        else:
            support = a.support.intersect(b.support)
            if support.empty:
                support = EMPTY_BOX
        s = _sup_or_none(a.sup, b.sup)
        return ScalarField(lambda x1, x2: a(x1, x2) * b(x1, x2), support,
                           None if s is None else s[0] * s[1],
                           f"({a.label}*{b.label})")
    if op == "div":
        if div_floor is None or not div_floor > 0:
            raise ValueError("division requires a positive div_floor")

        def quotient(x1, x2):
            den = b(x1, x2)
            small = np.abs(den) < div_floor
            if small.any():
                k = np.flatnonzero(small.ravel())[0]
                raise FieldEvaluationError(
                    f"|denominator| = {abs(den.ravel()[k]):.3e} below floor "
                    f"{div_floor:.3e}", (x1.ravel()[k], x2.ravel()[k]))
            return a(x1, x2) / den

        sup = None if a.sup is None else a.sup / div_floor
        return ScalarField(quotient, a.support, sup, f"({a.label}/{b.label})")
    raise ValueError(f"unknown combinator {op!r}")


class MemoCache:
    """Thread-safe map from quantized points to stored values."""

    def __init__(self, quantum: float):
        if not quantum > 0:
            raise ValueError("quantum must be positive")
        self.quantum = float(quantum)
        self._store: dict[tuple[int, int], complex | float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def keys(self, x1, x2):
        k1 = np.rint(np.asarray(x1, dtype=float) / self.quantum).astype(np.int64)
        k2 = np.rint(np.asarray(x2, dtype=float) / self.quantum).astype(np.int64)
        return k1, k2

    def lookup(self, f: ScalarField, x1, x2) -> np.ndarray:
        k1, k2 = self.keys(x1, x2)
        shape = k1.shape
        k1 = k1.ravel()
        k2 = k2.ravel()
        with self._lock:
            vals = [self._store.get(k) for k in zip(k1.tolist(), k2.tolist())]
        missing = [i for i, v in enumerate(vals) if v is None]
        self.hits += len(vals) - len(missing)
        self.misses += len(missing)
        if missing:
            idx = np.array(missing)
            # unique keys among the misses, in first-seen order
            pairs = np.column_stack([k1[idx], k2[idx]])
            uniq, first, inverse = np.unique(pairs, axis=0, return_index=True,
                                             return_inverse=True)
            q1 = uniq[:, 0] * self.quantum
            q2 = uniq[:, 1] * self.quantum
            computed = np.asarray(f(q1, q2))
            with self._lock:
                for (a, b), v in zip(uniq.tolist(), computed.tolist()):
                    # keep the first stored value if another thread won
                    self._store.setdefault((a, b), v)
                stored = [self._store[(a, b)] for a, b in uniq.tolist()]
            inverse = np.asarray(inverse).ravel()
            for j, i in enumerate(missing):
                vals[i] = stored[inverse[j]]
        return np.array(vals).reshape(shape)


def memoize(f: ScalarField, quantum: float, cache: MemoCache | None = None
            ) -> ScalarField:
    """Field equal to ``f`` evaluated at the nearest grid point of pitch
    ``quantum``; values are cached so repeat lookups are bit-identical."""
    cache = MemoCache(quantum) if cache is None else cache
    memo = ScalarField(lambda x1, x2: cache.lookup(f, x1, x2), f.support,
                       f.sup, f"memo({f.label})")
    memo.cache = cache
    return memo


def level_crossings(f: ScalarField, level: float, lo2: float, hi2: float,
                    n_grid: int = 96, iters: int = 64):
    """Return ``x1 -> [[x2 roots of f(x1, .) - level], ...]``.

    Sign changes are bracketed on a uniform grid of ``[lo2, hi2]`` and
    refined by bisection, vectorized over all brackets.  Used to give
    quadrature rules exact breakpoints at the jumps of ``sign(f - level)``.
    """
    grid = np.linspace(lo2, hi2, n_grid + 1)

    def roots(x1):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        vals = np.real(f(x1[:, None], grid[None, :])) - level
        s = np.sign(vals)
        row, col = np.nonzero(s[:, :-1] * s[:, 1:] < 0)
        out = [[] for _ in range(x1.size)]
        # exact zeros on the grid are breakpoints too
        zr, zc = np.nonzero(s == 0)
        for r, cidx in zip(zr.tolist(), zc.tolist()):
            out[r].append(float(grid[cidx]))
        if row.size:
            a = grid[col].copy()
            b = grid[col + 1].copy()
            sa = s[row, col]
            xr = x1[row]
            for _ in range(iters):
                m = 0.5 * (a + b)
                sm = np.sign(np.real(f(xr, m)) - level)
                left = sm == sa
                a = np.where(left, m, a)
                b = np.where(left, b, m)
            for r, v in zip(row.tolist(), (0.5 * (a + b)).tolist()):
                out[r].append(v)
        return [sorted(o) for o in out]

    return roots

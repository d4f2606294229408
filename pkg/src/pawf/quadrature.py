"""Batched adaptive Gauss-Kronrod integration.

Many one-dimensional integrals are refined simultaneously: every pass
evaluates the integrand once on the nodes of all panels that still need
work, so a Python-level loop runs ``O(depth)`` times instead of once per
panel.  Integrands are vectorized callables ``func(ids, t)`` where ``ids``
names the integral each abscissa belongs to.

Panel contributions are summed in a fixed (integral id, left endpoint)
order, so results do not depend on refinement history or chunking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Kronrod 15-point nodes on [-1, 1] (symmetric, ascending) and weights.
_XGK = np.array([
    -0.991455371120812639206854697526329,
    -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926,
    -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013,
    -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245,
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144845693013,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
# Gauss 7-point weights live on the odd Kronrod positions.
_WG = np.zeros(15)
_WG[1::2] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
]

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


class QuadratureError(RuntimeError):
    """Raised when adaptive refinement hits its depth limit unconverged."""

    def __init__(self, message: str, ids: np.ndarray | None = None,
                 errors: np.ndarray | None = None):
        super().__init__(message)
        self.ids = ids
        self.errors = errors


@dataclass
class BatchResult:
    value: np.ndarray
    error: np.ndarray
    evaluations: int
    converged: np.ndarray
    # Final rule (only when requested): owner id, abscissa, weight.
    rule_ids: np.ndarray | None = field(default=None, repr=False)
    rule_nodes: np.ndarray | None = field(default=None, repr=False)
    rule_weights: np.ndarray | None = field(default=None, repr=False)


def _evaluate_panels(func, pid, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    t = c[:, None] + h[:, None] * _XGK[None, :]
    ids = np.broadcast_to(pid[:, None], t.shape)
    fv = np.asarray(func(ids.ravel(), t.ravel())).reshape(t.shape)
    kron = h * (fv @ _WGK)
    gauss = h * (fv @ _WG)
    return kron, np.abs(kron - gauss)


def initial_panels(lo, hi, breaks: Sequence[Sequence[float]] | None = None,
                   pieces: int = 1):
    """Panel arrays for integrals over ``[lo_i, hi_i]``.

    ``breaks[i]`` lists interior breakpoints for integral ``i`` (points
    outside the interval are ignored); each resulting piece is cut into
    ``pieces`` equal panels.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = lo.size
    if breaks is None and pieces == 1:
        return np.arange(n), lo.copy(), hi.copy()
    ids, aa, bb = [], [], []
    frac = np.linspace(0.0, 1.0, pieces + 1)
    for i in range(n):
        pts = [lo[i]]
        if breaks is not None:
            pts += sorted(p for p in breaks[i] if lo[i] < p < hi[i])
        pts.append(hi[i])
        for u, v in zip(pts[:-1], pts[1:]):
            edges = u + (v - u) * frac
            ids.extend([i] * pieces)
            aa.extend(edges[:-1])
            bb.extend(edges[1:])
    return np.array(ids, dtype=int), np.array(aa), np.array(bb)


def integrate_batch(func: Integrand, lo, hi, *, abs_tol: float = 1e-10,
                    rel_tol: float = 1e-10, max_depth: int = 60,
                    breaks: Sequence[Sequence[float]] | None = None,
                    pieces: int = 1, panels=None, return_rule: bool = False,
                    raise_on_failure: bool = False) -> BatchResult:
    """Integrate ``func(ids, t)`` over ``[lo_i, hi_i]`` for every ``i``.

    Empty or reversed intervals integrate to zero.  An explicit panel
    layout ``panels=(ids, a, b)`` overrides ``lo``/``hi``/``breaks`` for
    the initial subdivision (``lo``/``hi`` must still give the count and
    the reference widths).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = lo.size
    if panels is None:
        pid, a, b = initial_panels(lo, hi, breaks, pieces)
    else:
        pid, a, b = (np.asarray(p) for p in panels)
        pid = pid.astype(int)
        a = a.astype(float)
        b = b.astype(float)
    keep = b > a
    pid, a, b = pid[keep], a[keep], b[keep]
    width = np.maximum(hi - lo, 0.0)
    depth = np.zeros(pid.size, dtype=int)
    evaluations = 0

    if pid.size:
        val, err = _evaluate_panels(func, pid, a, b)
        evaluations += 15 * pid.size
    else:
        val = np.zeros(0)
        err = np.zeros(0)

    while pid.size:
        tot_val = _group_sum(pid, val, n)
        tot_err = np.bincount(pid, weights=err, minlength=n)
        tol = np.maximum(abs_tol, rel_tol * np.abs(tot_val))
        bad = tot_err > tol
        if not bad.any():
            break
        splittable = bad[pid] & (depth < max_depth) & (err > 0)
        if not splittable.any():
            break
        local = err > tol[pid] * (b - a) / np.where(width[pid] > 0, width[pid], 1.0)
        choose = splittable & local
        # Always refine the worst panel of each unconverged integral.
        order = np.lexsort((-err, pid))
        first = np.ones(order.size, dtype=bool)
        first[1:] = pid[order][1:] != pid[order][:-1]
        worst = order[first]
        choose[worst[splittable[worst]]] = True
        if not choose.any():
            break
        sp, sa, sb, sd = pid[choose], a[choose], b[choose], depth[choose]
        mid = 0.5 * (sa + sb)
        cpid = np.concatenate([sp, sp])
        ca = np.concatenate([sa, mid])
        cb = np.concatenate([mid, sb])
        cd = np.concatenate([sd, sd]) + 1
        cval, cerr = _evaluate_panels(func, cpid, ca, cb)
        evaluations += 15 * cpid.size
        rest = ~choose
        pid = np.concatenate([pid[rest], cpid])
        a = np.concatenate([a[rest], ca])
        b = np.concatenate([b[rest], cb])
        depth = np.concatenate([depth[rest], cd])
        val = np.concatenate([val[rest], cval])
        err = np.concatenate([err[rest], cerr])

    order = np.lexsort((a, pid))
    pid, a, b, val, err = pid[order], a[order], b[order], val[order], err[order]
    value = _group_sum(pid, val, n)
    error = np.bincount(pid, weights=err, minlength=n) if pid.size else np.zeros(n)
    tol = np.maximum(abs_tol, rel_tol * np.abs(value))
    converged = error <= tol
    if raise_on_failure and not converged.all():
        bad_ids = np.flatnonzero(~converged)
        raise QuadratureError(
            f"{bad_ids.size} integral(s) unconverged at max_depth={max_depth}; "
            f"worst error {error[bad_ids].max():.3e}", bad_ids, error[bad_ids])
    result = BatchResult(value, error, evaluations, converged)
    if return_rule:
        c = 0.5 * (a + b)
        h = 0.5 * (b - a)
        result.rule_ids = np.repeat(pid, 15)
        result.rule_nodes = (c[:, None] + h[:, None] * _XGK[None, :]).ravel()
        result.rule_weights = (h[:, None] * _WGK[None, :]).ravel()
    return result


def _group_sum(pid, values, n):
    """Sum ``values`` per id, sequentially in array order."""
    out = np.zeros(n, dtype=np.result_type(values, float))
    if pid.size == 0:
        return out
    starts = np.flatnonzero(np.r_[True, pid[1:] != pid[:-1]])
    if np.all(np.diff(pid) >= 0):
        out[pid[starts]] = np.add.reduceat(values, starts)
        return out
    order = np.argsort(pid, kind="stable")
    return _group_sum(pid[order], values[order], n)


def integrate(func: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              **kwargs) -> tuple[float, float, int]:
    """Scalar convenience wrapper: ``func(t)`` vectorized over ``t``."""
    res = integrate_batch(lambda ids, t: func(t), [a], [b], **kwargs)
    return res.value[0], float(res.error[0]), res.evaluations


def integrate_2d_batch(func, x_lo, x_hi, y_lo, y_hi, *, abs_tol=1e-10,
                       rel_tol=1e-10, max_depth=60, x_breaks=None,
                       y_breaks=None, x_pieces=1, y_pieces=1,
                       raise_on_failure=False, return_rule=False):
    """Iterated integrals ``int_{x_lo_i}^{x_hi_i} int_{y_lo}^{y_hi} func``.

    ``func(ids, x, y)`` is vectorized.  ``y_lo``/``y_hi`` are callables
    ``(ids, x) -> array`` (or scalars) giving the inner limits; ``y_breaks``
    is an optional callable ``(ids, x) -> list of breakpoint lists``.
    With ``return_rule`` the final tensor rule (ids, x, y, weight) is
    rebuilt on the converged outer nodes.
    """
    x_lo = np.atleast_1d(np.asarray(x_lo, dtype=float))
    x_hi = np.atleast_1d(np.asarray(x_hi, dtype=float))
    span = np.maximum(x_hi - x_lo, 1e-300)
    inner_abs = abs_tol / float(span.max()) * 0.1
    evals = [0]

    def limits(ids, x):
        lo = y_lo(ids, x) if callable(y_lo) else np.full(np.shape(x), float(y_lo))
        hi = y_hi(ids, x) if callable(y_hi) else np.full(np.shape(x), float(y_hi))
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def inner(ids, x, rule=False):
        lo, hi = limits(ids, x)
        br = y_breaks(ids, x) if y_breaks is not None else None
        res = integrate_batch(lambda j, y: func(ids[j], x[j], y), lo, hi,
                              abs_tol=inner_abs, rel_tol=rel_tol * 0.1,
                              max_depth=max_depth, breaks=br, pieces=y_pieces,
                              return_rule=rule)
        evals[0] += res.evaluations
        return res

    outer = integrate_batch(lambda ids, x: inner(ids, x).value, x_lo, x_hi,
                            abs_tol=abs_tol, rel_tol=rel_tol,
                            max_depth=max_depth, breaks=x_breaks,
                            pieces=x_pieces, return_rule=return_rule)
    result = BatchResult(outer.value, outer.error, evals[0], outer.converged)
    if raise_on_failure and not outer.converged.all():
        raise QuadratureError("2-D integration unconverged",
                              np.flatnonzero(~outer.converged))
    if return_rule:
        ox_ids, ox, ow = outer.rule_ids, outer.rule_nodes, outer.rule_weights
        res = inner(ox_ids, ox, rule=True)
        j = res.rule_ids
        result.rule_ids = ox_ids[j]
        result.rule_nodes = np.column_stack([ox[j], res.rule_nodes])
        result.rule_weights = ow[j] * res.rule_weights
    return result


def gauss_legendre(a: float, b: float, n: int, panels: int = 1):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    c = 0.5 * (edges[:-1] + edges[1:])
    h = 0.5 * (edges[1:] - edges[:-1])
    nodes = (c[:, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def tensor_rule(box, n: int = 10, panels: int = 4):
    """Tensor composite Gauss-Legendre rule on an axis-aligned box."""
    (a1, b1), (a2, b2) = box
    x1, w1 = gauss_legendre(a1, b1, n, panels)
    x2, w2 = gauss_legendre(a2, b2, n, panels)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    W = np.outer(w1, w2)
    return np.column_stack([X1.ravel(), X2.ravel()]), W.ravel()


@dataclass
class QuadRule:
    """Two-dimensional quadrature rule: ``sum(weights * f(nodes))``."""

    nodes: np.ndarray     # shape (n, 2)
    weights: np.ndarray   # shape (n,)

    @property
    def x1(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def x2(self) -> np.ndarray:
        return self.nodes[:, 1]

    def __len__(self) -> int:
        return self.weights.size

    def integrate(self, values) -> complex | float:
        return np.sum(self.weights * values)

    def apply(self, func) -> complex | float:
        return self.integrate(func(self.x1, self.x2))


def adaptive_rule(func, box, *, abs_tol: float = 1e-12, rel_tol: float = 1e-12,
                  x2_breaks=None, x1_breaks=None, pieces: int = 2,
                  max_depth: int = 50) -> tuple[QuadRule, float, float]:
    """Nested adaptive rule on ``box`` fitted to ``func(x1, x2)``.

    ``x2_breaks(x1_array)`` returns, per outer abscissa, the inner
    breakpoints (for instance jump locations of ``func``).  Returns the
    rule, the integral and its error estimate.
    """
    (a1, b1), (a2, b2) = box
    ybr = None
    if x2_breaks is not None:
        ybr = lambda ids, x: x2_breaks(x)
    res = integrate_2d_batch(lambda ids, x, y: func(x, y), [a1], [b1], a2, b2,
                             abs_tol=abs_tol, rel_tol=rel_tol,
                             max_depth=max_depth, y_breaks=ybr,
                             x_breaks=None if x1_breaks is None else [x1_breaks],
                             x_pieces=pieces, y_pieces=pieces, return_rule=True)
    rule = QuadRule(res.rule_nodes, res.rule_weights)
    return rule, res.value[0], float(res.error[0])

"""Singular and fractional integrals along curves.

Conventions::

    H f(x)   = p.v. int f(x - gamma(t)) dt/t
    H* f(x)  = p.v. int f(x + gamma(t)) dt/t
    I^a f(x) = int f(x - gamma(t)) |t|^(a|beta| - 1) dt

Principal values are computed in the folded form
``int_0^T (f(x - gamma(u)) - f(x - gamma(-u))) du/u`` over dyadic shells
``[2^-(k+1) T, 2^-k T]``; the limit is accepted once three consecutive
shells contribute less than the absolute tolerance.  Every routine is
batched over evaluation points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import LineCurve, MonomialCurve
from .fields import Box, ScalarField
from .geometry import MINUS, PLUS, ParamIntervalSet, _sign, preimage_batch
from .quadrature import QuadratureError, initial_panels, integrate_batch


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-11
    max_depth: int = 50
    pv_levels: int = 80          # dyadic shells tried before giving up
    pv_agree: int = 3            # consecutive negligible shells required
    window_pad: float = 0.1      # relative padding of the truncation radius


@dataclass
class TransformResult:
    value: complex | float
    est_error: float
    evaluations: int


@dataclass
class BatchTransformResult:
    value: np.ndarray
    est_error: np.ndarray
    evaluations: int

    def __getitem__(self, i) -> TransformResult:
        return TransformResult(self.value[i].item(), float(self.est_error[i]),
                               self.evaluations)


DEFAULT = QuadratureConfig()


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    return x[:, 0].copy(), x[:, 1].copy()


def _preimage_breaks(curve, f: ScalarField, x1, x2, sign):
    """Endpoints of ``I(x, sign, supp f)`` per point (``None`` if unbounded)."""
    if f.support is None:
        return None
    if f.support.empty:
        return [[] for _ in range(x1.size)]
    p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, x1, x2, sign, f.support)
    out = []
    for i in range(x1.size):
        pts = []
        if p_hi[i] >= p_lo[i]:
            pts += [p_lo[i], p_hi[i]]
        if n_hi[i] >= n_lo[i]:
            pts += [n_lo[i], n_hi[i]]
        out.append([p for p in pts if np.isfinite(p)])
    return out


def _eval_along(curve, f, x1, x2, sign, ids, t):
    g1, g2 = curve(t)
    return f(x1[ids] + sign * g1, x2[ids] + sign * g2)


# ---------------------------------------------------------------------------
# principal values


def hilbert_batch(curve, f: ScalarField, x, q: QuadratureConfig = DEFAULT, *,
                  adjoint: bool = False, T=None) -> BatchTransformResult:
    """``H f`` (or ``H* f``) at each row of ``x``."""
    x1, x2 = _points(x)
    n = x1.size
    sign = PLUS if adjoint else MINUS
    breaks = _preimage_breaks(curve, f, x1, x2, sign)
    if T is None:
        if breaks is None:
            raise ValueError("field has unbounded support: pass an explicit T")
        T = np.array([max((abs(b) for b in br), default=0.0) for br in breaks])
        T = T * (1.0 + q.window_pad)
    T = np.broadcast_to(np.asarray(T, dtype=float), (n,)).copy()
    abs_br = [sorted({abs(b) for b in br}) for br in breaks] if breaks else None

    levels = q.pv_levels
    active = np.flatnonzero(T > 0)
    value = np.zeros(n, dtype=complex)
    error = np.zeros(n)
    if active.size == 0:
        return BatchTransformResult(value.real, error, 0)

    # shell k of point i: [T 2^-(k+1), T 2^-k]
    ids, lo, hi, brk = [], [], [], []
    for i in active:
        for k in range(levels):
            ids.append(i * levels + k)
            hi.append(T[i] * 2.0 ** -k)
            lo.append(T[i] * 2.0 ** -(k + 1))
            brk.append(abs_br[i] if abs_br else [])
    ids = np.array(ids)
    lo = np.array(lo)
    hi = np.array(hi)
    pid, pa, pb = initial_panels(lo, hi, brk)

    def folded(j, u):
        owner = ids[j] // levels
        return (_eval_along(curve, f, x1, x2, sign, owner, u)
                - _eval_along(curve, f, x1, x2, sign, owner, -u)) / u

    res = integrate_batch(folded, lo, hi, abs_tol=q.abs_tol / 8,
                          rel_tol=q.rel_tol, max_depth=q.max_depth,
                          panels=(pid, pa, pb))
    shells = res.value.reshape(active.size, levels)
    shell_err = res.error.reshape(active.size, levels)
    for r, i in enumerate(active):
        small = np.abs(shells[r]) <= q.abs_tol
        # shells above the innermost support crossing may vanish by accident
        inner = min((v for v in (abs_br[i] if abs_br else []) if v > 0), default=T[i])
        first = int(np.floor(np.log2(T[i] / inner))) if inner > 0 else 0
        run = 0
        stop = None
        for k in range(levels):
            if k < first:
                continue
            run = run + 1 if small[k] else 0
            if run >= q.pv_agree:
                stop = k
                break
        if stop is None:
            raise QuadratureError(
                f"principal value did not settle at point ({x1[i]}, {x2[i]})")
        value[i] = shells[r, :stop + 1].sum()
        error[i] = shell_err[r, :stop + 1].sum() + abs(shells[r, stop])
    if not np.iscomplexobj(res.value):
        value = value.real
    return BatchTransformResult(value, error, res.evaluations)


def hilbert_curve(curve, f: ScalarField, x, q: QuadratureConfig = DEFAULT,
                  T=None) -> TransformResult:
    return hilbert_batch(curve, f, [x], q, T=T)[0]


def hilbert_curve_adjoint(curve, f: ScalarField, x, q: QuadratureConfig = DEFAULT,
                          T=None) -> TransformResult:
    return hilbert_batch(curve, f, [x], q, adjoint=True, T=T)[0]


def hilbert_directional(sigma, f: ScalarField, x, q: QuadratureConfig = DEFAULT,
                        T=None, adjoint: bool = False) -> TransformResult:
    return hilbert_batch(LineCurve(tuple(sigma)), f, [x], q, adjoint=adjoint, T=T)[0]


# ---------------------------------------------------------------------------
# integrals over parameter sets away from t = 0


def restricted_batch(curve, f: ScalarField, x, sign, lo, hi,
                     q: QuadratureConfig = DEFAULT, *, weight=None,
                     return_rule: bool = False):
    """``int_{lo_i}^{hi_i} f(x_i + sign*gamma(t)) w(t) dt`` for each row.

    ``w`` defaults to ``1/t``; intervals must not contain ``0``.  The
    preimage endpoints of ``supp f`` are used as breakpoints.
    """
    x1, x2 = _points(x)
    sign = _sign(sign)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x1.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x1.shape)
    if np.any((lo <= 0) & (hi >= 0) & (hi >= lo)):
        raise ValueError("integration set must not contain t = 0")
    breaks = _preimage_breaks(curve, f, x1, x2, sign)
    weight = weight or (lambda t: 1.0 / t)

    def integrand(ids, t):
        return _eval_along(curve, f, x1, x2, sign, ids, t) * weight(t)

    res = integrate_batch(integrand, lo, hi, abs_tol=q.abs_tol,
                          rel_tol=q.rel_tol, max_depth=q.max_depth,
                          breaks=breaks, return_rule=return_rule)
    if return_rule:
        return res
    return BatchTransformResult(res.value, res.error, res.evaluations)


def integral_restricted(curve, f: ScalarField, a, sign, S: ParamIntervalSet,
                        q: QuadratureConfig = DEFAULT) -> TransformResult:
    """``int_S f(a + sign*gamma(t)) dt/t`` for a set ``S`` avoiding 0."""
    if any(lo <= 0 <= hi for lo, hi in S):
        raise ValueError("integration set must not contain t = 0")
    if S.empty:
        return TransformResult(0.0, 0.0, 0)
    pts = np.repeat(np.asarray(a, dtype=float)[None, :], len(S), axis=0)
    res = restricted_batch(curve, f, pts, sign, [i[0] for i in S],
                           [i[1] for i in S], q)
    return TransformResult(res.value.sum().item(), float(res.est_error.sum()),
                           res.evaluations)


# ---------------------------------------------------------------------------
# fractional integral


def fractional_batch(curve: MonomialCurve, alpha: float, f: ScalarField, x,
                     q: QuadratureConfig = DEFAULT, T=None) -> BatchTransformResult:
    """``I^alpha f`` at each row of ``x``.

    With ``a = alpha |beta|`` the substitution ``|t| = u^(1/a)`` turns the
    kernel ``|t|^(a-1) dt`` into ``du / a``, removing the singularity.
    """
    if not 0 < alpha:
        raise ValueError("alpha must be positive")
    a = alpha * curve.homogeneity
    x1, x2 = _points(x)
    breaks = _preimage_breaks(curve, f, x1, x2, MINUS)
    if T is None:
        if breaks is None:
            raise ValueError("field has unbounded support: pass an explicit T")
        T = np.array([max((abs(b) for b in br), default=0.0) for br in breaks])
        T = T * (1.0 + q.window_pad)
    T = np.broadcast_to(np.asarray(T, dtype=float), x1.shape)
    u_breaks = [sorted({abs(b) ** a for b in br}) for br in breaks] if breaks else None

    def integrand(ids, u):
        t = u ** (1.0 / a)
        return (_eval_along(curve, f, x1, x2, MINUS, ids, t)
                + _eval_along(curve, f, x1, x2, MINUS, ids, -t)) / a

    res = integrate_batch(integrand, np.zeros(x1.size), T ** a,
                          abs_tol=q.abs_tol, rel_tol=q.rel_tol,
                          max_depth=q.max_depth, breaks=u_breaks)
    return BatchTransformResult(res.value, res.error, res.evaluations)


def fractional_integral(curve, alpha, f, x, q: QuadratureConfig = DEFAULT,
                        T=None) -> TransformResult:
    return fractional_batch(curve, alpha, f, [x], q, T)[0]


def dilate(f: ScalarField, lam) -> ScalarField:
    """``Dil_lam f(x) = f(lam_1 x_1, lam_2 x_2)`` (positive ``lam``)."""
    l1, l2 = float(lam[0]), float(lam[1])
    if not (l1 > 0 and l2 > 0):
        raise ValueError("dilation factors must be positive")
    support = None
    if f.support is not None:
        b = f.support
        support = Box(b.lo1 / l1, b.hi1 / l1, b.lo2 / l2, b.hi2 / l2)
    return ScalarField(lambda x1, x2: f(l1 * x1, l2 * x2), support, f.sup,
                       f"dil({f.label})")


@dataclass
class ScalingCheck:
    lhs: np.ndarray          # I f evaluated at lam^beta x
    rhs: np.ndarray          # lam^(alpha |beta|) I(Dil f)(x)

    @property
    def rel_error(self) -> float:
        scale = np.maximum(np.abs(self.lhs), np.abs(self.rhs))
        scale = np.where(scale > 0, scale, 1.0)
        return float(np.max(np.abs(self.lhs - self.rhs) / scale))


def fractional_scaling(curve: MonomialCurve, alpha: float, f: ScalarField, lam: float,
                       x, q: QuadratureConfig = DEFAULT) -> ScalingCheck:
    """Both sides of ``Dil_{lam^beta} I f = lam^(alpha|beta|) I Dil_{lam^beta} f``."""
    x1, x2 = _points(x)
    lb = (lam ** curve.beta[0], lam ** curve.beta[1])
    lhs = fractional_batch(curve, alpha, f, np.column_stack([lb[0] * x1, lb[1] * x2]), q)
    rhs = fractional_batch(curve, alpha, dilate(f, lb), np.column_stack([x1, x2]), q)
    return ScalingCheck(lhs.value, lam ** (alpha * curve.homogeneity) * rhs.value)


# ---------------------------------------------------------------------------
# commutators


def commutator_batch(curve, b: ScalarField, f: ScalarField, x,
                     q: QuadratureConfig = DEFAULT, *, adjoint: bool = False,
                     T=None) -> BatchTransformResult:
    """``[b, H] f(x) = p.v. int (b(x) - b(x - gamma(t))) f(x - gamma(t)) dt/t``.

    The single-integral form is used: the factor ``b(x) - b(x-gamma(t))``
    vanishes at ``t = 0``, which tames the principal value.
    """
    x1, x2 = _points(x)
    sign = PLUS if adjoint else MINUS
    bx = b(x1, x2)
    # the integrand's support is that of f; pass it through for windowing
    per_point = []
    for i in range(x1.size):
        xi1, xi2, bi = x1[i], x2[i], bx[i]

        def g(y1, y2, xi1=xi1, xi2=xi2, bi=bi):
            return (bi - b(y1, y2)) * f(y1, y2)

        per_point.append(ScalarField(g, f.support, None, "commutator kernel"))
    values, errors, evals = [], [], 0
    for i, g in enumerate(per_point):
        r = hilbert_batch(curve, g, [(x1[i], x2[i])], q, adjoint=adjoint,
                          T=None if T is None else T)
        values.append(r.value[0])
        errors.append(r.est_error[0])
        evals += r.evaluations
    return BatchTransformResult(np.array(values), np.array(errors), evals)


def commutator_apply(curve, b, f, x, q: QuadratureConfig = DEFAULT, T=None,
                     adjoint: bool = False) -> TransformResult:
    if not isinstance(curve, (MonomialCurve, LineCurve)):
        curve = LineCurve(tuple(curve))
    return commutator_batch(curve, b, f, [x], q, adjoint=adjoint, T=T)[0]


def commutator_two_term(curve, b, f, x, q: QuadratureConfig = DEFAULT, T=None
                        ) -> TransformResult:
    """``b(x) H f(x) - H(b f)(x)`` computed as two separate transforms."""
    if not isinstance(curve, (MonomialCurve, LineCurve)):
        curve = LineCurve(tuple(curve))
    hf = hilbert_curve(curve, f, x, q, T)
    bf = ScalarField(lambda y1, y2: b(y1, y2) * f(y1, y2), f.support, None, "b*f")
    hbf = hilbert_curve(curve, bf, x, q, T)
    bx = b.at(x)
    return TransformResult(bx * hf.value - hbf.value,
                           abs(bx) * hf.est_error + hbf.est_error,
                           hf.evaluations + hbf.evaluations)

"""Two-rectangle factorization for curves with the parabola's symmetry.

A zero-mean ``f`` on ``Q`` is written as two commutator-type brackets
plus a residual supported on ``P`` (step A), and that residual is
carried back to ``Q`` the same way (step B).  The auxiliary weight on
``W`` is

    g_W(y) = min(1, 2^M |I(y,-,P)| A / l)     (y in W),

and ``u_W = g_W o Xi``.  With ``m = weight / H g_dst`` the residual of a
step is

    r(z) = int_{I(z,+,W)} m(z + gamma(t)) H h_src(z + gamma(t)) dt/t,
    h_src = f / H* weight,

a double integral over ``(t, s)``.  The map ``(t, s) -> z + gamma(t) -
gamma(s)`` is a bijection onto the source box, so

    r(z) = int_src h_src(x) theta_z(x) m(z + gamma(t_x)) dx,

with ``theta_z = 1 / (|det J| s_x t_x)``.  This is the fast route used
for residual fields; the nested route is kept for verification.

The source is compressed once: moments of ``f`` against a per-panel
Lagrange basis on a tensor Gauss grid are taken on a fine rule fitted to
``f``, so ``int f F = sum_j mu_j F(x_j)`` holds for every ``F`` that is
smooth on the source box.  Integrals of ``f`` are preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import MonomialCurve
from .fields import Box, MemoCache, ScalarField, memoize
from .geometry import (MINUS, PLUS, AwfSetup, GeometryError, build_setup,
                       curve_pair_params, preimage_batch)
from .norms import Dualized, dualize
from .quadrature import QuadRule, adaptive_rule, gauss_legendre, integrate_batch
from .transforms import TransformResult

__all__ = [
    "AwfError", "WeightGW", "build_gw", "build_uw", "auto_M", "GwReport",
    "check_gw_properties", "locate_level", "trace_ratio", "dualize",
    "density_params", "density_theta", "psi_deviation", "i_z",
    "ProjectedSource", "project", "AwfDiagnostics", "AwfStep", "factor_step",
    "verify_identity", "ChainReport", "full_chain",
]


class AwfError(RuntimeError):
    """The factorization cannot be built (for instance A too small)."""


# ---------------------------------------------------------------------------
# auxiliary weights


def _w_data(setup: AwfSetup, y1, y2):
    """``W`` membership, ``|I(y,-,P)|`` and both raw preimages, sharing one
    preimage computation per box."""
    pq = preimage_batch(setup.curve, y1, y2, MINUS, setup.Q)
    pp = preimage_batch(setup.curve, y1, y2, MINUS, setup.P)
    a, b = setup.I_A
    inside = ((np.maximum(pq[0], a) <= np.minimum(pq[1], b))
              & (np.maximum(pp[2], -b) <= np.minimum(pp[3], -a)))
    L = np.maximum(pp[1] - pp[0], 0.0) + np.maximum(pp[3] - pp[2], 0.0)
    L = np.where(np.isfinite(L), L, 0.0)
    return inside, L, pq, pp


def _gw_from(setup: AwfSetup, M: float, inside, L):
    return np.where(inside, np.minimum(1.0, 2.0 ** M * L * setup.A / setup.ell), 0.0)


def _gw_values(setup: AwfSetup, M: float, y1, y2):
    inside, L, _, _ = _w_data(setup, y1, y2)
    return _gw_from(setup, M, inside, L)


@dataclass
class WeightGW:
    setup: AwfSetup
    M: float
    field: ScalarField

    def __call__(self, y1, y2):
        return self.field(y1, y2)


def build_gw(setup: AwfSetup, M: float) -> WeightGW:
    if not M >= 0:
        raise ValueError(f"M must be nonnegative, got {M}")
    M = float(M)
    fld = ScalarField(lambda y1, y2: _gw_values(setup, M, y1, y2),
                      setup.W_bounding_box(), 1.0, "g_W")
    return WeightGW(setup, M, fld)


def build_uw(setup: AwfSetup, M: float) -> ScalarField:
    """``u_W = g_W o Xi``; ``W`` is symmetric under ``Xi``."""
    gw = build_gw(setup, M)

    def uw(y1, y2):
        r1, r2 = setup.reflect(y1, y2)
        return gw(r1, r2)

    return ScalarField(uw, gw.field.support, 1.0, "u_W")


def sample_Wc(setup: AwfSetup, rng: np.random.Generator, n: int,
              per_point: int = 4):
    """Points of ``W^c``: push ``z`` in ``P^c`` forward along ``I(z,+,W)``."""
    c1 = setup.corner_regions(1)
    pts = []
    total = 0
    while total < n:
        cand = setup.P.sample(rng, 4 * n)
        cand = cand[c1.in_center(cand[:, 0], cand[:, 1])][: n - total]
        lo, hi = setup.preimage_W_batch(cand[:, 0], cand[:, 1], PLUS, "P",
                                        tol=1e-12 * setup.ell)
        u = rng.random((cand.shape[0], per_point))
        t = lo[:, None] + (hi - lo)[:, None] * u
        g1, g2 = setup.curve(t)
        y = np.column_stack([(cand[:, 0, None] + g1).ravel(),
                             (cand[:, 1, None] + g2).ravel()])
        # pushing forward can leave W by rounding at the ends
        y = y[setup.in_W(y[:, 0], y[:, 1])]
        pts.append(y[: n - total])
        total += pts[-1].shape[0]
    return np.concatenate(pts)[:n]


def auto_M(setup: AwfSetup, samples: int = 200, seed: int = 0,
           margin: float = 1.0) -> float:
    """Smallest ``M`` making ``g_W = 1`` on a ``W^c`` sample, plus margin."""
    y = sample_Wc(setup, np.random.default_rng(seed), samples)
    scaled = setup.len_I_minus_P(y[:, 0], y[:, 1]) * setup.A / setup.ell
    return max(0.0, -np.log2(scaled.min())) + margin


@dataclass
class GwReport:
    M: float
    samples: int
    passed_i: bool
    min_scaled: float           # min of 2^M |I| A / l over the W^c sample
    suggested_M: float          # smallest M that passes (i) on the sample
    passed_ii: bool
    max_dev_ii: float           # max |ratio / 2^M - 1| where g_W < 1
    ratio_iii: float            # max/min of g_W along traces of sampled z

    @property
    def message(self) -> str:
        if self.passed_i:
            return "ok"
        return f"M too small: need M >= {self.suggested_M:.6g}"


def check_gw_properties(gw: WeightGW, samples: int = 200, seed: int = 0,
                        trace_points: int = 10, trace_n: int = 64) -> GwReport:
    s = gw.setup
    rng = np.random.default_rng(seed)
    y = sample_Wc(s, rng, samples)
    L = s.len_I_minus_P(y[:, 0], y[:, 1])
    scaled = L * s.A / s.ell
    vals = gw(y[:, 0], y[:, 1])
    passed_i = bool(np.all(vals == 1.0))
    suggested = max(0.0, float(-np.log2(scaled.min())))
    # (ii) on random points of W
    box = s.W_bounding_box()
    cand = box.sample(rng, 20 * samples)
    cand = cand[s.in_W(cand[:, 0], cand[:, 1])]
    gv = gw(cand[:, 0], cand[:, 1])
    Lc = s.len_I_minus_P(cand[:, 0], cand[:, 1])
    low = (gv < 1.0) & (Lc > 0)
    ratio = gv[low] * s.ell / (s.A * Lc[low])
    dev = float(np.max(np.abs(ratio / 2.0 ** gw.M - 1.0))) if low.any() else 0.0
    # (iii) along traces of P points
    z = s.P.sample(rng, trace_points)
    lo, hi = s.preimage_W_batch(z[:, 0], z[:, 1], PLUS, "P", tol=1e-12 * s.ell)
    u = np.linspace(0.0, 1.0, trace_n)[1:-1]
    t = lo[:, None] + (hi - lo)[:, None] * u
    g1, g2 = s.curve(t)
    gt = gw(z[:, 0, None] + g1, z[:, 1, None] + g2)
    gt = np.where(gt > 0, gt, np.nan)
    r3 = float(np.nanmax(np.nanmax(gt, axis=1) / np.nanmin(gt, axis=1)))
    return GwReport(gw.M, int(y.shape[0]), passed_i,
                    float(2.0 ** gw.M * scaled.min()), suggested,
                    dev <= 1e-12, dev, r3)


def locate_level(setup: AwfSetup, level: float, iters: int = 200):
    """A point ``y`` in ``W`` with ``|I(y,-,P)| A / l = level``.

    ``z(u)`` runs from the corner of ``P`` nearest ``Q`` (``u = 0``) to the
    centre of ``P`` (``u = 1``) and ``y(u)`` is the midpoint of the trace
    ``z(u) + gamma(I(z(u),+,W))``; the scaled length grows from 0 along
    the way, and ``u`` is found by bisection.
    """
    vlb = np.array(setup.vertices["lb"])
    c = np.array(setup.P.center)

    def point(u):
        z = vlb + u * (c - vlb)
        lo, hi = setup.preimage_W_batch([z[0]], [z[1]], PLUS, "P",
                                        tol=1e-13 * setup.ell)
        h1, h2 = setup.curve(0.5 * (lo[0] + hi[0]))
        y = (float(z[0] + h1), float(z[1] + h2))
        L = setup.len_I_minus_P(np.array([y[0]]), np.array([y[1]]))[0]
        return y, L * setup.A / setup.ell - level

    a, b = 1e-9, 1.0
    fa, fb = point(a)[1], point(b)[1]
    if not (fa < 0 <= fb):
        raise AwfError(f"level {level} not attained between the corner and "
                       f"the centre of P")
    for _ in range(iters):
        m = 0.5 * (a + b)
        if point(m)[1] < 0:
            a = m
        else:
            b = m
        if b - a <= 1e-15:
            break
    return point(0.5 * (a + b))[0]


def trace_ratio(setup: AwfSetup, z, n: int = 257) -> float:
    """``max / min`` of ``|I(z + gamma(t), -, P)|`` over ``t`` in ``I(z,+,W)``."""
    lo, hi = setup.preimage_W_batch([z[0]], [z[1]], PLUS, "P", tol=1e-13 * setup.ell)
    t = np.linspace(lo[0], hi[0], n)[1:-1]
    g1, g2 = setup.curve(t)
    L = setup.len_I_minus_P(z[0] + g1, z[1] + g2)
    return float(L.max() / L.min())


# ---------------------------------------------------------------------------
# change of variables


def _check_parabola(curve: MonomialCurve):
    if not curve.is_parabola:
        raise AwfError("unsupported curve: the factorization steps are "
                       "implemented for the parabola (beta=(1,2))")


def density_params(setup: AwfSetup, z, x):
    """``(t_x, s_x)`` with ``z + gamma(t_x) - gamma(s_x) = x``."""
    x1 = np.asarray(x[0], dtype=float)
    x2 = np.asarray(x[1], dtype=float)
    seed = (-setup.A * setup.ell, setup.A * setup.ell)
    return curve_pair_params(setup.curve, z, (x1, x2), seed=seed)


def _jacobian(curve: MonomialCurve, t, s):
    dt = curve.derivative(t)
    ds = curve.derivative(s)
    return -dt[..., 0] * ds[..., 1] + ds[..., 0] * dt[..., 1]


def density_theta(setup: AwfSetup, z, x):
    """Signed density ``1 / (|det J| s_x t_x)``; for the parabola
    ``|det J| = 2 |t_x - s_x|``."""
    t, s = density_params(setup, z, x)
    return 1.0 / (np.abs(_jacobian(setup.curve, t, s)) * s * t)


def psi_deviation(setup: AwfSetup, rng: np.random.Generator, n_z: int = 10,
                  n_x: int = 200) -> float:
    """``max |1 - theta_z(c_Q) / theta_z(x)|`` over sampled ``z, x``."""
    c = setup.Q.center
    worst = 0.0
    for z in setup.P.sample(rng, n_z):
        x = setup.Q.sample(rng, n_x)
        th = density_theta(setup, z, (x[:, 0], x[:, 1]))
        th_c = density_theta(setup, z, (np.array([c[0]]), np.array([c[1]])))[0]
        worst = max(worst, float(np.max(np.abs(1.0 - th_c / th))))
    return worst


def i_z(f: ScalarField, setup: AwfSetup, z, mode: str = "density",
        tol: float = 1e-12) -> TransformResult:
    """``int_{I(z,+,W)} int_{I(z+gamma(t),-,Q)} f(z+gamma(t)-gamma(s)) ds/s dt/t``.

    ``mode='direct'`` runs the nested integral over exact preimages;
    ``mode='density'`` integrates ``f theta_z`` over ``Q``.
    """
    z1, z2 = float(z[0]), float(z[1])
    if not setup.P.contains(z1, z2):
        raise ValueError(f"reference point {z} is not in P")
    curve, Q = setup.curve, setup.Q
    if mode == "density":
        def integrand(x1, x2):
            return f(x1, x2) * density_theta(setup, (z1, z2), (x1, x2))

        scale = abs(density_theta(setup, (z1, z2), ([Q.center[0]], [Q.center[1]]))[0])
        rule, val, err = adaptive_rule(integrand, Q.intervals,
                                       abs_tol=tol * scale * Q.area, rel_tol=tol)
        return TransformResult(val, err, len(rule))
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    lo, hi = setup.preimage_W_batch([z1], [z2], PLUS, "P", tol=1e-14 * setup.ell)
    evals = 0

    def outer(ids, t):
        nonlocal evals
        g1, g2 = curve(t)
        y1, y2 = z1 + g1, z2 + g2
        s_lo, s_hi, _, _ = preimage_batch(curve, y1, y2, MINUS, Q)

        def inner(j, s):
            h1, h2 = curve(s)
            return f(y1[j] - h1, y2[j] - h2) / s

        r = integrate_batch(inner, s_lo, s_hi, abs_tol=tol * 1e-2 / setup.A,
                            rel_tol=tol)
        evals += r.evaluations
        return r.value / t

    r = integrate_batch(outer, lo, hi, abs_tol=tol / setup.A ** 2, rel_tol=tol)
    return TransformResult(r.value[0], float(r.error[0]), evals)


# ---------------------------------------------------------------------------
# source compression


def _lagrange(x, nodes):
    """Lagrange basis of ``nodes`` evaluated at ``x``: shape ``(x, nodes)``."""
    diff = x[:, None] - nodes[None, :]
    out = np.ones((x.size, nodes.size))
    for j in range(nodes.size):
        others = np.delete(np.arange(nodes.size), j)
        out[:, j] = np.prod(diff[:, others], axis=1) / np.prod(nodes[j] - nodes[others])
    return out


@dataclass
class ProjectedSource:
    """Moments ``mu_j = int f L_j`` of a source on a tensor Gauss grid."""

    box: Box
    n: int
    panels: int
    nodes1: np.ndarray
    nodes2: np.ndarray
    moments: np.ndarray       # shape (len(nodes1), len(nodes2))

    @property
    def points(self):
        X1, X2 = np.meshgrid(self.nodes1, self.nodes2, indexing="ij")
        return X1.ravel(), X2.ravel()

    @property
    def flat(self) -> np.ndarray:
        return self.moments.ravel()

    @property
    def integral(self):
        return self.moments.sum()


def project(box: Box, x1, x2, weighted_values, n: int = 10,
            panels: int = 4) -> ProjectedSource:
    """Moments from a fine rule: ``weighted_values = w_i f(x_i)``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    wv = np.asarray(weighted_values)
    ref, _ = np.polynomial.legendre.leggauss(n)
    nodes1, _ = gauss_legendre(box.lo1, box.hi1, n, panels)
    nodes2, _ = gauss_legendre(box.lo2, box.hi2, n, panels)

    def panel_of(x, lo, width):
        return np.clip(((x - lo) / width * panels).astype(int), 0, panels - 1)

    p1 = panel_of(x1, box.lo1, box.width)
    p2 = panel_of(x2, box.lo2, box.height)
    mom = np.zeros((n * panels, n * panels), dtype=wv.dtype)
    for a in range(panels):
        n1 = nodes1[a * n:(a + 1) * n]
        for b in range(panels):
            sel = (p1 == a) & (p2 == b)
            if not sel.any():
                continue
            n2 = nodes2[b * n:(b + 1) * n]
            B1 = _lagrange(x1[sel], n1)
            B2 = _lagrange(x2[sel], n2)
            mom[a * n:(a + 1) * n, b * n:(b + 1) * n] = (B1 * wv[sel, None]).T @ B2
    return ProjectedSource(box, n, panels, nodes1, nodes2, mom)


# ---------------------------------------------------------------------------
# a single step


@dataclass
class AwfDiagnostics:
    sup_h_src: float
    sup_h_mid: float
    sup_residual: float
    zero_mean_residual: float
    eps_effective: float
    kappa_measured: tuple[float, float]
    denom_range: tuple[float, float]
    psi_deviation: float
    hg_range: tuple[float, float] = (0.0, 0.0)
    source_integral: float = 0.0
    residual_integral: float = 0.0
    rule_size: int = 0


def _log_measure(curve, y1, y2, box: Box, pre=None):
    """``int_{I(y,-,box)} ds/s`` in closed form (both branches)."""
    if pre is None:
        pre = preimage_batch(curve, y1, y2, MINUS, box)
    p_lo, p_hi, n_lo, n_hi = pre
    out = np.zeros(np.shape(y1))
    ok = p_hi > p_lo
    if ok.any():
        lo = np.where(ok, p_lo, 1.0)
        out = out + np.where(ok, np.log1p((p_hi - p_lo) / lo), 0.0)
    ok = n_hi > n_lo
    if ok.any():
        hi = np.where(ok, np.abs(n_hi), 1.0)
        out = out - np.where(ok, np.log1p((n_hi - n_lo) / hi), 0.0)
    return out


class AwfStep:
    """One factorization step ``src -> dst``.

    ``role='A'`` maps ``Q`` to ``P`` with weight ``g_W``; ``role='B'`` maps
    ``P`` to ``Q`` with ``u_W``.  Fields are evaluated lazily: the
    residual through the source moments, the intermediate functions by
    nested quadrature (slow, for verification).
    """

    def __init__(self, role: str, f: ScalarField, setup: AwfSetup, M: float,
                 source: ProjectedSource, denominators: np.ndarray,
                 kappa: np.ndarray, chunk: int = 64):
        self.role = role
        self.f = f
        self.setup = setup
        self.M = float(M)
        self.source = source
        self.src_box = setup.Q if role == "A" else setup.P
        self.dst_box = setup.P if role == "A" else setup.Q
        self.src_side = "Q" if role == "A" else "P"
        self.weight = build_gw(setup, M).field if role == "A" else build_uw(setup, M)
        self.denominators = denominators
        self.kappa = kappa
        self._coef = source.flat / denominators
        self._chunk = chunk
        self.g_dst = ScalarField(lambda x1, x2: np.ones(np.shape(x1)),
                                 self.dst_box, 1.0, "g_dst")
        raw = ScalarField(self._residual_eval, self.dst_box, None, "residual")
        self.residual = memoize(raw, 1e-12 * setup.ell)
        self.h_src = ScalarField(self._h_src_eval, self.src_box, None, "h_src")
        self.h_mid = ScalarField(self._h_mid_eval, self.weight.support, None, "h_mid")
        self.diagnostics: AwfDiagnostics | None = None
        self.dst_rule: QuadRule | None = None
        self._den_cache = MemoCache(1e-13 * setup.ell)

    # ----- closed-form pieces
    def hg_dst(self, y1, y2):
        return _log_measure(self.setup.curve, y1, y2, self.dst_box)

    def mid_weight(self, y1, y2):
        """``weight / H g_dst`` on ``W``, 0 elsewhere."""
        s = self.setup
        if self.role == "A":
            inside, L, _, pp = _w_data(s, y1, y2)
            w = _gw_from(s, self.M, inside, L)
            hg = _log_measure(s.curve, y1, y2, self.dst_box, pp)
        else:
            r1, r2 = s.reflect(y1, y2)
            inside, L, _, _ = _w_data(s, r1, r2)
            w = _gw_from(s, self.M, inside, L)
            hg = self.hg_dst(y1, y2)
        ok = (w != 0) & (hg != 0)
        return np.where(ok, w / np.where(ok, hg, 1.0), 0.0)

    # ----- fast route
    def _residual_eval(self, z1, z2):
        curve = self.setup.curve
        X1, X2 = self.source.points
        out = np.zeros(z1.shape, dtype=np.result_type(self._coef, float))
        zf1, zf2 = z1.ravel(), z2.ravel()
        flat = out.reshape(-1)
        for a in range(0, zf1.size, self._chunk):
            c1 = zf1[a:a + self._chunk, None]
            c2 = zf2[a:a + self._chunk, None]
            d1 = X1[None, :] - c1
            tot = (X2[None, :] - c2) / d1
            t = 0.5 * (tot + d1)
            s = 0.5 * (tot - d1)
            theta = 1.0 / (2.0 * np.abs(t - s) * s * t)
            g1, g2 = curve(t)
            m = self.mid_weight(c1 + g1, c2 + g2)
            flat[a:a + self._chunk] = (theta * m) @ self._coef
        return out

    # ----- nested route
    def denominator(self, x1, x2, tol: float = 1e-13):
        """``H* weight`` at source points by adaptive quadrature."""
        return _denominators(self.setup, self.weight, self.src_side, x1, x2, tol)[0]

    def _den_field(self):
        raw = ScalarField(lambda x1, x2: self.denominator(x1, x2), None, None, "D")
        return lambda x1, x2: self._den_cache.lookup(raw, x1, x2)

    def _h_src_eval(self, x1, x2):
        return self.f(x1, x2) / self._den_field()(x1, x2)

    def hh_src(self, y1, y2, tol: float = 1e-11):
        """``H h_src(y) = int_{I(y,-,src)} h_src(y - gamma(s)) ds/s``."""
        y1 = np.atleast_1d(np.asarray(y1, dtype=float))
        y2 = np.atleast_1d(np.asarray(y2, dtype=float))
        curve = self.setup.curve
        p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, y1, y2, MINUS, self.src_box)
        lo = np.where(self.role == "A", p_lo, n_lo)
        hi = np.where(self.role == "A", p_hi, n_hi)
        ok = hi > lo
        out = np.zeros(y1.shape)
        if not ok.any():
            return out
        a1, a2 = y1[ok], y2[ok]

        def inner(ids, s):
            h1, h2 = curve(s)
            return self.h_src(a1[ids] - h1, a2[ids] - h2) / s

        scale = float(self.setup.A) / self.setup.ell
        r = integrate_batch(inner, lo[ok], hi[ok], abs_tol=tol * scale, rel_tol=tol)
        out[ok] = r.value
        return out

    def _h_mid_eval(self, y1, y2):
        m = self.mid_weight(y1, y2)
        out = np.zeros(np.shape(y1))
        nz = m != 0
        if nz.any():
            out[nz] = m[nz] * self.hh_src(y1[nz], y2[nz])
        return out

    def residual_direct(self, z1, z2, tol: float = 1e-10):
        """``r(z) = int_{I(z,+,W)} h_mid(z + gamma(t)) dt/t`` (nested)."""
        z1 = np.atleast_1d(np.asarray(z1, dtype=float))
        z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        side = "P" if self.role == "A" else "Q"
        lo, hi = self.setup.preimage_W_batch(z1, z2, PLUS, side,
                                             tol=1e-13 * self.setup.ell)
        curve = self.setup.curve

        def outer(ids, t):
            g1, g2 = curve(t)
            return self._h_mid_eval(z1[ids] + g1, z2[ids] + g2) / t

        scale = 1.0 / self.setup.A
        r = integrate_batch(outer, lo, hi, abs_tol=tol * scale, rel_tol=tol)
        return r.value


def _denominators(setup: AwfSetup, weight: ScalarField, side: str, x1, x2,
                  tol: float = 1e-13):
    """``H* weight(x) = int_{I(x,+,W)} weight(x + gamma(t)) dt/t`` and the
    preimage lengths ``|I(x,+,W)|``."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    lo, hi = setup.preimage_W_batch(x1, x2, PLUS, side, tol=1e-13 * setup.ell)
    curve = setup.curve

    def integrand(ids, t):
        g1, g2 = curve(t)
        return weight(x1[ids] + g1, x2[ids] + g2) / t

    r = integrate_batch(integrand, lo, hi, abs_tol=tol / setup.A, rel_tol=tol * 10)
    return r.value, hi - lo


def _sup_points(setup: AwfSetup, box: Box, n_grid: int = 21):
    """Uniform grid on ``box`` plus refined grids at its four corners."""
    g1 = np.linspace(box.lo1, box.hi1, n_grid)
    g2 = np.linspace(box.lo2, box.hi2, n_grid)
    pts = [np.array(np.meshgrid(g1, g2, indexing="ij")).reshape(2, -1)]
    w = box.width / setup.A
    h = box.height
    u = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, 12)])
    for s1, s2 in ((0, 0), (1, 1), (0, 1), (1, 0)):
        a1 = box.lo1 + u * w if s1 == 0 else box.hi1 - u * w
        a2 = box.lo2 + u * h / 2 if s2 == 0 else box.hi2 - u * h / 2
        pts.append(np.array(np.meshgrid(a1, a2, indexing="ij")).reshape(2, -1))
    p = np.concatenate(pts, axis=1)
    return p[0], p[1]


def _fine_rule(f: ScalarField, box: Box, tol: float):
    """Adaptive rule on ``box`` fitted to ``f``."""
    sup = f.sup if f.sup is not None else 1.0
    rule, val, err = adaptive_rule(f, box.intervals, abs_tol=tol * sup * box.area,
                                   rel_tol=tol)
    return rule


def factor_step(role: str, f: ScalarField, setup: AwfSetup, M: float | str = "auto",
                *, rule: QuadRule | None = None, n: int = 10, panels: int = 4,
                dst_tol: float = 1e-6, mid_samples: int = 0, seed: int = 0,
                fit_residual: bool = True) -> AwfStep:
    """Build step ``role`` for source ``f``.

    ``rule`` is a fine rule on the source box fitted to ``f`` (for
    instance the one returned by :func:`dualize`); an adaptive one is fitted
    otherwise.  With ``fit_residual`` an adaptive rule on the destination is
    fitted to the residual; it measures the residual's integral and
    serves as the source rule of the next step.
    """
    if role not in ("A", "B"):
        raise ValueError(f"role must be 'A' or 'B', got {role!r}")
    _check_parabola(setup.curve)
    if M == "auto":
        M = auto_M(setup)
    src = setup.Q if role == "A" else setup.P
    if rule is None:
        rule = _fine_rule(f, src, 1e-10)
    fv = np.asarray(f(rule.x1, rule.x2))
    source = project(src, rule.x1, rule.x2, rule.weights * fv, n, panels)
    weight = build_gw(setup, M).field if role == "A" else build_uw(setup, M)
    X1, X2 = source.points
    side = "Q" if role == "A" else "P"
    try:
        D, lengths = _denominators(setup, weight, side, X1, X2)
    except GeometryError as exc:
        raise AwfError(f"A too small for this Q: {exc}") from exc
    floor = 0.1 / (setup.A + setup.N) * lengths.min() / setup.ell
    small = np.abs(D) < floor
    if small.any() or not np.all(np.isfinite(D)):
        k = int(np.flatnonzero(small | ~np.isfinite(D))[0])
        raise AwfError(f"A too small for this Q: |H* weight| = {abs(D[k]):.3e} "
                       f"at ({X1[k]:.6g}, {X2[k]:.6g})")
    step = AwfStep(role, f, setup, M, source, D, lengths / setup.ell)
    sup_f = float(np.max(np.abs(fv))) if fv.size else 0.0
    fv_nodes = np.asarray(f(X1, X2))
    sup_h_src = float(np.max(np.abs(fv_nodes / D))) if fv_nodes.size else 0.0
    rng = np.random.default_rng(seed)
    dst = step.dst_box
    # not measured unless the residual rule is fitted
    zero_mean = res_int = float("nan")
    sup_pts = _sup_points(setup, dst)
    sup_vals = np.abs(step.residual(*sup_pts))
    sup_res = float(sup_vals.max())
    if fit_residual:
        scale = max(sup_res, 1e-300)
        drule, res_int, _ = adaptive_rule(step.residual, dst.intervals,
                                          abs_tol=dst_tol * scale * dst.area,
                                          rel_tol=dst_tol)
        step.dst_rule = drule
        sup_res = max(sup_res, float(np.max(np.abs(step.residual(drule.x1, drule.x2)))))
        zero_mean = abs(res_int)
    # H g_dst over a sample of W
    box = weight.support
    cand = box.sample(rng, 4000)
    cand = cand[weight(cand[:, 0], cand[:, 1]) > 0]
    hg = np.abs(step.hg_dst(cand[:, 0], cand[:, 1]))
    sup_h_mid = 0.0
    if mid_samples:
        ym = cand[:mid_samples]
        sup_h_mid = float(np.max(np.abs(step.h_mid(ym[:, 0], ym[:, 1]))))
    psi = psi_deviation(setup, rng, 5, 100)
    step.diagnostics = AwfDiagnostics(
        sup_h_src=sup_h_src, sup_h_mid=sup_h_mid, sup_residual=sup_res,
        zero_mean_residual=zero_mean,
        eps_effective=sup_res / sup_f if sup_f > 0 else 0.0,
        kappa_measured=(float(step.kappa.min()), float(step.kappa.max())),
        denom_range=(float(np.abs(D).min()), float(np.abs(D).max())),
        psi_deviation=psi,
        hg_range=(float(hg.min()), float(hg.max())) if hg.size else (0.0, 0.0),
        source_integral=float(np.real(source.integral)),
        residual_integral=float(np.real(res_int)),
        rule_size=len(step.dst_rule) if step.dst_rule is not None else 0)
    return step


def verify_identity(step: AwfStep, points, tol: float = 1e-10) -> float:
    """``max |f - bracket_1 - bracket_2 - residual|`` over ``points``.

    Each bracket term is computed by quadrature where its support meets
    the point: source points use ``h_src H* weight``, points of ``W`` the
    two middle terms, destination points ``g_dst H* h_mid`` by the nested
    route against the residual from the fast route.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = step.setup
    worst = 0.0
    for x1, x2 in pts:
        a1, a2 = np.array([x1]), np.array([x2])
        lhs = complex(step.f(a1, a2)[0])
        rhs = 0.0
        if step.src_box.contains(x1, x2):
            D = step.denominator(a1, a2)[0]
            rhs += step.h_src(a1, a2)[0] * D
        w = step.weight(a1, a2)[0]
        if w != 0:
            hh = step.hh_src(a1, a2, tol)[0]
            # - weight H h_src + h_mid H g_dst, with H g_dst by quadrature
            hg_quad = _hg_quadrature(step, a1, a2)
            m = step.mid_weight(a1, a2)[0]
            rhs += -w * hh + m * hh * hg_quad
        if step.dst_box.contains(x1, x2):
            direct = step.residual_direct(a1, a2, tol)[0]
            rhs += -direct + step.residual(a1, a2)[0]
        worst = max(worst, abs(lhs - rhs))
    return worst


def _hg_quadrature(step: AwfStep, a1, a2) -> float:
    curve = step.setup.curve
    p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, a1, a2, MINUS, step.dst_box)
    total = 0.0
    for lo, hi in ((p_lo[0], p_hi[0]), (n_lo[0], n_hi[0])):
        if hi > lo:
            r = integrate_batch(lambda ids, s: 1.0 / s, [lo], [hi],
                                abs_tol=1e-15, rel_tol=1e-13)
            total += r.value[0]
    return total


# ---------------------------------------------------------------------------
# closing argument


@dataclass
class ChainReport:
    A: float
    M: float
    lhs: float
    pairings: tuple[float, float, float, float]
    residual_pairing: float
    identity_residual: float
    eps_sq: float
    sup_f: float
    zero_mean_P: float
    zero_mean_Q: float
    step_a: AwfDiagnostics = field(repr=False, default=None)
    step_b: AwfDiagnostics = field(repr=False, default=None)

    @property
    def total(self) -> float:
        return sum(self.pairings) + self.residual_pairing


def _commutator_weight(step: AwfStep, b: ScalarField, x1, x2, tol: float):
    """``C(x) = int_{I(x,+,W)} weight(x+gamma(t)) (b(x+gamma(t)) - b(x)) dt/t``."""
    s = step.setup
    lo, hi = s.preimage_W_batch(x1, x2, PLUS, step.src_side, tol=1e-13 * s.ell)
    bx = b(x1, x2)
    curve = s.curve

    def integrand(ids, t):
        g1, g2 = curve(t)
        y1, y2 = x1[ids] + g1, x2[ids] + g2
        return step.weight(y1, y2) * (b(y1, y2) - bx[ids]) / t

    r = integrate_batch(integrand, lo, hi, abs_tol=tol / s.A, rel_tol=tol * 10)
    return r.value


def _commutator_dst(step: AwfStep, b: ScalarField, y1, y2, n: int = 16):
    """``C_dst(y) = int_{I(y,-,dst)} (b(y) - b(y - gamma(s))) ds/s``; the
    integrand is smooth, so a fixed Gauss rule suffices."""
    curve = step.setup.curve
    p_lo, p_hi, n_lo, n_hi = preimage_batch(curve, y1, y2, MINUS, step.dst_box)
    out = np.zeros(np.shape(y1))
    ref, w = np.polynomial.legendre.leggauss(n)
    by = b(y1, y2)
    for lo, hi in ((p_lo, p_hi), (n_lo, n_hi)):
        ok = hi > lo
        if not ok.any():
            continue
        c = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        s = c[..., None] + h[..., None] * ref
        g1, g2 = curve(s)
        vals = (by[..., None] - b(y1[..., None] - g1, y2[..., None] - g2)) / s
        out = out + np.where(ok, h * np.sum(vals * w, axis=-1), 0.0)
    return out


def _second_bracket_kernel(step: AwfStep, b: ScalarField, x1, x2, tol: float):
    """``G(x) = int_{I(x,+,W)} m(y) C_dst(y) dt/t`` with ``y = x+gamma(t)``."""
    s = step.setup
    lo, hi = s.preimage_W_batch(x1, x2, PLUS, step.src_side, tol=1e-13 * s.ell)
    curve = s.curve

    def integrand(ids, t):
        g1, g2 = curve(t)
        y1, y2 = x1[ids] + g1, x2[ids] + g2
        return step.mid_weight(y1, y2) * _commutator_dst(step, b, y1, y2) / t

    r = integrate_batch(integrand, lo, hi, abs_tol=tol, rel_tol=tol * 10)
    return r.value


def _pairings(step: AwfStep, b: ScalarField, tol: float):
    X1, X2 = step.source.points
    coef = step._coef
    t_first = -np.sum(coef * _commutator_weight(step, b, X1, X2, tol))
    t_second = np.sum(coef * _second_bracket_kernel(step, b, X1, X2, tol))
    return float(np.real(t_first)), float(np.real(t_second))


def full_chain(b: ScalarField, Q, A: float, N: float = 1.0, M: float | str = "auto",
               *, curve: MonomialCurve | None = None, n: int = 10, panels: int = 4,
               dst_tol: float = 1e-6, tol: float = 1e-11,
               dual: Dualized | None = None) -> ChainReport:
    """Dualize ``b`` on ``Q``, run steps A and B and pair everything with ``b``.

    ``int_Q |b - <b>| = T1 + T2 + T3 + T4 + R`` where ``T1, T3`` pair the
    first brackets, ``T2, T4`` the second brackets and
    ``R = int_Q (b - <b>) f_QQ`` the final residual.
    """
    curve = MonomialCurve.parabola() if curve is None else curve
    _check_parabola(curve)
    Q = Q if isinstance(Q, Box) else Box.from_intervals(*Q)
    setup = build_setup(curve, Q, A, N)
    if M == "auto":
        M = auto_M(setup)
    dual = dualize(b, Q, tol=1e-10) if dual is None else dual
    step_a = factor_step("A", dual.f, setup, M, rule=dual.rule, n=n, panels=panels,
                         dst_tol=dst_tol)
    step_b = factor_step("B", step_a.residual, setup, M, rule=step_a.dst_rule, n=n,
                         panels=panels, dst_tol=dst_tol)
    t1, t2 = _pairings(step_a, b, tol)
    t3, t4 = _pairings(step_b, b, tol)
    rule = step_b.dst_rule
    fqq = step_b.residual(rule.x1, rule.x2)
    R = float(np.real(np.sum(rule.weights * (b(rule.x1, rule.x2) - dual.mean_b) * fqq)))
    lhs = dual.lhs
    sup_f = float(np.max(np.abs(dual.f(dual.rule.x1, dual.rule.x2))))
    eps_sq = step_b.diagnostics.sup_residual / sup_f
    ident = abs(lhs - (t1 + t2 + t3 + t4 + R))
    return ChainReport(float(A), float(M), lhs, (t1, t2, t3, t4), R, ident, eps_sq,
                       sup_f, step_a.diagnostics.zero_mean_residual,
                       step_b.diagnostics.zero_mean_residual,
                       step_a.diagnostics, step_b.diagnostics)

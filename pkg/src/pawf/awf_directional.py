"""Two-step factorization along the coordinate directions.

Four congruent rectangles ``R0 -> R1 -> R2 -> R3 -> R0`` are visited by
moving along ``e1``, ``e2``, ``-e1`` and ``-e2``.  Every transform in the
construction is a one-dimensional integral whose kernel stays ``(A - 1)``
side lengths away from its singularity, so

* the adjoint weights ``H* 1_R`` are logarithms of endpoint ratios,
* the first residual is a sum over a source rule (fitted to the jumps of
  ``f``) against an explicit separable kernel,
* everything after the first residual is smooth and is carried on tensor
  Gauss-Legendre grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Box, ScalarField
from .norms import dualize
from .quadrature import QuadRule, gauss_legendre, integrate_2d_batch, integrate_batch


class LoopError(ValueError):
    pass


@dataclass(frozen=True)
class RectangleLoop:
    R0: Box
    A: float
    R1: Box
    R2: Box
    R3: Box

    @property
    def lI(self) -> float:
        return self.R0.width

    @property
    def lJ(self) -> float:
        return self.R0.height

    @property
    def rectangles(self) -> tuple[Box, Box, Box, Box]:
        return (self.R0, self.R1, self.R2, self.R3)

    # adjoint weights, each positive on its source rectangle

    def D1(self, x1):
        """``H*_{e1} 1_{R1}`` on ``R0``."""
        return np.log((self.R1.hi1 - x1) / (self.R1.lo1 - x1))

    def D2(self, y2):
        """``H*_{e2} 1_{R2}`` on ``R1``."""
        return np.log((self.R2.hi2 - y2) / (self.R2.lo2 - y2))

    def D3(self, z1):
        """``H*_{-e1} 1_{R3}`` on ``R2``."""
        return np.log((z1 - self.R3.lo1) / (z1 - self.R3.hi1))

    def D0(self, w2):
        """``H*_{-e2} 1_{R0}`` on ``R3``."""
        return np.log((w2 - self.R0.lo2) / (w2 - self.R0.hi2))

    # parameter intervals

    def I_plus(self, x):
        """``{t : x + t e1 in R1}``."""
        return (self.R1.lo1 - x[0], self.R1.hi1 - x[0])

    def I_minus(self, y):
        """``{t : y - t e1 in R0}``."""
        return (y[0] - self.R0.hi1, y[0] - self.R0.lo1)

    def J_plus(self, y):
        """``{t : y + t e2 in R2}``."""
        return (self.R2.lo2 - y[1], self.R2.hi2 - y[1])

    def J_minus(self, z):
        """``{t : z - t e2 in R1}``."""
        return (z[1] - self.R1.hi2, z[1] - self.R1.lo2)


def build_loop(R0, A: float) -> RectangleLoop:
    if not A > 2:
        raise LoopError(f"A must exceed 2, got {A}")
    R0 = R0 if isinstance(R0, Box) else Box.from_intervals(*R0)
    if not (R0.width > 0 and R0.height > 0):
        raise LoopError("R0 must have positive side lengths")
    R1 = R0.shift(A * R0.width, 0.0)
    R2 = R1.shift(0.0, A * R0.height)
    R3 = R2.shift(-A * R0.width, 0.0)
    return RectangleLoop(R0, float(A), R1, R2, R3)


def _flat(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    shape = np.broadcast(x1, x2).shape
    return np.broadcast_to(x1, shape).ravel(), np.broadcast_to(x2, shape).ravel(), shape


# ---------------------------------------------------------------------------
# halves


@dataclass
class GridField:
    """Values of a smooth field on a tensor Gauss-Legendre grid."""

    box: Box
    n1: np.ndarray
    w1: np.ndarray
    n2: np.ndarray
    w2: np.ndarray
    values: np.ndarray          # shape (len(n1), len(n2))

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.w1, self.w2)

    @property
    def rule(self) -> QuadRule:
        X1, X2 = np.meshgrid(self.n1, self.n2, indexing="ij")
        return QuadRule(np.column_stack([X1.ravel(), X2.ravel()]), self.weights.ravel())

    def integral(self):
        return np.sum(self.weights * self.values)


@dataclass
class DirectionalStep:
    """One half of the loop: two quotient fields, the intermediate
    residual and the final residual (tabulated on ``grid``)."""

    half: str
    loop: RectangleLoop
    h_src: ScalarField
    h_mid: ScalarField
    mid: ScalarField
    residual: ScalarField
    grid: GridField
    diagnostics: dict = field(default_factory=dict)


def _grid(box: Box, n: int, panels: int):
    n1, w1 = gauss_legendre(box.lo1, box.hi1, n, panels)
    n2, w2 = gauss_legendre(box.lo2, box.hi2, n, panels)
    return n1, w1, n2, w2


def factor_first(f: ScalarField, loop: RectangleLoop, rule: QuadRule, *,
                 n: int = 16, panels: int = 1, tol: float = 1e-12,
                 chunk: int = 2048) -> DirectionalStep:
    """``R0 -> R1 -> R2``.

    ``rule`` must integrate ``f`` times smooth weights on ``R0`` (the rule
    returned by ``dualize`` does).  The residual is

        f~_{R2}(z) = int_{R0} f(x) / (D1(x1) D2(x2) (z1 - x1)(z2 - x2)) dx.
    """
    R0, R1, R2 = loop.R0, loop.R1, loop.R2
    fvals = f(rule.x1, rule.x2)
    src = rule.weights * fvals / (loop.D1(rule.x1) * loop.D2(rule.x2))
    a1, a2 = rule.x1, rule.x2

    h0 = ScalarField(lambda x1, x2: f(x1, x2) / loop.D1(x1), R0, None, "h_R0")

    def mid(y1, y2):
        # f~_{R1}(y) = int_I h0(s, y2) ds / (y1 - s), adaptive per point
        p1, p2, shape = _flat(y1, y2)
        res = integrate_batch(
            lambda ids, s: f(s, p2[ids]) / (loop.D1(s) * (p1[ids] - s)),
            np.full(p1.size, R0.lo1), np.full(p1.size, R0.hi1),
            abs_tol=tol, rel_tol=tol)
        return res.value.reshape(shape)

    mid_f = ScalarField(mid, R1, None, "f~_R1")
    h1 = ScalarField(lambda y1, y2: mid_f(y1, y2) / loop.D2(y2), R1, None, "h_R1")

    def residual(z1, z2):
        p1, p2, shape = _flat(z1, z2)
        out = np.zeros(p1.size, dtype=np.result_type(src, float))
        for s in range(0, p1.size, chunk):
            k1 = 1.0 / (p1[s:s + chunk, None] - a1[None, :])
            k2 = 1.0 / (p2[s:s + chunk, None] - a2[None, :])
            out[s:s + chunk] = (k1 * k2) @ src
        return out.reshape(shape)

    res_f = ScalarField(residual, R2, None, "f~_R2")
    n1, w1, n2, w2 = _grid(R2, n, panels)
    X1, X2 = np.meshgrid(n1, n2, indexing="ij")
    grid = GridField(R2, n1, w1, n2, w2, residual(X1, X2))
    return DirectionalStep("first", loop, h0, h1, mid_f, res_f, grid)


def factor_second(first: DirectionalStep, *, n: int = 16,
                  panels: int = 1) -> DirectionalStep:
    """``R2 -> R3 -> R0`` applied to the residual of ``first``.

    With ``z1_j`` the grid columns of ``R2`` and ``z2_k`` its rows::

        f~_{R3}(w) = sum_j c_j f~_{R2}(z1_j, w2) / (D3(z1_j) (z1_j - w1))
        f~_{R0}(x) = sum_k c_k f~_{R3}(x1, z2_k) / (D0(z2_k) (z2_k - x2))
    """
    loop = first.loop
    grid = first.grid
    f2 = first.residual
    R2, R3, R0 = loop.R2, loop.R3, loop.R0
    z1, wz1, z2, wz2 = grid.n1, grid.w1, grid.n2, grid.w2
    c1 = wz1 / loop.D3(z1)
    c2 = wz2 / loop.D0(z2)

    h2 = ScalarField(lambda a, b: f2(a, b) / loop.D3(a), R2, None, "h_R2")

    def mid(w1, w2):
        p1, p2, shape = _flat(w1, w2)
        vals = f2(z1[None, :], p2[:, None])                 # (m, n1)
        return np.sum(vals * c1 / (z1[None, :] - p1[:, None]), axis=1).reshape(shape)

    def mid_rows(w1):
        """``f~_{R3}(w1_i, z2_k)`` for every grid row ``z2_k``."""
        w1 = np.atleast_1d(np.asarray(w1, dtype=float))
        ker = c1[None, :] / (z1[None, :] - w1[:, None])     # (m, n1)
        return ker @ grid.values                             # (m, n2)

    mid_f = ScalarField(mid, R3, None, "f~_R3")
    h3 = ScalarField(lambda a, b: mid_f(a, b) / loop.D0(b), R3, None, "h_R3")

    def residual(x1, x2):
        p1, p2, shape = _flat(x1, x2)
        rows = mid_rows(p1) * c2[None, :]
        return np.sum(rows / (z2[None, :] - p2[:, None]), axis=1).reshape(shape)

    res_f = ScalarField(residual, R0, None, "f~_R0")
    n1, w1, n2, w2 = _grid(R0, n, panels)
    X1, X2 = np.meshgrid(n1, n2, indexing="ij")
    out_grid = GridField(R0, n1, w1, n2, w2, residual(X1, X2))
    step = DirectionalStep("second", loop, h2, h3, mid_f, res_f, out_grid)
    step.diagnostics["mid_rows"] = mid_rows
    return step


def factor_half(f, loop: RectangleLoop, half: str, *, rule: QuadRule | None = None,
                first: DirectionalStep | None = None, **kw) -> DirectionalStep:
    """Dispatch to ``factor_first`` (``half='first'``) or ``factor_second``."""
    if half == "first":
        if rule is None:
            raise ValueError("the first half needs a source rule on R0")
        return factor_first(f, loop, rule, **kw)
    if half == "second":
        if first is None:
            raise ValueError("the second half starts from a first-half step")
        return factor_second(first, **kw)
    raise ValueError(f"unknown half {half!r}")


# ---------------------------------------------------------------------------
# diagnostics


def denominator_samples(loop: RectangleLoop, rng: np.random.Generator, n: int = 100):
    """Sampled ``H*_{e1} 1_{R1}`` on ``R0`` and ``H*_{e2} 1_{R2}`` on ``R1``."""
    x = loop.R0.sample(rng, n)
    y = loop.R1.sample(rng, n)
    return loop.D1(x[:, 0]), loop.D2(y[:, 1])


def prime_deviations(loop: RectangleLoop, rng: np.random.Generator, n: int = 200):
    """Sample ``t' = A D2(z - e2 t) t`` and ``s' = A D1(z - e2 t - e1 s) s``.

    Returns the largest ``|t' - A l(J)| / l(J)``, ``|s' - A l(I)| / l(I)``
    and the constant ``C`` in
    ``|1/(t's') - 1/(A^2 l(I) l(J))| = C / (A^3 l(I) l(J))``.
    """
    A, lI, lJ = loop.A, loop.lI, loop.lJ
    z = loop.R2.sample(rng, n)
    u = rng.random((n, 2))
    t_lo, t_hi = loop.J_minus((z[:, 0], z[:, 1]))
    t = t_lo + u[:, 0] * (t_hi - t_lo)
    y = (z[:, 0], z[:, 1] - t)
    s_lo, s_hi = loop.I_minus(y)
    s = s_lo + u[:, 1] * (s_hi - s_lo)
    tp = A * loop.D2(y[1]) * t
    sp = A * loop.D1(y[0] - s) * s
    dev_t = np.max(np.abs(tp - A * lJ)) / lJ
    dev_s = np.max(np.abs(sp - A * lI)) / lI
    kern = np.max(np.abs(1.0 / (tp * sp) - 1.0 / (A * A * lI * lJ))) * A ** 3 * lI * lJ
    return {"t_dev": float(dev_t), "s_dev": float(dev_s), "kernel_C": float(kern),
            "t_bound": 2 * A / (A - 1)}


def crux_check(loop: RectangleLoop, z, n: int = 50, f: ScalarField | None = None,
               tol: float = 1e-9) -> dict:
    """Check that ``{z - e2 t - e1 s : t in J(z,-), s in I(z - e2 t, -)}``
    is exactly ``R0``.

    The intervals are closed form; the report gives the largest endpoint
    error of the image intervals over ``n`` values of ``t``.  With ``f``
    the double integral ``int int f(z - e2 t - e1 s) ds dt`` is computed
    by nested adaptive quadrature.
    """
    z = (float(z[0]), float(z[1]))
    if not loop.R2.contains(*z):
        raise ValueError("z must lie in R2")
    t_lo, t_hi = loop.J_minus(z)
    img_J = (z[1] - t_hi, z[1] - t_lo)
    err = max(abs(img_J[0] - loop.R0.lo2), abs(img_J[1] - loop.R0.hi2))
    for t in np.linspace(t_lo, t_hi, n):
        s_lo, s_hi = loop.I_minus((z[0], z[1] - t))
        img_I = (z[0] - s_hi, z[0] - s_lo)
        err = max(err, abs(img_I[0] - loop.R0.lo1), abs(img_I[1] - loop.R0.hi1))
    report = {"z": z, "J_minus": (t_lo, t_hi),
              "I_minus": loop.I_minus((z[0], z[1] - 0.5 * (t_lo + t_hi))),
              "endpoint_error": float(err)}
    if f is not None:
        def s_lo(ids, t):
            return np.full(np.shape(t), loop.I_minus((z[0], z[1] - t))[0])

        def s_hi(ids, t):
            return np.full(np.shape(t), loop.I_minus((z[0], z[1] - t))[1])

        res = integrate_2d_batch(lambda ids, t, s: f(z[0] - s, z[1] - t),
                                 [t_lo], [t_hi], s_lo, s_hi,
                                 abs_tol=tol, rel_tol=tol)
        report["double_integral"] = res.value[0]
        report["double_integral_err"] = float(res.error[0])
    return report


# ---------------------------------------------------------------------------
# closing argument


def _commutator_weight(b: ScalarField, box: Box, axis: int, sign: int,
                       x1, x2, n: int = 24):
    """``C(x) = int_{x + sign t e_axis in box} (b(x + sign t e_axis) - b(x)) dt/t``."""
    lo, hi = (box.lo1, box.hi1) if axis == 1 else (box.lo2, box.hi2)
    base = x1 if axis == 1 else x2
    # parameter interval, positive because box lies ahead of x
    a = (lo - base) if sign > 0 else (base - hi)
    c = (hi - base) if sign > 0 else (base - lo)
    g, w = gauss_legendre(-1.0, 1.0, n)
    mid = 0.5 * (a + c)
    half = 0.5 * (c - a)
    t = mid[:, None] + half[:, None] * g[None, :]
    if axis == 1:
        y1, y2 = x1[:, None] + sign * t, np.broadcast_to(x2[:, None], t.shape)
    else:
        y1, y2 = np.broadcast_to(x1[:, None], t.shape), x2[:, None] + sign * t
    vals = (b(y1, y2) - b(x1, x2)[:, None]) / t
    return half * np.sum(w * vals, axis=1)


@dataclass
class LoopChainReport:
    A: float
    lhs: float
    pairings: tuple
    residual_pairing: complex | float
    identity_residual: float
    sup_f: float
    sup_res2: float
    sup_res0: float
    zero_mean_res2: float
    zero_mean_res0: float
    denominators: tuple
    deviations: dict

    @property
    def ratio_res2(self) -> float:
        return self.sup_res2 / self.sup_f

    @property
    def ratio_res0(self) -> float:
        return self.sup_res0 / self.sup_f


def _sample_sup(field: ScalarField, box: Box, k: int = 21) -> float:
    a = np.linspace(box.lo1, box.hi1, k)
    c = np.linspace(box.lo2, box.hi2, k)
    return float(np.max(np.abs(field(a[:, None], c[None, :]))))


def four_step_chain(b: ScalarField, R0, A: float, *, n: int = 16,
                    sup_grid: int = 21, seed: int = 0, tol: float = 1e-13
                    ) -> LoopChainReport:
    """Dualize ``b`` on ``R0``, run both halves and evaluate every pairing.

    ``LHS = int_{R0} |b - <b>|`` should equal ``T1 + T2 + T3 + T4 + R`` with
    ``T_i = -int g_{R_i} [b, H_{e_i}] h_{R_{i-1}}`` computed in commutator
    form and ``R = int (b - <b>) f~_{R0}``.
    """
    loop = build_loop(R0, A)
    R0, R1, R2, R3 = loop.rectangles
    dual = dualize(b, R0, tol=tol)
    f, rule = dual.f, dual.rule
    first = factor_first(f, loop, rule, n=n)
    second = factor_second(first, n=n)

    x1, x2 = rule.x1, rule.x2
    fvals = f(x1, x2)
    h0 = fvals / loop.D1(x1)
    # T1: on R0 against C1 (direction e1 into R1)
    T1 = -np.sum(rule.weights * h0 * _commutator_weight(b, R1, 1, +1, x1, x2))
    # T2: h1 = f~_{R1} / D2 on R1; swap the e1 integral onto the R0 rule
    g1, gw1 = gauss_legendre(R1.lo1, R1.hi1, n)
    Y1 = np.repeat(g1[None, :], x1.size, axis=0)
    Y2 = np.repeat(x2[:, None], n, axis=1)
    C2 = _commutator_weight(b, R2, 2, +1, Y1.ravel(), Y2.ravel()).reshape(Y1.shape)
    inner = np.sum(gw1[None, :] * C2 / (g1[None, :] - x1[:, None]), axis=1) / loop.D2(x2)
    T2 = -np.sum(rule.weights * h0 * inner)
    # T3: h2 = f~_{R2} / D3 on the R2 grid, direction -e1 into R3
    gr = first.grid.rule
    h2 = first.grid.values.ravel() / loop.D3(gr.x1)
    T3 = -np.sum(gr.weights * h2 * _commutator_weight(b, R3, 1, -1, gr.x1, gr.x2))
    # T4: h3 = f~_{R3} / D0 on R3 (rows shared with the R2 grid)
    w1, ww1 = gauss_legendre(R3.lo1, R3.hi1, n)
    f3 = second.diagnostics["mid_rows"](w1)                   # (n, n2)
    W1, W2 = np.meshgrid(w1, first.grid.n2, indexing="ij")
    h3 = f3 / loop.D0(W2)
    C4 = _commutator_weight(b, R0, 2, -1, W1.ravel(), W2.ravel()).reshape(W1.shape)
    T4 = -np.sum(np.outer(ww1, first.grid.w2) * h3 * C4)
    # residual pairing on the R0 grid
    g0 = second.grid
    G1, G2 = np.meshgrid(g0.n1, g0.n2, indexing="ij")
    bmean = dual.mean_b
    R = np.sum(g0.weights * (b(G1, G2) - bmean) * g0.values)

    pairings = tuple(complex(T).real if np.isrealobj(T) else complex(T)
                     for T in (T1, T2, T3, T4))
    total = sum(pairings) + R
    lhs = dual.lhs
    rng = np.random.default_rng(seed)
    d1, d2 = denominator_samples(loop, rng)
    sup_f = float(np.max(np.abs(fvals)))
    return LoopChainReport(
        A=float(A), lhs=lhs, pairings=pairings, residual_pairing=R,
        identity_residual=float(abs(lhs - total)),
        sup_f=sup_f,
        sup_res2=_sample_sup(first.residual, R2, sup_grid),
        sup_res0=_sample_sup(second.residual, R0, sup_grid),
        zero_mean_res2=float(abs(first.grid.integral())),
        zero_mean_res0=float(abs(g0.integral())),
        denominators=(float(min(d1.min(), d2.min())), float(max(d1.max(), d2.max()))),
        deviations=prime_deviations(loop, rng),
    )

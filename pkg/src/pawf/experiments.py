"""Experiment registry for the command line runner.

Each experiment maps a validated config to a :class:`Table`: a fixed
list of columns, rows in a deterministic order and one pass flag per
row.  Rows never depend on timing or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import awf_directional as ad
from . import awf_parabolic as ap
from .curve import MonomialCurve
from .fields import Box, ScalarField, from_function, make_indicator
from .geometry import PLUS, build_setup, crux_coverage
from .norms import (RectangleFamily, bmo_norm, holder_norm_beta, holder_norm_curve,
                    lr_distance, mean_oscillation, slice_bmo)
from .transforms import fractional_scaling

TEST_FUNCTIONS: dict[str, Callable] = {
    "x1": lambda x1, x2: x1,
    "x1x2": lambda x1, x2: x1 * x2,
    "sin_cos": lambda x1, x2: np.sin(x1) + np.cos(x2),
    "sin_sin": lambda x1, x2: np.sin(x1) + np.sin(x2),
    "sign_x1": lambda x1, x2: np.sign(x1 - 0.5),
}


@dataclass
class Config:
    experiment: str
    curve: MonomialCurve = field(default_factory=MonomialCurve.parabola)
    Q: Box = Box(0.0, 1.0, 0.0, 1.0)
    A: list[float] | None = None
    N: float = 1.0
    M: float | str = "auto"
    tol: float | None = None
    samples: int | None = None
    seed: int = 0
    b: str | None = None
    alpha: list[float] | None = None
    lam: list[float] | None = None
    zero_mean: bool = False       # awf-decay: also fit the residual and measure its integral

    @classmethod
    def from_dict(cls, name: str, raw: dict) -> "Config":
        kw = {"experiment": name}
        if "curve" in raw:
            kw["curve"] = MonomialCurve.from_config(raw["curve"])
        if "Q" in raw:
            kw["Q"] = Box.from_intervals(*raw["Q"])
        if "A" in raw:
            a = raw["A"]
            kw["A"] = [float(v) for v in (a if isinstance(a, list) else [a])]
        for key in ("N", "M", "tol", "samples", "seed", "b", "zero_mean"):
            if key in raw:
                kw[key] = raw[key]
        if "alpha" in raw:
            a = raw["alpha"]
            kw["alpha"] = [float(v) for v in (a if isinstance(a, list) else [a])]
        if "lambda" in raw:
            kw["lam"] = [float(v) for v in raw["lambda"]]
        return cls(**kw)

    def A_or(self, default):
        return self.A if self.A is not None else list(default)

    def samples_or(self, default: int) -> int:
        return self.samples if self.samples is not None else default

    def b_field(self, default: str) -> ScalarField:
        name = self.b or default
        return from_function(TEST_FUNCTIONS[name], label=name)


@dataclass
class Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    passed: list[bool] = field(default_factory=list)
    plot: dict | None = None      # {"x": col, "y": [cols], "logx", "logy", "title"}

    def add(self, row: list, ok: bool):
        if len(row) != len(self.columns):
            raise ValueError("row length does not match the header")
        self.rows.append(row)
        self.passed.append(bool(ok))

    @property
    def all_passed(self) -> bool:
        return all(self.passed)


def _nonincreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= 0))


def _slope(A, values) -> float:
    return float(np.polyfit(np.log(A), np.log(values), 1)[0])


# ---------------------------------------------------------------------------
# geometry


def geom_limit(cfg: Config) -> Table:
    """``|I(x,+,W)| / l`` approaches 1/2 as the separation grows."""
    rng = np.random.default_rng(cfg.seed)
    A_list = cfg.A_or([10, 40, 160])
    n = cfg.samples_or(25)
    t = Table(["A", "x1", "x2", "len_ratio"])
    devs, per_A = [], []
    for A in A_list:
        s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
        pts = cfg.Q.sample(rng, n)
        lo, hi = s.preimage_W_batch(pts[:, 0], pts[:, 1], PLUS, "Q", tol=1e-12 * s.ell)
        r = (hi - lo) / s.ell
        devs.append(float(np.max(np.abs(r - 0.5))))
        per_A.append((A, pts, r))
    ok_A = [devs[i] <= devs[i - 1] if i else True for i in range(len(devs))]
    ok_A[-1] = ok_A[-1] and devs[-1] <= 0.02
    for (A, pts, r), ok in zip(per_A, ok_A):
        for p, v in zip(pts, r):
            t.add([A, p[0], p[1], v], ok)
    t.plot = {"x": "A", "y": ["len_ratio"], "logx": True, "title": "|I(x,+,W)|/l"}
    return t


def ratio_limit(cfg: Config) -> Table:
    """Variation of ``|I(z+gamma(t),-,P)|`` along each trace."""
    rng = np.random.default_rng(cfg.seed)
    A_list = cfg.A_or([10, 40, 160])
    n = cfg.samples_or(10)
    t = Table(["A", "z1", "z2", "ratio", "bound"])
    worst = []
    rows = []
    for A in A_list:
        s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
        bound = 1.05 * (A + cfg.N) / A
        for z in s.P.sample(rng, n):
            rows.append([A, z[0], z[1], ap.trace_ratio(s, z), bound])
        worst.append(max(r[3] for r in rows if r[0] == A))
    dec = _nonincreasing(worst)
    for r in rows:
        t.add(r, dec and r[3] <= r[4])
    t.plot = {"x": "A", "y": ["ratio", "bound"], "logx": True, "title": "trace ratio"}
    return t


def gw_props(cfg: Config) -> Table:
    """Properties (i)-(iii) of the weight on ``W``."""
    A_list = cfg.A_or([10, 160])
    t = Table(["A", "M", "min_scaled", "passed_i", "max_dev_ii", "ratio_iii"])
    reps = []
    for A in A_list:
        s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
        M = ap.auto_M(s, seed=cfg.seed) if cfg.M == "auto" else float(cfg.M)
        reps.append((A, ap.check_gw_properties(ap.build_gw(s, M),
                                               cfg.samples_or(200), cfg.seed)))
    first = reps[0][1].ratio_iii
    for A, r in reps:
        ok = r.passed_i and r.passed_ii and r.ratio_iii <= first
        t.add([A, r.M, r.min_scaled, r.passed_i, r.max_dev_ii, r.ratio_iii], ok)
    return t


def crux(cfg: Config) -> Table:
    """Both coverage identities: rectangle loop and parabolic pair map."""
    rng = np.random.default_rng(cfg.seed)
    A = cfg.A_or([10])[0]
    t = Table(["kind", "A", "z1", "z2", "error"])
    loop = ad.build_loop(cfg.Q, A)
    R2 = loop.R2
    zs = [R2.center, (R2.lo1, R2.lo2), (R2.hi1, R2.hi2)] + \
        [tuple(p) for p in R2.sample(rng, 2)]
    for z in zs:
        e = ad.crux_check(loop, z)["endpoint_error"]
        t.add(["directional", A, z[0], z[1], e], e <= 1e-9)
    s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
    v = s.vertices["lb"]
    zs = [s.P.center, v] + [tuple(p) for p in s.P.sample(rng, 3)]
    for z in zs:
        rep = crux_coverage(s, z, cfg.samples_or(200), rng)
        e = max(rep.max_outside, rep.max_roundtrip)
        t.add(["parabolic", A, z[0], z[1], e], rep.passed)
    return t


# ---------------------------------------------------------------------------
# factorization


def awf_verify(cfg: Config) -> Table:
    """Pointwise step identity and the two routes for ``I_z``."""
    rng = np.random.default_rng(cfg.seed)
    A = cfg.A_or([32])[0]
    n = cfg.samples_or(2)
    s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
    M = ap.auto_M(s, seed=cfg.seed) if cfg.M == "auto" else float(cfg.M)
    # smooth zero-mean input: the nested route then converges quickly,
    # the identity itself does not depend on the input
    Q = cfg.Q
    f = ScalarField(lambda x1, x2: np.cos(2 * np.pi * (x1 - Q.lo1) / Q.width)
                    * (1.0 + (x2 - Q.lo2) / Q.height), Q, 2.0, "cos-ramp")
    step = ap.factor_step("A", f, s, M, fit_residual=False)
    t = Table(["check", "x1", "x2", "value", "threshold"])
    wbox = s.W_bounding_box()
    cand = wbox.sample(rng, 400)
    cand = cand[step.weight(cand[:, 0], cand[:, 1]) > 0][:n]
    pts = np.concatenate([cfg.Q.sample(rng, n), cand, s.P.sample(rng, n)])
    thr = 1e-7
    for p in pts:
        v = ap.verify_identity(step, [p], tol=1e-8)
        t.add(["identity", p[0], p[1], v, thr], v <= thr)
    funcs = {"one": lambda x1, x2: np.ones(np.shape(x1)),
             "x1": lambda x1, x2: x1, "x2sq": lambda x1, x2: x2 ** 2}
    for name, fn in funcs.items():
        f = ScalarField(fn, cfg.Q, None, name)
        for z in s.P.sample(rng, n):
            d = ap.i_z(f, s, z, "density").value
            r = ap.i_z(f, s, z, "direct").value
            rel = abs(d - r) / max(abs(r), 1e-300)
            t.add([f"iz-{name}", z[0], z[1], rel, 1e-6], rel <= 1e-6)
    return t


def awf_decay(cfg: Config) -> Table:
    """Residual size of step A as the separation grows."""
    A_list = cfg.A_or([8, 16, 32, 64])
    dual = ap.dualize(cfg.b_field("x1"), cfg.Q, tol=1e-10)
    t = Table(["A", "M", "sup_residual", "eps_effective", "zero_mean_residual"])
    rows = []
    for A in A_list:
        s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
        M = ap.auto_M(s, seed=cfg.seed) if cfg.M == "auto" else float(cfg.M)
        st = ap.factor_step("A", dual.f, s, M, rule=dual.rule,
                            fit_residual=cfg.zero_mean)
        d = st.diagnostics
        zm = d.zero_mean_residual / s.P.area if cfg.zero_mean else float("nan")
        rows.append([A, M, d.sup_residual, d.eps_effective, zm])
    eps = [r[3] for r in rows]
    ok = _nonincreasing(eps) and eps[-1] <= 0.5 * eps[0]
    for r in rows:
        zm_ok = not cfg.zero_mean or r[4] <= 1e-6
        t.add(r, ok and zm_ok)
    t.plot = {"x": "A", "y": ["eps_effective"], "logx": True, "logy": True,
              "base": 2, "title": "step residual / sup f"}
    return t


def chain(cfg: Config) -> Table:
    """Both steps and the closing identity."""
    t = Table(["A", "M", "lhs", "T1", "T2", "T3", "T4", "R", "identity_rel",
               "eps_sq", "zero_mean_P", "zero_mean_Q"])
    for A in cfg.A_or([32]):
        rep = ap.full_chain(cfg.b_field("sin_cos"), cfg.Q, A, cfg.N, cfg.M,
                            curve=cfg.curve)
        s = build_setup(cfg.curve, cfg.Q, A, cfg.N)
        rel = rep.identity_residual / rep.lhs
        ok = (rel <= 1e-4 and abs(rep.residual_pairing) <= rep.eps_sq * rep.lhs * 1.001
              and rep.zero_mean_P <= 1e-6 * s.P.area
              and rep.zero_mean_Q <= 1e-6 * s.Q.area)
        t.add([A, rep.M, rep.lhs, *rep.pairings, rep.residual_pairing, rel,
               rep.eps_sq, rep.zero_mean_P, rep.zero_mean_Q], ok)
    return t


def model_chain(cfg: Config) -> Table:
    """Rectangle loop: closing identity and residual decay."""
    A_list = cfg.A_or([8, 16, 32, 64])
    reps = [ad.four_step_chain(cfg.b_field("x1x2"), cfg.Q, A, seed=cfg.seed)
            for A in A_list]
    r2 = [r.ratio_res2 for r in reps]
    r0 = [r.ratio_res0 for r in reps]
    s2 = _slope(A_list, r2) if len(A_list) > 1 else float("nan")
    s0 = _slope(A_list, r0) if len(A_list) > 1 else float("nan")
    slopes_ok = -1.4 <= s2 <= -0.6 and -2.6 <= s0 <= -1.4
    t = Table(["A", "lhs", "identity_rel", "ratio_res2", "ratio_res0",
               "slope_res2", "slope_res0"])
    for A, r in zip(A_list, reps):
        rel = r.identity_residual / r.lhs
        t.add([A, r.lhs, rel, r.ratio_res2, r.ratio_res0, s2, s0],
              rel <= 1e-4 and slopes_ok)
    t.plot = {"x": "A", "y": ["ratio_res2", "ratio_res0"], "logx": True,
              "logy": True, "base": 2, "title": "loop residual / sup f"}
    return t


# ---------------------------------------------------------------------------
# fractional integrals and norms


def frac_scaling(cfg: Config) -> Table:
    rng = np.random.default_rng(cfg.seed)
    f = make_indicator(cfg.Q)
    pad = Box(cfg.Q.lo1 - 0.5 * cfg.Q.width, cfg.Q.hi1 + 0.5 * cfg.Q.width,
              cfg.Q.lo2 + 0.2 * cfg.Q.height, cfg.Q.hi2 + cfg.Q.height)
    x = pad.sample(rng, cfg.samples_or(10))
    t = Table(["lambda", "alpha", "x1", "x2", "lhs", "rhs", "rel_error"])
    for lam in cfg.lam or [2.0, 0.5]:
        for alpha in cfg.alpha or [0.1, 0.2]:
            chk = fractional_scaling(cfg.curve, alpha, f, lam, x)
            for p, a, b in zip(x, chk.lhs, chk.rhs):
                rel = abs(a - b) / max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else 0.0
                t.add([lam, alpha, p[0], p[1], a, b, rel], rel <= 1e-6)
    return t


def holder_equiv(cfg: Config) -> Table:
    """Two Hoelder estimates, plus constant and homogeneity sanity checks."""
    b = cfg.b_field("sin_sin")
    alpha = (cfg.alpha or [0.25])[0]
    fam = RectangleFamily(beta=cfg.curve.beta)
    little = RectangleFamily(beta=None, scales=(-2, -1, 0, 1))
    two_b = ScalarField(lambda x1, x2: 2.0 * b(x1, x2), None, None, "2b")
    const = ScalarField(lambda x1, x2: np.full(np.shape(x1), 3.7), None, None, "c")
    estimators = {
        "holder_beta": lambda g: holder_norm_beta(g, alpha, fam).value,
        "holder_curve": lambda g: holder_norm_curve(cfg.curve, g, alpha).value,
        "bmo_beta": lambda g: bmo_norm(g, fam).value,
        "little_bmo": lambda g: bmo_norm(g, little).value,
        "mean_oscillation": lambda g: mean_oscillation(g, cfg.Q, method="tensor"),
        "lr_distance": lambda g: lr_distance(g, 2.0, cfg.Q),
    }
    t = Table(["estimator", "value", "value_doubled", "value_constant"])
    vals = {}
    for name, est in estimators.items():
        v, v2, vc = est(b), est(two_b), est(const)
        vals[name] = v
        ok = vc == 0.0 and abs(v2 - 2.0 * v) <= 1e-12 * abs(v)
        t.add([name, v, v2, vc], ok)
    ratio = vals["holder_curve"] / vals["holder_beta"]
    t.add(["ratio_curve_beta", ratio, float("nan"), float("nan")], 0.1 <= ratio <= 10)
    return t


def slice_bmo_exp(cfg: Config) -> Table:
    """Slice oscillation for functions of one variable."""
    eps = 0.05
    frozen = np.linspace(-2.0, 2.0, 9)
    cases = [
        ("f(x1)", lambda x1, x2: np.sin(3 * x1), 2, "zero"),
        ("f(x2)", lambda x1, x2: np.sin(3 * x2), 1, "zero"),
        ("sign(x2-0.3)", lambda x1, x2: np.sign(x2 - 0.3), 2, "one"),
        ("sign(x2-0.3)", lambda x1, x2: np.sign(x2 - 0.3), 1, "zero"),
        ("x1*x2", lambda x1, x2: x1 * x2, 1, "positive"),
    ]
    t = Table(["function", "direction", "value", "expected"])
    for name, fn, direction, expect in cases:
        v = slice_bmo(from_function(fn, label=name), direction, frozen).value
        ok = {"zero": v == 0.0, "one": v >= 1.0 - eps, "positive": v > 0}[expect]
        t.add([name, direction, v, expect], ok)
    return t


@dataclass(frozen=True)
class Experiment:
    name: str
    func: Callable[[Config], Table]
    about: str


REGISTRY: tuple[Experiment, ...] = (
    Experiment("geom-limit", geom_limit,
               "preimage length |I(x,+,W)|/l tends to 1/2 (separation limit)"),
    Experiment("ratio-limit", ratio_limit,
               "ratio of |I(z+gamma(t),-,P)| along a trace stays below (A+N)/A"),
    Experiment("gw-props", gw_props,
               "weight g_W: equals 1 on W^c, exact 2^M scaling, trace ratio"),
    Experiment("awf-verify", awf_verify,
               "pointwise step identity and the two routes for I_z"),
    Experiment("awf-decay", awf_decay,
               "step residual sup norm against separation A"),
    Experiment("chain", chain,
               "two steps, pairings with b and the closing identity"),
    Experiment("model-chain", model_chain,
               "rectangle loop: four steps, identity and residual decay"),
    Experiment("crux", crux,
               "coverage of the source box by the rectangle and parabola maps"),
    Experiment("frac-scaling", frac_scaling,
               "dilation identity of the fractional integral along the curve"),
    Experiment("holder-equiv", holder_equiv,
               "curve and rectangle Hoelder estimates agree up to constants"),
    Experiment("slice-bmo", slice_bmo_exp,
               "one-dimensional oscillation along coordinate slices"),
)


def get(name: str) -> Experiment:
    for e in REGISTRY:
        if e.name == name:
            return e
    raise KeyError(name)

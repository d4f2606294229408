"""Monomial curves in the plane.

A monomial curve is ``gamma(t) = (eps_i |t|^beta_i)_i`` for ``t > 0`` and
``(delta_i |t|^beta_i)_i`` for ``t <= 0``.  The parabola ``(t, t^2)`` has
``beta = (1, 2)``, ``eps = (+1, +1)``, ``delta = (-1, +1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FlipClass:
    flip: tuple[int, ...]    # 0-based indices where eps != delta
    fixed: tuple[int, ...]

    @property
    def in_class(self) -> bool:
        """Exactly one flipped coordinate."""
        return len(self.flip) == 1


@dataclass(frozen=True)
class MonomialCurve:
    beta: tuple[float, float] = (1.0, 2.0)
    eps: tuple[int, int] = (1, 1)
    delta: tuple[int, int] = (-1, 1)

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        eps = tuple(int(e) for e in self.eps)
        delta = tuple(int(d) for d in self.delta)
        if len(beta) != 2 or len(eps) != 2 or len(delta) != 2:
            raise ValueError("curves are planar: beta, eps, delta need length 2")
        if not all(b > 0 for b in beta):
            raise ValueError(f"exponents must be positive, got {beta}")
        if not all(s in (-1, 1) for s in eps + delta):
            raise ValueError("signs must be +1 or -1")
        if eps == delta:
            raise ValueError("some coordinate must change sign between branches")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "delta", delta)

    @classmethod
    def parabola(cls) -> "MonomialCurve":
        return cls((1.0, 2.0), (1, 1), (-1, 1))

    @classmethod
    def from_config(cls, spec: dict) -> "MonomialCurve":
        return cls(tuple(spec["beta"]), tuple(spec["eps"]), tuple(spec["delta"]))

    def to_config(self) -> dict:
        return {"beta": list(self.beta), "eps": list(self.eps),
                "delta": list(self.delta)}

    @property
    def homogeneity(self) -> float:
        """``|beta| = beta_1 + beta_2``."""
        return self.beta[0] + self.beta[1]

    @property
    def is_parabola(self) -> bool:
        return self == MonomialCurve.parabola()

    def sign(self, i: int, t):
        """Sign multiplying ``|t|^beta_i`` on the branch of ``t``."""
        return np.where(np.asarray(t) > 0, self.eps[i], self.delta[i])

    def component(self, i: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        b = self.beta[i]
        if b == 1.0:
            mag = np.abs(t)
        elif b == 2.0:
            mag = t * t
        else:
            mag = np.abs(t) ** b
        return self.sign(i, t) * mag

    def __call__(self, t):
        """``gamma(t)`` as a pair of arrays."""
        return self.component(0, t), self.component(1, t)

    def eval(self, t) -> np.ndarray:
        """``gamma(t)`` stacked on the last axis."""
        g1, g2 = self(t)
        return np.stack([g1, g2], axis=-1)

    def derivative(self, t) -> np.ndarray:
        """Derivative of the active branch (``t <= 0`` uses ``delta``)."""
        t = np.asarray(t, dtype=float)
        if min(self.beta) < 1 and np.any(t == 0):
            raise ValueError("derivative undefined at t=0 when some beta_i < 1")
        direction = np.where(t > 0, 1.0, -1.0)
        out = []
        for i in range(2):
            b = self.beta[i]
            mag = np.ones_like(t) if b == 1 else b * np.abs(t) ** (b - 1)
            out.append(self.sign(i, t) * direction * mag)
        return np.stack(out, axis=-1)

    def flip_class(self) -> FlipClass:
        flip = tuple(i for i in range(2) if self.eps[i] != self.delta[i])
        fixed = tuple(i for i in range(2) if self.eps[i] == self.delta[i])
        return FlipClass(flip, fixed)

    def dilate(self, lam: float, point):
        """Anisotropic dilation ``(lam^beta_1 x_1, lam^beta_2 x_2)``."""
        return (lam ** self.beta[0] * np.asarray(point[0]),
                lam ** self.beta[1] * np.asarray(point[1]))

    def swapped(self) -> "MonomialCurve":
        """The same curve with coordinates exchanged."""
        return MonomialCurve(self.beta[::-1], self.eps[::-1], self.delta[::-1])


@dataclass(frozen=True)
class LineCurve:
    """``gamma(t) = sigma * t`` for a unit vector ``sigma``."""

    sigma: tuple[float, float]

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        n = float(np.hypot(*s))
        if not n > 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "sigma", (float(s[0] / n), float(s[1] / n)))

    def component(self, i: int, t):
        return self.sigma[i] * np.asarray(t, dtype=float)

    def __call__(self, t):
        return self.component(0, t), self.component(1, t)

    def eval(self, t):
        g1, g2 = self(t)
        return np.stack([g1, g2], axis=-1)

    def reversed(self) -> "LineCurve":
        return LineCurve((-self.sigma[0], -self.sigma[1]))

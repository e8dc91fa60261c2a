"""Separable sparsity penalties and their closed-form proximal maps."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

__all__ = ["Regularizer", "eval_r", "prox", "prox_oracle_1d",
           "half_threshold_constant", "KINDS"]

KINDS = ("l0", "l1", "lhalf")


@dataclass(frozen=True)
class Regularizer:
    """``weight * sum_i penalty(x_i)`` for ``kind`` in ``KINDS``."""

    kind: str
    weight: float

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.weight > 0:
            raise ValueError("regularizer weight must be positive")

    def penalty(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "l0":
            return (x != 0).astype(float)
        if self.kind == "l1":
            return np.abs(x)
        return np.sqrt(np.abs(x))

    def value(self, x) -> float:
        return float(self.weight * np.sum(self.penalty(x)))

    def prox(self, z, eta):
        """Exact minimizer of ``r(x) + ||x - z||^2 / (2 eta)``, per component."""
        if not eta > 0:
            raise ValueError("prox step must be positive")
        z = np.asarray(z, dtype=float)
        tau = eta * self.weight
        if self.kind == "l0":
            # ties z^2 == 2 tau go to zero
            return np.where(z * z > 2.0 * tau, z, 0.0)
        if self.kind == "l1":
            return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
        return _half_threshold(z, tau)

    def zero_coordinate_residual(self, grad):
        """Smallest ``|g_i + w|`` over ``w`` in the subdifferential of the
        penalty at ``x_i = 0``.

        The l0 and l1/2 penalties have the whole real line as limiting
        subdifferential at zero; for l1 it is ``[-weight, weight]``.
        """
        grad = np.asarray(grad, dtype=float)
        if self.kind == "l1":
            return np.sign(grad) * np.maximum(np.abs(grad) - self.weight, 0.0)
        return np.zeros_like(grad)

    def to_json(self) -> dict:
        return {"kind": self.kind, "lambda": float(self.weight)}

    @classmethod
    def from_json(cls, data: dict) -> "Regularizer":
        return cls(data["kind"], float(data["lambda"]))


def eval_r(reg: Regularizer, x) -> float:
    return reg.value(x)


def prox(reg: Regularizer, z, eta):
    return reg.prox(z, eta)


def _half_candidate(z, tau):
    """Nonzero stationary point of ``tau*sqrt|t| + (t - z)^2 / 2``.

    With ``t = u^2`` the stationarity condition is the depressed cubic
    ``u^3 - |z| u + tau/2 = 0``; its largest root in trigonometric form
    gives the expression below. Only valid where the arccos argument is
    at most one.
    """
    az = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        arg = (tau / 4.0) * (az / 3.0) ** (-1.5)
        phi = np.arccos(np.clip(arg, -1.0, 1.0))
        return (2.0 * z / 3.0) * (1.0 + np.cos(2.0 * np.pi / 3.0 - 2.0 * phi / 3.0))


@lru_cache(maxsize=None)
def half_threshold_constant() -> float:
    """``c`` such that the l1/2 prox is zero iff ``|z| <= c * tau**(2/3)``.

    Found by bisection at ``tau = 1`` on the objective gap between the
    nonzero candidate and the origin; the penalty's scaling makes the
    threshold exactly proportional to ``tau**(2/3)``.
    """
    def gap(z):
        t = float(_half_candidate(np.float64(z), 1.0))
        return (np.sqrt(abs(t)) + 0.5 * (t - z) ** 2) - 0.5 * z * z

    # the candidate exists for |z| >= 3 * 4**(-2/3)
    lo = 3.0 * 4.0 ** (-2.0 / 3.0) + 1e-12
    return brentq(gap, lo, 4.0, xtol=1e-14, rtol=1e-15)


def _half_threshold(z, tau):
    cand = _half_candidate(z, tau)
    thresh = half_threshold_constant() * tau ** (2.0 / 3.0)
    return np.where(np.abs(z) > thresh, cand, 0.0)


def prox_oracle_1d(reg: Regularizer, z: float, eta: float, grid_halfwidth: float | None = None,
                   n_grid: int = 200_001) -> float:
    """Brute-force scalar prox: dense grid scan, local refinement, and an
    explicit comparison against ``t = 0``.

    Independent of the closed forms in :meth:`Regularizer.prox`; used as
    a test oracle.
    """
    z = float(z)
    if grid_halfwidth is None:
        grid_halfwidth = 2.0 * abs(z)
    if z == 0.0:
        return 0.0
    w = reg.weight

    def objective(t):
        return w * reg.penalty(t) + (t - z) ** 2 / (2.0 * eta)

    grid = np.linspace(-grid_halfwidth, grid_halfwidth, n_grid)
    vals = objective(grid)
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    best_t, best_v = grid[i], vals[i]
    # refine on the side of the bracket that excludes the kink at zero
    for a, b in ((lo, grid[i]), (grid[i], hi)):
        if b - a <= 0:
            continue
        if a < 0.0 < b:
            a, b = (a, 0.0) if z < 0 else (0.0, b)
        res = minimize_scalar(lambda t: float(objective(np.float64(t))),
                              bounds=(a, b), method="bounded",
                              options={"xatol": 1e-13 * max(1.0, abs(z)) + 1e-15})
        if res.fun < best_v:
            best_t, best_v = float(res.x), float(res.fun)
    zero_v = float(objective(np.float64(0.0)))
    if zero_v <= best_v:
        return 0.0
    return float(best_t)

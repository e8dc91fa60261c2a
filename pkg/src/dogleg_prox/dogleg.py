"""Dogleg path between the gradient step and the Newton step, and the
surrogate models built along it.

All quantities are expressed in the original coordinates; ``y`` is the
base (extrapolated) point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quad_model import QuadraticObjective

__all__ = [
    "DoglegGeometry",
    "NonDescentError",
    "StationaryPointError",
    "build_geometry",
    "path_point",
    "effective_gradient",
    "step_size",
    "surrogate_value",
    "scaled_surrogate_value",
    "descent_inner_product",
]


class NonDescentError(ArithmeticError):
    """``<g, d(mu)> >= 0``: the gradient step size is too large."""


class StationaryPointError(ArithmeticError):
    """The gradient vanishes at the base point, so the path is degenerate."""


@dataclass(frozen=True, eq=False)
class DoglegGeometry:
    objective: QuadraticObjective
    y: np.ndarray
    g: np.ndarray
    d_eta: np.ndarray
    d_newton: np.ndarray
    eta: float
    s_at_y: float
    stationary: bool

    def path_point(self, mu):
        return path_point(self, mu)

    def effective_gradient(self, mu):
        return effective_gradient(self, mu)

    def step_size(self, mu):
        return step_size(self, mu)


def build_geometry(obj: QuadraticObjective, y, eta, *, g=None, s_at_y=None) -> DoglegGeometry:
    """Gradient and Newton steps at ``y``; one Hessian solve.

    ``g`` and ``s_at_y`` may be passed in when the caller already has them.
    """
    if not 0 < eta <= 1.0 / obj.lipschitz * (1 + 1e-12):
        raise ValueError(f"eta must lie in (0, 1/L_s] = (0, {1.0 / obj.lipschitz:.6g}]")
    y = np.asarray(y, dtype=float)
    g = obj.grad(y) if g is None else g
    s_at_y = obj.value(y) if s_at_y is None else s_at_y
    stationary = not np.any(g)
    d_newton = -obj.hess_solve(g) if not stationary else np.zeros_like(g)
    return DoglegGeometry(obj, y, g, -eta * g, d_newton, float(eta), float(s_at_y), stationary)


def _check_mu(mu):
    if not 0 < mu <= 2:
        raise ValueError(f"mu must lie in (0, 2], got {mu}")


def path_point(geom: DoglegGeometry, mu) -> np.ndarray:
    _check_mu(mu)
    if mu <= 1:
        return geom.d_eta
    return geom.d_eta + (mu - 1.0) * (geom.d_newton - geom.d_eta)


def _projection(geom, mu):
    """``(d, <g, d>, ||d||^2)`` at ``mu``."""
    if geom.stationary:
        raise StationaryPointError("gradient vanishes at the base point")
    d = path_point(geom, mu)
    return d, float(geom.g @ d), float(d @ d)


def effective_gradient(geom: DoglegGeometry, mu) -> np.ndarray:
    """Projection of ``g`` onto the path direction ``d(mu)``."""
    if mu <= 1:
        _check_mu(mu)
        if geom.stationary:
            raise StationaryPointError("gradient vanishes at the base point")
        return geom.g
    d, gd, dd = _projection(geom, mu)
    if dd == 0.0:
        raise StationaryPointError("zero-length path point")
    return (gd / dd) * d


def step_size(geom: DoglegGeometry, mu) -> float:
    """``eta_mu = -||d(mu)||^2 / <g, d(mu)>``; equals ``eta`` for ``mu <= 1``."""
    if mu <= 1:
        _check_mu(mu)
        if geom.stationary:
            raise StationaryPointError("gradient vanishes at the base point")
        return geom.eta
    _, gd, dd = _projection(geom, mu)
    if gd >= 0:
        raise NonDescentError(
            f"<g, d(mu)> = {gd:.3e} is not negative; shrink eta below 1/lambda_max")
    return -dd / gd


def surrogate_value(geom: DoglegGeometry, mu, x) -> float:
    """``s(y) + <g_mu, x - y> + ||x - y||^2 / (2 eta_mu)``."""
    return scaled_surrogate_value(geom, mu, 1.0, x)


def scaled_surrogate_value(geom: DoglegGeometry, mu, gamma, x) -> float:
    """The surrogate with the quadratic weight divided by ``gamma``."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1)")
    eta_mu = step_size(geom, mu)
    g_mu = effective_gradient(geom, mu)
    diff = np.asarray(x, dtype=float) - geom.y
    return float(geom.s_at_y + g_mu @ diff + (diff @ diff) / (2.0 * gamma * eta_mu))


def descent_inner_product(geom: DoglegGeometry, mu) -> float:
    """``<d, M d + g>``: slope of ``s`` at ``y + d(mu)`` along ``d(mu)``."""
    if geom.stationary:
        return 0.0
    d = path_point(geom, mu)
    return float(d @ geom.objective.hess_apply(d) + geom.g @ d)

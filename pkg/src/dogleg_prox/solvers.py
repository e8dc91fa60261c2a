"""Proximal dogleg solvers with extrapolation, plus PG and monotone APG.

Every solver takes a :class:`~dogleg_prox.quad_model.QuadraticObjective`,
a :class:`~dogleg_prox.prox_ops.Regularizer`, a :class:`SolverConfig` and
a starting point, and returns a :class:`SolveResult` holding one
:class:`IterationRecord` per iterate (``k = 0`` included).
"""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dogleg import (DoglegGeometry, NonDescentError, build_geometry,
                     effective_gradient, path_point, step_size)
from .prox_ops import Regularizer
from .quad_model import QuadraticObjective

__all__ = [
    "SOLVERS",
    "ConfigError",
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "MuStep",
    "pdome_zeta_bound",
    "backtrack_mu",
    "safeguard_step",
    "subdifferential_residual",
    "subdiff_threshold",
    "stopping_check",
    "lyapunov_value",
    "solve",
    "solve_pg",
    "solve_mapg",
    "solve_pdom",
    "solve_spdome",
    "solve_pdome",
    "TRACE_HEADER",
]

ETA_SCALE = 0.999
TRACE_HEADER = ["k", "Q", "H_delta", "subdiff_norm", "nre", "mu", "eta_mu",
                "step_kind", "wall_time_s"]


class ConfigError(ValueError):
    pass


def pdome_zeta_bound(gamma: float) -> float:
    """Upper end of the admissible extrapolation interval ``(0, (1-g)/(2-g))``."""
    return (1.0 - gamma) / (2.0 - gamma)


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters shared by all solvers.

    ``eta=None`` means ``0.999 / L_s``. ``stop_on_rel_change=False`` keeps
    iterating past the relative-change rule; the iteration at which that
    rule first held is still reported.
    """

    eta: Optional[float] = None
    gamma: float = 0.98
    zeta: float = 0.5
    eps_abs: float = 1e-12
    eps_rel: float = 1e-12
    rel_change_tol: float = 1e-8
    stop_on_rel_change: bool = True
    max_iter: int = 2000
    mu_search_depth: int = 30

    @classmethod
    def for_solver(cls, name: str, **overrides) -> "SolverConfig":
        """Defaults for ``name`` (gamma 0.98 / 0.94, per-method zeta) plus overrides."""
        name = name.lower()
        if name not in SOLVERS:
            raise ConfigError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
        overrides = {k: v for k, v in overrides.items() if v is not None}
        base = {}
        if name == "pdome":
            gamma = overrides.get("gamma", 0.94)
            base = {"gamma": gamma, "zeta": 0.9 * pdome_zeta_bound(gamma)}
        elif name in ("pdom", "pg", "mapg"):
            base = {"gamma": 0.98, "zeta": 0.0}
        base.update(overrides)
        if name in ("pdom", "pg", "mapg"):
            base["zeta"] = 0.0
        cfg = cls(**base)
        cfg.validate(name)
        return cfg

    def validate(self, solver: str, lipschitz: float | None = None) -> None:
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if solver == "pdome":
            bound = pdome_zeta_bound(self.gamma)
            if not 0 < self.zeta < bound:
                raise ConfigError(
                    f"pdome needs zeta in (0, {bound:.4g}) for gamma={self.gamma:g}, "
                    f"got zeta={self.zeta:g}")
        elif solver == "spdome":
            if not 0 <= self.zeta < 1:
                raise ConfigError(f"spdome needs zeta in [0, 1), got {self.zeta:g}")
        if self.eta is not None:
            if not self.eta > 0:
                raise ConfigError("eta must be positive")
            if lipschitz is not None and not self.eta * lipschitz < 1:
                raise ConfigError(f"eta must lie in (0, 1/L_s) = (0, {1 / lipschitz:.6g})")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.mu_search_depth < 1:
            raise ConfigError("mu_search_depth must be at least 1")

    def step(self, lipschitz: float) -> float:
        return ETA_SCALE / lipschitz if self.eta is None else self.eta


@dataclass
class IterationRecord:
    k: int
    Q: float
    H_delta: float
    subdiff_norm: float
    nre: Optional[float]
    mu: Optional[float]
    eta_mu: Optional[float]
    step_kind: str
    wall_time: float

    def csv_row(self):
        return [str(self.k)] + [_fmt(v) for v in (
            self.Q, self.H_delta, self.subdiff_norm, self.nre, self.mu, self.eta_mu)] + [
            self.step_kind, _fmt(self.wall_time)]


def _fmt(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


@dataclass
class SolveResult:
    solver: str
    x_final: np.ndarray
    iterations: int
    records: list
    termination_reason: str
    rel_change_iteration: Optional[int] = None
    wall_time: float = 0.0

    @property
    def final_record(self) -> IterationRecord:
        return self.records[-1]

    def to_json(self) -> dict:
        last = self.final_record
        return {
            "solver": self.solver,
            "iterations": self.iterations,
            "termination_reason": self.termination_reason,
            "rel_change_iteration": self.rel_change_iteration,
            "Q": last.Q,
            "subdiff_norm": last.subdiff_norm,
            "nre": last.nre,
            "wall_time_s": self.wall_time,
            "x_final": [float(v) for v in self.x_final],
        }

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for rec in self.records:
                writer.writerow(rec.csv_row())


# ---------------------------------------------------------------------------
# building blocks

@dataclass(frozen=True)
class MuStep:
    """Accepted dogleg candidate."""

    mu: float
    x: np.ndarray
    eta_mu: float
    g_mu: np.ndarray
    s_increment: float


def backtrack_mu(geom: DoglegGeometry, reg: Regularizer, gamma: float,
                 depth: int = 30, x_curr=None) -> Optional[MuStep]:
    """Largest ``mu = 1 + 2**-i`` whose prox candidate is majorized.

    The candidate is ``prox_{gamma eta_mu r}(y + gamma d(mu))``; it is
    accepted once ``m_mu(x; y) >= s(x)``. Passing ``x_curr`` adds the
    extrapolation-compatibility test ``<g_mu - g, x_curr - y> <= 0``.
    Returns ``None`` if no ``mu`` passes within ``depth`` trials.
    """
    obj = geom.objective
    y, g = geom.y, geom.g
    lag = None if x_curr is None else x_curr - y
    for i in range(depth):
        mu = 1.0 + 0.5 ** i
        try:
            eta_mu = step_size(geom, mu)
        except NonDescentError:
            continue
        g_mu = effective_gradient(geom, mu)
        if lag is not None and (g_mu - g) @ lag > 0:
            continue
        x = reg.prox(y + gamma * path_point(geom, mu), gamma * eta_mu)
        step = x - y
        lin_s = float(g @ step)
        curv = obj.curvature(step)
        lin_m = float(g_mu @ step)
        quad_m = float(step @ step) / (2.0 * eta_mu)
        # m_mu(x) - s(x), both taken relative to s(y)
        gap = (lin_m + quad_m) - (lin_s + curv)
        slack = 1e-14 * (abs(lin_s) + abs(lin_m) + quad_m + abs(curv))
        if gap >= -slack:
            return MuStep(mu, x, eta_mu, g_mu, lin_s + curv)
    return None


def safeguard_step(obj: QuadraticObjective, reg: Regularizer, eta: float, y, g=None):
    """Plain proximal-gradient step from ``y``."""
    g = obj.grad(y) if g is None else g
    return reg.prox(y - eta * g, eta)


def subdifferential_residual(reg: Regularizer, grad_next, g_eff, step, x_next, x_curr,
                             x_prev=None, zeta=0.0):
    """Element of the subdifferential of ``Q`` at ``x_next`` from the prox
    optimality condition.

    ``(grad_next - g_eff) - (x_next - x_curr)/step + zeta/step (x_curr - x_prev)``
    with ``step = gamma * eta_mu`` for a dogleg step (``g_eff = g_mu``) and
    ``step = eta`` for a plain prox-gradient step (``g_eff = grad s(y)``).
    Components where ``x_next`` is zero are replaced by the smallest member
    of the penalty's subdifferential there.
    """
    u = (grad_next - g_eff) - (x_next - x_curr) / step
    if zeta:
        u = u + (zeta / step) * (x_curr - x_prev)
    off = x_next == 0
    if np.any(off):
        u[off] = reg.zero_coordinate_residual(grad_next[off])
    return u


def subdiff_threshold(config: SolverConfig, grad_next, g_eff, step, x_next, x_curr,
                      x_prev, zeta) -> float:
    n = x_next.size
    scale = max(np.linalg.norm(grad_next), np.linalg.norm(g_eff),
                np.linalg.norm(x_next) / step,
                (zeta + 1.0) * np.linalg.norm(x_curr) / step,
                zeta * np.linalg.norm(x_prev) / step)
    return math.sqrt(n) * config.eps_abs + config.eps_rel * scale


def relative_change(x_next, x_curr) -> float:
    return float(np.linalg.norm(x_next - x_curr) / (1.0 + np.linalg.norm(x_next)))


def stopping_check(config: SolverConfig, residual_norm: float, threshold: float,
                   x_next, x_curr, iterations: int, x_prev=None) -> Optional[str]:
    """Termination reason after ``iterations`` steps, or ``None`` to go on."""
    if residual_norm <= threshold:
        return "subdiff_tol"
    if x_prev is not None and np.array_equal(x_next, x_curr) and np.array_equal(x_curr, x_prev):
        return "stationary"
    if config.stop_on_rel_change and relative_change(x_next, x_curr) < config.rel_change_tol:
        return "rel_change"
    if iterations >= config.max_iter:
        return "max_iter"
    return None


def lyapunov_value(Q_value: float, zeta: float, gamma: float, eta_step: float,
                   x_curr, x_prev) -> float:
    """``Q + zeta / (2 gamma eta_step) ||x_curr - x_prev||^2``."""
    if not zeta:
        return float(Q_value)
    diff = x_curr - x_prev
    return float(Q_value + zeta / (2.0 * gamma * eta_step) * (diff @ diff))


# ---------------------------------------------------------------------------
# shared bookkeeping

class _Trace:
    def __init__(self, name, obj, reg, config, x_star, x0):
        self.name = name
        self.config = config
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        self._xs_norm = None if x_star is None else float(np.linalg.norm(self.x_star))
        self.records = []
        self.rel_change_iteration = None
        self.t0 = time.perf_counter()
        q0 = obj.value(x0) + reg.value(x0)
        self.add(0, q0, q0, math.nan, x0, None, None, "start")

    def nre(self, x):
        if self.x_star is None:
            return None
        return float(np.linalg.norm(x - self.x_star) / self._xs_norm)

    def add(self, k, Q, H, subdiff, x, mu, eta_mu, kind):
        self.records.append(IterationRecord(
            k, float(Q), float(H), float(subdiff), self.nre(x), mu, eta_mu, kind,
            time.perf_counter() - self.t0))

    def note_rel_change(self, k, x_next, x_curr):
        if self.rel_change_iteration is None and \
                relative_change(x_next, x_curr) < self.config.rel_change_tol:
            self.rel_change_iteration = k

    def result(self, x, k, reason):
        return SolveResult(self.name, x, k, self.records, reason,
                           self.rel_change_iteration, time.perf_counter() - self.t0)


def _start(x0, obj):
    x0 = np.array(x0, dtype=float)
    if x0.shape != (obj.n,):
        raise ValueError(f"x0 must have length {obj.n}")
    return x0


# ---------------------------------------------------------------------------
# solvers

def solve_pg(obj, reg, config=None, x0=None, *, x_star=None) -> SolveResult:
    """Proximal gradient: ``x+ = prox_{eta r}(x - eta grad s(x))``."""
    config = config or SolverConfig.for_solver("pg")
    config.validate("pg", obj.lipschitz)
    eta = config.step(obj.lipschitz)
    x = _start(np.zeros(obj.n) if x0 is None else x0, obj)
    trace = _Trace("pg", obj, reg, config, x_star, x)
    s_x = obj.value(x)
    g = obj.grad(x)
    for k in range(1, config.max_iter + 1):
        x_next = reg.prox(x - eta * g, eta)
        s_next = s_x + obj.value_increment(g, x_next - x)
        q_next = s_next + reg.value(x_next)
        g_next = obj.grad(x_next)
        u = subdifferential_residual(reg, g_next, g, eta, x_next, x)
        unorm = float(np.linalg.norm(u))
        thresh = subdiff_threshold(config, g_next, g, eta, x_next, x, x, 0.0)
        trace.add(k, q_next, q_next, unorm, x_next, None, eta, "proximal")
        trace.note_rel_change(k, x_next, x)
        reason = stopping_check(config, unorm, thresh, x_next, x, k, x_prev=x)
        x, g, s_x = x_next, g_next, s_next
        if reason:
            return trace.result(x, k, reason)
    raise AssertionError("unreachable")


def solve_mapg(obj, reg, config=None, x0=None, *, x_star=None) -> SolveResult:
    """Monotone accelerated proximal gradient.

    Each iteration takes a prox-gradient step from the Nesterov point and
    one from the current iterate, and keeps whichever has the smaller
    objective.
    """
    config = config or SolverConfig.for_solver("mapg")
    config.validate("mapg", obj.lipschitz)
    eta = config.step(obj.lipschitz)
    x = _start(np.zeros(obj.n) if x0 is None else x0, obj)
    trace = _Trace("mapg", obj, reg, config, x_star, x)
    x_prev, z = x.copy(), x.copy()
    t_prev, t = 0.0, 1.0
    for k in range(1, config.max_iter + 1):
        y = x + (t_prev / t) * (z - x) + ((t_prev - 1.0) / t) * (x - x_prev)
        gy = obj.grad(y)
        z = reg.prox(y - eta * gy, eta)
        qz = obj.value(y) + obj.value_increment(gy, z - y) + reg.value(z)
        gx = obj.grad(x)
        v = reg.prox(x - eta * gx, eta)
        qv = obj.value(x) + obj.value_increment(gx, v - x) + reg.value(v)
        t_prev, t = t, (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        if qz <= qv:
            x_next, q_next, g_eff, base, kind = z, qz, gy, y, "accelerated"
        else:
            x_next, q_next, g_eff, base, kind = v, qv, gx, x, "proximal"
        g_next = obj.grad(x_next)
        u = subdifferential_residual(reg, g_next, g_eff, eta, x_next, base)
        unorm = float(np.linalg.norm(u))
        thresh = subdiff_threshold(config, g_next, g_eff, eta, x_next, base, base, 0.0)
        trace.add(k, q_next, q_next, unorm, x_next, None, eta, kind)
        trace.note_rel_change(k, x_next, x)
        reason = stopping_check(config, unorm, thresh, x_next, x, k, x_prev=x_prev)
        x_prev, x = x, x_next
        if reason:
            return trace.result(x, k, reason)
    raise AssertionError("unreachable")


def _dogleg_loop(name, obj, reg, config, x0, x_star, pdome_check,
                 on_step: Callable | None = None) -> SolveResult:
    eta = config.step(obj.lipschitz)
    gamma, zeta = config.gamma, config.zeta
    x_curr = _start(np.zeros(obj.n) if x0 is None else x0, obj)
    x_prev = x_curr.copy()
    trace = _Trace(name, obj, reg, config, x_star, x_curr)
    for k in range(1, config.max_iter + 1):
        y = x_curr + zeta * (x_curr - x_prev) if zeta else x_curr.copy()
        g = obj.grad(y)
        s_y = obj.value(y)
        geom = build_geometry(obj, y, eta, g=g, s_at_y=s_y)
        cand = None
        if not geom.stationary:
            cand = backtrack_mu(geom, reg, gamma, config.mu_search_depth,
                                x_curr if pdome_check else None)
        v = safeguard_step(obj, reg, eta, y, g=g)
        q_v = s_y + obj.value_increment(g, v - y) + reg.value(v)
        q_cand = None if cand is None else s_y + cand.s_increment + reg.value(cand.x)
        if cand is not None and not q_cand > q_v:
            x_next, q_next, g_eff = cand.x, q_cand, cand.g_mu
            step, mu, eta_used, kind = gamma * cand.eta_mu, cand.mu, cand.eta_mu, "dogleg"
        else:
            x_next, q_next, g_eff = v, q_v, g
            step, mu, eta_used, kind = eta, None, eta, "safeguard"
        g_next = obj.grad(x_next)
        u = subdifferential_residual(reg, g_next, g_eff, step, x_next, x_curr, x_prev, zeta)
        unorm = float(np.linalg.norm(u))
        thresh = subdiff_threshold(config, g_next, g_eff, step, x_next, x_curr, x_prev, zeta)
        h_next = lyapunov_value(q_next, zeta, gamma, eta_used, x_next, x_curr)
        trace.add(k, q_next, h_next, unorm, x_next, mu, eta_used, kind)
        trace.note_rel_change(k, x_next, x_curr)
        if on_step is not None:
            on_step(k=k, geom=geom, candidate=cand, v=v, q_candidate=q_cand, q_v=q_v,
                    x_next=x_next, residual=u)
        reason = stopping_check(config, unorm, thresh, x_next, x_curr, k, x_prev=x_prev)
        x_prev, x_curr = x_curr, x_next
        if reason:
            return trace.result(x_curr, k, reason)
    raise AssertionError("unreachable")


def solve_spdome(obj, reg, config=None, x0=None, *, x_star=None, on_step=None) -> SolveResult:
    """Dogleg opportunistic majorization with extrapolation, simple line
    search. ``zeta = 0`` gives the non-extrapolated method."""
    config = config or SolverConfig.for_solver("spdome")
    config.validate("spdome", obj.lipschitz)
    name = "spdome" if config.zeta else "pdom"
    return _dogleg_loop(name, obj, reg, config, x0, x_star, False, on_step)


def solve_pdom(obj, reg, config=None, x0=None, *, x_star=None, on_step=None) -> SolveResult:
    config = config or SolverConfig.for_solver("pdom")
    config = dataclasses.replace(config, zeta=0.0)
    config.validate("spdome", obj.lipschitz)
    return _dogleg_loop("pdom", obj, reg, config, x0, x_star, False, on_step)


def solve_pdome(obj, reg, config=None, x0=None, *, x_star=None, on_step=None) -> SolveResult:
    """As :func:`solve_spdome`, with the extra line-search inequality and
    the tighter extrapolation range that make ``H_delta`` nonincreasing."""
    config = config or SolverConfig.for_solver("pdome")
    config.validate("pdome", obj.lipschitz)
    return _dogleg_loop("pdome", obj, reg, config, x0, x_star, True, on_step)


SOLVERS = {
    "pg": solve_pg,
    "mapg": solve_mapg,
    "pdom": solve_pdom,
    "spdome": solve_spdome,
    "pdome": solve_pdome,
}


def solve(name: str, obj, reg, config=None, x0=None, *, x_star=None) -> SolveResult:
    name = name.lower()
    if name not in SOLVERS:
        raise ConfigError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
    config = config or SolverConfig.for_solver(name)
    return SOLVERS[name](obj, reg, config, x0, x_star=x_star)

"""Synthetic sparse-recovery benchmarks: instance generators, multi-trial
tables, phase-transition grids and their on-disk artifacts.

Two problem families are provided:

``dct``
    ``min 1/2 ||y - A x||^2 + lambda ||x||_0`` with ``A`` a row-subsampled
    orthonormal DCT (``m = n/2`` rows), noiseless ``y = A x*`` and
    ``lambda = 0.1 ||A^T y||_inf``.
``gaussian-lhalf``
    ``min 1/2 ||A x - b||^2 + lambda ||x||_{1/2}^{1/2}`` with a Gaussian
    ``A`` (``m = n/5`` rows, entry variance ``1/m``), ``b = A x_orig + v``
    and noise variance ``1/m``; ``lambda = 0.03 ||A^T b||_inf``.

Benchmark sizes are given as the number of measurements ``m``, matching
the way result tables are usually laid out.
"""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .prox_ops import Regularizer
from .quad_model import (DctSensingSpec, QuadraticObjective, from_dct,
                         from_least_squares, from_matrix)
from .solvers import SOLVERS, TRACE_HEADER, ConfigError, SolverConfig, solve

__all__ = [
    "FAMILIES",
    "ProblemInstance",
    "TrialOutcome",
    "BenchResult",
    "PhaseResult",
    "gen_dct_recovery",
    "gen_gaussian_lhalf",
    "make_instance",
    "instance_from_json",
    "nre",
    "solver_configs",
    "run_trials",
    "phase_transition",
    "write_bench",
    "write_phase",
    "SUCCESS_NRE",
]

FAMILIES = ("dct", "gaussian-lhalf")
SUCCESS_NRE = 1e-4
DCT_IOTA = 1e-12
LAMBDA_FACTOR = 0.1
# lowest recovery error over {0.1, 0.03, 0.01} at the default noise level
GAUSSIAN_LAMBDA_FACTOR = 0.03
GAUSSIAN_SPARSITY = 5

TRIALS_HEADER = ["m", "n", "trial", "seed", "solver", "nre", "iterations",
                 "rel_change_iteration", "termination_reason", "Q", "subdiff_norm",
                 "error"]
PHASE_HEADER = ["sparsity", "solver", "success_rate"]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A solvable problem together with its ground truth and start point."""

    family: str
    objective: QuadraticObjective
    regularizer: Regularizer
    x_star: Optional[np.ndarray]
    x0: np.ndarray
    seed: Optional[int] = None
    operator: object = None
    measurements: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def m(self) -> Optional[int]:
        return None if self.measurements is None else len(self.measurements)

    def to_json(self) -> dict:
        """Serializable description; the inverse of :func:`instance_from_json`."""
        data = {"family": self.family, "n": self.n, "seed": self.seed,
                "regularizer": self.regularizer.to_json(),
                "iota": self.objective.epsilon_shift,
                "x0": self.x0.tolist()}
        if isinstance(self.operator, DctSensingSpec):
            data.update(kind="dct", kept_rows=list(self.operator.kept_rows),
                        b=self.measurements.tolist())
        elif self.operator is not None:
            data.update(kind="dense", A=np.asarray(self.operator).tolist(),
                        b=self.measurements.tolist())
        else:
            data.update(kind="quadratic", M=self.objective.hessian.todense().tolist(),
                        c=self.objective.linear.tolist(), constant=self.objective.constant,
                        iota=0.0)
        if self.x_star is not None:
            data["x_star"] = self.x_star.tolist()
        return data


def _offset_magnitudes(rng, k):
    return rng.choice([-1.0, 1.0], size=k) * (1.0 + np.abs(rng.standard_normal(k)))


def gen_dct_recovery(n: int, sparsity: int, seed: int, *, iota: float = DCT_IOTA,
                     magnitudes: str = "offset") -> ProblemInstance:
    """Noiseless l0 recovery from ``m = n/2`` random DCT coefficients.

    ``magnitudes="offset"`` draws nonzeros as ``+-(1 + |N(0,1)|)``;
    ``"normal"`` draws them standard normal, which leaves entries that sit
    below the hard threshold and cannot be recovered. The start point is
    standard normal scaled by ``||x*|| / sqrt(n)``.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be an even integer >= 2")
    m = n // 2
    if not 0 < sparsity <= n:
        raise ValueError("sparsity must lie in [1, n]")
    if sparsity > m:
        raise ValueError(f"sparsity {sparsity} exceeds the {m} measurements")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(n, size=m, replace=False))
    support = rng.choice(n, size=sparsity, replace=False)
    x_star = np.zeros(n)
    if magnitudes == "offset":
        x_star[support] = _offset_magnitudes(rng, sparsity)
    elif magnitudes == "normal":
        x_star[support] = rng.standard_normal(sparsity)
    else:
        raise ValueError("magnitudes must be 'offset' or 'normal'")
    x0 = rng.standard_normal(n) * (np.linalg.norm(x_star) / math.sqrt(n))
    spec = DctSensingSpec(n, tuple(rows.tolist()), iota)
    y = spec.forward(x_star)
    obj = from_dct(spec, y)
    lam = LAMBDA_FACTOR * float(np.abs(spec.adjoint(y)).max())
    return ProblemInstance("dct", obj, Regularizer("l0", lam), x_star, x0, seed, spec, y)


def gen_gaussian_lhalf(n: int, seed: int, *, sparsity: int = GAUSSIAN_SPARSITY,
                       lambda_factor: float = GAUSSIAN_LAMBDA_FACTOR) -> ProblemInstance:
    """Noisy l1/2 approximation with ``m = n/5`` Gaussian measurements.

    ``lambda = lambda_factor * ||A^T b||_inf``; the start point is zero.
    """
    if n < 25 or n % 5:
        raise ValueError("n must be a multiple of 5 and at least 25")
    m = n // 5
    if not 0 < sparsity <= m:
        raise ValueError(f"sparsity must lie in [1, {m}]")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / math.sqrt(m)
    x_orig = np.zeros(n)
    x_orig[rng.choice(n, size=sparsity, replace=False)] = rng.standard_normal(sparsity)
    noise = rng.standard_normal(m) / math.sqrt(m)
    b = A @ x_orig + noise
    obj = from_least_squares(A, b)
    lam = lambda_factor * float(np.abs(A.T @ b).max())
    return ProblemInstance("gaussian-lhalf", obj, Regularizer("lhalf", lam), x_orig,
                           np.zeros(n), seed, A, b)


def _n_for(family: str, m: int) -> int:
    if family == "dct":
        return 2 * m
    if family == "gaussian-lhalf":
        return 5 * m
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _default_sparsity(family: str, m: int) -> int:
    # 1% of the measurements for DCT recovery, five spikes for the l1/2 problem
    if family == "dct":
        return max(1, round(0.01 * m))
    return GAUSSIAN_SPARSITY


def make_instance(family: str, m: int, seed: int, sparsity: Optional[int] = None
                  ) -> ProblemInstance:
    n = _n_for(family, m)
    sparsity = _default_sparsity(family, m) if sparsity is None else sparsity
    if family == "dct":
        return gen_dct_recovery(n, sparsity, seed)
    return gen_gaussian_lhalf(n, seed, sparsity=sparsity)


def instance_from_json(data: dict) -> ProblemInstance:
    """Build an instance from a JSON description.

    ``kind`` selects the quadratic: ``"dense"`` (``A``, ``b``, optional
    ``iota``), ``"dct"`` (``n``, ``kept_rows``, ``b``, ``iota``) or
    ``"quadratic"`` (``M``, ``c``, optional ``constant``/``iota``). A
    ``regularizer`` entry ``{"kind", "lambda"}`` is required; ``x0`` defaults
    to zero and ``x_star`` is optional.
    """
    kind = data.get("kind")
    if "regularizer" not in data:
        raise ValueError("instance needs a 'regularizer' entry")
    reg = Regularizer.from_json(data["regularizer"])
    operator = measurements = None
    if kind == "dense":
        operator = np.asarray(data["A"], dtype=float)
        measurements = np.asarray(data["b"], dtype=float)
        obj = from_least_squares(operator, measurements, data.get("iota"))
    elif kind == "dct":
        operator = DctSensingSpec(int(data["n"]), tuple(data["kept_rows"]),
                                  float(data.get("iota", DCT_IOTA)))
        measurements = np.asarray(data["b"], dtype=float)
        obj = from_dct(operator, measurements)
    elif kind == "quadratic":
        obj = from_matrix(np.asarray(data["M"], dtype=float),
                          np.asarray(data["c"], dtype=float),
                          float(data.get("constant", 0.0)), float(data.get("iota", 0.0)))
    else:
        raise ValueError(f"unknown instance kind {kind!r}; expected dense, dct or quadratic")
    x0 = np.asarray(data["x0"], dtype=float) if data.get("x0") is not None else np.zeros(obj.n)
    x_star = np.asarray(data["x_star"], dtype=float) if data.get("x_star") is not None else None
    return ProblemInstance(data.get("family", kind), obj, reg, x_star, x0,
                           data.get("seed"), operator, measurements)


def nre(x, x_star) -> float:
    """Normalized recovery error ``||x - x*|| / ||x*||``."""
    x_star = np.asarray(x_star, dtype=float)
    ref = float(np.linalg.norm(x_star))
    if ref == 0.0:
        raise ValueError("NRE is undefined for a zero ground truth")
    return float(np.linalg.norm(np.asarray(x, dtype=float) - x_star) / ref)


# ---------------------------------------------------------------------------
# trials

def solver_configs(solvers, overrides=None, stop_on_rel_change=False) -> dict:
    """Validated per-solver configs; raises :class:`ConfigError` up front."""
    overrides = dict(overrides or {})
    overrides.setdefault("stop_on_rel_change", stop_on_rel_change)
    configs = {}
    for name in solvers:
        if name not in SOLVERS:
            raise ConfigError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
        configs[name] = SolverConfig.for_solver(name, **overrides)
    return configs


@dataclass
class TrialOutcome:
    m: int
    n: int
    trial: int
    seed: int
    solver: str
    nre: float = math.nan
    iterations: Optional[int] = None
    rel_change_iteration: Optional[int] = None
    termination_reason: str = ""
    Q: float = math.nan
    subdiff_norm: float = math.nan
    error: str = ""
    sparsity: Optional[int] = None
    wall_time: float = 0.0
    records: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return not self.error

    def csv_row(self):
        def num(v):
            return "" if v is None else format(float(v), ".17g")

        def count(v):
            return "" if v is None else str(v)
        return [str(self.m), str(self.n), str(self.trial), str(self.seed), self.solver,
                num(self.nre), count(self.iterations), count(self.rel_change_iteration),
                self.termination_reason, num(self.Q), num(self.subdiff_norm), self.error]


def _run_instance(family, m, trial, seed, configs, sparsity, keep_traces):
    """All solvers on one instance; solver exceptions become outcomes."""
    inst = make_instance(family, m, seed, sparsity)
    outcomes = []
    for name, cfg in configs.items():
        out = TrialOutcome(m, inst.n, trial, seed, name,
                           sparsity=int(np.count_nonzero(inst.x_star)))
        try:
            res = solve(name, inst.objective, inst.regularizer, cfg, inst.x0,
                        x_star=inst.x_star)
        except Exception as exc:  # recorded, never propagated
            out.error = f"{type(exc).__name__}: {exc}"
        else:
            out.nre = nre(res.x_final, inst.x_star)
            out.iterations = res.iterations
            out.rel_change_iteration = res.rel_change_iteration
            out.termination_reason = res.termination_reason
            out.Q = res.final_record.Q
            out.subdiff_norm = res.final_record.subdiff_norm
            out.wall_time = res.wall_time
            if keep_traces:
                out.records = res.records
        outcomes.append(out)
    return outcomes


def _map(tasks, jobs):
    """Run ``_run_instance`` over ``tasks`` and return results in task order."""
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [_run_instance(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_instance, *t) for t in tasks]
        return [f.result() for f in futures]


def _mean(values):
    values = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.mean(values)) if values else math.nan


@dataclass
class BenchResult:
    family: str
    sizes: list
    solvers: list
    n_trials: int
    seed0: int
    configs: dict
    outcomes: list
    wall_time: float = 0.0

    def cell(self, m, solver) -> list:
        return [o for o in self.outcomes if o.m == m and o.solver == solver]

    def table(self) -> list:
        """One row per (size, solver): means over the non-failed trials."""
        rows = []
        for m in self.sizes:
            for name in self.solvers:
                cell = self.cell(m, name)
                ok = [o for o in cell if o.ok]
                rows.append({
                    "m": m, "n": cell[0].n if cell else _n_for(self.family, m),
                    "solver": name,
                    "mean_nre": _mean([o.nre for o in ok]),
                    "mean_iterations": _mean([o.iterations for o in ok]),
                    "mean_rel_change_iterations": _mean(
                        [o.rel_change_iteration for o in ok]),
                    "success_rate": (sum(o.nre < SUCCESS_NRE for o in ok) / len(cell)
                                     if cell else math.nan),
                    "n_trials": len(cell),
                    "n_failed": len(cell) - len(ok),
                })
        return rows

    @property
    def n_failed(self) -> int:
        return sum(not o.ok for o in self.outcomes)

    def to_json(self) -> dict:
        return {
            "family": self.family, "sizes": self.sizes, "solvers": self.solvers,
            "n_trials": self.n_trials, "seed0": self.seed0,
            "configs": {k: _config_json(v) for k, v in self.configs.items()},
            "table": self.table(),
            "n_failed": self.n_failed,
            "errors": [{"m": o.m, "trial": o.trial, "solver": o.solver, "error": o.error}
                       for o in self.outcomes if not o.ok],
            "wall_time_s": self.wall_time,
        }


def _config_json(cfg: SolverConfig) -> dict:
    return {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}


def run_trials(family: str, sizes, solvers, n_trials: int, seed0: int = 0, *,
               overrides: Optional[dict] = None, jobs: int = 1,
               stop_on_rel_change: bool = False, keep_traces: bool = False,
               sparsity: Optional[int] = None) -> BenchResult:
    """Every solver on ``n_trials`` instances per size.

    Trial ``t`` uses seed ``seed0 + t`` and the same instance and start
    point for every solver. By default runs stop on the subdifferential
    rule alone; the iteration at which the relative-change rule first held
    is reported alongside. Results do not depend on ``jobs``.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    sizes = [int(m) for m in sizes]
    solvers = [s.lower() for s in solvers]
    if not sizes:
        raise ValueError("sizes must be nonempty")
    if not solvers:
        raise ValueError("solvers must be nonempty")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    for m in sizes:
        _n_for(family, m)
    configs = solver_configs(solvers, overrides, stop_on_rel_change)
    t0 = time.perf_counter()
    tasks = [(family, m, t, seed0 + t, configs, sparsity, keep_traces)
             for m in sizes for t in range(n_trials)]
    outcomes = [o for batch in _map(tasks, jobs) for o in batch]
    return BenchResult(family, sizes, solvers, n_trials, seed0, configs, outcomes,
                       time.perf_counter() - t0)


@dataclass
class PhaseResult:
    family: str
    n: int
    sparsity_grid: list
    solvers: list
    trials_per_cell: int
    seed0: int
    outcomes: list

    def success_rate(self, sparsity, solver) -> float:
        cell = [o for o in self.outcomes
                if o.solver == solver and o.sparsity == sparsity]
        return sum(o.ok and o.nre < SUCCESS_NRE for o in cell) / len(cell)

    def grid(self) -> list:
        return [(k, name, self.success_rate(k, name))
                for k in self.sparsity_grid for name in self.solvers]


def phase_transition(family: str, n: int, sparsity_grid, solvers, trials_per_cell: int,
                     seed0: int = 0, *, overrides: Optional[dict] = None, jobs: int = 1,
                     stop_on_rel_change: bool = False) -> PhaseResult:
    """Success rate (``NRE < 1e-4``) per sparsity level and solver."""
    grid = [int(k) for k in sparsity_grid]
    if not grid:
        raise ValueError("sparsity grid must be nonempty")
    if trials_per_cell < 1:
        raise ValueError("trials_per_cell must be at least 1")
    m = n // 2 if family == "dct" else n // 5
    if _n_for(family, m) != n:
        raise ValueError(f"n = {n} is not a valid size for family {family!r}")
    solvers = [s.lower() for s in solvers]
    configs = solver_configs(solvers, overrides, stop_on_rel_change)
    tasks = [(family, m, t, seed0 + t, configs, k, False)
             for k in grid for t in range(trials_per_cell)]
    outcomes = [o for batch in _map(tasks, jobs) for o in batch]
    return PhaseResult(family, n, grid, solvers, trials_per_cell, seed0, outcomes)


# ---------------------------------------------------------------------------
# artifacts

def open_run_dir(out_dir, run_id):
    """``(tmp, final)``: write into ``tmp``, then :func:`commit_run_dir` it."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / run_id
    tmp = Path(tempfile.mkdtemp(prefix=f".{run_id}-", dir=out_dir))
    return tmp, final


def commit_run_dir(tmp: Path, final: Path) -> Path:
    if final.exists():
        shutil.rmtree(final)
    os.replace(tmp, final)
    return final


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def write_bench(result: BenchResult, out_dir, run_id: str) -> Path:
    """Write ``summary.json``, ``trials.csv`` and per-run traces.

    Everything goes to a temporary directory first and is renamed into
    place, so a crashed run never leaves partial results. ``trials.csv``
    holds no timings and is byte-identical across repeated runs.
    """
    tmp, final = open_run_dir(out_dir, run_id)
    try:
        with open(tmp / "summary.json", "w") as fh:
            json.dump(result.to_json(), fh, indent=2, default=_json_default)
            fh.write("\n")
        _write_csv(tmp / "trials.csv", TRIALS_HEADER,
                   [o.csv_row() for o in result.outcomes])
        traced = [o for o in result.outcomes if o.records]
        if traced:
            (tmp / "traces").mkdir()
            multi = len(result.sizes) > 1
            for o in traced:
                label = f"m{o.m}-{o.trial}" if multi else str(o.trial)
                _write_csv(tmp / "traces" / f"{o.solver}-{label}.csv",
                           TRACE_HEADER, [r.csv_row() for r in o.records])
        return commit_run_dir(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def write_phase(result: PhaseResult, out_dir, run_id: str) -> Path:
    """Write ``phase.csv`` (``sparsity,solver,success_rate``) and a summary."""
    tmp, final = open_run_dir(out_dir, run_id)
    try:
        _write_csv(tmp / "phase.csv", PHASE_HEADER,
                   [[str(k), name, format(rate, ".17g")] for k, name, rate in result.grid()])
        summary = {"family": result.family, "n": result.n,
                   "sparsity_grid": result.sparsity_grid, "solvers": result.solvers,
                   "trials_per_cell": result.trials_per_cell, "seed0": result.seed0,
                   "grid": [{"sparsity": k, "solver": s, "success_rate": r}
                            for k, s, r in result.grid()]}
        with open(tmp / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        return commit_run_dir(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

"""Proximal dogleg opportunistic majorization for ``min s(x) + r(x)`` with
``s`` a convex quadratic and ``r`` a separable sparsity penalty."""

from .dogleg import DoglegGeometry, build_geometry
from .prox_ops import Regularizer, eval_r, prox
from .quad_model import (DctSensingSpec, QuadraticObjective, from_dct,
                         from_least_squares, from_matrix)
from .solvers import (SOLVERS, ConfigError, SolveResult, SolverConfig, solve,
                      solve_mapg, solve_pdom, solve_pdome, solve_pg, solve_spdome)

__all__ = [
    "DoglegGeometry", "build_geometry", "Regularizer", "eval_r", "prox",
    "DctSensingSpec", "QuadraticObjective", "from_dct", "from_least_squares",
    "from_matrix", "SOLVERS", "ConfigError", "SolveResult", "SolverConfig", "solve",
    "solve_mapg", "solve_pdom", "solve_pdome", "solve_pg", "solve_spdome",
]
__version__ = "0.1.0"

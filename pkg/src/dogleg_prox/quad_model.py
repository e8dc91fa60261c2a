"""Convex quadratic term ``s(x) = 1/2 x^T M x + c^T x + const``.

The Hessian ``M`` is factorized once when the objective is built, so every
Newton solve afterwards is a back-substitution (dense case) or a pair of
orthonormal DCTs around a diagonal division (subsampled-DCT case).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse.linalg

__all__ = [
    "DctSensingSpec",
    "DenseHessian",
    "DctHessian",
    "QuadraticObjective",
    "Spectrum",
    "FactorizationError",
    "from_matrix",
    "from_least_squares",
    "from_dct",
    "estimate_extremal_eigenvalues",
    "dct_matrix",
]

EIG_TOL = 1e-8
EIG_MAX_ITER = 10_000
DEFAULT_RELATIVE_SHIFT = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    """Raised when the shifted Hessian cannot be Cholesky factorized."""


class Spectrum(NamedTuple):
    lambda_max: float
    lambda_min: float
    converged: bool


def dct_matrix(n: int) -> np.ndarray:
    """Dense orthonormal type-II DCT basis ``U`` with ``U @ x == dct(x)``."""
    return scipy.fft.dct(np.eye(n), type=2, norm="ortho", axis=0)


class DenseHessian:
    """Dense SPD Hessian with a cached Cholesky factor.

    When the Hessian is known to equal ``F^T F + shift * I`` (least
    squares), passing ``factor=F`` makes products and quadratic forms cost
    ``O(mn)`` instead of ``O(n^2)``; the Cholesky factor is still formed
    from ``matrix``.
    """

    kind = "dense"

    def __init__(self, matrix: np.ndarray, factor: np.ndarray | None = None,
                 shift: float = 0.0):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Hessian must be square, got shape {matrix.shape}")
        scale = max(np.abs(matrix).max(), 1.0)
        if np.abs(matrix - matrix.T).max() > 1e-12 * scale:
            raise ValueError("Hessian is not symmetric")
        self.matrix = 0.5 * (matrix + matrix.T)
        self.matrix.setflags(write=False)
        try:
            self._factor = scipy.linalg.cho_factor(self.matrix, lower=True)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(
                "Hessian is numerically singular; increase iota") from exc
        self.n_factorizations = 1
        self._thin = None
        if factor is not None:
            factor = np.asarray(factor, dtype=float)
            if factor.ndim != 2 or factor.shape[1] != self.n:
                raise ValueError("factor must have one column per unknown")
            # only worth it when the factor is shorter than it is wide
            if factor.shape[0] < self.n:
                self._thin = (factor, float(shift))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v):
        if self._thin is not None:
            f, shift = self._thin
            return f.T @ (f @ v) + shift * v
        return self.matrix @ v

    def quad_form(self, v) -> float:
        """``v^T M v``."""
        if self._thin is not None:
            f, shift = self._thin
            fv = f @ v
            return float(fv @ fv + shift * (v @ v))
        return float(v @ (self.matrix @ v))

    def solve(self, v):
        return scipy.linalg.cho_solve(self._factor, v, check_finite=False)

    def todense(self):
        return np.array(self.matrix)


class DctHessian:
    """``U^T diag(w) U`` with ``U`` the orthonormal DCT-II basis.

    ``w_i = 1 + iota`` on retained rows and ``iota`` elsewhere, so the
    inverse is the same sandwich with ``1/w``.
    """

    kind = "dct"

    def __init__(self, n: int, kept_rows: np.ndarray, iota: float):
        self.n_signal = int(n)
        self.kept_rows = np.asarray(kept_rows, dtype=np.intp)
        self.iota = float(iota)
        mask = np.zeros(self.n_signal)
        mask[self.kept_rows] = 1.0
        self.weights = mask + self.iota
        self.weights.setflags(write=False)
        # diagonal inversion, O(n)
        self._inv_weights = 1.0 / self.weights
        self.n_factorizations = 1

    @property
    def n(self) -> int:
        return self.n_signal

    def apply(self, v):
        return scipy.fft.idct(self.weights * scipy.fft.dct(v, norm="ortho"),
                              norm="ortho")

    def quad_form(self, v) -> float:
        coef = scipy.fft.dct(v, norm="ortho")
        return float(self.weights @ (coef * coef))

    def solve(self, v):
        return scipy.fft.idct(self._inv_weights * scipy.fft.dct(v, norm="ortho"),
                              norm="ortho")

    def todense(self):
        u = dct_matrix(self.n_signal)
        return u.T @ (self.weights[:, None] * u)


@dataclass(frozen=True)
class DctSensingSpec:
    """Row-subsampled orthonormal DCT sensing operator ``A = D U``."""

    n: int
    kept_rows: tuple
    iota: float = DEFAULT_RELATIVE_SHIFT

    def __post_init__(self):
        rows = tuple(int(i) for i in self.kept_rows)
        object.__setattr__(self, "kept_rows", rows)
        if not rows:
            raise ValueError("kept_rows is empty (zero measurements)")
        if list(rows) != sorted(set(rows)):
            raise ValueError("kept_rows must be distinct and sorted")
        if rows[0] < 0 or rows[-1] >= self.n:
            raise ValueError(f"kept_rows must lie in [0, {self.n})")
        if not self.iota > 0:
            raise ValueError("iota must be positive for the DCT Hessian")

    @property
    def m(self) -> int:
        return len(self.kept_rows)

    def forward(self, x):
        """``A x``: DCT, then keep the sampled rows."""
        return scipy.fft.dct(x, norm="ortho")[list(self.kept_rows)]

    def adjoint(self, y):
        """``A^T y``: zero-fill the unsampled rows, then inverse DCT."""
        full = np.zeros(self.n)
        full[list(self.kept_rows)] = y
        return scipy.fft.idct(full, norm="ortho")

    def todense(self):
        return dct_matrix(self.n)[list(self.kept_rows)]


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``s(x) = 1/2 x^T M x + c^T x + constant`` with ``M`` already shifted.

    ``hessian`` is a :class:`DenseHessian` or :class:`DctHessian`; the shift
    ``epsilon_shift`` is part of ``M``, so ``hess_solve`` is the exact
    inverse of ``hess_apply`` and of the curvature of ``s``.
    """

    hessian: DenseHessian | DctHessian
    linear: np.ndarray
    constant: float = 0.0
    epsilon_shift: float = 0.0
    lipschitz: float = field(init=False)
    lambda_min: float = field(init=False)
    spectrum_converged: bool = field(init=False)

    def __post_init__(self):
        linear = np.array(self.linear, dtype=float)
        if linear.shape != (self.hessian.n,):
            raise ValueError("linear term has the wrong length")
        linear.setflags(write=False)
        object.__setattr__(self, "linear", linear)
        lmax, lmin, ok = estimate_extremal_eigenvalues(self)
        object.__setattr__(self, "lipschitz", lmax)
        object.__setattr__(self, "lambda_min", lmin)
        object.__setattr__(self, "spectrum_converged", ok)
        if not lmin > 0:
            raise FactorizationError("shifted Hessian is not positive definite")

    @property
    def n(self) -> int:
        return self.hessian.n

    @property
    def n_factorizations(self) -> int:
        return self.hessian.n_factorizations

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got {x.shape}")
        return x

    def hess_apply(self, v):
        return self.hessian.apply(self._check(v))

    def hess_solve(self, v):
        return self.hessian.solve(self._check(v))

    def value(self, x):
        x = self._check(x)
        return float(0.5 * self.hessian.quad_form(x) + self.linear @ x + self.constant)

    def grad(self, x):
        return self.hessian.apply(self._check(x)) + self.linear

    # names used throughout the solver code
    eval_s = value
    grad_s = grad

    def value_increment(self, grad_at_base, step):
        """``s(base + step) - s(base)`` computed without cancellation."""
        return float(grad_at_base @ step + 0.5 * self.hessian.quad_form(step))

    def curvature(self, step) -> float:
        """``1/2 step^T M step``."""
        return 0.5 * self.hessian.quad_form(self._check(step))


def estimate_extremal_eigenvalues(obj, tol=EIG_TOL, max_iter=EIG_MAX_ITER,
                                  seed=0) -> Spectrum:
    """Largest and smallest eigenvalue of the (shifted) Hessian.

    ``lambda_max`` comes from Lanczos on ``M`` and ``lambda_min`` from
    Lanczos on ``M^{-1}`` through the cached factorization (ARPACK, relative
    accuracy ``tol``). If ARPACK does not converge, or the problem is too
    small for it, power iteration takes over; it stops once the
    eigen-residual ``||A v - rho v||`` drops below ``tol * rho``.
    """
    hessian = obj.hessian if hasattr(obj, "hessian") else obj
    lmax, ok_max = _largest_eigenvalue(hessian.apply, hessian.n, tol, max_iter, seed)
    inv_max, ok_min = _largest_eigenvalue(hessian.solve, hessian.n, tol, max_iter, seed)
    lmin = 1.0 / inv_max if inv_max > 0 else 0.0
    converged = ok_max and ok_min
    if not converged:
        warnings.warn(
            f"eigenvalue estimation did not converge in {max_iter} iterations; "
            f"returning best estimates ({lmax:.6g}, {lmin:.6g})",
            RuntimeWarning, stacklevel=2)
    return Spectrum(lmax, lmin, converged)


def _largest_eigenvalue(op, n, tol=EIG_TOL, max_iter=EIG_MAX_ITER, seed=0):
    """``(rho, converged)`` for the top eigenvalue of a symmetric PSD operator."""
    start = np.random.default_rng(seed).standard_normal(n)
    if n > 2:
        lin_op = scipy.sparse.linalg.LinearOperator((n, n), matvec=op, dtype=float)
        try:
            vals = scipy.sparse.linalg.eigsh(lin_op, k=1, which="LA", v0=start,
                                             tol=tol, maxiter=max_iter,
                                             return_eigenvectors=False)
            return float(vals[0]), True
        except scipy.sparse.linalg.ArpackNoConvergence:
            pass
    return _power_iteration(op, start, tol, max_iter)


def _power_iteration(op, start, tol=EIG_TOL, max_iter=EIG_MAX_ITER):
    v = start / np.linalg.norm(start)
    rho = 0.0
    for _ in range(max_iter):
        w = op(v)
        rho = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0, True
        if np.linalg.norm(w - rho * v) <= tol * abs(rho):
            return rho, True
        v = w / norm_w
    return rho, False


def from_matrix(hessian, linear, constant=0.0, iota=0.0, *, factor=None) -> QuadraticObjective:
    """Objective from an explicit symmetric PSD Hessian, shifted by ``iota``.

    ``factor`` optionally gives ``F`` with ``hessian == F^T F``.
    """
    hessian = np.asarray(hessian, dtype=float)
    if iota < 0:
        raise ValueError("iota must be nonnegative")
    shifted = hessian + iota * np.eye(hessian.shape[0])
    return QuadraticObjective(DenseHessian(shifted, factor, iota), linear, float(constant),
                              float(iota))


def from_least_squares(A, b, iota=None) -> QuadraticObjective:
    """``1/2 ||A x - b||^2 + iota/2 ||x||^2``.

    With ``iota=None`` the shift is ``1e-6 * lambda_max(A^T A)`` when
    ``A^T A`` is rank deficient (more columns than rows, or a failed
    unshifted factorization) and zero otherwise.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if A.size == 0:
        raise ValueError("A must be nonempty")
    if b.shape != (A.shape[0],):
        raise ValueError("b must have one entry per row of A")
    gram = A.T @ A
    linear = -(A.T @ b)
    constant = 0.5 * float(b @ b)
    if iota is None:
        iota = 0.0
        if A.shape[0] >= A.shape[1]:
            try:
                return from_matrix(gram, linear, constant, 0.0, factor=A)
            except np.linalg.LinAlgError:
                pass
        lmax, _ = _largest_eigenvalue(lambda v: gram @ v, gram.shape[0])
        iota = DEFAULT_RELATIVE_SHIFT * lmax
    if iota < 0:
        raise ValueError("iota must be nonnegative")
    return from_matrix(gram, linear, constant, iota, factor=A)


def from_dct(spec: DctSensingSpec, measurements=None) -> QuadraticObjective:
    """``1/2 ||y - D U x||^2 + iota/2 ||x||^2`` with a structured inverse.

    ``measurements`` defaults to zero, which leaves only the curvature.
    """
    hessian = DctHessian(spec.n, np.array(spec.kept_rows), spec.iota)
    if measurements is None:
        measurements = np.zeros(spec.m)
    y = np.asarray(measurements, dtype=float)
    if y.shape != (spec.m,):
        raise ValueError("one measurement per kept row is required")
    return QuadraticObjective(hessian, -spec.adjoint(y), 0.5 * float(y @ y), spec.iota)

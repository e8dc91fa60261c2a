import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from dogleg_prox import quad_model
from dogleg_prox.quad_model import (DctSensingSpec, FactorizationError, dct_matrix,
                                    estimate_extremal_eigenvalues, from_dct,
                                    from_least_squares, from_matrix)

from conftest import random_spd


def power_iteration_oracle(M, iters=20000):
    """Plain textbook power iteration, independent of the package."""
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    for _ in range(iters):
        w = M @ v
        v = w / np.linalg.norm(w)
    return float(v @ M @ v)


# --- from_least_squares -----------------------------------------------------

def test_identity_design():
    obj = from_least_squares(np.eye(2), np.array([1.0, 2.0]), iota=0.0)
    np.testing.assert_allclose(obj.hessian.todense(), np.eye(2))
    np.testing.assert_allclose(obj.linear, [-1.0, -2.0])
    assert obj.value(np.zeros(2)) == pytest.approx(2.5)


def test_diagonal_spectrum():
    obj = from_least_squares(np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2), iota=0.0)
    assert obj.lipschitz == pytest.approx(4.0, rel=1e-10)
    assert obj.lambda_min == pytest.approx(1.0, rel=1e-10)


def test_gaussian_lipschitz_matches_power_oracle(rng):
    A = rng.standard_normal((10, 20)) / np.sqrt(10)
    obj = from_least_squares(A, rng.standard_normal(10), iota=1e-6)
    oracle = power_iteration_oracle(A.T @ A + 1e-6 * np.eye(20))
    assert obj.lipschitz == pytest.approx(oracle, rel=1e-6)


def test_default_shift_for_wide_matrix(rng):
    A = rng.standard_normal((4, 9))
    obj = from_least_squares(A, np.zeros(4))
    lmax = np.linalg.eigvalsh(A.T @ A)[-1]
    assert obj.epsilon_shift == pytest.approx(1e-6 * lmax, rel=1e-6)
    assert obj.lambda_min == pytest.approx(obj.epsilon_shift, rel=1e-4)


def test_no_shift_for_tall_full_rank(rng):
    A = rng.standard_normal((12, 5))
    assert from_least_squares(A, np.zeros(12)).epsilon_shift == 0.0


def test_singular_hessian_rejected():
    with pytest.raises(FactorizationError, match="iota"):
        from_matrix(np.zeros((3, 3)), np.zeros(3))


def test_rejects_empty_and_mismatched_inputs():
    with pytest.raises(ValueError):
        from_least_squares(np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(ValueError):
        from_least_squares(np.eye(3), np.zeros(2))
    with pytest.raises(ValueError):
        from_least_squares(np.eye(3), np.zeros(3), iota=-1.0)


def test_asymmetric_hessian_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        from_matrix(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))


def test_thin_factor_products_match_dense(rng):
    A = rng.standard_normal((6, 15))
    obj = from_least_squares(A, rng.standard_normal(6), iota=1e-3)
    dense = A.T @ A + 1e-3 * np.eye(15)
    v = rng.standard_normal(15)
    np.testing.assert_allclose(obj.hess_apply(v), dense @ v, rtol=1e-12, atol=1e-12)
    assert obj.hessian.quad_form(v) == pytest.approx(v @ dense @ v, rel=1e-12)


# --- from_dct ---------------------------------------------------------------

def test_full_sampling_is_scaled_identity(rng):
    obj = from_dct(DctSensingSpec(4, (0, 1, 2, 3), 0.01))
    v = rng.standard_normal(4)
    np.testing.assert_allclose(obj.hess_apply(v), 1.01 * v, rtol=1e-12)


def test_dct_solve_matches_dense_cholesky(rng):
    spec = DctSensingSpec(8, (0, 1, 2, 3), 1e-6)
    obj = from_dct(spec)
    U = dct_matrix(8)
    D = U[:4]
    dense = D.T @ D + 1e-6 * np.eye(8)
    v = rng.standard_normal(8)
    ref = scipy.linalg.cho_solve(scipy.linalg.cho_factor(dense), v)
    np.testing.assert_allclose(obj.hess_solve(v), ref, rtol=1e-8)


def test_dct_matrix_is_orthonormal():
    U = dct_matrix(16)
    np.testing.assert_allclose(U @ U.T, np.eye(16), atol=1e-12)


@pytest.mark.parametrize("n", [8, 16, 32, 64])
def test_dct_matches_dense_counterpart(n, rng):
    rows = tuple(sorted(rng.choice(n, n // 2, replace=False).tolist()))
    spec = DctSensingSpec(n, rows, 1e-6)
    obj = from_dct(spec)
    A = spec.todense()
    dense = A.T @ A + 1e-6 * np.eye(n)
    v = rng.standard_normal(n)
    np.testing.assert_allclose(obj.hess_apply(v), dense @ v, rtol=1e-8, atol=1e-12)
    ref = np.linalg.solve(dense, v)
    assert np.linalg.norm(obj.hess_solve(v) - ref) <= 1e-8 * np.linalg.norm(ref)


def test_dct_forward_adjoint_consistency(rng):
    spec = DctSensingSpec(10, (1, 4, 7), 1e-3)
    x, y = rng.standard_normal(10), rng.standard_normal(3)
    assert spec.forward(x) @ y == pytest.approx(x @ spec.adjoint(y), rel=1e-12)
    np.testing.assert_allclose(spec.todense() @ x, spec.forward(x), atol=1e-12)


def test_dct_objective_from_measurements(rng):
    spec = DctSensingSpec(12, (0, 2, 5, 9), 1e-4)
    y = rng.standard_normal(4)
    obj = from_dct(spec, y)
    x = rng.standard_normal(12)
    A = spec.todense()
    expected = 0.5 * np.sum((y - A @ x) ** 2) + 0.5e-4 * x @ x
    assert obj.value(x) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("rows, msg", [((), "empty"), ((2, 1), "sorted"),
                                        ((1, 1), "distinct"), ((0, 9), r"\[0, 8\)")])
def test_dct_spec_validation(rows, msg):
    with pytest.raises(ValueError, match=msg):
        DctSensingSpec(8, rows, 1e-6)


def test_dct_spec_needs_positive_iota():
    with pytest.raises(ValueError, match="iota"):
        DctSensingSpec(8, (0,), 0.0)


def test_dct_measurement_length_checked():
    with pytest.raises(ValueError):
        from_dct(DctSensingSpec(8, (0, 1), 1e-6), np.zeros(3))


# --- grad / solve / value ---------------------------------------------------

def test_grad_identity():
    obj = from_matrix(np.eye(2), np.zeros(2))
    np.testing.assert_allclose(obj.grad(np.array([3.0, -1.0])), [3.0, -1.0])


def test_grad_diagonal_matches_finite_differences():
    obj = from_matrix(np.diag([1.0, 4.0]), np.zeros(2))
    x = np.array([1.0, 1.0])
    np.testing.assert_allclose(obj.grad(x), [1.0, 4.0])
    h = 1e-6
    fd = [(obj.value(x + h * e) - obj.value(x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(fd, [1.0, 4.0], rtol=1e-7)


def test_grad_vanishes_at_unconstrained_minimizer(rng):
    M = random_spd(rng, 6)
    c = rng.standard_normal(6)
    obj = from_matrix(M, c)
    x = obj.hess_solve(-c)
    assert np.linalg.norm(obj.grad(x)) <= 1e-10 * (1 + np.linalg.norm(c))


def test_dimension_mismatch():
    obj = from_matrix(np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        obj.grad(np.zeros(2))
    with pytest.raises(ValueError):
        obj.hess_solve(np.zeros(4))


def test_solve_scalar_matrix():
    obj = from_matrix(2.0 * np.eye(2), np.zeros(2))
    np.testing.assert_allclose(obj.hess_solve(np.array([4.0, 6.0])), [2.0, 3.0])


def test_solve_residual(rng):
    M = random_spd(rng, 5)
    obj = from_matrix(M, np.zeros(5))
    v = rng.standard_normal(5)
    assert np.linalg.norm(M @ obj.hess_solve(v) - v) <= 1e-8 * np.linalg.norm(v)


def test_value_increment_matches_difference(rng):
    M = random_spd(rng, 4)
    obj = from_matrix(M, rng.standard_normal(4), 3.0)
    x, step = rng.standard_normal(4), rng.standard_normal(4)
    inc = obj.value_increment(obj.grad(x), step)
    assert inc == pytest.approx(obj.value(x + step) - obj.value(x), rel=1e-10)


def test_solves_never_refactorize(monkeypatch, rng):
    calls = []
    real = scipy.linalg.cho_factor

    def counting(*a, **k):
        calls.append(1)
        return real(*a, **k)

    monkeypatch.setattr(quad_model.scipy.linalg, "cho_factor", counting)
    obj = from_matrix(random_spd(rng, 6), np.zeros(6))
    for _ in range(10):
        obj.hess_solve(rng.standard_normal(6))
    assert len(calls) == 1
    assert obj.n_factorizations == 1


# --- eigenvalues --------------------------------------------------------------

def test_eigenvalues_diagonal():
    spec = estimate_extremal_eigenvalues(from_matrix(np.diag([1.0, 4.0]), np.zeros(2)))
    assert spec.lambda_max == pytest.approx(4.0, rel=1e-10)
    assert spec.lambda_min == pytest.approx(1.0, rel=1e-10)
    assert spec.converged


def test_eigenvalues_scalar_matrix():
    obj = from_matrix(3.0 * np.eye(5), np.zeros(5))
    assert (obj.lipschitz, obj.lambda_min) == (pytest.approx(3.0), pytest.approx(3.0))


def test_eigenvalues_match_dense_eigensolver(rng):
    M = random_spd(rng, 8, cond=200.0)
    obj = from_matrix(M, np.zeros(8))
    eig = np.linalg.eigvalsh(M)
    assert obj.lipschitz == pytest.approx(eig[-1], rel=1e-6)
    assert obj.lambda_min == pytest.approx(eig[0], rel=1e-6)


def test_dct_eigenvalues_are_the_weights():
    obj = from_dct(DctSensingSpec(64, tuple(range(0, 64, 3)), 1e-3))
    assert obj.lipschitz == pytest.approx(1.001, rel=1e-8)
    assert obj.lambda_min == pytest.approx(1e-3, rel=1e-6)


def test_nonconvergence_warns(rng):
    M = random_spd(rng, 2, cond=1.0001)
    # force the power-iteration fallback with a tiny iteration budget
    with pytest.warns(RuntimeWarning, match="did not converge"):
        res = estimate_extremal_eigenvalues(from_matrix(M, np.zeros(2)).hessian, max_iter=1)
    assert not res.converged
    assert res.lambda_max > 0


# --- properties ----------------------------------------------------------------

@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 12))
def test_symmetry_and_sandwich(seed, n):
    rng = np.random.default_rng(seed)
    obj = from_matrix(random_spd(rng, n), np.zeros(n))
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    assert abs(u @ obj.hess_apply(v) - obj.hess_apply(u) @ v) <= \
        1e-10 * np.linalg.norm(u) * np.linalg.norm(v) * obj.lipschitz
    for g in rng.standard_normal((20, n)):
        q = g @ obj.hess_apply(g)
        assert obj.lambda_min * (1 - 1e-6) * (g @ g) <= q <= obj.lipschitz * (1 + 1e-6) * (g @ g)
        assert np.linalg.norm(obj.hess_apply(g)) <= obj.lipschitz * (1 + 1e-6) * np.linalg.norm(g)


@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([6, 16, 33, 64]))
def test_dct_inverse_consistency(seed, n):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    rows = tuple(sorted(rng.choice(n, k, replace=False).tolist()))
    obj = from_dct(DctSensingSpec(n, rows, 10.0 ** rng.uniform(-6, -1)))
    v = rng.standard_normal(n)
    np.testing.assert_allclose(obj.hess_solve(obj.hess_apply(v)), v, rtol=1e-8, atol=1e-8)

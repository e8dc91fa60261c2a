import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dogleg_prox.prox_ops import (KINDS, Regularizer, eval_r, half_threshold_constant, prox,
                                  prox_oracle_1d)


def scalar_objective(reg, t, z, eta):
    return reg.weight * float(reg.penalty(np.float64(t))) + (t - z) ** 2 / (2 * eta)


# --- eval_r -----------------------------------------------------------------

def test_eval_l0():
    assert eval_r(Regularizer("l0", 0.1), np.array([0.0, 0.0, 3.0])) == pytest.approx(0.1)


def test_eval_l1():
    assert eval_r(Regularizer("l1", 2.0), np.array([1.0, -1.0])) == pytest.approx(4.0)


def test_eval_lhalf():
    assert eval_r(Regularizer("lhalf", 1.0), np.array([4.0, 9.0])) == pytest.approx(5.0)


@pytest.mark.parametrize("kind", KINDS)
def test_zero_has_zero_penalty(kind):
    reg = Regularizer(kind, 0.7)
    assert reg.value(np.zeros(5)) == 0.0
    np.testing.assert_array_equal(prox(reg, np.zeros(5), 0.3), np.zeros(5))
    assert prox_oracle_1d(reg, 0.0, 0.3) == 0.0


def test_regularizer_validation():
    with pytest.raises(ValueError, match="unknown"):
        Regularizer("l2", 1.0)
    with pytest.raises(ValueError, match="positive"):
        Regularizer("l1", 0.0)
    with pytest.raises(ValueError, match="positive"):
        Regularizer("l1", 1.0).prox(np.ones(2), 0.0)


def test_json_roundtrip():
    reg = Regularizer("LHalf", 0.25)
    data = json.loads(json.dumps(reg.to_json()))
    assert data == {"kind": "lhalf", "lambda": 0.25}
    assert Regularizer.from_json(data) == reg


# --- closed-form prox examples --------------------------------------------------

def test_l0_prox_example():
    out = prox(Regularizer("l0", 0.5), np.array([1.5, 0.5]), 1.0)
    np.testing.assert_array_equal(out, [1.5, 0.0])


def test_l0_tie_goes_to_zero():
    # z^2 == 2 eta lambda exactly
    assert prox(Regularizer("l0", 0.5), np.array([1.0, -1.0]), 1.0).tolist() == [0.0, 0.0]


def test_l1_prox_example():
    out = prox(Regularizer("l1", 0.5), np.array([2.0, -0.3]), 1.0)
    np.testing.assert_allclose(out, [1.5, 0.0])


def test_lhalf_prox_example_matches_oracle():
    reg = Regularizer("lhalf", 1.0)
    closed = float(prox(reg, np.array([5.0]), 0.01)[0])
    oracle = prox_oracle_1d(reg, 5.0, 0.01)
    assert closed == pytest.approx(oracle, abs=1e-5)


def test_lhalf_stationarity():
    # nonzero output satisfies t - z + eta*lambda / (2 sqrt t) = 0
    reg = Regularizer("lhalf", 0.8)
    z, eta = 3.0, 0.5
    t = float(reg.prox(np.array([z]), eta)[0])
    assert t > 0
    assert t - z + eta * 0.8 / (2 * np.sqrt(t)) == pytest.approx(0.0, abs=1e-12)


def test_half_threshold_constant():
    # at |z| = c tau^(2/3) the nonzero candidate and the origin tie
    c = half_threshold_constant()
    assert c == pytest.approx(1.5, abs=1e-10)
    reg = Regularizer("lhalf", 1.0)
    for tau in (0.01, 1.0, 7.0):
        edge = c * tau ** (2 / 3)
        assert reg.prox(np.array([edge * (1 - 1e-6)]), tau)[0] == 0.0
        assert reg.prox(np.array([edge * (1 + 1e-6)]), tau)[0] > 0.0


# --- oracle -----------------------------------------------------------------------

def test_oracle_l1():
    assert prox_oracle_1d(Regularizer("l1", 0.5), 2.0, 1.0) == pytest.approx(1.5, abs=1e-6)


def test_oracle_l0_below_threshold():
    assert prox_oracle_1d(Regularizer("l0", 0.5), 0.9, 1.0) == 0.0


def test_oracle_l0_above_threshold():
    assert prox_oracle_1d(Regularizer("l0", 0.5), -1.2, 1.0) == pytest.approx(-1.2, abs=1e-7)


# --- properties -------------------------------------------------------------------

cases = st.tuples(st.sampled_from(KINDS), st.floats(0.01, 5.0), st.floats(0.01, 2.0),
                  st.floats(-10.0, 10.0))


@given(cases)
def test_prox_never_worse_than_oracle(case):
    kind, lam, eta, z = case
    reg = Regularizer(kind, lam)
    t = float(reg.prox(np.array([z]), eta)[0])
    ref = prox_oracle_1d(reg, z, eta, n_grid=20001)
    assert scalar_objective(reg, t, z, eta) <= scalar_objective(reg, ref, z, eta) + 1e-9


@given(st.sampled_from(KINDS), st.integers(0, 2**31 - 1))
def test_shrinkage_sign_and_separability(kind, seed):
    rng = np.random.default_rng(seed)
    reg = Regularizer(kind, float(rng.uniform(0.05, 3)))
    eta = float(rng.uniform(0.05, 2))
    z = rng.standard_normal(30) * 3
    out = reg.prox(z, eta)
    assert np.all(np.abs(out) <= np.abs(z))
    assert np.all((out == 0) | (np.sign(out) == np.sign(z)))
    singles = np.array([reg.prox(np.array([zi]), eta)[0] for zi in z])
    np.testing.assert_array_equal(out, singles)


@given(st.floats(0.01, 5.0), st.floats(0.01, 2.0), st.integers(0, 2**31 - 1))
def test_l0_support_identity(lam, eta, seed):
    z = np.random.default_rng(seed).standard_normal(50) * 3
    out = Regularizer("l0", lam).prox(z, eta)
    np.testing.assert_array_equal(out != 0, z * z > 2 * eta * lam)


@given(st.sampled_from(KINDS), st.floats(0.01, 5.0), st.integers(0, 2**31 - 1))
def test_penalty_nonnegative(kind, lam, seed):
    x = np.random.default_rng(seed).standard_normal(10)
    assert Regularizer(kind, lam).value(x) >= 0


def test_zero_coordinate_residual():
    g = np.array([-3.0, -0.5, 0.2, 2.0])
    np.testing.assert_allclose(Regularizer("l1", 1.0).zero_coordinate_residual(g),
                               [-2.0, 0.0, 0.0, 1.0])
    assert not Regularizer("l0", 1.0).zero_coordinate_residual(g).any()
    assert not Regularizer("lhalf", 1.0).zero_coordinate_residual(g).any()

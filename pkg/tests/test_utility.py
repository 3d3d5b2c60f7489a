from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from bmolab.bmo import entropy_v
from bmolab.utility import exp_utility, make_truncated_utility

ks = st.integers(min_value=1, max_value=8)


def numeric_conjugate(f, y, lo, hi):
    res = minimize_scalar(lambda x: -(float(f(x)) - x * y), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


def test_value_at_zero():
    for k in (1, 3, 7):
        assert make_truncated_utility(k).U(0.0) == -1.0


@pytest.mark.parametrize("k", [1, 2, 5])
def test_knee_is_c1(k):
    u = make_truncated_utility(k)
    h = 1e-7
    assert u.U(-k) == pytest.approx(-math.exp(k), rel=1e-15)
    assert u.U(-k - h) == pytest.approx(-math.exp(k), rel=1e-6)
    assert u.dU(-k) == pytest.approx(math.exp(k), rel=1e-15)
    assert u.dU(-k - h) == pytest.approx(math.exp(k), rel=1e-6)


def test_barrier():
    u = make_truncated_utility(2)
    assert u.barrier == -3.0 and u.knee == -2.0
    assert u.U(-3.0) == -np.inf and u.U(-4.0) == -np.inf
    assert u.U(-3.0 + 1e-12) < -100.0


def test_rejects_level_zero():
    with pytest.raises(ValueError):
        make_truncated_utility(0)


@given(ks, st.floats(-20.0, 20.0))
def test_truncation_below_exponential(k, x):
    u = make_truncated_utility(k)
    assert u.U(x) <= exp_utility(x) + 1e-12 * abs(exp_utility(x))
    if x >= -k:
        assert u.U(x) == exp_utility(x)


@given(ks, st.floats(-20.0, 20.0))
def test_concave_increasing(k, x):
    u = make_truncated_utility(k)
    if x > u.barrier:
        assert u.dU(x) > 0 and u.d2U(x) < 0


@given(ks, st.floats(1e-3, 1e4))
def test_conjugate_matches_numeric(k, y):
    u = make_truncated_utility(k)
    # the supremum sits at x = -log y or, past the knee, at e^k / y - k - 1
    numeric = numeric_conjugate(u.U, y, -k - 1 + 1e-12, 30.0)
    assert float(u.V(y)) == pytest.approx(numeric, rel=1e-7, abs=1e-7)


@given(ks, st.floats(1e-3, 1e4))
def test_conjugate_below_untruncated(k, y):
    u = make_truncated_utility(k)
    assert float(u.V(y)) <= float(entropy_v(y)) + 1e-9 * max(1.0, abs(float(entropy_v(y))))


@given(ks, st.floats(1e-3, 1e4))
def test_shifted_conjugate(k, y):
    u = make_truncated_utility(k)
    assert float(u.V_shifted(y)) == pytest.approx(float(u.V(y)) - (k + 1) * y, rel=1e-14)
    numeric = numeric_conjugate(u.U_shifted, y, 1e-12, 31.0 + k)
    assert float(u.V_shifted(y)) == pytest.approx(numeric, rel=1e-7, abs=1e-7)

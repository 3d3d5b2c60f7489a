from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from bmolab.calculus import build_market, is_martingale
from bmolab.entropy import solve_exponential
from bmolab.fixtures import (fix_2b, fix_b, random_lambda, random_market, random_martingale,
                             random_tree, skewed_binomial)
from bmolab.truncated import MAX_NODES, solve_truncated
from bmolab.tree import binomial_tree, conditional_expectations
from bmolab.utility import make_truncated_utility

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def one_period(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 1)
    M = random_martingale(rng, tree)
    return build_market(tree, M, random_lambda(rng, tree, M))


def scalar_oracle(m, k, x):
    """Direct 1-D maximization over the root position."""
    u = make_truncated_utility(k)
    t = m.tree
    dS = m.dS[t.leaves]
    p = t.prob[t.leaves]
    if np.all(dS == 0):
        return float(u.U(x))
    # feasible positions keep every leaf above the barrier
    room = x - u.barrier
    hi = min((room / -d for d in dS if d < 0), default=1e6)
    lo = -min((room / d for d in dS if d > 0), default=1e6)
    res = minimize_scalar(lambda h: -float(np.dot(p, u.U(x + h * dS))),
                          bounds=(lo * (1 - 1e-12), hi * (1 - 1e-12)), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


@given(seeds, st.integers(1, 4), st.floats(-0.5, 1.0))
def test_matches_scalar_oracle(seed, k, x):
    m = one_period(seed)
    r = solve_truncated(m, k, x)
    assert r.u_nk == pytest.approx(scalar_oracle(m, k, x), abs=1e-5)
    assert r.u_nk >= scalar_oracle(m, k, x) - 1e-12


def test_zero_drift():
    m = fix_b(0.0)
    r = solve_truncated(m, 3, 0.5)
    assert r.u_nk == pytest.approx(-np.exp(-0.5), rel=1e-15)
    assert np.all(r.policy == 0.0)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_fix_b_truncation_does_not_bind(k):
    m = fix_b(0.6)
    assert solve_truncated(m, k).u_nk == pytest.approx(solve_exponential(m).u0, abs=1e-6)


def test_skewed_market_binds_for_small_k():
    m = skewed_binomial()
    u = solve_exponential(m).u0
    vals = [solve_truncated(m, k).u_nk for k in (1, 2, 3, 4, 6)]
    assert vals[0] < u - 1e-4
    assert abs(vals[-1] - u) < 1e-6
    assert np.all(np.diff(vals) >= -1e-12)


@given(seeds)
def test_monotone_in_k_and_below_exponential(seed):
    m = random_market(np.random.default_rng(seed), max_depth=3)
    u = solve_exponential(m).u0
    prev = -np.inf
    for k in (1, 2, 3, 5):
        r = solve_truncated(m, k)
        assert r.u_nk <= u + 1e-10
        assert r.u_nk >= prev - 1e-10
        prev = r.u_nk


@given(seeds, st.integers(1, 4))
def test_barrier_feasible_and_dual_density(seed, k):
    m = random_market(np.random.default_rng(seed), max_depth=3)
    r = solve_truncated(m, k)
    t = m.tree
    assert np.all(r.X_nk[t.leaves] > -k - 1)
    w = t.node_prob[t.leaves]
    assert np.dot(w, r.Y_nk_T) == pytest.approx(1.0, abs=1e-12)
    assert np.all(r.Y_nk_T > 0)
    # first-order conditions make Y a martingale density for S
    Y = conditional_expectations(t, r.Y_nk_T)
    assert is_martingale(t, Y * m.S, tol=1e-8)


def test_warm_start_never_worse():
    m = fix_2b()
    cold = solve_truncated(m, 2)
    warm = solve_truncated(m, 3, start=cold.policy)
    assert warm.u_nk >= solve_truncated(m, 2).u_nk - 1e-15


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        solve_truncated(fix_b(), 2, x=-3.0)
    big = build_market(binomial_tree(10), np.zeros(2**11 - 1), np.zeros(2**11 - 1))
    assert big.tree.size > MAX_NODES
    with pytest.raises(ValueError, match="capped"):
        solve_truncated(big, 2)

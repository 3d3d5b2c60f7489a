from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmolab.bmo import (bmo_norm, bmo_scores, condition_s_constants, constants_report,
                        entropy_v, llogl_constant, llogl_scores, prop36_certificate,
                        prop39_from_constants, prop39_lp_certificate, reverse_holder_constant,
                        upper_lp_moment, weighted_norm_check)
from bmolab.calculus import build_market, stochastic_integral
from bmolab.entropy import relative_entropy_scores
from bmolab.fixtures import fix_b, fix_t, random_market
from bmolab.tree import EventTree, binomial_tree

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def market(seed, depth=3):
    return random_market(np.random.default_rng(seed), max_depth=depth)


# --- examples --------------------------------------------------------------

def test_fix_b_norms():
    m = fix_b(0.6)
    R = m.lam_dot_M()
    assert bmo_norm(m.tree, R, 2) == pytest.approx(0.6, abs=1e-15)
    assert bmo_norm(m.tree, R, 1) == pytest.approx(0.6, abs=1e-15)
    assert bmo_norm(m.tree, np.zeros(3), 2) == 0.0


def test_fix_b_density_constants():
    m = fix_b(0.6)
    assert reverse_holder_constant(m.tree, m.Z, 2.0) == pytest.approx(1.36, abs=1e-14)
    expected = 0.5 * (entropy_v(0.4) + entropy_v(1.6))
    assert llogl_constant(m.tree, m.Z) == pytest.approx(expected, abs=1e-15)
    assert llogl_constant(m.tree, m.Z) == pytest.approx(-0.80726, abs=1e-5)
    assert condition_s_constants(m.tree, m.Z) == pytest.approx((0.4, 1.6), abs=1e-15)


def test_fix_t_condition_s():
    m = fix_t(0.5)
    assert condition_s_constants(m.tree, m.Z) == pytest.approx((0.5, 1.5), abs=1e-15)


def test_constant_density():
    t = binomial_tree(2)
    one = np.ones(t.size)
    assert reverse_holder_constant(t, one, 3.0) == 1.0
    assert llogl_constant(t, one) == -1.0
    assert condition_s_constants(t, one) == (1.0, 1.0)


def test_bracket_forms_on_fix_t():
    # path and optional forms agree; the predictable form averages the last jump
    theta = 0.5
    m = fix_t(theta)
    R = m.lam_dot_M()
    assert bmo_norm(m.tree, R, 2) == pytest.approx(theta, abs=1e-15)
    assert bmo_norm(m.tree, R, 2, "optional") == pytest.approx(theta, abs=1e-15)
    assert bmo_norm(m.tree, R, 2, "predictable") == pytest.approx(theta * math.sqrt(2 / 3), abs=1e-15)


def test_prop36_fix_b():
    m = fix_b(0.6)
    rep = prop36_certificate(m.tree, -m.lam_dot_M())
    assert rep.passed
    assert rep.max_jump == pytest.approx(0.6) and rep.C == pytest.approx(1.6)
    assert rep.sqrt_r == pytest.approx(math.sqrt(0.6))


def test_prop36_sqrt_form_fails_for_large_jumps():
    # rare large up-jump: |dR| <= r holds, |dR| <= sqrt(r) does not
    tree = EventTree([-1, 0, 0], [1.0, 0.1, 0.9])
    R = np.array([0.0, 8.1, -0.9])
    rep = prop36_certificate(tree, R)
    assert rep.jump_le_r and rep.upper_le_1_plus_r
    assert not rep.jump_le_sqrt_r
    assert not rep.passed


def test_prop39_degenerate_and_fix_b():
    cert = prop39_lp_certificate(binomial_tree(1), np.zeros(3))
    assert (cert.p_star, cert.lp_bound) == (2.0, 1.0)
    m = fix_b(0.6)
    cert = prop39_lp_certificate(m.tree, -m.lam_dot_M())
    assert 1.0 < cert.p_star <= 2.0
    assert 0.5 * 1.6 ** cert.p_star == pytest.approx(upper_lp_moment(m.tree, m.Z, cert.p_star))
    assert 0.5 * 1.6 ** cert.p_star <= cert.lp_bound


def test_weighted_norm_examples():
    m = fix_b()
    t = m.tree
    one = np.ones(3)
    assert weighted_norm_check(t, one, np.zeros(3), 2.0).worst_ratio == 0.0
    rep = weighted_norm_check(t, one, m.M, 2.0)
    # X* = 1 on both leaves: 1^2 P(X* >= 1) = 1 = C_2 E[X_T^2]
    assert rep.worst_ratio == pytest.approx(1.0, abs=1e-15)
    assert rep.worst_level == 1.0


def test_constants_report_dict():
    d = constants_report(fix_b().tree, -fix_b().lam_dot_M()).to_dict()
    assert d["bmo2"] == pytest.approx(0.6) and d["condition_s"] == pytest.approx([0.4, 1.6])
    assert d["prop39"]["ratio"] <= 0.5


def test_rejects_bad_p():
    t = binomial_tree(1)
    with pytest.raises(ValueError):
        bmo_norm(t, np.zeros(3), 3)
    with pytest.raises(ValueError):
        reverse_holder_constant(t, np.ones(3), 1.0)


# --- properties ------------------------------------------------------------

@given(seeds)
def test_path_equals_optional_representation(seed):
    m = market(seed)
    R = m.lam_dot_M()
    a = bmo_scores(m.tree, R, 2)
    b = bmo_scores(m.tree, R, 2, "optional")
    assert np.allclose(a, b, atol=1e-10)


@given(seeds)
def test_bmo1_le_bmo2(seed):
    m = market(seed)
    R = m.lam_dot_M()
    assert bmo_norm(m.tree, R, 1) <= bmo_norm(m.tree, R, 2) + 1e-15


@given(seeds, st.floats(1.1, 4.0))
def test_reverse_holder_at_least_one(seed, p):
    m = market(seed)
    assert reverse_holder_constant(m.tree, m.Z, p) >= 1.0 - 1e-12


@given(seeds)
def test_llogl_is_relative_entropy_minus_one(seed):
    m = market(seed)
    diff = llogl_scores(m.tree, m.Z) - (relative_entropy_scores(m.tree, m.Z) - 1.0)
    assert np.abs(diff).max() <= 1e-12


@given(seeds, st.floats(1.2, 3.0))
def test_llogl_dominated_by_reverse_holder(seed, p):
    # x log x <= x^p / (e (p - 1)) pointwise
    m = market(seed)
    k_prime = 1.0 / (math.e * (p - 1.0))
    bound = k_prime * reverse_holder_constant(m.tree, m.Z, p) - 1.0
    assert llogl_constant(m.tree, m.Z) <= bound + 1e-12


@given(seeds)
def test_condition_s_brackets_one(seed):
    m = market(seed)
    c, C = condition_s_constants(m.tree, m.Z)
    assert 0.0 < c <= 1.0 <= C


@given(seeds)
def test_prop36_on_generated_markets(seed):
    m = market(seed, depth=4)
    rep = prop36_certificate(m.tree, -m.lam_dot_M())
    assert rep.passed and rep.jump_le_r and rep.upper_le_1_plus_r


@given(seeds)
def test_prop39_certificate_properties(seed):
    m = market(seed, depth=4)
    cert = prop39_lp_certificate(m.tree, -m.lam_dot_M())
    assert 1.0 < cert.p_star <= 2.0
    assert cert.ratio <= 0.5
    assert cert.lp_bound == pytest.approx(1.0 / (1.0 - cert.ratio), rel=1e-15)
    assert upper_lp_moment(m.tree, m.Z, cert.p_star) <= cert.lp_bound


@given(st.floats(0.01, 3.0), st.floats(0.01, 3.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_prop39_monotone_in_inputs(n1, n2, r1, r2):
    # larger norms can only shrink the certified exponent
    lo = prop39_from_constants(min(n1, n2), 1.0 + math.sqrt(min(r1, r2)))
    hi = prop39_from_constants(max(n1, n2), 1.0 + math.sqrt(max(r1, r2)))
    assert hi.p_star <= lo.p_star + 1e-12


@given(seeds)
def test_weighted_norm_on_random_markets(seed):
    from bmolab.entropy import solve_exponential

    m = market(seed, depth=4)
    s = solve_exponential(m)
    assert weighted_norm_check(m.tree, s.Zhat, s.Xhat, 2.0).holds


def test_lambda_scaling_of_bmo():
    m = fix_t(0.3)
    R = stochastic_integral(m.tree, m.lam, m.M)
    twice = build_market(m.tree, m.M, 2 * m.lam).lam_dot_M()
    assert bmo_norm(m.tree, twice, 2) == pytest.approx(2 * bmo_norm(m.tree, R, 2), rel=1e-15)

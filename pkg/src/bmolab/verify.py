"""Invariant suite run by ``bmolab --command verify``.

Each check records the worst measured value and the bound it is compared
with, so reports show margins rather than bare flags.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .bmo import (bmo_norm, bmo_norm_by_enumeration, llogl_by_enumeration, llogl_constant,
                  prop36_certificate, prop39_lp_certificate, upper_lp_moment,
                  weighted_norm_check)
from .calculus import Market, gkw_decompose, stochastic_integral, stochastic_logarithm
from .entropy import (duality_residual, minimal_martingale_measure,
                      opportunity_identity_residual, solve_exponential, tilt_oracle)
from .fixtures import CORPUS_VERSION, DEFAULT_SEED, corpus
from .polytope import entropy_polytope_oracle

ENUMERATION_MAX_HORIZON = 3
ENUMERATION_MAX_BRANCHING = 3


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool


def _le(name: str, value: float, bound: float) -> Check:
    return Check(name, float(value), float(bound), bool(value <= bound))


def _max_abs(x) -> float:
    return float(np.max(np.abs(x), initial=0.0))


def check_market(market: Market, tolerance: float = 1e-8) -> list[Check]:
    """Every invariant of the laboratory on one market.

    ``tolerance`` bounds the node-wise identity residuals; the cross-oracle
    and inequality checks use their own fixed tolerances.
    """
    tree = market.tree
    s = solve_exponential(market)
    out = []

    out.append(_le("entropy_vs_polytope",
                   abs(s.entropy - entropy_polytope_oracle(market)), 1e-7))
    out.append(_le("duality_residual", _max_abs(duality_residual(s)), tolerance))
    out.append(_le("opportunity_identity", _max_abs(opportunity_identity_residual(s)),
                   tolerance))

    minimal_martingale_measure(market)  # raises unless Z S is a martingale
    out.append(Check("minimal_measure_martingale", 0.0, 0.0, True))

    kz, kzh = llogl_constant(tree, market.Z), llogl_constant(tree, s.Zhat)
    out.append(_le("llogl_entropy_measure_le_minimal", kzh - kz, 1e-10))
    tilt = min(tilt_oracle(market, s, int(v)) for v in tree.order)
    out.append(_le("tilt_negative_part", -tilt, 1e-10))

    R = market.lam_dot_M()
    cert36 = prop36_certificate(tree, -R, tol=1e-12)
    out.append(_le("jump_le_sqrt_r", cert36.max_jump - cert36.sqrt_r, 1e-12))
    out.append(_le("upper_s_le_1_plus_sqrt_r", cert36.C - 1.0 - cert36.sqrt_r, 1e-12))

    cert39 = prop39_lp_certificate(tree, -R)
    moment = upper_lp_moment(tree, market.Z, cert39.p_star)
    out.append(_le("lp_certificate", moment, cert39.lp_bound))

    wn = weighted_norm_check(tree, s.Zhat, s.Xhat, 2.0)
    out.append(_le("weighted_norm_ratio", wn.worst_ratio, 1.0))

    # e^{-Xhat} <= (1/c) e^{K+1} Zhat, with K the LLogL constant of Zhat
    lhs = np.exp(-s.Xhat)
    rhs = math.exp(kzh + 1.0) * s.Zhat / s.c
    out.append(_le("wealth_density_bound", float(np.max(lhs / rhs)) - 1.0, 1e-10))

    Rhat = stochastic_logarithm(tree, s.Zhat)
    xi, _ = gkw_decompose(tree, Rhat, market.M)
    left = bmo_norm(tree, stochastic_integral(tree, xi, market.M), 2, "predictable")
    right = bmo_norm(tree, Rhat, 2, "predictable")
    out.append(_le("gkw_bmo2", left - right, 1e-10))

    branching = max(len(c) for c in tree.children)
    if tree.horizon <= ENUMERATION_MAX_HORIZON and branching <= ENUMERATION_MAX_BRANCHING:
        gap = 0.0
        for p in (1, 2):
            gap = max(gap, abs(bmo_norm(tree, R, p) - bmo_norm_by_enumeration(tree, R, p)))
        gap = max(gap, abs(kz - llogl_by_enumeration(tree, market.Z)))
        out.append(_le("stopping_reduction", gap, 0.0))
    return out


def verify_corpus(seed: int = DEFAULT_SEED, size: int = 100, tolerance: float = 1e-8,
                  markets=None) -> dict:
    """Run :func:`check_market` over ``markets`` (default: the seeded corpus)."""
    header = {"corpus_version": CORPUS_VERSION, "seed": int(seed),
              "size": int(size), "tolerance": float(tolerance)}
    if markets is None:
        markets = corpus(seed, size)
    else:
        header["size"] = len(markets)
        header["source"] = "input"
    worst: dict[str, dict] = {}
    failures = []
    for i, m in enumerate(markets):
        for c in check_market(m, tolerance):
            w = worst.get(c.name)
            if w is None or c.value > w["value"]:
                worst[c.name] = {"value": c.value, "bound": c.bound, "market": i}
            if not c.passed:
                failures.append({"market": i, **asdict(c)})
    return {"header": header, "checks": dict(sorted(worst.items())),
            "failures": failures, "passed": not failures}

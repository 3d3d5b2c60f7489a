"""bmo norms, Reverse Hölder and LLogL constants, condition (S) and the
certificates built on them.

All suprema over stopping times reduce to maxima over nodes (see
:func:`bmolab.tree.sup_over_stopping_times`).  The left limit ``R_{v-}`` at a
node is the value at its parent; at the root it is the root value itself.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import (
    check_martingale,
    increments,
    optional_bracket,
    predictable_bracket,
    stochastic_exponential,
)
from .errors import CertificateNotFound, MartingaleViolation, NonpositiveExponential
from .tree import (
    EventTree,
    enumerate_stopping_regions,
    expectation,
    leaf_values,
    stopping_node_per_leaf,
    sup_over_stopping_times,
)

REPRESENTATIONS = ("path", "optional", "predictable")


def entropy_v(y):
    """Convex dual of ``-exp(-x)``: ``V(y) = y log y - y`` with ``V(0) = 0``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)) - y, 0.0)
    return out


def left_limit(tree: EventTree, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = X.copy()
    e = tree.edges
    out[e] = X[tree.parent[e]]
    return out


def _node_average(tree: EventTree, per_leaf_node) -> np.ndarray:
    """``E[f(leaf, v) | v]`` at every node ``v``.

    ``per_leaf_node(t, anc)`` returns the leaf values of ``f(., v)`` where
    ``anc`` holds the depth-``t`` ancestor of each leaf.
    """
    out = np.zeros(tree.size)
    w = tree.node_prob[tree.leaves]
    for t in range(tree.horizon + 1):
        anc = tree.leaf_ancestors[:, t]
        out += np.bincount(anc, weights=w * per_leaf_node(t, anc), minlength=tree.size)
    return out / tree.node_prob


def _positive(tree: EventTree, Y, name: str = "Y") -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (tree.size,):
        raise ValueError(f"{name} must carry one value per node")
    if np.any(Y <= 0.0):
        v = int(np.flatnonzero(Y <= 0.0)[0])
        raise NonpositiveExponential(f"{name}({v}) = {Y[v]:.6g} is not strictly positive")
    return Y


def bmo_scores(tree: EventTree, R, p: int = 2, representation: str = "path") -> np.ndarray:
    """Per-node bmo score ``E[|R_T - R_{v-}|^p | v]^{1/p}``.

    For ``p = 2`` two bracket forms are available:

    ``optional``
        ``E[[R]_T - [R]_{v-} | v]^{1/2}``; equals the path form exactly for
        martingales.
    ``predictable``
        ``E[<R>_T - <R>_{v-} | v]^{1/2}``; additive under orthogonal
        decompositions but, on a tree, differs from the path form by the
        realized-versus-predicted jump at ``v``.
    """
    if p not in (1, 2):
        raise ValueError(f"bmo_p is implemented for p in {{1, 2}}, got {p}")
    if representation not in REPRESENTATIONS:
        raise ValueError(f"unknown representation {representation!r}")
    R = np.asarray(R, dtype=float)
    if representation == "path":
        RT = R[tree.leaves]
        ref = left_limit(tree, R)
        scores = _node_average(tree, lambda t, anc: np.abs(RT - ref[anc]) ** p)
        # sqrt is correctly rounded, so equal suprema give bit-equal norms
        return scores if p == 1 else np.sqrt(scores)
    if p != 2:
        raise ValueError("bracket representations exist only for p = 2")
    if representation == "optional":
        B = optional_bracket(tree, R)
    else:
        B = predictable_bracket(tree, R)
    BT = B[tree.leaves]
    ref = left_limit(tree, B)
    scores = _node_average(tree, lambda t, anc: BT - ref[anc])
    return np.sqrt(np.maximum(scores, 0.0))


def bmo_norm(tree: EventTree, R, p: int = 2, representation: str = "path") -> float:
    return sup_over_stopping_times(tree, bmo_scores(tree, R, p, representation))


def _stopped_sup(tree: EventTree, leaf_term, max_regions: int) -> float:
    """``max_tau ess sup E[f(tau, leaf) | F_tau]`` by listing every stopping region."""
    w = tree.node_prob[tree.leaves]
    best = -math.inf
    for count, region in enumerate(enumerate_stopping_regions(tree), start=1):
        if count > max_regions:
            raise ValueError(f"more than {max_regions} stopping regions")
        tau = stopping_node_per_leaf(tree, region)
        vals = w * leaf_term(tau)
        cell = np.bincount(tau, weights=vals, minlength=tree.size)
        hit = np.unique(tau)
        best = max(best, float((cell[hit] / tree.node_prob[hit]).max()))
    return best


def bmo_norm_by_enumeration(tree: EventTree, R, p: int = 2, max_regions: int = 10 ** 6) -> float:
    """``bmo_p`` norm as a literal supremum over all stopping times."""
    if p not in (1, 2):
        raise ValueError(f"bmo_p is implemented for p in {{1, 2}}, got {p}")
    R = np.asarray(R, dtype=float)
    RT = R[tree.leaves]
    ref = left_limit(tree, R)
    best = _stopped_sup(tree, lambda tau: np.abs(RT - ref[tau]) ** p, max_regions)
    return best if p == 1 else math.sqrt(best)


def llogl_by_enumeration(tree: EventTree, Y, max_regions: int = 10 ** 6) -> float:
    """LLogL constant as a literal supremum over all stopping times."""
    Y = _positive(tree, Y)
    YT = Y[tree.leaves]
    return _stopped_sup(tree, lambda tau: entropy_v(YT / Y[tau]), max_regions)


def reverse_holder_scores(tree: EventTree, Y, p: float) -> np.ndarray:
    Y = _positive(tree, Y)
    if p <= 1:
        raise ValueError("Reverse Hölder exponent must exceed 1")
    YT = Y[tree.leaves]
    return _node_average(tree, lambda t, anc: (YT / Y[anc]) ** p)


def reverse_holder_constant(tree: EventTree, Y, p: float) -> float:
    """Minimal ``K_p`` with ``E[(Y_T / Y_tau)^p | F_tau] <= K_p`` for all tau."""
    return sup_over_stopping_times(tree, reverse_holder_scores(tree, Y, p))


def llogl_scores(tree: EventTree, Y) -> np.ndarray:
    Y = _positive(tree, Y)
    YT = Y[tree.leaves]
    return _node_average(tree, lambda t, anc: entropy_v(YT / Y[anc]))


def llogl_constant(tree: EventTree, Y) -> float:
    """Minimal ``K`` with ``E[V(Y_T / Y_tau) | F_tau] <= K`` for all tau."""
    return sup_over_stopping_times(tree, llogl_scores(tree, Y))


def condition_s_constants(tree: EventTree, Y) -> tuple[float, float]:
    """Tightest ``(c, C)`` with ``c Y_- <= Y <= C Y_-``, ``c <= 1 <= C``."""
    Y = _positive(tree, Y)
    e = tree.edges
    if e.size == 0:
        return 1.0, 1.0
    ratio = Y[e] / Y[tree.parent[e]]
    return min(float(ratio.min()), 1.0), max(float(ratio.max()), 1.0)


@dataclass(frozen=True)
class Prop36Report:
    """Jump and condition-(S) bounds for ``Y = E(R)`` in terms of ``r = ||R||_bmo2``.

    ``jump_le_sqrt_r`` and ``upper_le_1_plus_sqrt_r`` are the bounds with the
    square root; ``jump_le_r`` and ``upper_le_1_plus_r`` are the versions in
    which the norm itself bounds the jumps (always true for the path norm).
    """

    r: float
    sqrt_r: float
    max_jump: float
    min_jump: float
    c: float
    C: float
    jump_le_sqrt_r: bool
    upper_le_1_plus_sqrt_r: bool
    lower_jump_ge_c_minus_1: bool
    jump_le_r: bool
    upper_le_1_plus_r: bool

    @property
    def passed(self) -> bool:
        return self.jump_le_sqrt_r and self.upper_le_1_plus_sqrt_r and self.lower_jump_ge_c_minus_1


def prop36_certificate(tree: EventTree, R, tol: float = 1e-12) -> Prop36Report:
    R = np.asarray(R, dtype=float)
    check_martingale(tree, R, name="R")
    Y = stochastic_exponential(tree, R)
    r = bmo_norm(tree, R, 2)
    dR = increments(tree, R)[tree.edges]
    max_jump = float(np.abs(dR).max(initial=0.0))
    min_jump = float(dR.min(initial=0.0))
    c, C = condition_s_constants(tree, Y)
    sr = math.sqrt(r)
    return Prop36Report(
        r=r, sqrt_r=sr, max_jump=max_jump, min_jump=min_jump, c=c, C=C,
        jump_le_sqrt_r=max_jump <= sr + tol,
        upper_le_1_plus_sqrt_r=C <= 1.0 + sr + tol,
        lower_jump_ge_c_minus_1=min_jump >= c - 1.0 - tol,
        jump_le_r=max_jump <= r + tol,
        upper_le_1_plus_r=C <= 1.0 + r + tol,
    )


@dataclass(frozen=True)
class Prop39Certificate:
    """Certified ``E[E(R)_T^p 1{E(R)_T > 1}] <= lp_bound`` at ``p = p_star``."""

    n_R: float
    C: float
    delta: float
    p_star: float
    ratio: float
    lp_bound: float


def _log_ratio(p: float, n_R: float, C: float) -> float:
    # log of 2C(p-1)/(2p-1) * (C/delta)^p with delta = exp(-p n_R)
    return math.log(2.0 * C * (p - 1.0) / (2.0 * p - 1.0)) + p * math.log(C) + p * p * n_R


def prop39_from_constants(n_R: float, C: float, target: float = 0.5,
                          steps: int = 64) -> Prop39Certificate:
    """Largest ``p`` in ``(1, 2]`` with certificate ratio at most ``target``.

    Depends on ``(n_R, C)`` alone.  ``n_R = 0`` is the degenerate case
    ``E(R) = 1``.
    """
    if n_R <= 0.0:
        return Prop39Certificate(n_R=0.0, C=C, delta=1.0, p_star=2.0, ratio=0.0, lp_bound=1.0)
    log_target = math.log(target)
    if _log_ratio(2.0, n_R, C) <= log_target:
        p = 2.0
    else:
        lo, hi = 1.0, 2.0
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if _log_ratio(mid, n_R, C) <= log_target:
                lo = mid
            else:
                hi = mid
        if lo <= 1.0:
            raise CertificateNotFound(
                f"no p in (1, 2] found for n(R) = {n_R:.6g}, C = {C:.6g}")
        p = lo
    ratio = math.exp(_log_ratio(p, n_R, C))
    return Prop39Certificate(n_R=n_R, C=C, delta=math.exp(-p * n_R), p_star=p,
                             ratio=ratio, lp_bound=1.0 / (1.0 - ratio))


def prop39_lp_certificate(tree: EventTree, R, target: float = 0.5) -> Prop39Certificate:
    """Certificate from ``n(R) = 2 ||R||_bmo1 + ||R||_bmo2^2`` and ``C = 1 + sqrt(r)``."""
    R = np.asarray(R, dtype=float)
    b1 = bmo_norm(tree, R, 1)
    b2 = bmo_norm(tree, R, 2)
    if b2 == 0.0:
        return prop39_from_constants(0.0, 1.0)
    return prop39_from_constants(2.0 * b1 + b2 * b2, 1.0 + math.sqrt(b2), target=target)


def upper_lp_moment(tree: EventTree, Y, p: float) -> float:
    """``E[Y_T^p 1{Y_T > 1}]``."""
    YT = leaf_values(tree, Y)
    return expectation(tree, np.where(YT > 1.0, YT ** p, 0.0))


@dataclass(frozen=True)
class WeightedNormReport:
    p: float
    q: float
    C_p: float
    rhs: float
    worst_ratio: float
    worst_level: float
    levels: list = field(repr=False)

    @property
    def holds(self) -> bool:
        return self.worst_ratio <= 1.0


def weighted_norm_check(tree: EventTree, Y, X, p: float,
                        tol: float = 1e-9) -> WeightedNormReport:
    """Compare ``lam^q P(X* >= lam)`` with ``C_p E[|X_T|^q]`` at every atom of ``X*``.

    ``X`` must be a martingale under ``dQ = Y_T dP``; ``C_p`` is the Reverse
    Hölder constant of ``Y``.
    """
    Y = _positive(tree, Y)
    X = np.asarray(X, dtype=float)
    res = tree.one_step_mean(Y * X) - Y * X
    res[tree.is_leaf] = 0.0
    scale = max(1.0, float(np.abs(Y * X).max(initial=0.0)))
    if np.abs(res).max(initial=0.0) > tol * scale:
        v = int(np.argmax(np.abs(res)))
        raise MartingaleViolation(f"X is not a Y.P-martingale at node {v}", node=v)
    q = p / (p - 1.0)
    C_p = reverse_holder_constant(tree, Y, p)
    xstar = tree.max_along_paths(np.abs(X))[tree.leaves]
    w = tree.node_prob[tree.leaves]
    rhs = C_p * float(np.dot(w, np.abs(X[tree.leaves]) ** q))
    atoms = np.unique(xstar[xstar > 0.0])
    levels = []
    worst, worst_level = 0.0, 0.0
    for lam in atoms:
        lhs = lam ** q * float(w[xstar >= lam].sum())
        ratio = lhs / rhs if rhs > 0 else math.inf
        levels.append((float(lam), lhs))
        if ratio > worst:
            worst, worst_level = ratio, float(lam)
    return WeightedNormReport(p=p, q=q, C_p=C_p, rhs=rhs, worst_ratio=worst,
                              worst_level=worst_level, levels=levels)


@dataclass(frozen=True)
class ConstantsReport:
    bmo1: float
    bmo2: float
    bmo2_predictable: float
    reverse_holder: list
    K_LLogL: float
    condition_s: tuple
    prop36: Prop36Report
    prop39: Prop39Certificate | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reverse_holder"] = [list(x) for x in self.reverse_holder]
        d["condition_s"] = list(self.condition_s)
        return d


def constants_report(tree: EventTree, R, ps=(1.5, 2.0)) -> ConstantsReport:
    """All norms and constants of ``R`` and ``Y = E(R)``."""
    R = np.asarray(R, dtype=float)
    Y = stochastic_exponential(tree, R)
    try:
        cert = prop39_lp_certificate(tree, R)
    except CertificateNotFound:
        cert = None
    return ConstantsReport(
        bmo1=bmo_norm(tree, R, 1),
        bmo2=bmo_norm(tree, R, 2),
        bmo2_predictable=bmo_norm(tree, R, 2, "predictable"),
        reverse_holder=[(float(p), reverse_holder_constant(tree, Y, p)) for p in ps],
        K_LLogL=llogl_constant(tree, Y),
        condition_s=condition_s_constants(tree, Y),
        prop36=prop36_certificate(tree, R),
        prop39=cert,
    )

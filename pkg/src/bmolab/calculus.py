"""Discrete stochastic calculus on event trees.

Integrals, predictable brackets, stochastic exponentials and logarithms,
the Galtchouk-Kunita-Watanabe split, and the market ``S = M + int lam d<M>``
together with its minimal martingale density ``Z = E(-lam . M)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MartingaleViolation, NonpositiveExponential, TreeError
from .tree import EventTree

MARTINGALE_TOL = 1e-12


def _check_shape(tree: EventTree, X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != (tree.size,):
        raise TreeError(f"{name} must carry one value per node ({tree.size}), got {X.shape}")
    return X


def increments(tree: EventTree, X) -> np.ndarray:
    """Edge increments ``X(v) - X(parent(v))`` indexed by the child node; 0 at the root."""
    X = _check_shape(tree, X, "X")
    d = np.zeros(tree.size)
    e = tree.edges
    d[e] = X[e] - X[tree.parent[e]]
    return d


def increment(tree: EventTree, X, parent: int, child: int) -> float:
    tree.check_node(child)
    if tree.parent[child] != parent:
        raise TreeError(f"{parent} -> {child} is not an edge")
    X = _check_shape(tree, X, "X")
    return float(X[child] - X[parent])


def martingale_residual(tree: EventTree, X) -> np.ndarray:
    """``E[X_next | v] - X(v)`` at every non-leaf node (0 at leaves)."""
    X = _check_shape(tree, X, "X")
    r = tree.one_step_mean(X) - X
    r[tree.is_leaf] = 0.0
    return r


def check_martingale(tree: EventTree, X, tol: float = MARTINGALE_TOL, name: str = "process"):
    """Raise :class:`MartingaleViolation` if a one-step mean misses by more than ``tol``.

    The tolerance is scaled by the largest increment so that unit choices do
    not matter.
    """
    X = _check_shape(tree, X, name)
    r = martingale_residual(tree, X)
    scale = max(1.0, float(np.abs(increments(tree, X)).max(initial=0.0)))
    worst = int(np.argmax(np.abs(r)))
    if abs(r[worst]) > tol * scale:
        raise MartingaleViolation(
            f"{name} is not a martingale at node {worst}: one-step mean misses by {r[worst]:.3e}",
            node=worst,
        )


def is_martingale(tree: EventTree, X, tol: float = MARTINGALE_TOL) -> bool:
    try:
        check_martingale(tree, X, tol)
    except MartingaleViolation:
        return False
    return True


def stochastic_integral(tree: EventTree, H, X) -> np.ndarray:
    """``(H . X)``: zero at the root, adds ``H(v) * dX`` along each edge ``v -> c``."""
    H = _check_shape(tree, H, "H")
    dX = increments(tree, X)
    step = np.zeros(tree.size)
    e = tree.edges
    step[e] = H[tree.parent[e]] * dX[e]
    return tree.accumulate(step)


def predictable_bracket(tree: EventTree, X, Y=None, check: bool = True) -> np.ndarray:
    """Predictable covariation ``<X, Y>``: running sum of ``E[dX dY | v]``."""
    Y = X if Y is None else Y
    if check:
        check_martingale(tree, X, name="X")
        if Y is not X:
            check_martingale(tree, Y, name="Y")
    prod = increments(tree, X) * increments(tree, Y)
    cond = tree.one_step_mean(prod)
    step = np.zeros(tree.size)
    e = tree.edges
    step[e] = cond[tree.parent[e]]
    return tree.accumulate(step)


def optional_bracket(tree: EventTree, X, Y=None) -> np.ndarray:
    """Realized covariation ``[X, Y]``: running sum of ``dX dY`` along the path."""
    Y = X if Y is None else Y
    return tree.accumulate(increments(tree, X) * increments(tree, Y))


def stochastic_exponential(tree: EventTree, R) -> np.ndarray:
    """Product-form solution of ``dY = Y_- dR`` with ``Y_0 = 1``."""
    factor = 1.0 + increments(tree, R)
    e = tree.edges
    bad = e[factor[e] <= 0.0]
    if bad.size:
        c = int(bad[0])
        p = int(tree.parent[c])
        raise NonpositiveExponential(
            f"1 + dR = {factor[c]:.6g} <= 0 on edge {p} -> {c}", edge=(p, c))
    Y = np.ones(tree.size)
    for level in tree.levels[1:]:
        Y[level] = Y[tree.parent[level]] * factor[level]
    return Y


def stochastic_logarithm(tree: EventTree, Y) -> np.ndarray:
    """Inverse of :func:`stochastic_exponential`: ``dR = Y / Y_- - 1``."""
    Y = _check_shape(tree, Y, "Y")
    if np.any(Y <= 0.0):
        v = int(np.flatnonzero(Y <= 0.0)[0])
        raise NonpositiveExponential(f"Y({v}) = {Y[v]:.6g} is not positive")
    step = np.zeros(tree.size)
    e = tree.edges
    step[e] = Y[e] / Y[tree.parent[e]] - 1.0
    return tree.accumulate(step)


def gkw_decompose(tree: EventTree, R, M):
    """Split ``R = R_0 + xi . M + L`` with ``<L, M> = 0``.

    ``xi(v) = E[dR dM | v] / E[dM^2 | v]``; steps where ``M`` has zero
    conditional variance get ``xi = 0``.  Returns ``(xi, L)``.
    """
    R = _check_shape(tree, R, "R")
    check_martingale(tree, R, name="R")
    check_martingale(tree, M, name="M")
    dR = increments(tree, R)
    dM = increments(tree, M)
    cov = tree.one_step_mean(dR * dM)
    var = tree.one_step_mean(dM * dM)
    xi = np.zeros(tree.size)
    ok = (~tree.is_leaf) & (var > 0.0)
    xi[ok] = cov[ok] / var[ok]
    L = R - R[tree.root] - stochastic_integral(tree, xi, M)
    return xi, L


@dataclass(frozen=True, eq=False)
class Market:
    """``S = M + int lam d<M>`` with its minimal martingale density ``Z = E(-lam . M)``."""

    tree: EventTree
    M: np.ndarray
    lam: np.ndarray
    bracket: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)

    @property
    def dS(self) -> np.ndarray:
        return increments(self.tree, self.S)

    @property
    def dM(self) -> np.ndarray:
        return increments(self.tree, self.M)

    def lam_dot_M(self) -> np.ndarray:
        return stochastic_integral(self.tree, self.lam, self.M)

    def with_lambda(self, lam) -> Market:
        return build_market(self.tree, self.M, lam)


def build_market(tree: EventTree, M, lam, tol: float = MARTINGALE_TOL) -> Market:
    M = _check_shape(tree, M, "M").copy()
    lam = _check_shape(tree, lam, "lambda").copy()
    lam[tree.is_leaf] = 0.0
    if M[tree.root] != 0.0:
        raise MartingaleViolation(f"M_0 = {M[tree.root]} must be 0", node=tree.root)
    check_martingale(tree, M, tol=tol, name="M")
    bracket = predictable_bracket(tree, M, check=False)
    S = M + stochastic_integral(tree, lam, bracket)
    Z = stochastic_exponential(tree, -stochastic_integral(tree, lam, M))
    for arr in (M, lam, bracket, S, Z):
        arr.setflags(write=False)
    return Market(tree, M, lam, bracket, S, Z)

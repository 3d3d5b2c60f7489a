"""Exponential utility maximization and the minimal entropy martingale measure.

For ``U(x) = -exp(-x)`` the value-to-go factorizes over wealth, so the
optimal policy comes from a node-wise backward recursion

    J(leaf) = 1,   J(v) = min_h  sum_c p(c|v) exp(-h dS(v->c)) J(c),

and ``u(x) = -exp(-x) J(root)``.  The optimal wealth ``X = H . S`` yields the
minimal entropy density ``Zhat_T = exp(-X_T) / E[exp(-X_T)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bmo import entropy_v
from .calculus import Market, increments, martingale_residual, stochastic_integral
from .errors import ArbitrageDetected, InnerSolverDiverged, MartingaleViolation
from .tree import (
    EventTree,
    conditional_expectations,
    expectation,
    leaf_values,
    stopping_node_per_leaf,
)

INNER_TOL = 1e-12
MAX_INNER_ITER = 200


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    return float(m + math.log(np.exp(a - m).sum()))


def minimize_log_mgf(log_w: np.ndarray, s: np.ndarray, tol: float = INNER_TOL,
                     max_iter: int = MAX_INNER_ITER) -> tuple[float, float]:
    """Minimize ``g(h) = log sum_c exp(log_w[c] - h s[c])`` over real ``h``.

    ``g`` is smooth and strictly convex when ``s`` takes both signs.  Newton
    steps are kept inside a sign-change bracket of ``g'`` and replaced by
    bisection whenever they leave it.  Returns ``(h, g(h))``.
    """
    scale = float(np.abs(s).max())
    thresh = tol * scale

    def grad(h):
        a = log_w - h * s
        w = np.exp(a - a.max())
        w /= w.sum()
        m1 = float(np.dot(w, s))
        return -m1, float(np.dot(w, s * s)) - m1 * m1

    lo, hi = -1.0, 1.0
    while grad(lo)[0] >= 0.0:
        hi, lo = lo, 2.0 * lo
        if lo < -1e300:
            raise InnerSolverDiverged("could not bracket the optimal position")
    while grad(hi)[0] <= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise InnerSolverDiverged("could not bracket the optimal position")

    h = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(max_iter):
        g1, g2 = grad(h)
        if abs(g1) <= thresh:
            return h, _logsumexp(log_w - h * s)
        if g1 > 0.0:
            hi = h
        else:
            lo = h
        step = h - g1 / g2 if g2 > 0.0 else math.nan
        h = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(h)):
            return h, _logsumexp(log_w - h * s)
    raise InnerSolverDiverged(
        f"gradient {g1:.3e} above tolerance {thresh:.3e} after {max_iter} iterations")


def check_no_arbitrage(market: Market, tol: float = 0.0):
    """Raise :class:`ArbitrageDetected` at the first node whose increments are one-signed."""
    tree = market.tree
    dS = market.dS
    for v in tree.internal:
        s = dS[list(tree.children[v])]
        if np.all(s == 0.0):
            continue
        if s.max() <= tol or s.min() >= -tol:
            raise ArbitrageDetected(
                f"one-step arbitrage at node {int(v)}: increments {np.round(s, 12).tolist()}",
                node=int(v))


@dataclass(frozen=True, eq=False)
class SolveResult:
    market: Market = field(repr=False)
    J: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    Xhat: np.ndarray = field(repr=False)
    u0: float
    Zhat: np.ndarray = field(repr=False)
    entropy: float
    c: float
    duality_gap: float

    @property
    def tree(self) -> EventTree:
        return self.market.tree

    @property
    def Lexp(self) -> np.ndarray:
        """Opportunity process; equals the value-to-go ``J``."""
        return self.J

    def u(self, x: float) -> float:
        return -math.exp(-x) * float(self.J[self.tree.root])

    def wealth(self, x: float = 0.0) -> np.ndarray:
        return x + self.Xhat

    def to_dict(self) -> dict:
        t = self.tree
        return {
            "u0": self.u0,
            "entropy": self.entropy,
            "c": self.c,
            "duality_gap": self.duality_gap,
            "policy": {str(int(v)): float(self.H[v]) for v in t.internal},
            "J": self.J.tolist(),
            "Xhat": self.Xhat.tolist(),
            "Zhat": self.Zhat.tolist(),
            "Lexp": self.J.tolist(),
        }


def solve_exponential(market: Market, tolerance: float = INNER_TOL) -> SolveResult:
    """Optimal exponential-utility policy, wealth and entropy measure."""
    check_no_arbitrage(market)
    tree = market.tree
    dS = market.dS
    logJ = np.zeros(tree.size)
    H = np.zeros(tree.size)
    for level in reversed(tree.levels[:-1]):
        for v in level:
            kids = list(tree.children[v])
            s = dS[kids]
            log_w = np.log(tree.prob[kids]) + logJ[kids]
            if np.all(s == 0.0):
                logJ[v] = _logsumexp(log_w)
                continue
            H[v], logJ[v] = minimize_log_mgf(log_w, s, tol=tolerance)
    J = np.exp(logJ)
    Xhat = stochastic_integral(tree, H, market.S)
    log_ZT = -Xhat[tree.leaves] - logJ[tree.root]
    ZT = np.exp(log_ZT)
    Zhat = conditional_expectations(tree, ZT)
    entropy = expectation(tree, ZT * log_ZT)
    u0 = -float(J[tree.root])
    for arr in (J, H, Xhat, Zhat):
        arr.setflags(write=False)
    return SolveResult(market=market, J=J, H=H, Xhat=Xhat, u0=u0, Zhat=Zhat,
                       entropy=entropy, c=-1.0 / u0,
                       duality_gap=abs(u0 + math.exp(-entropy)))


def minimal_martingale_measure(market: Market, tol: float = 1e-10) -> np.ndarray:
    """``Z = E(-lam . M)``, after confirming that ``Z S`` is a martingale."""
    tree = market.tree
    ZS = market.Z * market.S
    r = martingale_residual(tree, ZS)
    scale = max(1.0, float(np.abs(increments(tree, ZS)).max(initial=0.0)))
    if np.abs(r).max(initial=0.0) > tol * scale:
        v = int(np.argmax(np.abs(r)))
        raise MartingaleViolation(f"Z S fails the martingale test at node {v}", node=v)
    return market.Z


def dual_value(solve: SolveResult, y: float) -> float:
    """``v(y) = inf_Q E[V(y dQ/dP)] = y H(Qhat|P) + y log y - y``."""
    if y <= 0:
        raise ValueError("dual argument must be positive")
    return y * solve.entropy + y * math.log(y) - y


def relative_entropy_scores(tree: EventTree, Y) -> np.ndarray:
    """``E[(Y_T/Y_v) log(Y_T/Y_v) | v]`` at every node (conditional relative entropy)."""
    Y = np.asarray(Y, dtype=float)
    YT = Y[tree.leaves]
    w = tree.node_prob[tree.leaves]
    out = np.zeros(tree.size)
    for t in range(tree.horizon + 1):
        anc = tree.leaf_ancestors[:, t]
        ratio = YT / Y[anc]
        out += np.bincount(anc, weights=w * ratio * np.log(ratio), minlength=tree.size)
    return out / tree.node_prob


def duality_residual(solve: SolveResult) -> np.ndarray:
    """Node-wise ``-X(v) + log c - (E[(Z_T/Z_v) log(Z_T/Z_v) | v] + log Z(v))``."""
    tree = solve.tree
    rhs = relative_entropy_scores(tree, solve.Zhat) + np.log(solve.Zhat)
    return -solve.Xhat + math.log(solve.c) - rhs


def opportunity_identity_residual(solve: SolveResult, form: str = "entropy") -> np.ndarray:
    """Node-wise gap in the opportunity-process identity for ``L = J``.

    ``form="entropy"`` compares ``-log L`` with the conditional relative
    entropy ``E[(Z_T/Z_v) log(Z_T/Z_v) | v]``.  ``form="V"`` compares it with
    ``E[V(Z_T/Z_v) | v]``; since ``E[Z_T/Z_v | v] = 1`` the two right-hand
    sides differ by exactly 1.
    """
    tree = solve.tree
    lhs = -np.log(solve.J)
    if form == "entropy":
        rhs = relative_entropy_scores(tree, solve.Zhat)
    elif form == "V":
        ZT = solve.Zhat[tree.leaves]
        rhs = np.zeros(tree.size)
        w = tree.node_prob[tree.leaves]
        for t in range(tree.horizon + 1):
            anc = tree.leaf_ancestors[:, t]
            rhs += np.bincount(anc, weights=w * entropy_v(ZT / solve.Zhat[anc]),
                               minlength=tree.size)
        rhs /= tree.node_prob
    else:
        raise ValueError(f"unknown form {form!r}")
    return lhs - rhs


@dataclass(frozen=True, eq=False)
class StoppedWealth:
    process: np.ndarray
    region: frozenset
    stop_node: np.ndarray  # per node: the node at which its path was stopped (or itself)


def stopped_wealth(solve: SolveResult, upper: float, lower: float) -> StoppedWealth:
    """Freeze ``Xhat`` at the first node with ``Xhat >= upper`` or ``Xhat <= lower``.

    Crossing rather than exact hitting defines the stop, and paths that never
    cross stop at their leaf.
    """
    if not (upper > 0 >= lower):
        raise ValueError("need upper > 0 >= lower")
    tree = solve.tree
    X = solve.Xhat
    hit = (X >= upper) | (X <= lower)
    stop = np.arange(tree.size)
    stopped = np.zeros(tree.size, dtype=bool)
    stopped[tree.root] = hit[tree.root]
    for level in tree.levels[1:]:
        par = tree.parent[level]
        inherit = stopped[par]
        stop[level] = np.where(inherit, stop[par], level)
        stopped[level] = inherit | hit[level]
    process = X[stop]
    region = frozenset(int(v) for v in np.unique(stop[tree.leaves]))
    return StoppedWealth(process=process, region=region, stop_node=stop)


def tilted_density(market: Market, solve: SolveResult, sigma: int) -> np.ndarray:
    """Terminal density that follows ``Zhat`` up to ``sigma`` and ``Z`` after it on the cell of ``sigma``."""
    tree = market.tree
    sigma = tree.check_node(sigma)
    ZT = solve.Zhat[tree.leaves].copy()
    below = tree.subtree_leaves(sigma)
    ZT[below] = solve.Zhat[sigma] * market.Z[tree.leaves[below]] / market.Z[sigma]
    return ZT


def tilt_oracle(market: Market, solve: SolveResult, sigma: int, tol: float = 1e-9) -> float:
    """Entropy increase from replacing the entropy measure's continuation at ``sigma``.

    Nonnegative by minimality of the entropy measure.
    """
    tree = market.tree
    ZT = tilted_density(market, solve, sigma)
    Zt = conditional_expectations(tree, ZT)
    r = martingale_residual(tree, Zt * market.S)
    if np.abs(r).max(initial=0.0) > tol * max(1.0, float(np.abs(Zt * market.S).max())):
        raise RuntimeError("tilted density is not a martingale measure for S")
    Zh = leaf_values(tree, solve.Zhat)
    return expectation(tree, ZT * np.log(ZT)) - expectation(tree, Zh * np.log(Zh))

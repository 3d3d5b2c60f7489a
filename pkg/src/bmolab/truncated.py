"""Utility maximization with the truncated utilities ``U_k``.

``U_k`` breaks the wealth factorization of the exponential utility, so the
policy is optimized jointly: terminal wealth is affine in the policy vector,
``W = x + G h`` with ``G[leaf, v] = dS`` on the edge leaving ``v`` toward the
leaf, and the concave objective ``sum_leaf P U_k(W)`` is maximized by damped
Newton ascent with a feasibility-preserving backtracking line search.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import Market, stochastic_integral
from .entropy import check_no_arbitrage
from .errors import InnerSolverDiverged, LineSearchStalled
from .tree import EventTree
from .utility import TruncatedUtility, make_truncated_utility

MAX_NODES = 1500


def gain_matrix(market: Market) -> tuple[np.ndarray, np.ndarray]:
    """``(G, cols)``: terminal gains per unit position at each tradable node."""
    tree = market.tree
    dS = market.dS
    anc = tree.leaf_ancestors
    tradable = [int(v) for v in tree.internal
                if np.any(dS[list(tree.children[v])] != 0.0)]
    col = {v: j for j, v in enumerate(tradable)}
    G = np.zeros((tree.leaves.size, len(tradable)))
    for t in range(tree.horizon):
        src = anc[:, t]
        dst = anc[:, t + 1]
        for i in range(tree.leaves.size):
            j = col.get(int(src[i]))
            if j is not None:
                G[i, j] = dS[dst[i]]
    return G, np.array(tradable, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class TruncatedSolveResult:
    u_nk: float
    policy: np.ndarray = field(repr=False)
    X_nk: np.ndarray = field(repr=False)
    Y_nk_T: np.ndarray = field(repr=False)
    k: int
    x: float
    iterations: int


def _objective(util: TruncatedUtility, w: np.ndarray, W: np.ndarray) -> float:
    return float(np.dot(w, util.U(W)))


def solve_truncated(market: Market, k: int, x: float = 0.0, tolerance: float = 1e-10,
                    max_iter: int = 500, start=None) -> TruncatedSolveResult:
    """Maximize ``E[U_k(x + (H . S)_T)]``.

    ``start`` may carry a feasible initial policy (node-indexed); the default
    is ``H = 0``.  Each accepted step satisfies an Armijo condition, so the
    returned value is never below the value of ``start``.
    """
    util = make_truncated_utility(k)
    if x <= util.barrier:
        raise ValueError(f"initial wealth {x} must exceed {-k - 1}")
    tree: EventTree = market.tree
    if tree.size > MAX_NODES:
        raise ValueError(f"tree has {tree.size} nodes; joint Newton is capped at {MAX_NODES}")
    check_no_arbitrage(market)
    G, cols = gain_matrix(market)
    w = tree.node_prob[tree.leaves]
    h = np.zeros(cols.size)
    if start is not None:
        h = np.asarray(start, dtype=float)[cols].copy()
        if np.any(x + G @ h <= util.barrier):
            h[:] = 0.0
    W = x + G @ h
    f = _objective(util, w, W)
    it = 0
    for it in range(1, max_iter + 1):
        grad = G.T @ (w * util.dU(W))
        if cols.size == 0 or np.abs(grad).max() <= tolerance:
            break
        hess = (G * (w * util.d2U(W))[:, None]).T @ G
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(-hess, grad, rcond=None)
        slope = float(grad @ step)
        if not slope > 0.0:
            step, slope = grad, float(grad @ grad)
        dW = G @ step
        t = 1.0
        neg = dW < 0
        if np.any(neg):
            # keep the terminal wealth strictly inside the barrier
            room = (W[neg] - util.barrier) / -dW[neg]
            t = min(1.0, 0.99 * float(room.min()))
        # near the optimum the predicted gain drops below the resolution of f
        slack = 4.0 * np.finfo(float).eps * max(1.0, abs(f))
        while True:
            W_new = W + t * dW
            f_new = _objective(util, w, W_new)
            if np.isfinite(f_new) and f_new >= f + 1e-4 * t * slope - slack:
                break
            t *= 0.5
            if t < 1e-18:
                if f_new >= f and np.isfinite(f_new):
                    break
                raise LineSearchStalled(
                    f"no ascent along Newton direction (gradient {np.abs(grad).max():.3e})")
        h = h + t * step
        W = W_new
        f = f_new
    else:
        raise InnerSolverDiverged(f"truncated solver did not converge in {max_iter} iterations")
    policy = np.zeros(tree.size)
    policy[cols] = h
    X = stochastic_integral(tree, policy, market.S)
    marg = util.dU(W)
    Y = marg / float(np.dot(w, marg))
    return TruncatedSolveResult(u_nk=f, policy=policy, X_nk=X, Y_nk_T=Y, k=int(k),
                                x=float(x), iterations=it)

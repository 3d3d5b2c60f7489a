"""Direct minimal-entropy computation over the polytope of martingale measures.

Independent of the dynamic program in :mod:`bmolab.entropy`: the unknowns are
the leaf probabilities ``q`` and the problem

    minimize  sum q log(q / p)   s.t.  sum q = 1,
              sum_{leaves below v} q * dS(v -> child on path) = 0  for every v

is solved by an infeasible-start equality-constrained Newton method; the
logarithm acts as the barrier that keeps ``q > 0`` and the line search never
leaves the positive orthant.
"""
from __future__ import annotations

import numpy as np

from .calculus import Market

MAX_LEAVES = 4096


def constraint_matrix(market: Market) -> tuple[np.ndarray, np.ndarray]:
    tree = market.tree
    dS = market.dS
    anc = tree.leaf_ancestors
    rows = [np.ones(tree.leaves.size)]
    for v in tree.internal:
        t = tree.time[v]
        mask = anc[:, t] == v
        row = np.where(mask, dS[anc[:, t + 1]], 0.0)
        if np.any(row != 0.0):
            rows.append(row)
    A = np.array(rows)
    b = np.zeros(A.shape[0])
    b[0] = 1.0
    return A, b


def polytope_dimension(market: Market, tol: float = 1e-10) -> int:
    """Dimension of the set of martingale measures (0 iff the market is complete)."""
    A, _ = constraint_matrix(market)
    return int(A.shape[1] - np.linalg.matrix_rank(A, tol=tol))


def entropy_polytope_oracle(market: Market, tol: float = 1e-13, max_iter: int = 200,
                            return_measure: bool = False):
    tree = market.tree
    if tree.leaves.size > MAX_LEAVES:
        raise ValueError(f"oracle is limited to {MAX_LEAVES} leaves")
    A, b = constraint_matrix(market)
    p = tree.node_prob[tree.leaves]
    q = p.copy()

    def f(q):
        return float(np.dot(q, np.log(q / p)))

    nu = np.zeros(A.shape[0])
    feas_tol = 1e-12 * max(1.0, float(np.abs(A).max()))

    def residual(q, nu):
        dual = np.log(q / p) + 1.0 + A.T @ nu
        return float(np.sqrt(np.dot(dual, dual) + np.sum((A @ q - b) ** 2)))

    for _ in range(max_iter):
        g = np.log(q / p) + 1.0
        r = A @ q - b
        # KKT: [diag(1/q) A^T; A 0] [dq; nu+] = [-g; -r], eliminated via diag(q)
        K = (A * q) @ A.T
        nu_plus, *_ = np.linalg.lstsq(K, r - A @ (q * g), rcond=None)
        dq = -q * (g + A.T @ nu_plus)
        dnu = nu_plus - nu
        if float(np.dot(dq * dq, 1.0 / q)) < tol and np.abs(r).max() < feas_tol:
            break
        t = 1.0
        neg = dq < 0
        if np.any(neg):
            t = min(1.0, 0.99 * float((q[neg] / -dq[neg]).min()))
        r0 = residual(q, nu)
        while t > 1e-16:
            qn = q + t * dq
            if np.all(qn > 0) and residual(qn, nu + t * dnu) <= (1.0 - 0.01 * t) * r0:
                break
            t *= 0.5
        if t <= 1e-16:
            # no further progress in floating point; accept if already converged
            if r0 < 1e3 * feas_tol:
                break
            raise RuntimeError("polytope Newton stalled away from the optimum")
        q = q + t * dq
        nu = nu + t * dnu
    else:
        raise RuntimeError("polytope Newton did not converge")
    value = f(q)
    if return_measure:
        return value, q
    return value

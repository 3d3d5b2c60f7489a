"""Named fixture markets and the seeded random corpus."""
from __future__ import annotations

import math

import numpy as np

from .calculus import Market, build_market, increments
from .tree import EventTree, binomial_tree, regular_tree

CORPUS_VERSION = 1
DEFAULT_SEED = 20240601
JUMP_CAP = 0.9


def fix_b(theta: float = 0.6) -> Market:
    """One-period binomial, ``dM = +-1`` with probability 1/2 each."""
    tree = binomial_tree(1)
    return build_market(tree, [0.0, 1.0, -1.0], [theta, 0.0, 0.0])


def fix_t(theta: float = 0.5) -> Market:
    """One-period trinomial, ``dM in {+1, 0, -1}`` with probability 1/3 each."""
    tree = regular_tree(1, [1 / 3, 1 / 3, 1 / 3])
    return build_market(tree, [0.0, 1.0, 0.0, -1.0], [theta, 0.0, 0.0, 0.0])


def fix_2b(first: float = 0.05, last: float = 0.8) -> Market:
    """Two-period binomial with a small first-step and a large last-step drift."""
    tree = binomial_tree(2)
    dM = np.zeros(tree.size)
    for v in tree.edges:
        kids = tree.children[tree.parent[v]]
        dM[v] = 1.0 if v == kids[0] else -1.0
    M = tree.accumulate(dM)
    lam = np.zeros(tree.size)
    lam[tree.root] = first
    lam[tree.levels[1]] = last
    return build_market(tree, M, lam)


def skewed_binomial(depth: int = 3, lam: float = 5.0, p_up: float = 0.9) -> Market:
    """Repeated rare-crash steps: ``dM = 1 - p_up`` up, ``-p_up`` down.

    The optimal exponential wealth loses about one unit per crash at the
    default drift, so truncations ``U_k`` with small ``k`` bind.
    """
    tree = binomial_tree(depth, p_up)
    dM = np.zeros(tree.size)
    for v in tree.edges:
        kids = tree.children[tree.parent[v]]
        dM[v] = 1.0 - p_up if v == kids[0] else -p_up
    lam_v = np.zeros(tree.size)
    lam_v[tree.internal] = lam
    return build_market(tree, tree.accumulate(dM), lam_v)


def random_tree(rng: np.random.Generator, depth: int, max_branching: int = 3,
                branch_weights=None, min_prob: float = 0.05) -> EventTree:
    choices = np.arange(1, max_branching + 1)
    if branch_weights is None:
        branch_weights = np.ones(max_branching)
        branch_weights[0] = 0.35
    wts = np.asarray(branch_weights, dtype=float)
    wts = wts / wts.sum()
    parents, probs = [-1], [1.0]
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for v in frontier:
            k = int(rng.choice(choices, p=wts))
            p = rng.dirichlet(2.0 * np.ones(k)) if k > 1 else np.ones(1)
            p = np.maximum(p, min_prob)
            p /= p.sum()
            p[-1] = 1.0 - p[:-1].sum()
            for pc in p:
                parents.append(v)
                probs.append(float(pc))
                nxt.append(len(parents) - 1)
        frontier = nxt
    return EventTree(parents, probs)


MIN_SPLIT = 0.1


def random_martingale(rng: np.random.Generator, tree: EventTree) -> np.ndarray:
    """Centered random increments; unary steps get zero increment.

    Splits whose largest increment is below ``MIN_SPLIT`` are redrawn: a tiny
    split forces a huge drift under the jump cap, which amplifies rounding in
    ``M`` beyond the martingale tolerance.
    """
    dM = np.zeros(tree.size)
    for v in tree.internal:
        kids = list(tree.children[v])
        if len(kids) == 1:
            continue
        while True:
            x = rng.normal(size=len(kids)) * rng.uniform(0.5, 1.5)
            x -= np.dot(tree.prob[kids], x)
            if np.abs(x).max() >= MIN_SPLIT:
                break
        dM[kids] = x
    return tree.accumulate(dM)


def random_lambda(rng: np.random.Generator, tree: EventTree, M, jump_cap: float = JUMP_CAP,
                  ) -> np.ndarray:
    """Drift with ``|lam(v) dM| <= jump_cap`` on every edge, so ``|d(lam . M)| < 1``."""
    dM = increments(tree, M)
    lam = np.zeros(tree.size)
    for v in tree.internal:
        top = np.abs(dM[list(tree.children[v])]).max()
        if top > 0:
            lam[v] = rng.uniform(-1.0, 1.0) * jump_cap / top
    return lam


def random_market(rng: np.random.Generator, max_depth: int = 4, max_branching: int = 3,
                  depth: int | None = None) -> Market:
    depth = int(rng.integers(1, max_depth + 1)) if depth is None else depth
    tree = random_tree(rng, depth, max_branching)
    M = random_martingale(rng, tree)
    return build_market(tree, M, random_lambda(rng, tree, M))


def corpus(seed: int = DEFAULT_SEED, size: int = 100, max_depth: int = 4,
           max_branching: int = 3) -> list[Market]:
    """Seeded list of random admissible markets (depth <= 4, branching <= 3)."""
    rng = np.random.default_rng([CORPUS_VERSION, seed])
    return [random_market(rng, max_depth, max_branching) for _ in range(size)]


def binomial_closed_form(theta: float) -> dict:
    """Exact one-period binomial solution for ``dM = +-1``, ``p = 1/2``."""
    h = 0.5 * math.log((1 + theta) / (1 - theta))
    q_up = (1 - theta) / 2
    H = q_up * math.log(2 * q_up) + (1 - q_up) * math.log(2 * (1 - q_up))
    return {
        "h": h,
        "q_up": q_up,
        "entropy": H,
        "u0": -math.exp(-H),
        "Xhat_T": np.array([h * (1 + theta), h * (theta - 1)]),
        "Z_T": np.array([1 - theta, 1 + theta]),
    }

"""Finite filtered probability spaces encoded as event trees.

A tree with uniform horizon ``T`` stands for ``(Omega, F, P, (F_t))``: the
nodes at depth ``t`` are the atoms of ``F_t`` and the leaves are the states of
the world.  Processes are plain ``numpy`` arrays indexed by node id:

* an *adapted process* carries one value per node;
* a *predictable control* carries one value per non-leaf node, used on the
  step leaving that node (leaf entries are ignored and kept at zero);
* a *stopping region* is a set of nodes meeting every root-to-leaf path
  exactly once.
"""
from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from itertools import product

import numpy as np

from .errors import TreeError

PROB_SUM_TOL = 1e-12


class EventTree:
    """Immutable rooted tree with strictly positive transition probabilities.

    Parameters
    ----------
    parents
        ``parents[v]`` is the parent id of node ``v``; the root has ``-1``.
    probs
        ``probs[v]`` is the conditional probability ``p(v | parent(v))``;
        the root entry is ignored and stored as 1.
    """

    def __init__(self, parents: Sequence[int], probs: Sequence[float]):
        parent = np.asarray(parents, dtype=np.int64)
        prob = np.asarray(probs, dtype=float).copy()
        n = parent.size
        if n == 0:
            raise TreeError("tree has no nodes")
        if prob.shape != parent.shape:
            raise TreeError("parents and probs have different lengths")
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1:
            raise TreeError(f"expected exactly one root, found {roots.size}")
        root = int(roots[0])
        if np.any(parent >= n):
            bad = int(np.flatnonzero(parent >= n)[0])
            raise TreeError(f"node {bad}: parent id {parent[bad]} out of range")
        prob[root] = 1.0

        children: list[list[int]] = [[] for _ in range(n)]
        for v in range(n):
            if v != root:
                children[parent[v]].append(v)

        # breadth-first walk fixes depth and detects cycles / detached nodes
        time = np.full(n, -1, dtype=np.int64)
        time[root] = 0
        order = [root]
        head = 0
        while head < len(order):
            v = order[head]
            head += 1
            for c in children[v]:
                time[c] = time[v] + 1
                order.append(c)
        if len(order) != n:
            missing = sorted(set(range(n)) - set(order))
            raise TreeError(f"nodes not reachable from the root: {missing[:10]}")

        leaves = np.array([v for v in order if not children[v]], dtype=np.int64)
        horizon = int(time[leaves[0]])
        if np.any(time[leaves] != horizon):
            bad = int(leaves[np.flatnonzero(time[leaves] != horizon)[0]])
            raise TreeError(
                f"leaf {bad} at depth {time[bad]}, expected uniform horizon {horizon}"
            )

        for v in order:
            kids = children[v]
            if not kids:
                continue
            p = prob[kids]
            if np.any(p <= 0.0) or np.any(p > 1.0):
                raise TreeError(f"node {v}: transition probabilities must lie in (0, 1]")
            if abs(p.sum() - 1.0) > PROB_SUM_TOL:
                raise TreeError(
                    f"node {v}: transition probabilities sum to {p.sum():.15g}, not 1"
                )

        self.size = n
        self.root = root
        self.horizon = horizon
        self.parent = parent
        self.prob = prob
        self.time = time
        self.children = [tuple(k) for k in children]
        self.order = np.array(order, dtype=np.int64)
        self.leaves = leaves
        self.is_leaf = np.zeros(n, dtype=bool)
        self.is_leaf[leaves] = True
        self.internal = np.array([v for v in order if children[v]], dtype=np.int64)
        self.levels = [self.order[time[self.order] == t] for t in range(horizon + 1)]
        self.edges = self.order[1:]  # non-root nodes, each names the edge into it

        node_prob = np.empty(n)
        node_prob[root] = 1.0
        for v in order[1:]:
            node_prob[v] = node_prob[parent[v]] * prob[v]
        self.node_prob = node_prob
        # leaf-to-ancestor lookup: anc[i, t] is the depth-t ancestor of leaf i
        anc = np.empty((leaves.size, horizon + 1), dtype=np.int64)
        anc[:, horizon] = leaves
        for t in range(horizon - 1, -1, -1):
            anc[:, t] = parent[anc[:, t + 1]]
        self.leaf_ancestors = anc

        for arr in (parent, prob, time, self.order, leaves, self.is_leaf,
                    self.internal, node_prob, anc):
            arr.setflags(write=False)

    @classmethod
    def from_children(cls, children: Sequence[Sequence[tuple[int, float]]]) -> EventTree:
        """Build from an adjacency list ``children[v] = [(child, prob), ...]``."""
        n = len(children)
        parents = [-1] * n
        probs = [1.0] * n
        for v, kids in enumerate(children):
            for c, p in kids:
                if parents[c] != -1:
                    raise TreeError(f"node {c} has two parents")
                parents[c] = v
                probs[c] = p
        return cls(parents, probs)

    def __repr__(self) -> str:
        return (f"EventTree(nodes={self.size}, horizon={self.horizon}, "
                f"leaves={self.leaves.size})")

    def check_node(self, node: int) -> int:
        if not (0 <= int(node) < self.size):
            raise TreeError(f"unknown node id {node}")
        return int(node)

    def path(self, node: int) -> list[int]:
        """Nodes from the root down to ``node`` inclusive."""
        v = self.check_node(node)
        out = [v]
        while self.parent[v] >= 0:
            v = int(self.parent[v])
            out.append(v)
        return out[::-1]

    def subtree_leaves(self, node: int) -> np.ndarray:
        """Positions (into ``self.leaves``) of the leaves below ``node``."""
        v = self.check_node(node)
        return np.flatnonzero(self.leaf_ancestors[:, self.time[v]] == v)

    def one_step_mean(self, values: np.ndarray) -> np.ndarray:
        """``sum_c p(c|v) values[c]`` at every non-leaf ``v`` (zero at leaves)."""
        e = self.edges
        return np.bincount(self.parent[e], weights=self.prob[e] * values[e],
                           minlength=self.size)

    def accumulate(self, edge_values: np.ndarray) -> np.ndarray:
        """Path sums: ``out[root] = 0`` and ``out[v] = out[parent] + edge_values[v]``."""
        out = np.zeros(self.size)
        for level in self.levels[1:]:
            out[level] = out[self.parent[level]] + edge_values[level]
        return out

    def max_along_paths(self, values: np.ndarray) -> np.ndarray:
        """Running maximum from the root: ``out[v] = max(values on path to v)``."""
        out = np.array(values, dtype=float)
        for level in self.levels[1:]:
            out[level] = np.maximum(out[level], out[self.parent[level]])
        return out


def leaf_values(tree: EventTree, X) -> np.ndarray:
    """Terminal values of ``X``; accepts a node-indexed or a leaf-indexed array."""
    X = np.asarray(X, dtype=float)
    if X.shape == (tree.size,):
        return X[tree.leaves]
    if X.shape == (tree.leaves.size,):
        return X
    raise TreeError(
        f"expected {tree.size} node values or {tree.leaves.size} leaf values, "
        f"got shape {X.shape}"
    )


def node_probability(tree: EventTree, node: int) -> float:
    return float(tree.node_prob[tree.check_node(node)])


def conditional_expectations(tree: EventTree, X) -> np.ndarray:
    """``E[X_T | F_t]`` evaluated at every node, by backward recursion."""
    out = np.zeros(tree.size)
    out[tree.leaves] = leaf_values(tree, X)
    for level in reversed(tree.levels[1:]):
        out += np.bincount(tree.parent[level], weights=tree.prob[level] * out[level],
                           minlength=tree.size)
    return out


def conditional_expectation(tree: EventTree, X, node: int) -> float:
    """Probability-weighted mean of the terminal values below ``node``."""
    v = tree.check_node(node)
    idx = tree.subtree_leaves(v)
    w = tree.node_prob[tree.leaves[idx]]
    return float(np.dot(w, leaf_values(tree, X)[idx]) / tree.node_prob[v])


def expectation(tree: EventTree, X) -> float:
    return float(np.dot(tree.node_prob[tree.leaves], leaf_values(tree, X)))


def sup_over_stopping_times(tree: EventTree, score) -> float:
    """Supremum over stopping times of the essential sup of the stopped score.

    Every node lies in some stopping region and all nodes have positive
    probability, so this is just the maximum over nodes.
    """
    score = np.asarray(score, dtype=float)
    if score.shape != (tree.size,):
        raise TreeError("score must carry one value per node")
    return float(score.max())


def enumerate_stopping_regions(tree: EventTree, node: int | None = None) -> Iterator[frozenset]:
    """All antichain covers of the subtree below ``node`` (default: root)."""
    v = tree.root if node is None else tree.check_node(node)
    yield frozenset([v])
    kids = tree.children[v]
    if not kids:
        return
    sub = [list(enumerate_stopping_regions(tree, c)) for c in kids]
    for combo in product(*sub):
        yield frozenset().union(*combo)


def validate_stopping_region(tree: EventTree, nodes: Iterable[int]) -> bool:
    """True iff every root-to-leaf path meets ``nodes`` exactly once."""
    try:
        marked = np.zeros(tree.size, dtype=bool)
        for v in nodes:
            marked[tree.check_node(v)] = True
    except (TreeError, TypeError, ValueError):
        return False
    hits = marked[tree.leaf_ancestors].sum(axis=1)
    return bool(np.all(hits == 1))


def stopping_node_per_leaf(tree: EventTree, region: Iterable[int]) -> np.ndarray:
    """For each leaf, the node of ``region`` on its path."""
    marked = np.zeros(tree.size, dtype=bool)
    marked[list(region)] = True
    hit = marked[tree.leaf_ancestors]
    if not np.all(hit.sum(axis=1) == 1):
        raise TreeError("not a stopping region")
    return tree.leaf_ancestors[np.arange(tree.leaves.size), hit.argmax(axis=1)]


def prob_metric(tree: EventTree, X, Y) -> float:
    """``E[min(|X - Y|, 1)]``, a metric for convergence in probability."""
    diff = np.abs(leaf_values(tree, X) - leaf_values(tree, Y))
    return expectation(tree, np.minimum(diff, 1.0))


def regular_tree(horizon: int, probs: Sequence[float]) -> EventTree:
    """Recombination-free tree where every node has ``len(probs)`` children."""
    probs = list(probs)
    parents = [-1]
    cprob = [1.0]
    frontier = [0]
    for _ in range(horizon):
        nxt = []
        for v in frontier:
            for p in probs:
                parents.append(v)
                cprob.append(p)
                nxt.append(len(parents) - 1)
        frontier = nxt
    return EventTree(parents, cprob)


def binomial_tree(horizon: int, p_up: float = 0.5) -> EventTree:
    """Binary tree; the first child of each node is the up move."""
    return regular_tree(horizon, [p_up, 1.0 - p_up])

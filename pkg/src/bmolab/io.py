"""JSON market and family specifications.

Schema::

    {
      "horizon": 1,                              # optional, checked if given
      "nodes": [
        {"id": 0, "parent": null, "prob": 1.0, "M": 0.0, "lambda": 0.6},
        {"id": 1, "parent": 0,    "prob": 0.5, "M": 1.0},
        ...
      ],
      "family": {                                # optional
        "kind": "multiplicative" | "additive" | "last_step_blowup",
        "epsilon": "1/n" | "1/n^2" | "1/sqrt(n)",
        "direction": {"<id>": g, ...}           # additive only
      }
    }

Node ids are arbitrary integers or strings; ``lambda`` defaults to 0 and is
ignored on leaves.  Array positions follow the order of ``nodes``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calculus import Market, build_market, martingale_residual
from .errors import BmoLabError, SpecError
from .stability import (EPSILON_SCHEDULES, MarketFamily, additive_family,
                        last_step_blowup_family, multiplicative_family)
from .tree import PROB_SUM_TOL, EventTree

FAMILY_SPEC_KINDS = ("multiplicative", "additive", "last_step_blowup")


@dataclass
class ParsedSpec:
    market: Market
    ids: list = field(default_factory=list)
    family: MarketFamily | None = None

    def node_id(self, v: int):
        return self.ids[v]


def _number(node: dict, key: str, where: str, problems: list, default=math.nan,
            required: bool = True):
    if key not in node:
        if required:
            problems.append(f"{where}: missing field '{key}'")
        return default
    val = node[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        problems.append(f"{where}: field '{key}' must be a finite number, got {val!r}")
        return default
    return float(val)


def _tree_problems(ids, parent, prob) -> list[str]:
    """Every structural violation, by node id, without stopping at the first."""
    problems = []
    n = len(ids)
    children = [[] for _ in range(n)]
    roots = [v for v in range(n) if parent[v] < 0]
    if len(roots) != 1:
        problems.append(f"expected exactly one root, found {len(roots)}"
                        + (f": {[ids[v] for v in roots]}" if roots else ""))
    for v in range(n):
        if parent[v] >= 0:
            children[parent[v]].append(v)
    if len(roots) == 1:
        depth = {roots[0]: 0}
        stack = [roots[0]]
        while stack:
            v = stack.pop()
            for c in children[v]:
                depth[c] = depth[v] + 1
                stack.append(c)
        detached = [ids[v] for v in range(n) if v not in depth]
        if detached:
            problems.append(f"nodes not reachable from the root: {detached}")
        leaf_depths = {depth[v] for v in depth if not children[v]}
        if len(leaf_depths) > 1:
            top = max(leaf_depths)
            short = [ids[v] for v in depth if not children[v] and depth[v] != top]
            problems.append(f"leaves {short} end before horizon {top}")
    for v in range(n):
        kids = children[v]
        if not kids:
            continue
        p = np.array([prob[c] for c in kids])
        bad = [ids[c] for c in kids if not (0.0 < prob[c] <= 1.0)]
        if bad:
            problems.append(f"node {ids[v]}: child probabilities of {bad} outside (0, 1]")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            problems.append(f"node {ids[v]}: child probabilities sum to {p.sum():.15g}, not 1")
    return problems


def parse_spec_dict(data) -> ParsedSpec:
    if not isinstance(data, dict):
        raise SpecError("top level must be a JSON object")
    nodes = data.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise SpecError("field 'nodes' must be a nonempty list")
    problems: list[str] = []
    ids = []
    for i, node in enumerate(nodes):
        if not isinstance(node, dict) or "id" not in node:
            problems.append(f"nodes[{i}]: missing field 'id'")
            ids.append(None)
        else:
            ids.append(node["id"])
    seen = {}
    for i, nid in enumerate(ids):
        if nid is None:
            continue
        if isinstance(nid, (list, dict, float)) or isinstance(nid, bool):
            problems.append(f"nodes[{i}]: id must be an integer or string, got {nid!r}")
        elif nid in seen:
            problems.append(f"node {nid}: duplicate id (nodes[{seen[nid]}] and nodes[{i}])")
        else:
            seen[nid] = i
    if problems:
        raise SpecError("; ".join(problems))

    n = len(nodes)
    parent = np.full(n, -1, dtype=np.int64)
    prob = np.ones(n)
    M = np.zeros(n)
    lam = np.zeros(n)
    for i, node in enumerate(nodes):
        where = f"node {ids[i]}"
        par = node.get("parent", "<missing>")
        if par == "<missing>":
            problems.append(f"{where}: missing field 'parent'")
        elif par is not None:
            if par not in seen:
                problems.append(f"{where}: unknown parent {par!r}")
            else:
                parent[i] = seen[par]
        if par is not None:
            prob[i] = _number(node, "prob", where, problems)
        M[i] = _number(node, "M", where, problems)
        lam[i] = _number(node, "lambda", where, problems, default=0.0, required=False)
    if problems:
        raise SpecError("; ".join(problems))
    problems.extend(_tree_problems(ids, parent, prob))
    if problems:
        raise SpecError("; ".join(problems))

    tree = EventTree(parent, prob)
    if "horizon" in data and data["horizon"] != tree.horizon:
        problems.append(f"declared horizon {data['horizon']!r} but tree depth is {tree.horizon}")
    if M[tree.root] != 0.0:
        problems.append(f"node {ids[tree.root]}: M must start at 0, got {M[tree.root]!r}")
    res = martingale_residual(tree, M)
    scale = max(1.0, float(np.abs(M).max()))
    for v in tree.internal:
        if abs(res[v]) > 1e-12 * scale:
            problems.append(f"node {ids[v]}: M fails the martingale property "
                            f"(one-step drift {res[v]:.3e})")
    lam[tree.leaves] = 0.0
    dM = M - M[np.where(tree.parent < 0, tree.root, tree.parent)]
    for c in tree.edges:
        jump = lam[tree.parent[c]] * dM[c]
        if not jump < 1.0:
            problems.append(f"edge {ids[tree.parent[c]]} -> {ids[c]}: density factor "
                            f"1 - lambda dM = {1.0 - jump:.6g} is not positive")
    if problems:
        raise SpecError("; ".join(problems))
    try:
        market = build_market(tree, M, lam)
    except BmoLabError as exc:
        raise SpecError(str(exc)) from exc

    family = None
    if "family" in data:
        family = _parse_family(data["family"], market, seen)
    return ParsedSpec(market=market, ids=ids, family=family)


def _parse_family(block, market: Market, seen: dict) -> MarketFamily:
    if not isinstance(block, dict):
        raise SpecError("field 'family' must be an object")
    kind = block.get("kind")
    if kind not in FAMILY_SPEC_KINDS:
        raise SpecError(f"family: kind must be one of {list(FAMILY_SPEC_KINDS)}, got {kind!r}")
    eps = block.get("epsilon", "1/n")
    if kind != "last_step_blowup" and eps not in EPSILON_SCHEDULES:
        raise SpecError(f"family: epsilon must be one of {list(EPSILON_SCHEDULES)}, got {eps!r}")
    try:
        if kind == "multiplicative":
            return multiplicative_family(market, eps)
        if kind == "additive":
            raw = block.get("direction")
            if not isinstance(raw, dict):
                raise SpecError("family: additive kind needs a 'direction' object keyed by node id")
            g = np.zeros(market.tree.size)
            lookup = {str(k): v for k, v in seen.items()}
            for key, val in raw.items():
                if str(key) not in lookup:
                    raise SpecError(f"family: direction names unknown node {key!r}")
                g[lookup[str(key)]] = float(val)
            return additive_family(market, g, eps)
        return last_step_blowup_family(market)
    except ValueError as exc:
        raise SpecError(f"family: {exc}") from exc


def parse_spec(path) -> ParsedSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return parse_spec_dict(data)


def market_to_dict(market: Market, ids=None) -> dict:
    tree = market.tree
    ids = list(range(tree.size)) if ids is None else list(ids)
    nodes = []
    for v in tree.order:
        v = int(v)
        entry = {"id": ids[v],
                 "parent": None if v == tree.root else ids[tree.parent[v]],
                 "prob": float(tree.prob[v]),
                 "M": float(market.M[v])}
        if not tree.is_leaf[v]:
            entry["lambda"] = float(market.lam[v])
        nodes.append(entry)
    return {"horizon": tree.horizon, "nodes": nodes}


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, fixed float repr, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(_plain(v) for v in obj)
    return obj

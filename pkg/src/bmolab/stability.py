"""Experiments on sequences of markets ``S^n = M + int lam^n d<M>``.

On one fixed finite tree every quantity depends continuously on ``lam``, so
the tables here measure rates and constants.  Failure of convergence without
uniform integrability is exhibited across trees of growing depth
(:func:`complete_market_necessity`), which changes the underlying space with
``n``; those reports are labelled ``cross-basis``.
"""
from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .bmo import bmo_norm, entropy_v, llogl_constant
from .calculus import Market, build_market, stochastic_integral
from .errors import NonpositiveExponential
from .entropy import SolveResult, solve_exponential, stopped_wealth
from .polytope import polytope_dimension
from .tree import EventTree, expectation, prob_metric
from .truncated import solve_truncated

FAMILY_KINDS = ("additive", "multiplicative", "last_step_blowup", "custom")

EPSILON_SCHEDULES: dict[str, Callable[[int], float]] = {
    "1/n": lambda n: 1.0 / n,
    "1/n^2": lambda n: 1.0 / n ** 2,
    "1/sqrt(n)": lambda n: 1.0 / math.sqrt(n),
}


@dataclass(frozen=True, eq=False)
class MarketFamily:
    """Markets ``n = n_min, n_min + 1, ...`` on a shared tree, plus the limit market."""

    tree: EventTree
    M: np.ndarray
    lam_limit: np.ndarray
    generator: Callable[[int], np.ndarray] = field(repr=False)
    kind: str = "custom"
    n_min: int = 1
    description: str = ""

    def lam(self, n: int) -> np.ndarray:
        if n < self.n_min:
            raise ValueError(f"family starts at n = {self.n_min}, got {n}")
        return np.asarray(self.generator(n), dtype=float)

    def market(self, n: int) -> Market:
        return build_market(self.tree, self.M, self.lam(n))

    def limit_market(self) -> Market:
        return build_market(self.tree, self.M, self.lam_limit)


def first_admissible(tree: EventTree, M, generator: Callable[[int], np.ndarray],
                     limit: int = 10 ** 4) -> int:
    """Smallest ``n >= 1`` whose market has a positive density process."""
    for n in range(1, limit + 1):
        try:
            build_market(tree, M, generator(n))
        except NonpositiveExponential:
            continue
        return n
    raise ValueError(f"no admissible member up to n = {limit}")


def multiplicative_family(base: Market, epsilon: str = "1/n",
                          n_min: int | None = None) -> MarketFamily:
    eps = EPSILON_SCHEDULES[epsilon]
    lam = np.array(base.lam)

    def gen(n):
        return (1.0 + eps(n)) * lam

    if n_min is None:
        n_min = first_admissible(base.tree, base.M, gen)
    return MarketFamily(base.tree, np.array(base.M), lam, gen, "multiplicative", n_min,
                        f"lam^n = (1 + {epsilon}) lam")


def additive_family(base: Market, direction, epsilon: str = "1/n",
                    n_min: int | None = None) -> MarketFamily:
    eps = EPSILON_SCHEDULES[epsilon]
    lam = np.array(base.lam)
    g = np.asarray(direction, dtype=float)

    def gen(n):
        return lam + eps(n) * g

    if n_min is None:
        n_min = first_admissible(base.tree, base.M, gen)
    return MarketFamily(base.tree, np.array(base.M), lam, gen, "additive", n_min,
                        f"lam^n = lam + {epsilon} g")


def last_step_blowup_family(base: Market) -> MarketFamily:
    """Last-step drift pushed toward the edge of admissibility: ``1 - lam dM -> 0``.

    The limit sits on the boundary, where ``Z`` vanishes on some branch, so it
    is reported as ``lam^n`` at ``n = 10^6`` rather than built.
    """
    tree = base.tree
    dM = base.dM
    lam = np.array(base.lam)
    last = tree.levels[tree.horizon - 1]
    edge = np.zeros(tree.size)
    for v in last:
        top = dM[list(tree.children[v])].max()
        edge[v] = 1.0 / top if top > 0 else 0.0

    def gen(n):
        out = lam.copy()
        out[last] = (1.0 - 1.0 / (n + 1)) * edge[last]
        return out

    return MarketFamily(tree, np.array(base.M), gen(10 ** 6), gen, "last_step_blowup", 1,
                        "last-step lam^n -> admissibility boundary")


def expected_v_terminal(market: Market) -> float:
    return expectation(market.tree, entropy_v(market.Z[market.tree.leaves]))


def assumption1_values(family: MarketFamily, n_max: int) -> list[float]:
    return [expected_v_terminal(family.market(n)) for n in range(family.n_min, n_max + 1)]


def assumption1_report(family: MarketFamily, n_max: int) -> float:
    """``sup_{n <= n_max} E[V(Z^n_T)]``.

    Atoms of a fixed finite space have probability bounded below, so uniform
    integrability of ``{V(Z^n_T)}`` is equivalent to this supremum staying
    finite as ``n_max`` grows.
    """
    return max(assumption1_values(family, n_max))


def stopped_at_time(tree: EventTree, X, j: int) -> np.ndarray:
    """``X`` frozen at deterministic time ``j``."""
    X = np.asarray(X, dtype=float)
    out = X.copy()
    for t in range(j + 1, tree.horizon + 1):
        lv = tree.levels[t]
        out[lv] = out[tree.parent[lv]]
    return out


@dataclass(frozen=True)
class Assumption2Report:
    times: list
    ns: list
    matrix: np.ndarray  # rows: times j, columns: markets n
    row_sup: np.ndarray


def assumption2_report(family: MarketFamily, n_max: int,
                       times: Sequence[int] | None = None) -> Assumption2Report:
    """``||(lam^n . M)^{j}||_bmo2`` for deterministic times ``j`` and ``n <= n_max``."""
    tree = family.tree
    times = list(range(1, tree.horizon + 1)) if times is None else list(times)
    ns = list(range(family.n_min, n_max + 1))
    mat = np.zeros((len(times), len(ns)))
    for b, n in enumerate(ns):
        R = stochastic_integral(tree, family.lam(n), family.M)
        for a, j in enumerate(times):
            mat[a, b] = bmo_norm(tree, stopped_at_time(tree, R, j), 2)
    return Assumption2Report(times, ns, mat, mat.max(axis=1))


@dataclass
class ConvergenceTable:
    rows: list[dict]
    x: float
    tolerance: float
    flags: dict
    u_limit: float = math.nan
    columns: tuple = ("n", "u", "u_gap", "d_Z", "d_X", "sup_EV", "bmo2", "K_LLogL_Z",
                      "K_LLogL_Zhat")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([r["n"]] + [repr(float(r[c])) for c in self.columns[1:]])
        return buf.getvalue()

    def summary(self) -> dict:
        """Flags plus tail extremes of ``u^n``; neither one-sided limit claim is asserted."""
        u = self.column("u")
        tail = u[len(u) // 2:]
        return {"x": self.x, "tolerance": self.tolerance, "rows": len(self.rows),
                "u_limit": self.u_limit, "flags": self.flags,
                "u_tail_min": float(tail.min()) if tail.size else None,
                "u_tail_max": float(tail.max()) if tail.size else None,
                "last": self.rows[-1] if self.rows else None}

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def _nonincreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= 0.0))


def convergence_experiment(family: MarketFamily, x: float, n_list: Sequence[int],
                           tolerance: float = 1e-4) -> ConvergenceTable:
    limit = family.limit_market()
    lim = solve_exponential(limit)
    tree = family.tree
    ZT_inf = limit.Z[tree.leaves]
    XT_inf = x + lim.Xhat[tree.leaves]
    rows = []
    sup_ev = -math.inf
    for n in n_list:
        try:
            m = family.market(n)
            s = solve_exponential(m)
        except Exception as exc:  # noqa: BLE001 - re-raised with the market index
            raise type(exc)(f"market n = {n}: {exc}") from exc
        sup_ev = max(sup_ev, expected_v_terminal(m))
        rows.append({
            "n": int(n),
            "u": s.u(x),
            "u_gap": abs(s.u(x) - lim.u(x)),
            "d_Z": prob_metric(tree, m.Z[tree.leaves], ZT_inf),
            "d_X": prob_metric(tree, x + s.Xhat[tree.leaves], XT_inf),
            "sup_EV": sup_ev,
            "bmo2": bmo_norm(tree, m.lam_dot_M(), 2),
            "K_LLogL_Z": llogl_constant(tree, m.Z),
            "K_LLogL_Zhat": llogl_constant(tree, s.Zhat),
        })
    table = ConvergenceTable(rows, float(x), tolerance, {}, lim.u(x))
    for col in ("u_gap", "d_Z", "d_X"):
        vals = table.column(col)
        table.flags[f"{col}_below_tol"] = bool(vals[-1] < tolerance) if vals.size else False
        table.flags[f"{col}_nonincreasing"] = _nonincreasing(vals)
    return table


@dataclass(frozen=True)
class UniformApproxMatrix:
    ns: list
    ks: list
    u_nk: np.ndarray  # rows n, columns k
    u_n: np.ndarray
    sup_gap: np.ndarray  # per k: sup_n (u^n - u^(n,k)), which is >= 0 up to rounding
    sup_abs_gap: np.ndarray

    @property
    def nonincreasing(self) -> bool:
        return _nonincreasing(self.sup_gap)


def uniform_approx_matrix(family: MarketFamily, x: float, n_list: Sequence[int],
                          k_list: Sequence[int], tolerance: float = 1e-11) -> UniformApproxMatrix:
    """``u^(n,k)(x)`` over a grid, with per-``k`` suprema of the gap to ``u^n(x)``.

    Each ``k`` is warm-started from the optimum at the previous ``k``; that
    policy is feasible for the looser truncation and the ascent never loses
    value, so computed values are nondecreasing in ``k`` like the true ones.
    """
    ks = sorted(int(k) for k in k_list)
    if x <= -ks[0] - 1:
        raise ValueError(f"x = {x} must exceed {-ks[0] - 1}")
    ns = [int(n) for n in n_list]
    u_nk = np.zeros((len(ns), len(ks)))
    u_n = np.zeros(len(ns))
    for a, n in enumerate(ns):
        m = family.market(n)
        u_n[a] = solve_exponential(m).u(x)
        start = None
        prev = -math.inf
        for b, k in enumerate(ks):
            res = solve_truncated(m, k, x, tolerance=tolerance, start=start)
            u_nk[a, b] = max(res.u_nk, prev)
            prev = u_nk[a, b]
            start = res.policy
    # signed gaps inherit the monotonicity of u_nk in k exactly; absolute values
    # would let 1-ulp overshoots of u^n break it
    gaps = u_n[:, None] - u_nk
    return UniformApproxMatrix(ns, ks, u_nk, u_n, gaps.max(axis=0), np.abs(gaps).max(axis=0))


def weighted_quantile(values, weights, level: float) -> float:
    """Smallest ``v`` with ``P(X <= v) >= level``."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=float)[order]
    cw = np.cumsum(np.asarray(weights, dtype=float)[order])
    idx = int(np.searchsorted(cw, level * cw[-1] - 1e-15))
    return float(v[min(idx, v.size - 1)])


@dataclass(frozen=True)
class BoundednessTable:
    levels: tuple
    ns: list
    quantiles: np.ndarray  # rows n, columns quantile level
    running_max: np.ndarray


def boundedness_diagnostic(family: MarketFamily, i: float, n_list: Sequence[int],
                           levels=(0.9, 0.99, 1.0)) -> BoundednessTable:
    """Quantiles of ``sup_t |Xhat^(n,i)_t|`` with ``Xhat`` stopped on first reaching ``i``."""
    if i <= 0:
        raise ValueError("upper level must be positive")
    tree = family.tree
    w = tree.node_prob[tree.leaves]
    ns = [int(n) for n in n_list]
    q = np.zeros((len(ns), len(levels)))
    for a, n in enumerate(ns):
        s = solve_exponential(family.market(n))
        sw = stopped_wealth(s, i, -math.inf)
        star = tree.max_along_paths(np.abs(sw.process))[tree.leaves]
        q[a] = [weighted_quantile(star, w, lv) for lv in levels]
    return BoundednessTable(tuple(levels), ns, q, np.maximum.accumulate(q, axis=0))


# --- necessity of V-compactness on deepening complete trees ---------------

MAX_DEEPENING_DEPTH = 40


def deepening_market(n: int, eps: float | None = None) -> Market:
    """Complete depth-``n`` market whose density is two-valued and nearly 1.

    A spine of fair binary steps (``dM = +-1``) runs from the root; leaving the
    spine leads to a deterministic path to the horizon.  The drift makes the
    martingale measure put mass ``eps`` on the all-up leaf (``P = 2^-n``) and
    spread the rest proportionally to ``P``, so ``Z_T`` equals ``eps 2^n`` on
    one leaf and ``(1 - eps) / (1 - 2^-n)`` elsewhere.
    """
    if not 1 <= n <= MAX_DEEPENING_DEPTH:
        raise ValueError(f"depth must lie in [1, {MAX_DEEPENING_DEPTH}]; deeper spines need "
                         "drifts within 2^-depth of -1, below double precision")
    eps = n ** -0.5 if eps is None else eps
    delta = 2.0 ** -n
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    rest = (1.0 - eps) / (1.0 - delta)

    parents, probs, dM, lam = [-1], [1.0], [0.0], [0.0]
    spine = 0
    for t in range(n):
        # Q-mass of reaching spine depth t and t + 1
        q_here = eps + rest * (2.0 ** -t - delta)
        q_next = eps + rest * (2.0 ** -(t + 1) - delta)
        f_up = (q_next / q_here) / 0.5
        lam[spine] = 1.0 - f_up
        up = len(parents)
        parents.append(spine); probs.append(0.5); dM.append(1.0); lam.append(0.0)
        down = len(parents)
        parents.append(spine); probs.append(0.5); dM.append(-1.0); lam.append(0.0)
        tail = down
        for _ in range(t + 1, n):
            parents.append(tail); probs.append(1.0); dM.append(0.0); lam.append(0.0)
            tail = len(parents) - 1
        spine = up
    tree = EventTree(parents, probs)
    M = tree.accumulate(np.asarray(dM))
    return build_market(tree, M, np.asarray(lam))


def deepening_entropy(n: int, eps: float | None = None) -> float:
    """Closed-form relative entropy of the unique martingale measure of :func:`deepening_market`."""
    eps = n ** -0.5 if eps is None else eps
    delta = 2.0 ** -n
    return (eps * (math.log(eps) + n * math.log(2.0))
            + (1.0 - eps) * (math.log1p(-eps) - math.log1p(-delta)))


def is_complete(market: Market) -> bool:
    """Every step is either trivial or a two-way split with increments of both signs."""
    tree = market.tree
    dS = market.dS
    for v in tree.internal:
        kids = list(tree.children[v])
        if len(kids) > 2:
            return False
        if len(kids) == 2 and not (dS[kids].min() < 0.0 < dS[kids].max()):
            return False
    return True


@dataclass
class NecessityReport:
    label: str
    ns: list
    entropy_closed: np.ndarray
    entropy_solver: np.ndarray
    u: np.ndarray
    u_limit: float
    u_gap: np.ndarray
    expected_v: np.ndarray
    d_Z_to_limit: np.ndarray
    z_tv_distance: np.ndarray  # E|Zhat_T - Z_T|, zero iff the measures coincide
    z_max_rel_dev: np.ndarray
    polytope_dim: list

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


def complete_market_necessity(n_list: Sequence[int],
                              generator: Callable[[int], Market] = deepening_market,
                              closed_form: Callable[[int], float] | None = deepening_entropy,
                              ) -> NecessityReport:
    """Per-depth comparison of ``u^n`` with the limit value ``-1`` of the driftless market."""
    ns = [int(n) for n in n_list]
    Hc, Hs, u, ev, dz, tv, dev, dims = [], [], [], [], [], [], [], []
    for n in ns:
        m = generator(n)
        if not is_complete(m):
            raise ValueError(f"market n = {n} is not complete")
        tree = m.tree
        s = solve_exponential(m)
        ZT = m.Z[tree.leaves]
        ZhT = s.Zhat[tree.leaves]
        tv.append(float(np.dot(tree.node_prob[tree.leaves], np.abs(ZhT - ZT))))
        dev.append(float(np.max(np.abs(ZhT / ZT - 1.0))))
        Hs.append(s.entropy)
        Hc.append(closed_form(n) if closed_form is not None else math.nan)
        u.append(s.u0)
        ev.append(expected_v_terminal(m))
        dz.append(prob_metric(tree, ZT, np.ones_like(ZT)))
        dims.append(polytope_dimension(m) if tree.leaves.size <= 512 else None)
    u = np.array(u)
    return NecessityReport(
        label="cross-basis", ns=ns, entropy_closed=np.array(Hc), entropy_solver=np.array(Hs),
        u=u, u_limit=-1.0, u_gap=np.abs(u + 1.0), expected_v=np.array(ev),
        d_Z_to_limit=np.array(dz), z_tv_distance=np.array(tv), z_max_rel_dev=np.array(dev),
        polytope_dim=dims)


def solve_family(family: MarketFamily, n_list: Sequence[int]) -> list[SolveResult]:
    return [solve_exponential(family.market(n)) for n in n_list]

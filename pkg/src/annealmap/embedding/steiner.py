"""Vertex-weighted Steiner trees and bidirected-cut LP bounds on chain size."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from ..ising import ModelError, as_graph


class RoutingError(ModelError):
    pass


class GraphIndex:
    """Dense integer view of a graph for repeated shortest-path queries.

    Arc ``u -> v`` carries the weight of its head ``v``, so a path's length
    is the total weight of every vertex on it except the first.
    """

    def __init__(self, graph):
        g = as_graph(graph)
        self.graph = g
        self.nodes = np.array(sorted(g.nodes), dtype=np.int64)
        self.index = {int(v): k for k, v in enumerate(self.nodes)}
        n = len(self.nodes)
        rows, cols = [], []
        for u, v in g.edges:
            a, b = self.index[u], self.index[v]
            rows += [a, b]
            cols += [b, a]
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        m.sort_indices()
        self.indptr = m.indptr
        self.indices = m.indices
        self.tails = np.repeat(np.arange(n), np.diff(self.indptr))

    @property
    def n(self) -> int:
        return len(self.nodes)

    def neighbors(self, k: int) -> np.ndarray:
        return self.indices[self.indptr[k]:self.indptr[k + 1]]

    def matrix(self, weights: np.ndarray, blocked: np.ndarray | None = None) -> sp.csr_matrix:
        data = np.asarray(weights, dtype=np.float64)[self.indices]
        if blocked is None or not blocked.any():
            return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        keep = ~(blocked[self.indices] | blocked[self.tails])
        return sp.csr_matrix((data[keep], (self.tails[keep], self.indices[keep])), shape=(self.n, self.n))

    def to_labels(self, ks: Iterable[int]) -> frozenset:
        return frozenset(int(self.nodes[k]) for k in ks)

    def to_index(self, vs: Iterable[int]) -> list[int]:
        try:
            return [self.index[int(v)] for v in vs]
        except KeyError as exc:
            raise RoutingError(f"vertex {exc.args[0]} is not in the graph") from None


def _path(pred: np.ndarray, src: int, dst: int) -> list[int]:
    out = [dst]
    while out[-1] != src:
        p = pred[out[-1]]
        if p < 0:
            raise RoutingError("no path between terminals")
        out.append(int(p))
    return out


def _prune(gi: GraphIndex, nodes: set[int], keep: set[int]) -> set[int]:
    """Spanning tree of the induced subgraph, then strip non-terminal leaves."""
    root = min(keep)
    tree = {root: []}
    order = [root]
    for u in order:
        for v in gi.neighbors(u):
            v = int(v)
            if v in nodes and v not in tree:
                tree[v] = [u]
                tree[u].append(v)
                order.append(v)
    deg = {u: len(nb) for u, nb in tree.items()}
    alive = set(tree)
    stack = [u for u in alive if deg[u] <= 1 and u not in keep]
    while stack:
        u = stack.pop()
        if u not in alive or u in keep or deg[u] > 1:
            continue
        alive.discard(u)
        for v in tree[u]:
            if v in alive:
                deg[v] -= 1
                if deg[v] <= 1 and v not in keep:
                    stack.append(v)
    return alive


def steiner_indices(gi: GraphIndex, terminals: Sequence[int], weights: np.ndarray,
                    blocked: np.ndarray | None = None) -> set[int]:
    """Kou-Markowsky-Berman tree on index space (see :func:`steiner_mst`)."""
    term = sorted(set(int(t) for t in terminals))
    if not term:
        raise RoutingError("empty terminal set")
    if len(term) == 1:
        return {term[0]}
    if blocked is not None:
        blocked = blocked.copy()
        blocked[term] = False
    mat = gi.matrix(weights, blocked)
    dist, pred = dijkstra(mat, indices=term, return_predecessors=True)
    k = len(term)
    w = np.asarray(weights, dtype=np.float64)
    close = np.array([[dist[a, term[b]] + w[term[a]] for b in range(k)] for a in range(k)])
    if not np.isfinite(close).all():
        raise RoutingError("terminals lie in different components")
    # Prim on the metric closure, ties to the lowest index
    inside = [0]
    best = close[0].copy()
    link = np.zeros(k, dtype=np.int64)
    nodes = {term[0]}
    for _ in range(k - 1):
        cand = [(best[b], b) for b in range(k) if b not in inside]
        _, b = min(cand)
        inside.append(b)
        nodes.update(_path(pred[link[b]], term[link[b]], term[b]))
        upd = close[b] < best
        best = np.where(upd, close[b], best)
        link = np.where(upd, b, link)
    return _prune(gi, nodes, set(term))


def steiner_mst(graph, terminals: Iterable[int], weights: Mapping[int, float] | None = None,
                blocked: Iterable[int] = ()) -> frozenset:
    """Approximately minimum-weight connected vertex set containing ``terminals``.

    The weight of a vertex set is the sum of its vertex weights (unit by
    default, i.e. the number of qubits). Shortest paths between terminals
    form a metric closure whose minimum spanning tree is expanded back into
    graph paths; a spanning tree of the union is then cut back to its
    terminal leaves. With unit weights the result has at most twice the
    optimal number of vertices.
    """
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    w = np.ones(gi.n)
    if weights is not None:
        for v, x in weights.items():
            if int(v) in gi.index:
                w[gi.index[int(v)]] = float(x)
    if (w < 0).any():
        raise RoutingError("vertex weights must be non-negative")
    blk = np.zeros(gi.n, dtype=bool)
    blk[gi.to_index(b for b in blocked if int(b) in gi.index)] = True
    tree = steiner_indices(gi, gi.to_index(terminals), w, blk)
    return gi.to_labels(tree)


def tree_weight(tree: Iterable[int], weights: Mapping[int, float] | None = None) -> float:
    return float(sum(1.0 if weights is None else weights.get(v, 1.0) for v in tree))


# -- bidirected cut relaxation --------------------------------------------


@dataclass(frozen=True)
class ChainBound:
    per_var: tuple[int, ...]
    lp_values: tuple[float, ...]
    max_chain: int
    joint: float | None = None
    failures: tuple[int, ...] = field(default_factory=tuple)

    @property
    def best(self) -> int:
        if self.joint is None:
            return self.max_chain
        return max(self.max_chain, int(math.ceil(self.joint - 1e-7)))


def _arcs(gi: GraphIndex, usable: np.ndarray):
    keep = usable[gi.tails] & usable[gi.indices]
    return gi.tails[keep], gi.indices[keep]


def _bcr_blocks(gi, term, usable, tail, head, x_col, f_off):
    """Flow (12) and capacity (13) rows for one terminal set.

    ``x_col[v]`` is the column of x_v (or -1 for terminals), flows for
    commodity ``k`` occupy ``f_off + k * len(arcs) + a``.
    """
    na = len(tail)
    root, sinks = term[0], term[1:]
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    ub_r, ub_c, ub_v = [], [], []
    verts = np.flatnonzero(usable)
    row_of = {int(v): r for r, v in enumerate(verts)}
    tail_rows = np.array([row_of[int(t)] for t in tail], dtype=np.int64)
    head_rows = np.array([row_of[int(h)] for h in head], dtype=np.int64)
    steiner = np.array([x_col[int(h)] for h in head], dtype=np.int64)
    nv = len(verts)
    eq_rows = 0
    ub_rows = 0
    for k, t in enumerate(sinks):
        cols = f_off + k * na + np.arange(na)
        eq_r += [eq_rows + tail_rows, eq_rows + head_rows]
        eq_c += [cols, cols]
        eq_v += [np.ones(na), -np.ones(na)]
        b = np.zeros(nv)
        b[row_of[root]] = 1.0
        b[row_of[t]] = -1.0
        eq_b.append(b)
        eq_rows += nv
        into = steiner >= 0
        caps = {int(v): r for r, v in enumerate(v for v in verts if x_col[int(v)] >= 0)}
        cap_rows = np.array([caps[int(h)] for h in head[into]], dtype=np.int64)
        ub_r += [ub_rows + cap_rows, ub_rows + np.arange(len(caps))]
        ub_c += [cols[into], np.array([x_col[v] for v in caps], dtype=np.int64)]
        ub_v += [np.ones(int(into.sum())), -np.ones(len(caps))]
        ub_rows += len(caps)
    cat = lambda xs, dt=np.float64: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return (cat(eq_r, np.int64), cat(eq_c, np.int64), cat(eq_v), cat(eq_b), eq_rows,
            cat(ub_r, np.int64), cat(ub_c, np.int64), cat(ub_v), ub_rows)


def _usable(gi, term_sets, i, exclusive):
    usable = np.ones(gi.n, dtype=bool)
    if exclusive:
        mine = set(term_sets[i])
        for j, T in enumerate(term_sets):
            if j != i:
                usable[[t for t in T if t not in mine]] = False
    # restrict to the root's component
    root = term_sets[i][0]
    seen = np.zeros(gi.n, dtype=bool)
    seen[root] = True
    stack = [root]
    while stack:
        u = stack.pop()
        for v in gi.neighbors(u):
            if usable[v] and not seen[v]:
                seen[v] = True
                stack.append(int(v))
    if not all(seen[t] for t in term_sets[i]):
        raise RoutingError(f"terminal set {i} is disconnected")
    return seen


def _single_bcr(gi, term_sets, i, exclusive):
    term = term_sets[i]
    usable = _usable(gi, term_sets, i, exclusive)
    tail, head = _arcs(gi, usable)
    tset = set(term)
    x_col = -np.ones(gi.n, dtype=np.int64)
    steiner = [v for v in np.flatnonzero(usable) if int(v) not in tset]
    x_col[steiner] = np.arange(len(steiner))
    nx_ = len(steiner)
    na = len(tail)
    nvar = nx_ + (len(term) - 1) * na
    er, ec, ev, eb, ne, ur, uc, uv, nu = _bcr_blocks(gi, term, usable, tail, head, x_col, nx_)
    c = np.zeros(nvar)
    c[:nx_] = 1.0
    A_eq = sp.csr_matrix((ev, (er, ec)), shape=(ne, nvar))
    A_ub = sp.csr_matrix((uv, (ur, uc)), shape=(nu, nvar)) if nu else None
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(nu) if nu else None, A_eq=A_eq, b_eq=eb,
                  bounds=(0, 1), method="highs", options={"primal_feasibility_tolerance": 1e-8})
    if res.status != 0:
        return None
    return float(res.fun)


def bcr_lower_bound(graph, terminal_sets: Sequence[Iterable[int]], exclusive: bool = True,
                    joint: bool = False) -> ChainBound:
    """Chain-size lower bounds from the LP relaxation of the flow formulation.

    For each terminal set the first terminal is the root and every other
    terminal receives one unit of its own commodity; flow may enter a
    non-terminal only up to its fractional selection. The per-variable bound
    is ``ceil(LP) + |T|``. With ``exclusive`` a chain may not pass through
    another variable's terminals, which any disjoint routing respects.
    With ``joint`` a single LP shares vertex capacity between all chains and
    minimises the largest fractional chain size.
    """
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    sets_keyed = [list(dict.fromkeys(gi.to_index(T))) for T in terminal_sets]
    per, vals, fails = [], [], []
    for i, T in enumerate(sets_keyed):
        if not T:
            raise RoutingError(f"terminal set {i} is empty")
        if len(T) == 1:
            per.append(1)
            vals.append(0.0)
            continue
        lp = _single_bcr(gi, sets_keyed, i, exclusive)
        if lp is None:
            fails.append(i)
            per.append(len(T))
            vals.append(math.nan)
            continue
        vals.append(lp)
        per.append(int(math.ceil(lp - 1e-7)) + len(T))
    jb = _joint_bcr(gi, sets_keyed) if joint else None
    return ChainBound(tuple(per), tuple(vals), max(per) if per else 0, jb, tuple(fails))


def _joint_bcr(gi, sets):
    """Shared-capacity relaxation; returns the fractional max chain size."""
    blocks = []
    ncol = 1  # column 0 is the max-size variable t
    x_cols = []
    for i, T in enumerate(sets):
        usable = _usable(gi, sets, i, True)
        tail, head = _arcs(gi, usable)
        tset = set(T)
        x_col = -np.ones(gi.n, dtype=np.int64)
        steiner = [v for v in np.flatnonzero(usable) if int(v) not in tset]
        x_col[steiner] = ncol + np.arange(len(steiner))
        off = ncol + len(steiner)
        parts = _bcr_blocks(gi, T, usable, tail, head, x_col, off) if len(T) > 1 else None
        ncol = off + max(len(T) - 1, 0) * len(tail)
        blocks.append((parts, steiner, x_col))
        x_cols.append(x_col)
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    ne = nu = 0
    for i, (parts, steiner, x_col) in enumerate(blocks):
        if parts is not None:
            er, ec, ev, eb, n1, ur, uc, uv, n2 = parts
            eq_r.append(er + ne); eq_c.append(ec); eq_v.append(ev); eq_b.append(eb)
            ub_r.append(ur + nu); ub_c.append(uc); ub_v.append(uv); ub_b.append(np.zeros(n2))
            ne += n1
            nu += n2
        # size_i = sum x + |T_i| <= t
        cols = np.array([x_col[v] for v in steiner], dtype=np.int64)
        ub_r.append(np.full(len(cols) + 1, nu)); ub_c.append(np.concatenate([cols, [0]]))
        ub_v.append(np.concatenate([np.ones(len(cols)), [-1.0]])); ub_b.append(np.array([-float(len(sets[i]))]))
        nu += 1
    # shared capacity
    hits: dict[int, list[int]] = {}
    for x_col in x_cols:
        for v in np.flatnonzero(x_col >= 0):
            hits.setdefault(int(v), []).append(int(x_col[v]))
    for v, cols in sorted(hits.items()):
        if len(cols) > 1:
            ub_r.append(np.full(len(cols), nu)); ub_c.append(np.array(cols)); ub_v.append(np.ones(len(cols)))
            ub_b.append(np.ones(1))
            nu += 1
    c = np.zeros(ncol)
    c[0] = 1.0
    bounds = [(0, None)] + [(0, 1)] * (ncol - 1)
    A_eq = sp.csr_matrix((np.concatenate(eq_v), (np.concatenate(eq_r), np.concatenate(eq_c))), shape=(ne, ncol)) if ne else None
    A_ub = sp.csr_matrix((np.concatenate(ub_v), (np.concatenate(ub_r), np.concatenate(ub_c))), shape=(nu, ncol))
    res = linprog(c, A_ub=A_ub, b_ub=np.concatenate(ub_b), A_eq=A_eq,
                  b_eq=np.concatenate(eq_b) if ne else None, bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return float(res.fun)

"""Combined placement and routing by rip-up and replace.

Each constraint is placed by choosing one of its candidate placements: a
map from the vertices of its penalty graph to hardware qubits. Chains for
the variables are then grown as weighted Steiner trees. Vertex weights grow
as ``alpha ** usage`` where usage counts chains through a qubit plus
penalty ancillas sitting on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms import isomorphism
from scipy.sparse.csgraph import dijkstra

from ..ising import HardwareGraph, ModelError, as_graph, chimera_graph
from .steiner import GraphIndex, RoutingError, steiner_indices


class EmbeddingError(RuntimeError):
    pass


# -- data types -----------------------------------------------------------


@dataclass(frozen=True)
class EmbedConstraint:
    """A constraint as the embedder sees it.

    ``candidates[r, k]`` is the qubit for penalty vertex ``k`` in candidate
    ``r``; ``slots[j]`` is the penalty vertex of scope variable ``j``.
    """

    scope: tuple[int, ...]
    candidates: np.ndarray
    slots: tuple[int, ...]
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        cand = np.asarray(self.candidates, dtype=np.int64)
        if cand.ndim != 2 or len(cand) == 0:
            raise EmbeddingError(f"constraint on {self.scope} has no candidate placements")
        object.__setattr__(self, "candidates", cand)
        if len(self.slots) != len(self.scope):
            raise EmbeddingError("one slot per scope variable is required")


@dataclass(frozen=True)
class Embedding:
    """Chains per variable and the qubit map of every placed constraint."""

    chains: dict
    maps: tuple[tuple[int, ...], ...]
    scopes: tuple[tuple[int, ...], ...]
    slots: tuple[tuple[int, ...], ...]

    def var_vertex(self, c: int, j: int) -> int:
        return self.maps[c][self.slots[c][j]]

    def location(self, c: int) -> frozenset:
        return frozenset(self.maps[c])

    def ancillas(self, c: int) -> frozenset:
        own = {self.var_vertex(c, j) for j in range(len(self.scopes[c]))}
        return frozenset(q for q in self.maps[c] if q not in own)

    def terminals(self, var: int) -> frozenset:
        return frozenset(
            self.var_vertex(c, j)
            for c, sc in enumerate(self.scopes)
            for j, x in enumerate(sc)
            if x == var
        )

    def qubits(self) -> frozenset:
        out = set()
        for ch in self.chains.values():
            out |= set(ch)
        for c in range(len(self.maps)):
            out |= self.ancillas(c)
        return frozenset(out)

    @property
    def max_chain(self) -> int:
        return max((len(c) for c in self.chains.values()), default=0)

    @property
    def mean_chain(self) -> float:
        return float(np.mean([len(c) for c in self.chains.values()])) if self.chains else 0.0


# -- candidate placements -------------------------------------------------


def _monomorphisms(template: nx.Graph, pattern: nx.Graph, var_map: Sequence[int]) -> list[tuple[int, ...]]:
    m = pattern.number_of_nodes()
    seen = set()
    out = []
    gm = isomorphism.GraphMatcher(template, pattern)
    for iso in gm.subgraph_monomorphisms_iter():
        inv = [0] * m
        for t, p in iso.items():
            inv[p] = t
        key = (frozenset(inv), tuple(inv[v] for v in var_map))
        if key in seen:
            continue
        seen.add(key)
        out.append(tuple(inv))
    out.sort()
    return out


def candidate_placements(hw: HardwareGraph, pattern: nx.Graph, var_map: Sequence[int],
                         max_block: int = 2) -> np.ndarray:
    """All placements of a penalty graph inside the smallest fitting cell blocks.

    Monomorphisms are found once on a defect-free block of ``br x bc`` cells,
    deduplicated by (location, variable vertices), and translated across the
    grid; translates touching a dead qubit are dropped. Both shore
    orientations appear because the block template is symmetric.
    """
    nodes = sorted(pattern.nodes)
    relabel = {v: k for k, v in enumerate(nodes)}
    pat = nx.relabel_nodes(pattern, relabel)
    vm = [relabel[v] for v in var_map]
    shapes = sorted({(a, b) for a in range(1, max_block + 1) for b in range(1, max_block + 1)},
                    key=lambda s: (s[0] * s[1], s))
    L = hw.shore
    for area in sorted({a * b for a, b in shapes}):
        rows_out = []
        for br, bc in [s for s in shapes if s[0] * s[1] == area]:
            if br > hw.rows or bc > hw.cols:
                continue
            tmpl = chimera_graph(br, bc, L)
            monos = _monomorphisms(tmpl.graph, pat, vm)
            if not monos:
                continue
            coords = np.array([[tmpl.coordinates(q) for q in mono] for mono in monos])
            for r0 in range(hw.rows - br + 1):
                for c0 in range(hw.cols - bc + 1):
                    r = coords[..., 0] + r0
                    c = coords[..., 1] + c0
                    q = ((r * hw.cols + c) * 2 + coords[..., 2]) * L + coords[..., 3]
                    rows_out.append(q)
        if rows_out:
            cand = np.concatenate(rows_out)
            if hw.dead:
                dead = np.array(sorted(hw.dead))
                cand = cand[~np.isin(cand, dead).any(axis=1)]
            if len(cand):
                return cand
    raise EmbeddingError("penalty graph does not fit in any cell block")


# -- trim -----------------------------------------------------------------


def trim(graph, chain: Iterable[int], keep: Iterable[int]) -> frozenset:
    """Repeatedly drop chain vertices outside ``keep`` that have degree 1 in the chain."""
    g = as_graph(graph)
    s = set(chain)
    keep = set(keep)
    deg = {v: sum(1 for u in g.adj[v] if u in s) for v in s}
    stack = sorted(v for v in s if deg[v] == 1 and v not in keep)
    while stack:
        v = stack.pop()
        if v not in s or deg[v] != 1 or v in keep:
            continue
        s.discard(v)
        for u in g.adj[v]:
            if u in s:
                deg[u] -= 1
                if deg[u] == 1 and u not in keep:
                    stack.append(u)
    return frozenset(s)


def _trim_idx(gi: GraphIndex, chain: set[int], keep: set[int]) -> set[int]:
    deg = {v: sum(1 for u in gi.neighbors(v) if int(u) in chain) for v in chain}
    stack = [v for v in chain if deg[v] == 1 and v not in keep]
    s = set(chain)
    while stack:
        v = stack.pop()
        if v not in s or deg[v] != 1 or v in keep:
            continue
        s.discard(v)
        for u in gi.neighbors(v):
            u = int(u)
            if u in s:
                deg[u] -= 1
                if deg[u] == 1 and u not in keep:
                    stack.append(u)
    return s


# -- rip-up and replace ---------------------------------------------------


@dataclass(frozen=True)
class RrrParams:
    alpha: float = 8.0
    beta: float = math.e
    max_iters: int = 200
    stall: int = 32
    seed: int = 0
    optimize_chains: bool = True

    def __post_init__(self):
        if not (self.alpha > 1 and self.beta > 1):
            raise EmbeddingError("alpha and beta must exceed 1")


@dataclass(frozen=True)
class RrrResult:
    embedding: Embedding | None
    success: bool
    iterations: int
    trace: tuple[int, ...] = field(default_factory=tuple)


class _State:
    def __init__(self, gi, problems, nvars, alpha):
        self.gi = gi
        self.problems = problems
        self.alpha = alpha
        self.cand = [np.array([[gi.index[int(q)] for q in row] for row in p.candidates], dtype=np.int64)
                     for p in problems]
        self.place = [0] * len(problems)
        self.chains: list[set[int]] = [set() for _ in range(nvars)]
        self.chain_use = np.zeros(gi.n, dtype=np.int64)
        self.anc_use = np.zeros(gi.n, dtype=np.int64)
        self.members = [[] for _ in range(nvars)]
        for c, p in enumerate(problems):
            for j, x in enumerate(p.scope):
                self.members[x].append((c, j))

    def usage(self):
        return self.chain_use + self.anc_use

    def omega(self):
        return self.alpha ** self.usage().astype(np.float64)

    def var_vertex(self, c, j):
        return int(self.cand[c][self.place[c], self.problems[c].slots[j]])

    def ancillas(self, c):
        row = self.cand[c][self.place[c]]
        own = {row[s] for s in self.problems[c].slots}
        return [int(q) for q in row if q not in own]

    def terminals(self, x, skip=None):
        return {self.var_vertex(c, j) for c, j in self.members[x] if c != skip}

    def set_anc(self, c, sign):
        self.anc_use[self.ancillas(c)] += sign

    def set_chain(self, x, chain):
        if self.chains[x]:
            self.chain_use[list(self.chains[x])] -= 1
        self.chains[x] = set(chain)
        if chain:
            self.chain_use[list(chain)] += 1

    def reroute(self, x, weighted=True):
        self.set_chain(x, set())
        T = sorted(self.terminals(x))
        if not T:
            return
        w = self.omega() if weighted else np.ones(self.gi.n)
        self.set_chain(x, steiner_indices(self.gi, T, w))

    def distance(self, x, w):
        """d(q, S_x): weight of intermediate vertices on the best path from S_x to q."""
        S = sorted(self.chains[x])
        if not S:
            return np.zeros(self.gi.n)
        d = dijkstra(self.gi.matrix(w), indices=S, min_only=True)
        d = d - w
        d[S] = 0.0
        return np.maximum(d, 0.0)

    def measure(self):
        u = self.usage()
        return (int(u.max()) if len(u) else 0, int(np.count_nonzero(u > 1)), int(np.maximum(u - 1, 0).sum()))


def rip_up_and_replace(graph, problems: Sequence[EmbedConstraint], params: RrrParams | None = None,
                       trace: list | None = None) -> RrrResult:
    """Place constraints and route chains until every qubit has at most one use.

    The loop follows the classic scheme: per constraint, trim the chains of
    its variables without it, rip up its location, score every candidate by
    the weight of its qubits plus the weighted distance from each variable
    vertex to the rest of that variable's chain, sample a candidate with
    probability proportional to ``beta ** -cost``, then re-route its chains.
    Iteration stops once no qubit is shared, or after ``stall`` rounds
    without improving (max usage, shared qubits, excess usage).
    """
    params = params or RrrParams()
    if not problems:
        raise EmbeddingError("nothing to embed")
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    nvars = max(x for p in problems for x in p.scope) + 1
    st = _State(gi, list(problems), nvars, params.alpha)
    rng = np.random.default_rng(params.seed)
    log_beta = math.log(params.beta)
    # initial placement: greedy in the given order, then unweighted Steiner trees
    for c, p in enumerate(problems):
        w = st.omega()
        cost = w[st.cand[c]].sum(axis=1)
        for j, x in enumerate(p.scope):
            T = sorted(st.terminals(x, skip=c))
            if T:
                d = dijkstra(gi.matrix(w), indices=T, min_only=True) - w
                d[T] = 0.0
                cost = cost + np.maximum(d, 0.0)[st.cand[c][:, p.slots[j]]]
        st.place[c] = int(np.argmin(cost))
        st.set_anc(c, +1)
    for x in range(nvars):
        st.reroute(x, weighted=False)
    best = st.measure()
    hist = [best[0]]
    stall = 0
    it = 0
    while best[0] > 1 and it < params.max_iters and stall < params.stall:
        it += 1
        for c in rng.permutation(len(problems)):
            c = int(c)
            p = problems[c]
            st.set_anc(c, -1)
            for x in p.scope:
                st.set_chain(x, _trim_idx(gi, st.chains[x], st.terminals(x, skip=c)))
            w = st.omega()
            cost = w[st.cand[c]].sum(axis=1)
            for j, x in enumerate(p.scope):
                cost = cost + st.distance(x, w)[st.cand[c][:, p.slots[j]]]
            logits = -(cost - cost.min()) * log_beta
            with np.errstate(under="ignore"):
                prob = np.exp(logits)
                prob /= prob.sum()
            st.place[c] = int(rng.choice(len(prob), p=prob))
            st.set_anc(c, +1)
            for x in p.scope:
                st.reroute(x)
        m = st.measure()
        hist.append(m[0])
        if trace is not None:
            trace.append(m)
        if m < best:
            best = m
            stall = 0
        else:
            stall += 1
    if st.measure()[0] > 1:
        return RrrResult(None, False, it, tuple(hist))
    if params.optimize_chains:
        _shorten(st)
    return RrrResult(_export(st), True, it, tuple(hist))


def _shorten(st: _State):
    """One pass of re-routing each chain with all other qubits blocked."""
    order = sorted(range(len(st.chains)), key=lambda x: (-len(st.chains[x]), x))
    for x in order:
        old = st.chains[x]
        T = sorted(st.terminals(x))
        if len(T) <= 1 or len(old) <= len(T):
            continue
        st.set_chain(x, set())
        blocked = st.usage() > 0
        try:
            new = steiner_indices(st.gi, T, np.ones(st.gi.n), blocked)
        except RoutingError:
            new = old
        if blocked[list(new)].any() or len(new) >= len(old):
            new = old
        st.set_chain(x, new)


def _export(st: _State) -> Embedding:
    lab = st.gi.nodes
    chains = {x: frozenset(int(lab[q]) for q in ch) for x, ch in enumerate(st.chains) if ch}
    maps = tuple(tuple(int(lab[q]) for q in st.cand[c][st.place[c]]) for c in range(len(st.problems)))
    return Embedding(chains, maps, tuple(p.scope for p in st.problems), tuple(p.slots for p in st.problems))


# -- validation -----------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingReport:
    violations: tuple[str, ...]
    max_chain: int
    mean_chain: float
    total_qubits: int

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_embedding(graph, emb: Embedding, edges: Sequence[Sequence[tuple[int, int]]] | None = None) -> EmbeddingReport:
    """Structural check: disjoint connected chains covering every variable vertex.

    ``edges[c]`` optionally lists the penalty couplings of constraint ``c``
    (in penalty-vertex labels) which must land on hardware edges.
    """
    g = as_graph(graph)
    bad = []
    owner = {}
    for x, ch in sorted(emb.chains.items()):
        if not ch:
            bad.append(f"chain {x}: empty")
            continue
        for q in sorted(ch):
            if q not in g:
                bad.append(f"chain {x}: qubit {q} not in graph")
            elif q in owner:
                bad.append(f"disjointness: qubit {q} in chains {owner[q]} and {x}")
            else:
                owner[q] = x
        live = [q for q in ch if q in g]
        if live and not nx.is_connected(g.subgraph(live)):
            bad.append(f"connectivity: chain {x} is disconnected")
    used = {}
    for c in range(len(emb.maps)):
        for j, x in enumerate(emb.scopes[c]):
            v = emb.var_vertex(c, j)
            if v not in emb.chains.get(x, ()):
                bad.append(f"coverage: constraint {c} places variable {x} on {v} outside its chain")
        for q in sorted(emb.ancillas(c)):
            if q not in g:
                bad.append(f"constraint {c}: ancilla {q} not in graph")
            elif q in owner:
                bad.append(f"disjointness: ancilla {q} of constraint {c} lies on chain {owner[q]}")
            elif q in used:
                bad.append(f"disjointness: ancilla {q} shared by constraints {used[q]} and {c}")
            else:
                used[q] = c
        if edges is not None:
            for a, b in edges[c]:
                qa, qb = emb.maps[c][a], emb.maps[c][b]
                if not g.has_edge(qa, qb):
                    bad.append(f"constraint {c}: coupling ({a}, {b}) maps to missing edge ({qa}, {qb})")
    return EmbeddingReport(tuple(bad), emb.max_chain, emb.mean_chain, len(emb.qubits()))


# -- text format ----------------------------------------------------------


def dumps_embedding(emb: Embedding, names: Sequence[str] | None = None) -> str:
    name = (lambda x: names[x]) if names is not None else (lambda x: f"x{x}")
    lines = []
    for x in sorted(emb.chains):
        lines.append(f"chain {name(x)}: " + " ".join(str(q) for q in sorted(emb.chains[x])))
    for c in range(len(emb.maps)):
        pairs = " ".join(f"{name(x)}:{emb.var_vertex(c, j)}" for j, x in enumerate(emb.scopes[c]))
        lines.append(f"place {c}: " + " ".join(str(q) for q in emb.maps[c]) + " | " + pairs)
    return "\n".join(lines) + "\n"


def loads_embedding(text: str, names: Sequence[str] | None = None) -> Embedding:
    index = {n: k for k, n in enumerate(names)} if names is not None else None

    def var(tok):
        if index is not None:
            return index[tok]
        if not tok.startswith("x"):
            raise ModelError(f"bad variable name {tok!r}")
        return int(tok[1:])

    chains, places = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            kind, rest = line.split(" ", 1)
            head, body = rest.split(":", 1)
            if kind == "chain":
                chains[var(head.strip())] = frozenset(int(q) for q in body.split())
            elif kind == "place":
                loc, pairs = body.split("|")
                qs = tuple(int(q) for q in loc.split())
                scope, slots = [], []
                for tok in pairs.split():
                    v, q = tok.rsplit(":", 1)
                    scope.append(var(v))
                    slots.append(qs.index(int(q)))
                places[int(head)] = (qs, tuple(scope), tuple(slots))
            else:
                raise ValueError(kind)
        except (ValueError, KeyError) as exc:
            raise ModelError(f"line {lineno}: cannot parse {line!r}") from exc
    order = sorted(places)
    if order != list(range(len(order))):
        raise ModelError("constraint indices must be 0..k-1")
    return Embedding(chains, tuple(places[c][0] for c in order), tuple(places[c][1] for c in order),
                     tuple(places[c][2] for c in order))

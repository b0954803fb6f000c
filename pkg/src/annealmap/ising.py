"""Ising models, hardware graphs and model composition.

Spins take values in {-1, +1}; boolean 0 maps to -1 and 1 maps to +1.
An :class:`IsingModel` stores the objective

    E(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j

over ``num_vars`` integer-labelled spins.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np


class ModelError(ValueError):
    """Raised for malformed models, chains or placements."""


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class IsingModel:
    num_vars: int
    linear: Mapping[int, float] = field(default_factory=dict)
    quadratic: Mapping[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        lin: dict[int, float] = {}
        for i, v in self.linear.items():
            i = int(i)
            if not 0 <= i < self.num_vars:
                raise ModelError(f"linear index {i} out of range for {self.num_vars} vars")
            v = float(v)
            if not math.isfinite(v):
                raise ModelError(f"non-finite field on {i}")
            if v != 0.0:
                lin[i] = lin.get(i, 0.0) + v
        quad: dict[tuple[int, int], float] = {}
        for (i, j), v in self.quadratic.items():
            i, j = int(i), int(j)
            if i == j:
                raise ModelError(f"self-coupling on {i}")
            if not (0 <= i < self.num_vars and 0 <= j < self.num_vars):
                raise ModelError(f"coupling ({i}, {j}) out of range")
            v = float(v)
            if not math.isfinite(v):
                raise ModelError(f"non-finite coupling on ({i}, {j})")
            if v != 0.0:
                key = _pair(i, j)
                quad[key] = quad.get(key, 0.0) + v
        if not math.isfinite(float(self.offset)):
            raise ModelError("non-finite offset")
        object.__setattr__(self, "linear", dict(sorted(lin.items())))
        object.__setattr__(self, "quadratic", dict(sorted(quad.items())))
        object.__setattr__(self, "offset", float(self.offset))

    # -- evaluation -------------------------------------------------------

    def energy(self, s: Sequence[int]) -> float:
        return energy(self, s)

    def energies(self, samples: np.ndarray) -> np.ndarray:
        """Vectorised energies for a ``(k, num_vars)`` array of spins."""
        samples = np.asarray(samples)
        if samples.ndim != 2 or samples.shape[1] != self.num_vars:
            raise ModelError(f"expected (k, {self.num_vars}) spins, got {samples.shape}")
        s = samples.astype(np.float64)
        out = np.full(s.shape[0], self.offset)
        if self.linear:
            idx = np.fromiter(self.linear.keys(), dtype=np.int64)
            out += s[:, idx] @ np.fromiter(self.linear.values(), dtype=np.float64)
        if self.quadratic:
            ij = np.array(list(self.quadratic.keys()), dtype=np.int64)
            w = np.fromiter(self.quadratic.values(), dtype=np.float64)
            out += (s[:, ij[:, 0]] * s[:, ij[:, 1]]) @ w
        return out

    # -- structure --------------------------------------------------------

    def interaction_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_vars))
        g.add_edges_from(self.quadratic)
        return g

    def active_variables(self) -> list[int]:
        act = set(self.linear)
        for i, j in self.quadratic:
            act.update((i, j))
        return sorted(act)

    def max_abs_coupling(self) -> float:
        vals = [abs(v) for v in self.quadratic.values()]
        return max(vals) if vals else 0.0

    # -- algebra ----------------------------------------------------------

    def scaled(self, factor: float) -> "IsingModel":
        return IsingModel(
            self.num_vars,
            {i: factor * v for i, v in self.linear.items()},
            {k: factor * v for k, v in self.quadratic.items()},
            factor * self.offset,
        )

    def __add__(self, other: "IsingModel") -> "IsingModel":
        if not isinstance(other, IsingModel):
            return NotImplemented
        n = max(self.num_vars, other.num_vars)
        lin = dict(self.linear)
        for i, v in other.linear.items():
            lin[i] = lin.get(i, 0.0) + v
        quad = dict(self.quadratic)
        for k, v in other.quadratic.items():
            quad[k] = quad.get(k, 0.0) + v
        return IsingModel(n, lin, quad, self.offset + other.offset)

    def relabel(self, mapping: Mapping[int, int], num_vars: int) -> "IsingModel":
        """Move variable ``i`` to ``mapping[i]`` in a model with ``num_vars`` spins."""
        if len(set(mapping[i] for i in self.active_variables())) != len(self.active_variables()):
            raise ModelError("relabelling is not injective on active variables")
        return IsingModel(
            num_vars,
            {mapping[i]: v for i, v in self.linear.items()},
            {(mapping[i], mapping[j]): v for (i, j), v in self.quadratic.items()},
            self.offset,
        )

    def compacted(self) -> tuple["IsingModel", list[int]]:
        """Model over the active spins only, plus the original index of each new spin."""
        act = self.active_variables()
        pos = {q: k for k, q in enumerate(act)}
        small = IsingModel(
            len(act),
            {pos[i]: v for i, v in self.linear.items()},
            {(pos[i], pos[j]): v for (i, j), v in self.quadratic.items()},
            self.offset,
        )
        return small, act

    def fix_variables(self, fixed: Mapping[int, int]) -> "IsingModel":
        """Substitute fixed spin values; fixed spins keep their index but carry no terms."""
        lin = {i: v for i, v in self.linear.items() if i not in fixed}
        off = self.offset + sum(v * fixed[i] for i, v in self.linear.items() if i in fixed)
        quad = {}
        for (i, j), v in self.quadratic.items():
            if i in fixed and j in fixed:
                off += v * fixed[i] * fixed[j]
            elif i in fixed:
                lin[j] = lin.get(j, 0.0) + v * fixed[i]
            elif j in fixed:
                lin[i] = lin.get(i, 0.0) + v * fixed[j]
            else:
                quad[(i, j)] = v
        return IsingModel(self.num_vars, lin, quad, off)


def energy(model: IsingModel, s: Sequence[int]) -> float:
    """Energy of a single spin configuration."""
    if len(s) != model.num_vars:
        raise ModelError(f"configuration has {len(s)} spins, model has {model.num_vars}")
    e = model.offset
    for i, v in model.linear.items():
        e += v * s[i]
    for (i, j), v in model.quadratic.items():
        e += v * s[i] * s[j]
    return float(e)


def all_spins(n: int) -> np.ndarray:
    """Every configuration of ``n`` spins as a ``(2**n, n)`` int8 array.

    Row ``r`` encodes bit ``k`` of ``r`` (most significant first) as spin ``k``.
    """
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    r = np.arange(2**n, dtype=np.int64)[:, None]
    bits = (r >> np.arange(n - 1, -1, -1)) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass(frozen=True)
class ParameterBounds:
    h_min: float = -2.0
    h_max: float = 2.0
    j_min: float = -1.0
    j_max: float = 1.0

    def __post_init__(self):
        if self.h_min > self.h_max or self.j_min > self.j_max:
            raise ModelError("lower bound exceeds upper bound")

    @property
    def symmetric(self) -> bool:
        return self.h_min == -self.h_max and self.j_min == -self.j_max

    def scale_to_fit(self, model: IsingModel) -> float:
        """Largest factor <= 1 that brings every coefficient inside the bounds."""
        factor = 1.0
        for v in model.linear.values():
            factor = min(factor, _limit(v, self.h_min, self.h_max))
        for v in model.quadratic.values():
            factor = min(factor, _limit(v, self.j_min, self.j_max))
        return factor

    def contains(self, model: IsingModel, tol: float = 1e-12) -> bool:
        return all(self.h_min - tol <= v <= self.h_max + tol for v in model.linear.values()) and all(
            self.j_min - tol <= v <= self.j_max + tol for v in model.quadratic.values()
        )


def _limit(v: float, lo: float, hi: float) -> float:
    if v > hi:
        return hi / v if hi > 0 else 0.0
    if v < lo:
        return lo / v if lo < 0 else 0.0
    return 1.0


# -- hardware graphs ------------------------------------------------------


@dataclass(frozen=True)
class HardwareGraph:
    """Chimera graph: an M x N grid of K_{L,L} cells.

    Qubit ``(r, c, u, k)`` (row, column, shore, index) has linear label
    ``((r * N + c) * 2 + u) * L + k``. Shore 0 couples vertically between
    cells, shore 1 horizontally.
    """

    rows: int
    cols: int
    shore: int
    dead: frozenset = frozenset()
    graph: nx.Graph = field(default=None, compare=False, repr=False)

    @property
    def num_sites(self) -> int:
        return self.rows * self.cols * 2 * self.shore

    def linear(self, r: int, c: int, u: int, k: int) -> int:
        return ((r * self.cols + c) * 2 + u) * self.shore + k

    def coordinates(self, q: int) -> tuple[int, int, int, int]:
        k = q % self.shore
        q //= self.shore
        u = q % 2
        q //= 2
        return (q // self.cols, q % self.cols, u, k)

    def cell(self, r: int, c: int) -> list[int]:
        """Working qubits of cell (r, c), shore 0 first."""
        return [
            self.linear(r, c, u, k)
            for u in (0, 1)
            for k in range(self.shore)
            if self.linear(r, c, u, k) not in self.dead
        ]

    @property
    def vertices(self) -> list[int]:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(_pair(u, v) for u, v in self.graph.edges)


def chimera_graph(rows: int, cols: int | None = None, shore: int = 4, dead: Iterable[int] = ()) -> HardwareGraph:
    """Build a Chimera hardware graph with the given dead qubits removed."""
    cols = rows if cols is None else cols
    if rows < 1 or cols < 1 or shore < 1:
        raise ModelError("Chimera dimensions must be positive")
    total = rows * cols * 2 * shore
    dead = frozenset(int(q) for q in dead)
    bad = [q for q in dead if not 0 <= q < total]
    if bad:
        raise ModelError(f"dead qubits out of range: {sorted(bad)}")
    hw = HardwareGraph(rows, cols, shore, dead, nx.Graph())
    g = hw.graph
    g.add_nodes_from(q for q in range(total) if q not in dead)
    lin = hw.linear
    for r in range(rows):
        for c in range(cols):
            for k in range(shore):
                for k2 in range(shore):
                    g.add_edge(lin(r, c, 0, k), lin(r, c, 1, k2))
                if r + 1 < rows:
                    g.add_edge(lin(r, c, 0, k), lin(r + 1, c, 0, k))
                if c + 1 < cols:
                    g.add_edge(lin(r, c, 1, k), lin(r, c + 1, 1, k))
    g.remove_nodes_from(dead)
    return hw


def as_graph(g) -> nx.Graph:
    return g.graph if isinstance(g, HardwareGraph) else g


# -- transformations ------------------------------------------------------


def spin_reversal(model: IsingModel, mask: Sequence[int]) -> IsingModel:
    """Gauge transform: energy(spin_reversal(m, mask), mask * s) == energy(m, s)."""
    if len(mask) != model.num_vars:
        raise ModelError("mask length does not match model")
    m = [int(x) for x in mask]
    if any(x not in (-1, 1) for x in m):
        raise ModelError("mask entries must be +-1")
    return IsingModel(
        model.num_vars,
        {i: m[i] * v for i, v in model.linear.items()},
        {(i, j): m[i] * m[j] * v for (i, j), v in model.quadratic.items()},
        model.offset,
    )


def spanning_tree_edges(graph: nx.Graph, chain: Iterable[int]) -> list[tuple[int, int]]:
    """BFS spanning tree of the subgraph induced by ``chain``, rooted at its smallest vertex."""
    nodes = set(chain)
    if not nodes:
        return []
    root = min(nodes)
    seen = {root}
    queue = deque([root])
    edges = []
    while queue:
        u = queue.popleft()
        for v in sorted(graph.adj[u]):
            if v in nodes and v not in seen:
                seen.add(v)
                edges.append(_pair(u, v))
                queue.append(v)
    if len(seen) != len(nodes):
        raise ModelError(f"chain rooted at {root} is disconnected")
    return edges


def compose_embedded(
    penalties: Sequence[tuple[IsingModel, Mapping[int, int]]],
    chains: Mapping[object, Iterable[int]],
    graph,
    chain_strength: float = 1.0,
    bounds: ParameterBounds | None = None,
) -> tuple[IsingModel, float]:
    """Sum placed penalty models and chain couplings into one hardware model.

    Each penalty is an Ising model over local labels together with a map from
    local labels to hardware qubits. Every chain receives a coupling of
    ``-chain_strength`` on the edges of a spanning tree of its induced
    subgraph. If ``bounds`` is given and any coefficient falls outside it, the
    whole model is multiplied by the smallest factor that restores
    feasibility.

    Returns:
        (model, scale) where ``scale`` is the factor applied (1.0 if none).
    """
    g = as_graph(graph)
    n = max(g.nodes) + 1 if g.number_of_nodes() else 0
    owner: dict[int, object] = {}
    for name, chain in chains.items():
        for q in chain:
            if q not in g:
                raise ModelError(f"chain {name!r} uses missing qubit {q}")
            if q in owner:
                raise ModelError(f"chains {owner[q]!r} and {name!r} overlap at qubit {q}")
            owner[q] = name
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    offset = 0.0
    for model, placement in penalties:
        for i in model.active_variables():
            if i not in placement or placement[i] not in g:
                raise ModelError(f"penalty variable {i} is not placed on a working qubit")
        for i, v in model.linear.items():
            q = placement[i]
            lin[q] = lin.get(q, 0.0) + v
        for (i, j), v in model.quadratic.items():
            a, b = placement[i], placement[j]
            if not g.has_edge(a, b):
                raise ModelError(f"penalty coupling ({i}, {j}) maps to missing edge ({a}, {b})")
            key = _pair(a, b)
            quad[key] = quad.get(key, 0.0) + v
        offset += model.offset
    for name, chain in chains.items():
        for e in spanning_tree_edges(g, chain):
            quad[e] = quad.get(e, 0.0) - chain_strength
    total = IsingModel(n, lin, quad, offset)
    scale = 1.0
    if bounds is not None:
        scale = bounds.scale_to_fit(total)
        if scale < 1.0:
            total = total.scaled(scale)
    return total, scale


# -- interchange format ---------------------------------------------------


def dumps(model: IsingModel, comments: Sequence[str] = ()) -> str:
    """Serialise to the line-oriented ``vars/offset/h/J`` text format."""
    lines = [f"# {c}" for c in comments]
    lines.append(f"vars {model.num_vars}")
    lines.append(f"offset {model.offset!r}")
    lines += [f"h {i} {v!r}" for i, v in model.linear.items()]
    lines += [f"J {i} {j} {v!r}" for (i, j), v in model.quadratic.items()]
    return "\n".join(lines) + "\n"


def loads(text: str) -> IsingModel:
    num_vars = None
    offset = 0.0
    lin: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vars" and len(tok) == 2:
                num_vars = int(tok[1])
            elif tok[0] == "offset" and len(tok) == 2:
                offset += float(tok[1])
            elif tok[0] == "h" and len(tok) == 3:
                i = int(tok[1])
                lin[i] = lin.get(i, 0.0) + float(tok[2])
            elif tok[0] == "J" and len(tok) == 4:
                i, j = int(tok[1]), int(tok[2])
                if i >= j:
                    raise ValueError("J lines need i < j")
                quad[(i, j)] = quad.get((i, j), 0.0) + float(tok[3])
            else:
                raise ValueError(f"unrecognised directive {tok[0]!r}")
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    if num_vars is None:
        raise ModelError("missing 'vars' line")
    return IsingModel(num_vars, lin, quad, offset)

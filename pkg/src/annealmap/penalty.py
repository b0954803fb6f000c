"""Maximum-gap penalty models for constraints on small interaction graphs.

A penalty model for a feasible set F places the n constraint variables on
vertices of an m-vertex graph, treats the rest as ancillas ``a`` and picks
fields, couplings and an offset so that

    min_a E(s, a) == 0   for s in F,
    min_a E(s, a) >= g   for s not in F,

with the gap ``g`` as large as the parameter bounds allow. With a faulty set
F2 the model additionally pins ``min_a E(s, a) == e`` on F2.

For a fixed choice of witness ancillas (one minimising ``a`` per feasible
``s``) the problem is a linear program in the coefficients and ``g``.
Synthesis runs a depth-first branch and bound over witness choices where
every node solves that LP with only the already-chosen witnesses pinned; the
LP value bounds every completion, so the search is exact.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms import isomorphism
from scipy.optimize import linprog

from .csp import Spins, cube
from .ising import IsingModel, ParameterBounds, all_spins

GAP_TOL = 1e-6
ENERGY_TOL = 1e-9
_G_CAP = 1e3


class PenaltyError(ValueError):
    """A constraint has no penalty model on the given placement, or a certificate failed."""


@dataclass(frozen=True)
class Placement:
    """Constraint variables placed on vertices of a small interaction graph.

    Vertices are numbered ``0..m-1``; ``var_map[k]`` is the vertex holding
    constraint variable ``k``.
    """

    num_vertices: int
    edges: tuple[tuple[int, int], ...]
    var_map: tuple[int, ...]
    labels: tuple = ()

    def __post_init__(self):
        edges = tuple(sorted({(min(u, v), max(u, v)) for u, v in self.edges}))
        if any(u == v or not 0 <= u < self.num_vertices or v >= self.num_vertices for u, v in edges):
            raise PenaltyError("bad edge in placement graph")
        if len(set(self.var_map)) != len(self.var_map):
            raise PenaltyError("variable map is not injective")
        if any(not 0 <= v < self.num_vertices for v in self.var_map):
            raise PenaltyError("variable mapped outside the graph")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "var_map", tuple(int(v) for v in self.var_map))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.num_vertices)))

    @classmethod
    def from_graph(cls, graph: nx.Graph, var_vertices: Sequence) -> "Placement":
        nodes = sorted(graph.nodes)
        idx = {v: k for k, v in enumerate(nodes)}
        return cls(
            len(nodes),
            tuple((idx[u], idx[v]) for u, v in graph.edges),
            tuple(idx[v] for v in var_vertices),
            tuple(nodes),
        )

    @property
    def num_vars(self) -> int:
        return len(self.var_map)

    @property
    def ancillas(self) -> tuple[int, ...]:
        used = set(self.var_map)
        return tuple(v for v in range(self.num_vertices) if v not in used)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_vertices))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class GapReport:
    min_feasible: float
    gap: float
    fault_level: float | None
    witnesses: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PenaltyModel:
    placement: Placement
    model: IsingModel
    gap: float
    fault_level: float | None = None
    feasible: frozenset = frozenset()
    faulty: frozenset = frozenset()
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        p = self.placement
        return {
            "num_vertices": p.num_vertices,
            "edges": [list(e) for e in p.edges],
            "var_map": list(p.var_map),
            "offset": repr(self.model.offset),
            "h": {str(i): repr(v) for i, v in self.model.linear.items()},
            "J": [[i, j, repr(v)] for (i, j), v in self.model.quadratic.items()],
            "gap": repr(self.gap),
            "fault_level": None if self.fault_level is None else repr(self.fault_level),
            "feasible": sorted(list(t) for t in self.feasible),
            "faulty": sorted(list(t) for t in self.faulty),
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, d: dict) -> "PenaltyModel":
        p = Placement(d["num_vertices"], tuple(map(tuple, d["edges"])), tuple(d["var_map"]))
        model = IsingModel(
            p.num_vertices,
            {int(i): float(v) for i, v in d["h"].items()},
            {(i, j): float(v) for i, j, v in d["J"]},
            float(d["offset"]),
        )
        e = d.get("fault_level")
        return cls(
            p,
            model,
            float(d["gap"]),
            None if e is None else float(e),
            frozenset(map(tuple, d.get("feasible", []))),
            frozenset(map(tuple, d.get("faulty", []))),
            tuple(d.get("notes", [])),
        )


def reify(healthy: Iterable[Spins], faulty: Iterable[Spins] = ()) -> frozenset:
    """Append a health spin: +1 on healthy tuples, -1 on faulty ones."""
    h = frozenset(tuple(t) for t in healthy)
    f = frozenset(tuple(t) for t in faulty)
    if h & f:
        raise PenaltyError("healthy and faulty sets overlap")
    return frozenset(t + (1,) for t in h) | frozenset(t + (-1,) for t in f)


# -- enumeration of energies ----------------------------------------------


class _Table:
    """Feature rows phi(z) = (1, z_i, z_i z_j) for every configuration, grouped by s."""

    def __init__(self, placement: Placement):
        m = placement.num_vertices
        self.placement = placement
        z = all_spins(m).astype(np.float64)
        cols = [np.ones((z.shape[0], 1)), z]
        if placement.edges:
            e = np.array(placement.edges)
            cols.append(z[:, e[:, 0]] * z[:, e[:, 1]])
        self.phi = np.hstack(cols)
        n = placement.num_vars
        anc = placement.ancillas
        s_part = z[:, list(placement.var_map)] if n else np.zeros((z.shape[0], 0))
        a_part = z[:, list(anc)] if anc else np.zeros((z.shape[0], 0))
        self.s_code = _codes(s_part)
        self.a_code = _codes(a_part)
        self.num_anc = len(anc)
        # rows[s_code] -> indices of configurations carrying that s, ordered by a_code
        order = np.lexsort((self.a_code, self.s_code))
        self.rows = order.reshape(2**n, 2**len(anc))
        self.nfeat = self.phi.shape[1]

    def energies(self, theta: np.ndarray) -> np.ndarray:
        """Energies as a (2**n, 2**anc) matrix."""
        return (self.phi @ theta)[self.rows]


def _codes(part: np.ndarray) -> np.ndarray:
    k = part.shape[1]
    if k == 0:
        return np.zeros(part.shape[0], dtype=np.int64)
    bits = (part > 0).astype(np.int64)
    return bits @ (1 << np.arange(k - 1, -1, -1))


def _code(t: Sequence[int]) -> int:
    c = 0
    for x in t:
        c = (c << 1) | (1 if x > 0 else 0)
    return c


def _decode(c: int, k: int) -> Spins:
    return tuple(1 if (c >> (k - 1 - i)) & 1 else -1 for i in range(k))


# -- verification ---------------------------------------------------------


def verify_penalty(
    pm: PenaltyModel | tuple[IsingModel, Placement],
    feasible: Iterable[Spins] | None = None,
    faulty: Iterable[Spins] | None = None,
    tol: float = ENERGY_TOL,
) -> GapReport:
    """Exhaustively certify a penalty model.

    Checks that every feasible state reaches energy 0 (minimised over
    ancillas), every faulty state reaches one common level ``e``, and reports
    the smallest minimised energy over the remaining states as the gap.

    Raises:
        PenaltyError: if a feasible state does not reach 0, faulty states do
            not share a level, or the sets overlap.
    """
    if isinstance(pm, PenaltyModel):
        model, placement = pm.model, pm.placement
        feasible = pm.feasible if feasible is None else feasible
        faulty = pm.faulty if faulty is None else faulty
    else:
        model, placement = pm
    F = frozenset(tuple(t) for t in (feasible or ()))
    F2 = frozenset(tuple(t) for t in (faulty or ()))
    if F & F2:
        raise PenaltyError("feasible and faulty sets overlap")
    if placement.num_vertices > 26:
        raise PenaltyError("too many vertices for exhaustive verification")
    n = placement.num_vars
    z = all_spins(placement.num_vertices)
    en = model.energies(z) if model.num_vars == placement.num_vertices else _energy_on(model, z)
    s_code = _codes(z[:, list(placement.var_map)].astype(float)) if n else np.zeros(len(z), dtype=np.int64)
    a_code = _codes(z[:, list(placement.ancillas)].astype(float)) if placement.ancillas else np.zeros(len(z), dtype=np.int64)
    mins = np.full(2**n, np.inf)
    np.minimum.at(mins, s_code, en)
    witnesses = {}
    worst = -np.inf
    for s in F:
        c = _code(s)
        if abs(mins[c]) > tol:
            raise PenaltyError(f"feasible state {s} has minimum energy {mins[c]:.6g}, not 0")
        worst = max(worst, mins[c])
        at = np.flatnonzero((s_code == c) & (np.abs(en - mins[c]) <= tol))
        witnesses[s] = _decode(int(a_code[at[0]]), len(placement.ancillas))
    level = None
    if F2:
        vals = [mins[_code(s)] for s in F2]
        level = float(np.mean(vals))
        if max(vals) - min(vals) > tol or level <= tol:
            raise PenaltyError(f"faulty states do not share a positive level: {min(vals):.6g}..{max(vals):.6g}")
        for s in F2:
            c = _code(s)
            at = np.flatnonzero((s_code == c) & (np.abs(en - mins[c]) <= tol))
            witnesses[s] = _decode(int(a_code[at[0]]), len(placement.ancillas))
    others = [c for c in range(2**n) if _decode(c, n) not in F and _decode(c, n) not in F2]
    gap = float(min(mins[others])) if others else math.inf
    if level is not None and gap < level - tol:
        raise PenaltyError(f"infeasible energy {gap:.6g} below fault level {level:.6g}")
    if gap <= tol:
        raise PenaltyError(f"infeasible state reaches energy {gap:.6g}")
    return GapReport(float(worst) if F else 0.0, gap, level, witnesses)


def _energy_on(model: IsingModel, z: np.ndarray) -> np.ndarray:
    pad = np.ones((z.shape[0], model.num_vars), dtype=np.int8)
    pad[:, : z.shape[1]] = z
    return model.energies(pad)


# -- synthesis ------------------------------------------------------------


class SearchBudgetError(PenaltyError):
    """Branch and bound stopped after its node budget without a certified answer."""


class _Search:
    def __init__(self, placement, F, F2, level, bounds, max_nodes=None):
        self.max_nodes = max_nodes
        self.t = _Table(placement)
        self.placement = placement
        self.bounds = bounds
        n = placement.num_vars
        self.targets: dict[int, float] = {_code(s): 0.0 for s in F}
        self.targets.update({_code(s): level for s in F2})
        self.level = level
        self.infeasible = [c for c in range(2**n) if c not in self.targets]
        self.nodes = 0
        t = self.t
        m = placement.num_vertices
        nf = t.nfeat
        # x = [theta (nf), g]
        lo = [None] + [bounds.h_min] * m + [bounds.j_min] * len(placement.edges)
        hi = [None] + [bounds.h_max] * m + [bounds.j_max] * len(placement.edges)
        g_lo = level if F2 else None
        g_hi = _G_CAP if self.infeasible else _G_CAP
        self.var_bounds = list(zip(lo, hi)) + [(g_lo, g_hi)]
        rows, rhs = [], []
        for c, tgt in self.targets.items():
            blk = t.phi[t.rows[c]]
            rows.append(np.hstack([-blk, np.zeros((len(blk), 1))]))
            rhs.append(np.full(len(blk), -tgt))
        for c in self.infeasible:
            blk = t.phi[t.rows[c]]
            rows.append(np.hstack([-blk, np.ones((len(blk), 1))]))
            rhs.append(np.zeros(len(blk)))
        self.A_ub = np.vstack(rows)
        self.b_ub = np.concatenate(rhs)
        self.c = np.zeros(nf + 1)
        self.c[-1] = -1.0

    def solve(self, pinned: dict[int, int]):
        """LP with witnesses ``pinned[s_code] = a_code``; returns (g, theta) or None."""
        self.nodes += 1
        if self.max_nodes is not None and self.nodes > self.max_nodes:
            raise SearchBudgetError(f"search stopped after {self.max_nodes} LP nodes")
        t = self.t
        if pinned:
            A_eq = np.array([np.append(t.phi[t.rows[c][a]], 0.0) for c, a in pinned.items()])
            b_eq = np.array([self.targets[c] for c in pinned])
        else:
            A_eq = b_eq = None
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=self.var_bounds, method="highs")
        if res.status != 0:
            return None
        return float(res.x[-1]), res.x[:-1]


def _ancilla_group(placement: Placement) -> np.ndarray:
    """Action on ancilla codes of graph automorphisms that fix every variable vertex.

    Returns an array ``act`` with ``act[g, code]`` the image of ``code`` under
    group element ``g``.
    """
    anc = placement.ancillas
    h = len(anc)
    codes = np.arange(2**h)
    if h == 0:
        return codes[None, :]
    g = placement.graph()
    colour = {v: -1 for v in anc}
    colour.update({v: k for k, v in enumerate(placement.var_map)})
    nx.set_node_attributes(g, colour, "c")
    gm = isomorphism.GraphMatcher(g, g, node_match=lambda x, y: x["c"] == y["c"])
    pos = {v: k for k, v in enumerate(anc)}
    bits = (codes[:, None] >> np.arange(h - 1, -1, -1)) & 1
    weights = 1 << np.arange(h - 1, -1, -1)
    rows = []
    for iso in gm.isomorphisms_iter():
        perm = [pos[iso[v]] for v in anc]
        moved = np.zeros_like(bits)
        moved[:, perm] = bits
        rows.append(moved @ weights)
    return np.unique(np.array(rows), axis=0)


def _optimise(search: _Search, gauge_fixed: bool):
    """Depth-first branch and bound over witness choices.

    Witness candidates are reduced to orbit representatives under the
    ancilla automorphisms that stabilise every witness pinned so far.
    """
    best = {"g": -math.inf, "theta": None, "pinned": None}
    states = sorted(search.targets)
    t = search.t
    act = _ancilla_group(search.placement)

    def node(pinned: dict[int, int], group: np.ndarray):
        sol = search.solve(pinned)
        if sol is None:
            return
        g, theta = sol
        if g <= best["g"] + 1e-9:
            return
        en = t.energies(theta)
        slack = {}
        for c in states:
            if c in pinned:
                continue
            row = en[c] - search.targets[c]
            slack[c] = float(row.min())
        open_states = [c for c, v in slack.items() if v > ENERGY_TOL]
        if not open_states:
            full = dict(pinned)
            for c in states:
                if c not in full:
                    full[c] = int(np.argmin(en[c]))
            best.update(g=g, theta=theta, pinned=full)
            return
        # branch on the state furthest from reaching its target level
        c = max(open_states, key=lambda k: (slack[k], -k))
        reps = act[group].min(axis=0)
        for a in np.argsort(en[c], kind="stable"):
            a = int(a)
            if reps[a] != a:
                continue
            child = dict(pinned)
            child[c] = a
            node(child, group[act[group, a] == a])

    root: dict[int, int] = {}
    if gauge_fixed and states and t.num_anc:
        # flipping an ancilla maps solutions to solutions under symmetric bounds
        root[states[0]] = 2**t.num_anc - 1
    node(root, np.arange(len(act)))
    return best


def _tidy(search: _Search, pinned: dict[int, int], g: float) -> np.ndarray:
    """Among models with gap ``g`` and the given witnesses, minimise the L1 norm of fields and couplings."""
    t = search.t
    nf = t.nfeat
    # x = [theta (nf), g, u (nf - 1)] with |theta_k| <= u_k for k >= 1
    c = np.concatenate([np.zeros(nf + 1), np.ones(nf - 1)])
    A_ub = [np.hstack([search.A_ub, np.zeros((search.A_ub.shape[0], nf - 1))])]
    b_ub = [search.b_ub]
    eye = np.eye(nf - 1)
    for sign in (1.0, -1.0):
        blk = np.zeros((nf - 1, 2 * nf))
        blk[:, 1:nf] = sign * eye
        blk[:, nf + 1:] = -eye
        A_ub.append(blk)
        b_ub.append(np.zeros(nf - 1))
    A_eq = np.array([np.concatenate([t.phi[t.rows[k][a]], np.zeros(nf)]) for k, a in pinned.items()])
    b_eq = np.array([search.targets[k] for k in pinned])
    bounds = search.var_bounds[:-1] + [(g, search.var_bounds[-1][1])] + [(0, None)] * (nf - 1)
    res = linprog(c, A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub), A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return res.x[:nf]


def _theta_model(placement: Placement, theta: np.ndarray) -> IsingModel:
    m = placement.num_vertices
    return IsingModel(
        m,
        {i: theta[1 + i] for i in range(m)},
        {e: theta[1 + m + k] for k, e in enumerate(placement.edges)},
        theta[0],
    )


def _snap(placement, theta, F, F2, g, level, bounds):
    """Round coefficients to small dyadic fractions when the certificate survives."""
    for den in (1, 2, 4, 8, 16, 32, 64):
        snapped = np.round(theta * den) / den
        model = _theta_model(placement, snapped)
        if not bounds.contains(model):
            continue
        try:
            rep = verify_penalty((model, placement), F, F2, tol=1e-12)
        except PenaltyError:
            continue
        if rep.gap >= g - GAP_TOL and (not F2 or abs(rep.fault_level - level) < 1e-12):
            return model, rep
    return None


def _synthesize(placement, F, F2, level, bounds, max_nodes=None):
    if not F:
        raise PenaltyError("empty feasible set")
    n = placement.num_vars
    for s in F | F2:
        if len(s) != n:
            raise PenaltyError(f"state {s} does not match {n} placed variables")
    if placement.num_vertices > 12:
        raise PenaltyError("exact synthesis limited to 12 vertices")
    search = _Search(placement, F, F2, level, bounds, max_nodes)
    best = _optimise(search, gauge_fixed=bounds.symmetric)
    g = best["g"]
    if best["theta"] is None or g < GAP_TOL or (F2 and g < level - GAP_TOL):
        raise PenaltyError("constraint is not representable on this placement")
    unbounded = not search.infeasible
    theta = _tidy(search, best["pinned"], g - 1e-9) if not unbounded else best["theta"]
    if theta is None:
        theta = best["theta"]
    snapped = _snap(placement, theta, F, F2, g, level, bounds)
    if snapped is not None:
        model, rep = snapped
    else:
        model = _theta_model(placement, theta)
        rep = verify_penalty((model, placement), F, F2, tol=1e-7)
    gap = math.inf if unbounded else rep.gap
    return model, gap, rep, search.nodes


def synthesize_penalty(placement: Placement, feasible: Iterable[Spins], bounds: ParameterBounds | None = None,
                       max_nodes: int | None = None) -> PenaltyModel:
    """Maximum-gap penalty model for ``feasible`` on a fixed placement.

    ``max_nodes`` caps the LP count; past it ``SearchBudgetError`` is raised.
    """
    bounds = bounds or ParameterBounds()
    F = frozenset(tuple(t) for t in feasible)
    model, gap, rep, nodes = _synthesize(placement, F, frozenset(), 0.0, bounds, max_nodes)
    return PenaltyModel(placement, model, gap, None, F, frozenset(), (f"lp_nodes={nodes}",))


def synthesize_faulty_penalty(
    placement: Placement,
    healthy: Iterable[Spins],
    faulty: Iterable[Spins],
    fault_level: float | None = None,
    bounds: ParameterBounds | None = None,
    max_nodes: int | None = None,
) -> PenaltyModel:
    """Three-level penalty: healthy at 0, faulty at ``fault_level``, the rest at >= gap.

    With ``fault_level=None`` the level is chosen by a short fixed-point
    search aiming for gap >= 2 * level; if that ratio is not reached the
    returned model carries a ``ratio<2`` note.
    """
    bounds = bounds or ParameterBounds()
    F1 = frozenset(tuple(t) for t in healthy)
    F2 = frozenset(tuple(t) for t in faulty)
    if F1 & F2:
        raise PenaltyError("healthy and faulty sets overlap")
    if not F2:
        return synthesize_penalty(placement, F1, bounds, max_nodes)
    if fault_level is not None:
        if fault_level <= 0:
            raise PenaltyError("fault level must be positive")
        model, gap, rep, nodes = _synthesize(placement, F1, F2, float(fault_level), bounds, max_nodes)
        return PenaltyModel(placement, model, gap, rep.fault_level, F1, F2, (f"lp_nodes={nodes}",))
    two_level = synthesize_penalty(placement, F1 | F2, bounds, max_nodes).gap
    level = two_level / 2 if math.isfinite(two_level) else 1.0
    best = None
    for _ in range(4):
        try:
            model, gap, rep, nodes = _synthesize(placement, F1, F2, level, bounds, max_nodes)
        except SearchBudgetError:
            raise
        except PenaltyError:
            level /= 2
            continue
        cand = (gap / level, model, gap, rep)
        if best is None or cand[0] > best[0] + 1e-9:
            best = cand
        if gap >= 2 * level - GAP_TOL:
            break
        level = gap / 2
    if best is None:
        raise PenaltyError("no fault level admits a penalty model on this placement")
    ratio, model, gap, rep = best
    notes = () if ratio >= 2 - GAP_TOL else ("ratio<2",)
    return PenaltyModel(placement, model, gap, rep.fault_level, F1, F2, notes)


# -- placements -----------------------------------------------------------


def _automorphisms(graph: nx.Graph, nodes: list) -> list[tuple[int, ...]]:
    idx = {v: k for k, v in enumerate(nodes)}
    out = []
    for iso in isomorphism.GraphMatcher(graph, graph).isomorphisms_iter():
        out.append(tuple(idx[iso[v]] for v in nodes))
    return out


def variable_symmetries(n: int, *sets: Iterable[Spins]) -> list[tuple[int, ...]]:
    """Permutations of variable positions that preserve every given tuple set."""
    sets = [frozenset(tuple(t) for t in s) for s in sets]
    out = []
    for perm in itertools.permutations(range(n)):
        if all(frozenset(tuple(t[p] for p in perm) for t in s) == s for s in sets):
            out.append(perm)
    return out


def enumerate_placements(n: int, graph: nx.Graph, feasible: Iterable[Spins] | None = None,
                         faulty: Iterable[Spins] | None = None) -> list[Placement]:
    """Placements of ``n`` variables on ``graph`` up to symmetry.

    Two injections are equivalent when they differ by an automorphism of the
    graph composed with a permutation of variables. Without ``feasible`` all
    variable permutations are allowed (the variables are interchangeable);
    with it only permutations preserving the feasible (and faulty) sets are.
    """
    nodes = sorted(graph.nodes)
    m = len(nodes)
    if n > m:
        raise PenaltyError(f"cannot place {n} variables on {m} vertices")
    if m > 10:
        raise PenaltyError("placement enumeration limited to 10 vertices")
    autos = _automorphisms(graph, nodes)
    if feasible is None:
        perms = list(itertools.permutations(range(n)))
    else:
        perms = variable_symmetries(n, feasible, faulty or ())
    seen = set()
    reps = []
    for inj in itertools.permutations(range(m), n):
        if inj in seen:
            continue
        orbit = {tuple(a[inj[p[k]]] for k in range(n)) for a in autos for p in perms}
        seen |= orbit
        reps.append(min(orbit))
    idx_edges = tuple((nodes.index(u), nodes.index(v)) for u, v in graph.edges)
    return [Placement(m, idx_edges, r, tuple(nodes)) for r in sorted(reps)]


def best_penalty(feasible, graph: nx.Graph, faulty=None, fault_level=None, bounds=None) -> PenaltyModel:
    """Synthesise on every placement of ``graph`` and keep the largest gap."""
    F = frozenset(tuple(t) for t in feasible)
    n = len(next(iter(F)))
    best = None
    for pl in enumerate_placements(n, graph, F, faulty):
        try:
            if faulty:
                pm = synthesize_faulty_penalty(pl, F, faulty, fault_level, bounds)
            else:
                pm = synthesize_penalty(pl, F, bounds)
        except PenaltyError:
            continue
        if best is None or pm.gap > best.gap + GAP_TOL:
            best = pm
    if best is None:
        raise PenaltyError("no placement admits a penalty model")
    return best


# -- cache ----------------------------------------------------------------


def signature(feasible, placement: Placement, faulty=(), fault_level=None, bounds=None) -> str:
    bounds = bounds or ParameterBounds()
    key = {
        "F": sorted(list(t) for t in feasible),
        "F2": sorted(list(t) for t in faulty),
        "e": fault_level,
        "m": placement.num_vertices,
        "edges": [list(e) for e in placement.edges],
        "vars": list(placement.var_map),
        "bounds": [bounds.h_min, bounds.h_max, bounds.j_min, bounds.j_max],
    }
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()


class PenaltyCache:
    """JSON-backed map from constraint signatures to synthesised penalty models."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = path
        self._data: dict[str, dict] = {}
        if path is not None and os.path.exists(path):
            with open(path) as fh:
                self._data = json.load(fh)

    def __len__(self):
        return sum(1 for d in self._data.values() if "infeasible" not in d)

    def get(self, key: str) -> PenaltyModel | None:
        d = self._data.get(key)
        return None if d is None or "infeasible" in d else PenaltyModel.from_json(d)

    def put(self, key: str, pm: PenaltyModel) -> None:
        self._data[key] = pm.to_json()

    def synthesize(self, placement, feasible, faulty=(), fault_level=None, bounds=None,
                   max_nodes: int | None = None) -> PenaltyModel:
        """Cached synthesis; failures are remembered and re-raised.

        A failure from an exhausted node budget is only replayed for budgets
        no larger than the one that failed.
        """
        key = signature(feasible, placement, faulty, fault_level, bounds)
        d = self._data.get(key)
        if d is not None and "infeasible" in d:
            spent = d.get("budget")
            if spent is None:
                raise PenaltyError(d["infeasible"])
            if max_nodes is not None and max_nodes <= spent:
                raise SearchBudgetError(d["infeasible"])
        pm = self.get(key)
        if pm is None:
            try:
                if faulty:
                    pm = synthesize_faulty_penalty(placement, feasible, faulty, fault_level, bounds, max_nodes)
                else:
                    pm = synthesize_penalty(placement, feasible, bounds, max_nodes)
            except SearchBudgetError as e:
                self._data[key] = {"infeasible": str(e), "budget": max_nodes}
                raise
            except PenaltyError as e:
                self._data[key] = {"infeasible": str(e)}
                raise
            self.put(key, pm)
        return pm

    def save(self) -> None:
        if self.path is None:
            return
        d = os.path.dirname(os.path.abspath(self.path))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(self._data, fh, sort_keys=True, indent=1)
        os.replace(tmp, self.path)

"""Region decomposition for problems too large for one embedding.

A region is a subset of constraints together with the Ising model of their
summed penalties. Local indices of a region model list the region's logical
variables first (in increasing global order) followed by ancillas.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms.community import kernighan_lin_bisection

from .csp import Constraint, Csp
from .ising import IsingModel, ModelError
from .samplers import (
    Schedule,
    exact_boltzmann_marginals,
    exact_ground_states,
    greedy_descent,
    sa_sample,
)


class DecompositionError(ModelError):
    pass


@dataclass(frozen=True)
class Region:
    variables: tuple[int, ...]
    model: IsingModel
    constraints: tuple[int, ...] = ()
    gap: float = 1.0

    @property
    def size(self) -> int:
        return self.model.num_vars


class RegionGraph:
    """Regions, their boundaries and per-variable region counts."""

    def __init__(self, num_vars: int, regions: Sequence[Region], csp: Csp | None = None,
                 fixed: Mapping[int, int] | None = None):
        self.num_vars = int(num_vars)
        self.regions = tuple(regions)
        self.csp = csp
        self.fixed = dict(fixed or {})
        counts = np.zeros(self.num_vars, dtype=np.int64)
        for r in self.regions:
            if len(set(r.variables)) != len(r.variables):
                raise DecompositionError("repeated variable in a region")
            if r.model.num_vars < len(r.variables):
                raise DecompositionError("region model smaller than its variable list")
            for v in r.variables:
                if not 0 <= v < self.num_vars:
                    raise DecompositionError(f"variable {v} out of range")
            counts[list(r.variables)] += 1
            if any(v in self.fixed for v in r.variables):
                raise DecompositionError("fixed variables cannot appear in region variable lists")
        if csp is not None:
            seen = sorted(c for r in self.regions for c in r.constraints)
            if seen != list(range(len(csp.constraints))):
                raise DecompositionError("every constraint must lie in exactly one region")
        self.counts = counts
        self.boundary = tuple(
            tuple(v for v in r.variables if counts[v] >= 2) for r in self.regions
        )
        self._local = [{v: k for k, v in enumerate(r.variables)} for r in self.regions]

    def __len__(self):
        return len(self.regions)

    def local(self, r: int, v: int) -> int:
        return self._local[r][v]

    def regions_of(self, v: int) -> list[int]:
        return [r for r in range(len(self.regions)) if v in self._local[r]]

    @property
    def degrees(self) -> np.ndarray:
        """Degree of each logical variable in the union of region interaction graphs."""
        nbrs = [set() for _ in range(self.num_vars)]
        for r, reg in enumerate(self.regions):
            m = len(reg.variables)
            for i, j in reg.model.quadratic:
                if i < m and j < m:
                    a, b = reg.variables[i], reg.variables[j]
                    nbrs[a].add(b)
                    nbrs[b].add(a)
        return np.array([len(s) for s in nbrs], dtype=np.int64)

    def clamp(self, fixed: Mapping[int, int]) -> "RegionGraph":
        """Substitute fixed spins into every region model and drop them from the regions."""
        fixed = {int(v): int(s) for v, s in fixed.items()}
        regions = []
        for r, reg in enumerate(self.regions):
            loc_fix = {self.local(r, v): s for v, s in fixed.items() if v in self._local[r]}
            keep = [k for k in range(reg.model.num_vars) if k not in loc_fix]
            mapping = {k: i for i, k in enumerate(keep)}
            model = reg.model.fix_variables(loc_fix)
            model = IsingModel(len(keep), {mapping[i]: v for i, v in model.linear.items()},
                               {(mapping[i], mapping[j]): v for (i, j), v in model.quadratic.items()},
                               model.offset)
            vars_ = tuple(v for v in reg.variables if v not in fixed)
            regions.append(Region(vars_, model, reg.constraints, reg.gap))
        return RegionGraph(self.num_vars, regions, self.csp, {**self.fixed, **fixed})

    def start(self) -> np.ndarray:
        """All-up assignment with fixed spins in place."""
        x = np.ones(self.num_vars, dtype=np.int8)
        for v, s in self.fixed.items():
            x[v] = s
        return x

    def has_ancillas(self) -> bool:
        return any(r.model.num_vars > len(r.variables) for r in self.regions)

    def joint_model(self) -> IsingModel:
        """Sum of region models on global indices (regions without ancillas only)."""
        if self.has_ancillas():
            raise DecompositionError("joint model needs ancilla-free regions")
        total = IsingModel(self.num_vars)
        for reg in self.regions:
            total = total + reg.model.relabel(dict(enumerate(reg.variables)), self.num_vars)
        return total

    @classmethod
    def from_models(cls, num_vars: int, parts: Sequence[tuple[Sequence[int], IsingModel]]) -> "RegionGraph":
        return cls(num_vars, [Region(tuple(int(v) for v in vs), m) for vs, m in parts])

    @classmethod
    def from_csp(cls, csp: Csp, penalties: Sequence, groups: Sequence[Sequence[int]]) -> "RegionGraph":
        regions = []
        for group in groups:
            group = tuple(sorted(int(c) for c in group))
            vars_ = sorted({v for c in group for v in csp.constraints[c].scope})
            loc = {v: k for k, v in enumerate(vars_)}
            parts = []
            nxt = len(vars_)
            for c in group:
                pm = penalties[c]
                pl = pm.placement
                mapping = {}
                for k, vert in enumerate(pl.var_map):
                    mapping[vert] = loc[csp.constraints[c].scope[k]]
                for vert in pl.ancillas:
                    mapping[vert] = nxt
                    nxt += 1
                parts.append((pm.model, mapping))
            model = IsingModel(nxt)
            for m, mapping in parts:
                model = model + m.relabel(mapping, nxt)
            gap = min(_separation(penalties[c]) for c in group)
            regions.append(Region(tuple(vars_), model, group, gap))
        return cls(csp.num_vars, regions, csp)


def _separation(pm) -> float:
    vals = [v for v in (pm.gap, pm.fault_level) if v is not None and math.isfinite(v) and v > 0]
    return min(vals) if vals else 1.0


def sub_csp(csp: Csp, group: Sequence[int]) -> tuple[Csp, list[int]]:
    """CSP restricted to the constraints in ``group`` and the global index of each kept variable."""
    cons = [csp.constraints[c] for c in group]
    vars_ = sorted({v for c in cons for v in c.scope})
    loc = {v: k for k, v in enumerate(vars_)}
    new = [Constraint(tuple(loc[v] for v in c.scope), c.feasible, c.faulty, c.name) for c in cons]
    return Csp(tuple(csp.variables[v] for v in vars_), tuple(new)), vars_


# -- partitioning ---------------------------------------------------------


def _constraint_graph(csp: Csp, nodes) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(nodes)
    nodes = set(nodes)
    for a, b in csp.constraint_graph_edges():
        if a in nodes and b in nodes:
            shared = len(set(csp.constraints[a].scope) & set(csp.constraints[b].scope))
            g.add_edge(a, b, weight=shared)
    return g


def _grow(g: nx.Graph, target: int) -> set:
    """Greedy region growing: repeatedly absorb the node with the best internal/external balance."""
    part: set = set()
    order = sorted(g.nodes, key=lambda v: (g.degree(v, weight="weight"), v))
    while len(part) < target:
        frontier = {u for v in part for u in g[v]} - part
        if not frontier:
            part.add(next(v for v in order if v not in part))
            continue

        def gain(u):
            inside = sum(d["weight"] for w, d in g[u].items() if w in part)
            outside = sum(d["weight"] for w, d in g[u].items() if w not in part)
            return (inside - outside, -u)

        part.add(max(frontier, key=gain))
    return part


def _split(csp: Csp, nodes: list[int], k: int, seed: int) -> list[list[int]]:
    if k <= 1 or len(nodes) <= 1:
        return [sorted(nodes)]
    k1 = k // 2
    target = max(1, min(len(nodes) - 1, round(len(nodes) * k1 / k)))
    g = _constraint_graph(csp, nodes)
    a = _grow(g, target)
    b = set(nodes) - a
    if a and b and g.number_of_edges():
        a, b = kernighan_lin_bisection(g, partition=(a, b), weight="weight", seed=seed)
    return _split(csp, sorted(a), k1, seed) + _split(csp, sorted(b), k - k1, seed)


def partition_constraints(csp: Csp, num_regions: int, seed: int = 0) -> list[list[int]]:
    """Balanced low-cut partition of the constraints by recursive bisection."""
    m = len(csp.constraints)
    if not 1 <= num_regions <= max(m, 1):
        raise DecompositionError(f"cannot split {m} constraints into {num_regions} regions")
    groups = _split(csp, list(range(m)), num_regions, seed)
    return [g for g in groups if g]


def partition_regions(csp: Csp, penalties: Sequence, fits: Callable[[Sequence[int]], bool] | None = None,
                      num_regions: int | None = None, seed: int = 0) -> RegionGraph:
    """Partition constraints into regions that each pass ``fits``.

    With ``num_regions`` the count is fixed; otherwise the smallest count
    whose bisection passes ``fits`` on every region is used.
    """
    m = len(csp.constraints)
    if fits is not None:
        for c in range(m):
            if not fits([c]):
                raise DecompositionError(f"constraint {c} alone exceeds the region budget")
    counts = [num_regions] if num_regions is not None else range(1, m + 1)
    for k in counts:
        groups = partition_constraints(csp, k, seed)
        if fits is None or all(fits(g) for g in groups):
            return RegionGraph.from_csp(csp, penalties, groups)
    raise DecompositionError("no partition satisfies the region budget")


def embedding_budget(hw, penalties: Sequence, csp: Csp, max_qubits: int | None = None, params=None) -> Callable:
    """``fits`` callback: the region must embed on ``hw`` within ``max_qubits`` qubits."""
    from .compile import embed_csp
    from .embedding.rrr import EmbeddingError

    def fits(group):
        sub, _ = sub_csp(csp, group)
        try:
            _, res = embed_csp(sub, hw, [penalties[c] for c in group], params)
        except EmbeddingError:
            return False
        return max_qubits is None or len(res.embedding.qubits()) <= max_qubits

    return fits


# -- corrected energies and free energies ---------------------------------


def corrective_energy(rg: RegionGraph, r: int, biases: Mapping[int, Sequence[float]]) -> IsingModel:
    """Region model plus boundary terms ``V_i(z_i)`` given as ``(V(-1), V(+1))``."""
    reg = rg.regions[r]
    bnd = set(rg.boundary[r])
    lin = {}
    off = 0.0
    for v, (vm, vp) in biases.items():
        if v not in bnd:
            raise DecompositionError(f"variable {v} is not on the boundary of region {r}")
        k = rg.local(r, v)
        lin[k] = lin.get(k, 0.0) + 0.5 * (vp - vm)
        off += 0.5 * (vp + vm)
    return reg.model + IsingModel(reg.model.num_vars, lin, {}, off)


def _configs(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8).reshape(-1, n)


def region_distribution(model: IsingModel, temperature: float, max_vars: int = 20) -> np.ndarray:
    """Exact Boltzmann probabilities over all local configurations (product order)."""
    if model.num_vars > max_vars:
        raise DecompositionError(f"region with {model.num_vars} spins is too large to enumerate")
    e = model.energies(_configs(model.num_vars))
    w = -(e - e.min()) / temperature
    p = np.exp(w)
    return p / p.sum()


def _plogp(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz])))


def regional_bethe_energy(rg: RegionGraph, region_beliefs: Sequence[np.ndarray], var_beliefs: np.ndarray,
                          temperature: float) -> float:
    """Regional Bethe free energy of the given beliefs.

    ``region_beliefs[r]`` is a distribution over all configurations of the
    region's local spins in product order; ``var_beliefs[i] = (b_i(-1), b_i(+1))``.
    """
    total = 0.0
    for reg, b in zip(rg.regions, region_beliefs):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (2 ** reg.model.num_vars,) or abs(b.sum() - 1.0) > 1e-6 or (b < 0).any():
            raise DecompositionError("region belief is not a normalised distribution")
        e = reg.model.energies(_configs(reg.model.num_vars))
        total += float(b @ e) + temperature * _plogp(b)
    var_beliefs = np.asarray(var_beliefs, dtype=np.float64)
    for i in range(rg.num_vars):
        c = int(rg.counts[i])
        if c == 0:
            continue
        bi = var_beliefs[i]
        if abs(bi.sum() - 1.0) > 1e-6 or (bi < 0).any():
            raise DecompositionError(f"belief of variable {i} is not normalised")
        total += temperature * (1 - c) * _plogp(bi)
    return total


# -- region solvers -------------------------------------------------------


def exact_oracle(seed: int = 0, cap: int = 256) -> Callable[[IsingModel], np.ndarray]:
    """Region minimiser returning a seeded random choice among exact ground states."""
    rng = np.random.default_rng(seed)

    def solve(model: IsingModel) -> np.ndarray:
        gs = exact_ground_states(model, cap=cap)
        return gs.states[int(rng.integers(gs.count))]

    return solve


def sa_oracle(num_reads: int = 20, schedule: Schedule | None = None, seed: int = 0) -> Callable[[IsingModel], np.ndarray]:
    calls = itertools.count()

    def solve(model: IsingModel) -> np.ndarray:
        return sa_sample(model, schedule, num_reads, seed + 7919 * next(calls)).lowest()[0]

    return solve


def exact_region_sampler() -> Callable[[IsingModel, float], np.ndarray]:
    """Exact single-spin Boltzmann marginals of a region model."""

    def sample(model: IsingModel, temperature: float) -> np.ndarray:
        return exact_boltzmann_marginals(model, temperature).single

    return sample


def sa_region_sampler(num_reads: int = 10_000, sweeps: int = 1000, seed: int = 0) -> Callable[[IsingModel, float], np.ndarray]:
    """Empirical marginals of annealing runs that end at inverse temperature 1/T."""
    calls = itertools.count()

    def sample(model: IsingModel, temperature: float) -> np.ndarray:
        beta = 1.0 / temperature
        sched = Schedule(sweeps, min(0.1, beta), beta)
        ss = sa_sample(model, sched, num_reads, seed + 7919 * next(calls))
        plus = (ss.counts[:, None] * (ss.samples > 0)).sum(axis=0) / ss.num_reads
        return np.stack([1.0 - plus, plus], axis=1)

    return sample


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    delta: float
    violations: int
    best_violations: int
    bethe: float = math.nan

    def line(self) -> str:
        return f"{self.iteration}\t{self.delta:.6g}\t{self.violations}\t{self.best_violations}\t{self.bethe:.6g}"


def _violations(csp: Csp | None, x) -> int:
    """Number of infeasible constraints; faulty-but-allowed states do not count."""
    if csp is None:
        return 0
    return sum(1 for s in csp.statuses(x) if s == 2)


def _cost(csp: Csp | None, x) -> float:
    return 0.0 if csp is None else csp.cost(x)


# -- divide and concur ----------------------------------------------------


@dataclass(frozen=True)
class DcParams:
    max_iters: int = 500
    difference_map: bool = True


@dataclass
class DcResult:
    assignment: np.ndarray
    consensus: bool
    iterations: int
    violations: int
    trace: list = field(default_factory=list)


def _divide(rg, oracle, r, bias):
    """Minimise the scaled region model with linear biases ``-bias_i z_i`` on its boundary."""
    reg = rg.regions[r]
    bnd = rg.boundary[r]
    scale = (1.0 + 2.0 * float(np.abs(bias).sum())) / reg.gap
    lin = {rg.local(r, v): -float(b) for v, b in zip(bnd, bias)}
    model = reg.model.scaled(scale) + IsingModel(reg.model.num_vars, lin)
    z = np.asarray(oracle(model))
    return z[: len(reg.variables)]


def dc_solve(rg: RegionGraph, oracle: Callable[[IsingModel], np.ndarray],
             params: DcParams | None = None) -> DcResult:
    """Divide-and-concur over the regions of ``rg``.

    Region copies of each boundary variable receive linear biases toward a
    replica value. Plain mode sets the replica to the average of the copies;
    difference-map mode uses the beta = 1 update r <- r + P_C(2 P_D(r) - r) - P_D(r).
    Consensus means every copy agrees and no constraint is infeasible. The
    best assignment by MAX-CSP cost is returned otherwise.
    """
    if rg.csp is None:
        raise DecompositionError("divide-and-concur needs the region graph of a CSP")
    params = params or DcParams()
    csp = rg.csp
    k = len(rg.regions)
    rep = [np.zeros(len(b)) for b in rg.boundary]
    best_x, best_v, best_c = None, None, None
    trace = []
    for it in range(1, params.max_iters + 1):
        local = [_divide(rg, oracle, r, rep[r]) for r in range(k)]
        D = [np.array([local[r][rg.local(r, v)] for v in rg.boundary[r]], dtype=np.float64) for r in range(k)]
        sums = np.zeros(rg.num_vars)
        agree = True
        first = {}
        for r in range(k):
            for v, d in zip(rg.boundary[r], D[r]):
                sums[v] += d
                if first.setdefault(v, d) != d:
                    agree = False
        mean = sums / np.maximum(rg.counts, 1)
        x = rg.start()
        for r, reg in enumerate(rg.regions):
            for kk, v in enumerate(reg.variables):
                if rg.counts[v] == 1:
                    x[v] = local[r][kk]
        for v in range(rg.num_vars):
            if rg.counts[v] >= 2:
                x[v] = 1 if mean[v] >= 0 else -1
        viol = _violations(csp, x)
        cost = _cost(csp, x)
        if best_c is None or cost < best_c:
            best_x, best_v, best_c = x.copy(), viol, cost
        if params.difference_map:
            conc = np.zeros(rg.num_vars)
            for r in range(k):
                for v, d, q in zip(rg.boundary[r], D[r], rep[r]):
                    conc[v] += 2 * d - q
            conc /= np.maximum(rg.counts, 1)
            new = [rep[r] + np.array([conc[v] for v in rg.boundary[r]]) - D[r] for r in range(k)]
        else:
            new = [np.array([mean[v] for v in rg.boundary[r]]) for r in range(k)]
        delta = max((float(np.abs(a - b).max()) for a, b in zip(new, rep) if len(a)), default=0.0)
        rep = new
        trace.append(TraceRow(it, delta, viol, best_v))
        if agree and viol == 0:
            return DcResult(x, True, it, 0, trace)
    return DcResult(best_x, False, params.max_iters, best_v, trace)


# -- generalized belief propagation ---------------------------------------


@dataclass(frozen=True)
class GbpParams:
    max_iters: int = 200
    damping: float = 0.5
    floor: float = 1e-6
    tol: float = 1e-4
    gauss_seidel: bool = False
    bethe_max_vars: int = 12


@dataclass
class GbpResult:
    beliefs: np.ndarray
    region_marginals: list
    biases: list
    converged: bool
    iterations: int
    assignment: np.ndarray
    temperature: float
    trace: list = field(default_factory=list)
    messages_in: list = field(default_factory=list)
    messages_out: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "converged" if self.converged else "failure"

    def region_distributions(self, rg: RegionGraph, max_vars: int = 20) -> list[np.ndarray]:
        """Exact Boltzmann distributions of the corrected region models at the final biases."""
        return [
            region_distribution(corrective_energy(rg, r, self.biases[r]), self.temperature, max_vars)
            for r in range(len(rg.regions))
        ]


def _normalise(m: np.ndarray, floor: float) -> np.ndarray:
    m = m / m.sum(axis=-1, keepdims=True)
    m = np.maximum(m, floor)
    return m / m.sum(axis=-1, keepdims=True)


def gbp_solve(rg: RegionGraph, sampler: Callable[[IsingModel, float], np.ndarray], temperature: float,
              params: GbpParams | None = None) -> GbpResult:
    """Regional generalized belief propagation.

    Each region is sampled under its model plus corrective boundary biases
    V_i = -T log F_{i->R}; the outgoing message is the region marginal divided
    by the incoming one, damped and floored. Incoming messages are products of
    the other regions' outgoing messages.
    """
    if not temperature > 0:
        raise DecompositionError("temperature must be positive")
    params = params or GbpParams()
    T = float(temperature)
    k = len(rg.regions)
    fin = [np.full((len(b), 2), 0.5) for b in rg.boundary]
    fout = [np.full((len(b), 2), 0.5) for b in rg.boundary]
    margs = [None] * k
    pos = {}
    for r in range(k):
        for a, v in enumerate(rg.boundary[r]):
            pos.setdefault(v, []).append((r, a))
    track_bethe = all(reg.model.num_vars <= params.bethe_max_vars for reg in rg.regions)
    csp = rg.csp
    best_v = None
    trace = []

    def biases_of(r):
        vals = -T * np.log(fin[r])
        return {v: (float(vals[a, 0]), float(vals[a, 1])) for a, v in enumerate(rg.boundary[r])}

    def refresh_incoming(delta):
        for v, entries in pos.items():
            for r, a in entries:
                prod = np.ones(2)
                for s, b_ in entries:
                    if s != r:
                        prod = prod * fout[s][b_]
                new = _normalise(prod, params.floor)
                delta = max(delta, float(np.abs(new - fin[r][a]).max()))
                fin[r][a] = new
        return delta

    def beliefs():
        b = np.full((rg.num_vars, 2), 0.5)
        for v, sp in rg.fixed.items():
            b[v] = (0.0, 1.0) if sp > 0 else (1.0, 0.0)
        for r, reg in enumerate(rg.regions):
            for kk, v in enumerate(reg.variables):
                if rg.counts[v] == 1:
                    b[v] = margs[r][kk]
        for v, entries in pos.items():
            prod = np.ones(2)
            for s, a in entries:
                prod = prod * fout[s][a]
            b[v] = prod / prod.sum()
        return b

    converged = False
    it = 0
    delta = math.inf
    for it in range(1, params.max_iters + 1):
        delta = 0.0
        for r in range(k):
            model = corrective_energy(rg, r, biases_of(r))
            m = np.asarray(sampler(model, T), dtype=np.float64)[: len(rg.regions[r].variables)]
            margs[r] = m
            if len(rg.boundary[r]):
                idx = [rg.local(r, v) for v in rg.boundary[r]]
                new = _normalise(np.maximum(m[idx], params.floor) / fin[r], params.floor)
                new = _normalise((1 - params.damping) * new + params.damping * fout[r], params.floor)
                delta = max(delta, float(np.abs(new - fout[r]).max()))
                fout[r] = new
            if params.gauss_seidel:
                delta = refresh_incoming(delta)
        if not params.gauss_seidel:
            delta = refresh_incoming(delta)
        b = beliefs()
        x = np.where(b[:, 1] >= b[:, 0], 1, -1).astype(np.int8)
        viol = _violations(csp, x)
        best_v = viol if best_v is None else min(best_v, viol)
        bethe = math.nan
        if track_bethe:
            dists = [region_distribution(corrective_energy(rg, r, biases_of(r)), T) for r in range(k)]
            bethe = regional_bethe_energy(rg, dists, _var_beliefs(rg, dists, b), T)
        trace.append(TraceRow(it, delta, viol, best_v, bethe))
        if delta < params.tol:
            converged = True
            break
    b = beliefs()
    x = np.where(b[:, 1] >= b[:, 0], 1, -1).astype(np.int8)
    frozen = sorted(rg.fixed)
    if csp is not None:
        x = greedy_descent(csp, x, frozen)
    elif not rg.has_ancillas():
        x = greedy_descent(rg.joint_model(), x, frozen)
    return GbpResult(b, margs, [biases_of(r) for r in range(k)], converged, it, x, T, trace,
                     [f.copy() for f in fin], [f.copy() for f in fout])


def _var_beliefs(rg: RegionGraph, dists, fallback) -> np.ndarray:
    """Single-variable beliefs; boundary variables take the first region's marginal."""
    out = np.array(fallback, dtype=np.float64)
    done = set()
    for r, reg in enumerate(rg.regions):
        cfg = _configs(reg.model.num_vars)
        for kk, v in enumerate(reg.variables):
            if v in done:
                continue
            plus = float(dists[r][cfg[:, kk] > 0].sum())
            out[v] = (1.0 - plus, plus)
            done.add(v)
    return out

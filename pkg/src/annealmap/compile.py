"""CSP to hardware Ising model: penalty choice, embedding, composition, decoding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .csp import Csp
from .embedding.rrr import (
    EmbedConstraint,
    Embedding,
    EmbeddingError,
    RrrParams,
    candidate_placements,
    rip_up_and_replace,
    validate_embedding,
)
from .ising import HardwareGraph, IsingModel, ParameterBounds, compose_embedded
from .penalty import GAP_TOL, PenaltyCache, PenaltyError, PenaltyModel, enumerate_placements

# Complete bipartite shapes tried in order of qubit count.
LIBRARY_NODE_BUDGET = 3000
_SHAPES = ((1, 0), (1, 1), (1, 2), (2, 2), (1, 3), (2, 3), (1, 4), (3, 3), (2, 4), (3, 4), (4, 4))


def bipartite_shape(a: int, b: int) -> nx.Graph:
    return nx.complete_bipartite_graph(a, b)


def library_penalty(feasible, faulty=(), fault_level=None, target_gap: float = 2.0,
                    cache: PenaltyCache | None = None, bounds: ParameterBounds | None = None,
                    shapes: Sequence[tuple[int, int]] = _SHAPES,
                    max_nodes: int | None = LIBRARY_NODE_BUDGET) -> PenaltyModel:
    """Smallest complete-bipartite penalty graph reaching ``target_gap``.

    Every placement on each shape is synthesised (through ``cache`` when
    given). The first shape whose best gap reaches the target wins; if none
    does, the best model seen overall is returned. Each placement search
    stops after ``max_nodes`` LPs; an abandoned placement counts as failed,
    so the result is the best found rather than a certified optimum.
    """
    cache = cache if cache is not None else PenaltyCache()
    F = frozenset(tuple(t) for t in feasible)
    F2 = frozenset(tuple(t) for t in faulty)
    n = len(next(iter(F)))
    best = None
    for a, b in shapes:
        if a + b < n:
            continue
        g = bipartite_shape(a, b)
        shape_best = None
        for pl in enumerate_placements(n, g, F, F2):
            try:
                pm = cache.synthesize(pl, F, F2, fault_level, bounds, max_nodes)
            except PenaltyError:
                continue
            if shape_best is None or pm.gap > shape_best.gap + GAP_TOL:
                shape_best = pm
        if shape_best is None:
            continue
        if best is None or shape_best.gap > best.gap + GAP_TOL:
            best = shape_best
        if shape_best.gap >= target_gap - GAP_TOL:
            return shape_best
    if best is None:
        raise PenaltyError("no penalty model found on any shape")
    return best


def csp_penalties(csp: Csp, cache: PenaltyCache | None = None, target_gap: float = 2.0,
                  fault_level: float | None = None, bounds: ParameterBounds | None = None) -> list[PenaltyModel]:
    cache = cache if cache is not None else PenaltyCache()
    memo = {}
    out = []
    for c in csp.constraints:
        key = (c.feasible, c.faulty)
        if key not in memo:
            memo[key] = library_penalty(c.feasible, c.faulty, fault_level, target_gap, cache, bounds)
        out.append(memo[key])
    return out


def embed_problems(hw: HardwareGraph, csp: Csp, penalties: Sequence[PenaltyModel]) -> list[EmbedConstraint]:
    memo = {}
    out = []
    for c, pm in zip(csp.constraints, penalties):
        pl = pm.placement
        key = (pl.num_vertices, pl.edges, pl.var_map)
        if key not in memo:
            memo[key] = candidate_placements(hw, pl.graph(), pl.var_map)
        out.append(EmbedConstraint(c.scope, memo[key], pl.var_map, pl.edges))
    return out


@dataclass
class Compiled:
    csp: Csp
    hardware: HardwareGraph
    penalties: list
    embedding: Embedding
    model: IsingModel
    scale: float
    chain_strength: float
    info: dict = field(default_factory=dict)

    @property
    def chains(self) -> list[list[int]]:
        return [sorted(self.embedding.chains[x]) for x in range(self.csp.num_vars)]


def compose(csp: Csp, hw: HardwareGraph, penalties, emb: Embedding, chain_strength: float = 1.0,
            bounds: ParameterBounds | None = ParameterBounds()) -> tuple[IsingModel, float]:
    placed = [(pm.model, dict(enumerate(emb.maps[c]))) for c, pm in enumerate(penalties)]
    return compose_embedded(placed, emb.chains, hw, chain_strength, bounds)


def embed_csp(csp: Csp, hw: HardwareGraph, penalties=None, params: RrrParams | None = None,
              cache: PenaltyCache | None = None, restarts: int = 1):
    """Locally structured embedding of ``csp``; raises if no restart succeeds."""
    if penalties is None:
        penalties = csp_penalties(csp, cache)
    free = [x for x in range(csp.num_vars) if not any(x in c.scope for c in csp.constraints)]
    if free:
        raise EmbeddingError(f"variables {free} appear in no constraint")
    problems = embed_problems(hw, csp, penalties)
    params = params or RrrParams()
    last = None
    for r in range(restarts):
        p = RrrParams(params.alpha, params.beta, params.max_iters, params.stall, params.seed + r,
                      params.optimize_chains)
        last = rip_up_and_replace(hw, problems, p)
        if last.success:
            rep = validate_embedding(hw, last.embedding, [pr.edges for pr in problems])
            if not rep.ok:
                raise EmbeddingError("; ".join(rep.violations))
            return penalties, last
    raise EmbeddingError(f"rip-up and replace failed after {restarts} restart(s)")


def compile_csp(csp: Csp, hw: HardwareGraph, penalties=None, chain_strength: float = 1.0,
                params: RrrParams | None = None, cache: PenaltyCache | None = None,
                bounds: ParameterBounds | None = ParameterBounds(), restarts: int = 1) -> Compiled:
    penalties, res = embed_csp(csp, hw, penalties, params, cache, restarts)
    model, scale = compose(csp, hw, penalties, res.embedding, chain_strength, bounds)
    gap = min(pm.gap for pm in penalties)
    info = {"iterations": res.iterations, "penalty_gap": gap,
            "qubits": len(res.embedding.qubits()), "max_chain": res.embedding.max_chain}
    return Compiled(csp, hw, list(penalties), res.embedding, model, scale, chain_strength, info)


def chains_to_hardware(compiled: Compiled, x: Sequence[int]) -> np.ndarray:
    """Hardware configuration with unbroken chains holding ``x`` and minimised ancillas."""
    from .samplers import exact_ground_states

    fixed = {q: int(x[v]) for v, ch in compiled.embedding.chains.items() for q in ch}
    z = exact_ground_states(compiled.model.fix_variables(fixed), cap=1).states[0].copy()
    for q, val in fixed.items():
        z[q] = val
    return z


def hardware_gap(model: IsingModel, max_vars: int = 26) -> float:
    """Energy difference between the two lowest distinct levels of active spins."""
    from .samplers import spectrum

    levels = spectrum(model, 2, max_vars)
    return levels[1] - levels[0] if len(levels) > 1 else math.inf

"""Min-fault diagnosis: MAX-CSP construction, solving pipelines and the brute-force oracle."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..compile import Compiled, compile_csp, library_penalty
from ..csp import Constraint, Csp
from ..decomposition import (
    DcParams,
    GbpParams,
    RegionGraph,
    dc_solve,
    exact_oracle,
    exact_region_sampler,
    gbp_solve,
    partition_constraints,
    sa_oracle,
    sa_region_sampler,
)
from ..embedding.rrr import RrrParams
from ..ising import HardwareGraph, IsingModel, chimera_graph
from ..penalty import PenaltyCache, reify
from ..samplers import (
    SampleSet,
    Schedule,
    exact_ground_states,
    greedy_descent,
    majority_vote_decode,
    sa_sample,
)
from .circuit import Circuit, CircuitError, outputs
from .clusters import Cluster, cone_cluster


class DiagnosisError(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(b) for b in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(b) for b in self.outputs))
        if any(b not in (0, 1) for b in self.inputs + self.outputs):
            raise CircuitError("observation bits must be 0 or 1")

    def check(self, circuit: Circuit) -> None:
        if len(self.inputs) != len(circuit.inputs) or len(self.outputs) != len(circuit.outputs):
            raise CircuitError("observation does not match the circuit's inputs and outputs")

    def to_text(self) -> str:
        return f"in: {''.join(map(str, self.inputs))}\nout: {''.join(map(str, self.outputs))}\n"


def parse_observations(text: str) -> list[Observation]:
    """Observation file: alternating ``in: bits`` and ``out: bits`` lines."""
    obs, pending = [], None
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, bits = line.partition(":")
        key, bits = key.strip(), bits.strip()
        if key not in ("in", "out") or not bits or set(bits) - {"0", "1"}:
            raise CircuitError(f"line {ln}: expected 'in: bits' or 'out: bits'")
        if key == "in":
            if pending is not None:
                raise CircuitError(f"line {ln}: input line without outputs before it")
            pending = tuple(int(b) for b in bits)
        else:
            if pending is None:
                raise CircuitError(f"line {ln}: output line without inputs")
            obs.append(Observation(pending, tuple(int(b) for b in bits)))
            pending = None
    if pending is not None:
        raise CircuitError("last observation has no output line")
    return obs


@dataclass(frozen=True)
class Diagnosis:
    faults: frozenset

    def __post_init__(self):
        object.__setattr__(self, "faults", frozenset((str(g), str(m)) for g, m in self.faults))

    @property
    def cardinality(self) -> int:
        return len(self.faults)

    @property
    def gates(self) -> frozenset:
        return frozenset(g for g, _ in self.faults)

    def mapping(self) -> dict[str, str]:
        return dict(self.faults)

    def key(self):
        return (self.cardinality, sorted(self.faults))

    def __str__(self):
        if not self.faults:
            return "healthy"
        return " ".join(f"{g}:{m}" for g, m in sorted(self.faults))


def consistent(circuit: Circuit, obs: Observation, faults: Mapping[str, str]) -> bool:
    return outputs(circuit, obs.inputs, faults) == obs.outputs


def min_fault_oracle(circuit: Circuit, obs: Observation, k_max: int | None = None,
                     budget: int = 10**7) -> tuple[int, list[Diagnosis]]:
    """Exhaustive search over fault sets by increasing cardinality.

    Returns the minimum cardinality and every diagnosis attaining it.
    """
    obs.check(circuit)
    gates = [g for g in circuit.gates if g.modes]
    k_max = len(gates) if k_max is None else k_max
    widest = max((len(g.modes) for g in gates), default=1)
    spent = 0
    for k in range(k_max + 1):
        spent += math.comb(len(gates), k) * widest ** k
        if spent > budget:
            raise DiagnosisError(f"oracle would exceed {budget} simulated fault sets at cardinality {k}")
        found = []
        for subset in itertools.combinations(gates, k):
            for modes in itertools.product(*(g.modes for g in subset)):
                faults = {g.name: m for g, m in zip(subset, modes)}
                if consistent(circuit, obs, faults):
                    found.append(Diagnosis(frozenset(faults.items())))
        if found:
            return k, sorted(found, key=Diagnosis.key)
    raise DiagnosisError(f"no diagnosis with at most {k_max} faults")


def random_observations(circuit: Circuit, count: int = 20, pool: int = 100, max_faults: int = 3,
                        seed: int = 0, k_max: int | None = None) -> list[tuple[Observation, int]]:
    """Seeded observations with a balanced spread of min-fault cardinalities.

    Draws ``pool`` random inputs with up to ``max_faults`` injected faults,
    computes each one's min cardinality with the oracle, then picks ``count``
    of them round-robin across cardinality classes.
    """
    rng = np.random.default_rng(seed)
    gates = [g for g in circuit.gates if g.modes]
    by_card: dict[int, list[Observation]] = {}
    seen = set()
    for _ in range(pool):
        bits = tuple(int(b) for b in rng.integers(0, 2, len(circuit.inputs)))
        k = int(rng.integers(0, max_faults + 1))
        chosen = rng.choice(len(gates), size=min(k, len(gates)), replace=False)
        faults = {gates[i].name: gates[i].modes[int(rng.integers(len(gates[i].modes)))] for i in chosen}
        ob = Observation(bits, outputs(circuit, bits, faults))
        if ob in seen:
            continue
        seen.add(ob)
        card, _ = min_fault_oracle(circuit, ob, k_max if k_max is not None else max_faults)
        by_card.setdefault(card, []).append(ob)
    picked = []
    classes = sorted(by_card)
    while len(picked) < count and any(by_card[c] for c in classes):
        for c in classes:
            if by_card[c] and len(picked) < count:
                picked.append((by_card[c].pop(0), c))
    return picked


# -- MAX-CSP construction -------------------------------------------------


@dataclass
class DiagnosisModel:
    """A circuit's diagnosis CSP with penalties and, for the direct method, its embedding."""

    circuit: Circuit
    clusters: list[Cluster]
    csp: Csp
    wires: list[str]
    health: list[int | None]
    penalties: list
    fault_model: str
    compiled: Compiled | None = None
    info: dict = field(default_factory=dict)

    def var(self, wire: str) -> int:
        return self.wires.index(wire)

    def clamp(self, obs: Observation) -> dict[int, int]:
        """Spin values of every observed wire that appears in the CSP."""
        obs.check(self.circuit)
        out = {}
        for w, b in zip(self.circuit.inputs, obs.inputs):
            if w in self.wires:
                out[self.var(w)] = 2 * b - 1
        for w, b in zip(self.circuit.outputs, obs.outputs):
            if w in self.wires:
                v = self.var(w)
                if out.get(v, 2 * b - 1) != 2 * b - 1:
                    raise DiagnosisError(f"output {w} is a primary input with a different observed value")
                out[v] = 2 * b - 1
        return out

    def wire_values(self, x: Sequence[int]) -> dict[str, int]:
        return {w: (int(x[k]) + 1) // 2 for k, w in enumerate(self.wires)}

    def explain(self, x: Sequence[int], cap: int = 64) -> list[Diagnosis] | None:
        """Gate-level diagnoses behind a logical assignment; ``None`` if it is infeasible."""
        vals = self.wire_values(x)
        options = []
        for c in self.clusters:
            ins = [vals[w] for w in c.inputs]
            out = vals[c.output]
            if c.evaluate(ins) == out:
                continue
            alt = c.explanations(ins, out)
            if not alt:
                return None
            options.append(alt)
        out = []
        for combo in itertools.product(*options):
            out.append(Diagnosis(frozenset(combo)))
            if len(out) >= cap:
                break
        return out


def build_model(circuit: Circuit, max_cluster_vars: int | None = None, fault_model: str = "implicit",
                fault_level: float = 1.0, health_weight: float = 0.25,
                cache: PenaltyCache | None = None) -> DiagnosisModel:
    """MAX-CSP over the wires of the cluster scopes, with one penalty per constraint.

    Implicit: each cluster constraint puts healthy tuples at 0 and faulty ones
    at ``fault_level``. Explicit: each cluster gets a health spin through a
    reified constraint, plus a unary constraint charging ``health_weight``
    when the health spin is down.
    """
    if fault_model not in ("implicit", "explicit"):
        raise DiagnosisError(f"unknown fault model {fault_model!r}")
    cache = cache if cache is not None else PenaltyCache()
    clusters = cone_cluster(circuit, max_cluster_vars)
    used = {w for c in clusters for w in c.scope}
    wires = [w for w in circuit.wires if w in used]
    idx = {w: k for k, w in enumerate(wires)}
    names = list(wires)
    cons, pens, health = [], [], []
    memo = {}

    def penalty(F1, F2, level):
        key = (F1, F2, level)
        if key not in memo:
            memo[key] = library_penalty(F1, F2, level, cache=cache)
        return memo[key]

    for c in clusters:
        scope = tuple(idx[w] for w in c.scope)
        if fault_model == "implicit" or not c.faulty:
            cons.append(Constraint(scope, c.feasible, c.faulty, name=c.output))
            pens.append(penalty(c.feasible, c.faulty, fault_level if c.faulty else None))
            health.append(None)
            continue
        h = len(names)
        names.append(f"ok:{c.output}")
        health.append(h)
        rel = reify(c.feasible, c.faulty)
        cons.append(Constraint(scope + (h,), rel, name=c.output))
        pens.append(penalty(rel, frozenset(), None))
        unary = (frozenset({(1,)}), frozenset({(-1,)}))
        cons.append(Constraint((h,), unary[0], unary[1], name=f"ok:{c.output}"))
        pens.append(penalty(unary[0], unary[1], health_weight))
    csp = Csp(tuple(names), tuple(cons))
    return DiagnosisModel(circuit, clusters, csp, names, health, pens, fault_model,
                          info={"clusters": len(clusters), "literals": sum(len(c.scope) for c in clusters)})


def prepare(circuit: Circuit, hardware: HardwareGraph | None = None, chain_strength: float = 2.0,
            params: RrrParams | None = None, restarts: int = 3, **kw) -> DiagnosisModel:
    """Build the diagnosis CSP and embed it once for the direct method."""
    dm = build_model(circuit, **kw)
    hw = hardware if hardware is not None else chimera_graph(12)
    dm.compiled = compile_csp(dm.csp, hw, dm.penalties, chain_strength, params, restarts=restarts)
    dm.info.update(dm.compiled.info)
    return dm


# -- solving --------------------------------------------------------------


@dataclass
class DiagnosisReport:
    observation: Observation
    diagnoses: list
    num_samples: int
    valid_samples: int
    method: str
    backend: str
    info: dict = field(default_factory=dict)

    @property
    def min_cardinality(self) -> int | None:
        return min((d.cardinality for d, _ in self.diagnoses), default=None)

    def minimal(self) -> list[Diagnosis]:
        k = self.min_cardinality
        return [d for d, _ in self.diagnoses if d.cardinality == k]

    def counts(self, diagnoses: Iterable[Diagnosis]) -> list[int]:
        table = dict(self.diagnoses)
        return [table.get(d, 0) for d in diagnoses]

    def to_json(self) -> dict:
        return {
            "inputs": "".join(map(str, self.observation.inputs)),
            "outputs": "".join(map(str, self.observation.outputs)),
            "method": self.method,
            "backend": self.backend,
            "num_samples": self.num_samples,
            "valid_samples": self.valid_samples,
            "min_cardinality": self.min_cardinality,
            "diagnoses": [{"faults": str(d), "cardinality": d.cardinality, "count": n} for d, n in self.diagnoses],
            "info": self.info,
        }

    def to_text(self) -> str:
        lines = [f"# in {''.join(map(str, self.observation.inputs))} out {''.join(map(str, self.observation.outputs))}",
                 f"# method {self.method} backend {self.backend} samples {self.num_samples} valid {self.valid_samples}"]
        for d, n in self.diagnoses:
            lines.append(f"{d.cardinality}\t{n}\t{d}")
        return "\n".join(lines) + "\n"


def _collect(dm: DiagnosisModel, obs: Observation, assignments: Iterable[tuple[np.ndarray, int]],
             frozen: Sequence[int]) -> tuple[list, int, int]:
    tally: dict[Diagnosis, int] = {}
    total = valid = 0
    memo: dict[bytes, list | None] = {}
    for x, n in assignments:
        total += n
        x = greedy_descent(dm.csp, x, frozen)
        key = x.tobytes()
        if key not in memo:
            cands = dm.explain(x)
            memo[key] = None if cands is None else [d for d in cands if consistent(dm.circuit, obs, d.mapping())]
        ds = memo[key]
        if not ds:
            continue
        valid += n
        for d in ds:
            tally[d] = tally.get(d, 0) + n
    ranked = sorted(tally.items(), key=lambda kv: (kv[0].cardinality, -kv[1], sorted(kv[0].faults)))
    return ranked, total, valid


def _logical_model(dm: DiagnosisModel) -> tuple[IsingModel, int]:
    """Sum of penalties on logical spins, ancillas appended after the CSP variables."""
    n = dm.csp.num_vars
    total = IsingModel(n)
    nxt = n
    parts = []
    for c, pm in zip(dm.csp.constraints, dm.penalties):
        mapping = {vert: c.scope[k] for k, vert in enumerate(pm.placement.var_map)}
        for vert in pm.placement.ancillas:
            mapping[vert] = nxt
            nxt += 1
        parts.append((pm.model, mapping))
    total = IsingModel(nxt)
    for m, mapping in parts:
        total = total + m.relabel(mapping, nxt)
    return total, n


def _sample_active(model: IsingModel, fixed: Mapping[int, int], num_reads: int, sweeps: int,
                   seed: int) -> SampleSet:
    """Anneal only the spins that carry terms; fixed spins take their values, idle ones +1."""
    small, act = model.compacted()
    ss = sa_sample(small, Schedule(sweeps), num_reads, seed)
    reads = np.ones((ss.num_reads, model.num_vars), dtype=np.int8)
    reads[:, act] = ss.expanded()
    for q, s in fixed.items():
        reads[:, q] = s
    return SampleSet.from_reads(reads, None, ss.info)


def diagnose(dm: DiagnosisModel | Circuit, obs: Observation, method: str = "direct", backend: str = "sa",
             num_reads: int = 1000, seed: int = 0, sweeps: int = 1000, num_regions: int = 2,
             temperature: float | None = None, max_iters: int = 200) -> DiagnosisReport:
    """Min-fault diagnoses of ``obs``.

    ``direct`` samples the embedded model of the whole circuit with the
    observed wires substituted into their chains (``sa``), or enumerates the
    ground states of the logical model (``exact``). ``dc`` and ``gbp`` split
    the constraints into regions. Every returned diagnosis has been checked
    by forward simulation.
    """
    if isinstance(dm, Circuit):
        dm = prepare(dm) if method == "direct" and backend == "sa" else build_model(dm)
    if backend not in ("sa", "exact"):
        raise DiagnosisError(f"unknown backend {backend!r}")
    fixed = dm.clamp(obs)
    frozen = sorted(fixed)
    info: dict = {}
    if method == "direct" and backend == "sa":
        if dm.compiled is None:
            raise DiagnosisError("direct sampling needs an embedded model; call prepare()")
        emb = dm.compiled.embedding
        qfix = {q: s for v, s in fixed.items() for q in emb.chains[v]}
        ss = _sample_active(dm.compiled.model.fix_variables(qfix), qfix, num_reads, sweeps, seed)
        chains = [sorted(emb.chains[v]) for v in range(dm.csp.num_vars)]
        dec, stats = majority_vote_decode(ss, chains, seed)
        info["broken_fraction"] = round(stats.broken_fraction, 6)
        rows = []
        for x, n in zip(dec.samples, dec.counts):
            x = x.copy()
            for v, s in fixed.items():
                x[v] = s
            rows.append((x, int(n)))
        ranked, total, valid = _collect(dm, obs, rows, frozen)
    elif method == "direct":
        model, n = _logical_model(dm)
        # Clamped spins are idle after substitution; enumerate the rest only.
        small, act = model.fix_variables(fixed).compacted()
        gs = exact_ground_states(small, cap=num_reads)
        rows = []
        for zs in gs.states:
            z = np.ones(model.num_vars, dtype=np.int8)
            z[act] = zs
            x = z[:n].copy()
            for v, s in fixed.items():
                x[v] = s
            rows.append((x, 1))
        info["ground_energy"] = round(gs.energy, 9)
        ranked, total, valid = _collect(dm, obs, rows, frozen)
    elif method in ("dc", "gbp"):
        groups = partition_constraints(dm.csp, min(num_regions, len(dm.csp.constraints)), seed)
        rg = RegionGraph.from_csp(dm.csp, dm.penalties, groups).clamp(fixed)
        if method == "dc":
            oracle = exact_oracle(seed) if backend == "exact" else sa_oracle(20, Schedule(sweeps), seed)
            res = dc_solve(rg, oracle, DcParams(max_iters))
            info.update(consensus=res.consensus, iterations=res.iterations)
            x = res.assignment
        else:
            T = temperature if temperature is not None else 0.2
            sampler = exact_region_sampler() if backend == "exact" else sa_region_sampler(num_reads, sweeps, seed)
            res = gbp_solve(rg, sampler, T, GbpParams(max_iters))
            info.update(converged=res.converged, iterations=res.iterations)
            x = res.assignment
        ranked, total, valid = _collect(dm, obs, [(np.asarray(x, dtype=np.int8), 1)], frozen)
    else:
        raise DiagnosisError(f"unknown method {method!r}")
    return DiagnosisReport(obs, ranked, total, valid, method, backend, info)


def report_json(reports: Sequence[DiagnosisReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=1, sort_keys=True) + "\n"

"""Strong-fault constraints for gates and fanout-free cone clusters."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from ..csp import bits_to_spins
from .circuit import Circuit, CircuitError, Gate, apply_mode


def gate_constraint(gate: Gate, modes: Sequence[str] | None = None) -> tuple[frozenset, frozenset]:
    """Healthy and faulty spin tuples over ``(fanins..., output)``.

    The faulty set is the union of the graphs of every fault mode, minus the
    healthy graph. A mode whose graph equals the healthy one is rejected.
    """
    modes = gate.modes if modes is None else tuple(modes)
    k = len(gate.fanins)
    healthy, faulty = set(), set()
    for bits in itertools.product((0, 1), repeat=k):
        healthy.add(bits + (gate.evaluate(bits),))
    for m in modes:
        graph = {bits + (gate.evaluate(bits, m),) for bits in itertools.product((0, 1), repeat=k)}
        if graph == healthy:
            raise CircuitError(f"fault mode {m} of gate {gate.name} equals healthy behaviour")
        faulty |= graph - healthy
    return (frozenset(bits_to_spins(t) for t in healthy), frozenset(bits_to_spins(t) for t in faulty))


@dataclass(frozen=True)
class Cluster:
    """A fanout-free group of gates seen as one constraint on its boundary wires."""

    gates: tuple[Gate, ...]
    inputs: tuple[str, ...]
    output: str
    feasible: frozenset
    faulty: frozenset

    @property
    def scope(self) -> tuple[str, ...]:
        return self.inputs + (self.output,)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.gates)

    def evaluate(self, inputs: Sequence[int], faults: dict | None = None) -> int:
        faults = faults or {}
        vals = dict(zip(self.inputs, (int(b) for b in inputs)))
        for g in self.gates:
            vals[g.name] = g.evaluate([vals[f] for f in g.fanins], faults.get(g.name))
        return vals[self.output]

    def explanations(self, inputs: Sequence[int], out: int) -> list[tuple[str, str]]:
        """Single (gate, mode) faults that turn ``inputs`` into ``out``."""
        found = []
        for g in self.gates:
            for m in g.modes:
                if self.evaluate(inputs, {g.name: m}) == out:
                    found.append((g.name, m))
        return found


def _cluster(circuit: Circuit, members: list[Gate]) -> Cluster:
    names = {g.name for g in members}
    order = [g for g in circuit.gates if g.name in names]
    produced = set(names)
    ins = []
    for g in order:
        for f in g.fanins:
            if f not in produced and f not in ins:
                ins.append(f)
    ins.sort(key=circuit.wire_index)
    out = order[-1].name
    proto = Cluster(tuple(order), tuple(ins), out, frozenset(), frozenset())
    healthy, faulty = set(), set()
    for bits in itertools.product((0, 1), repeat=len(ins)):
        y = proto.evaluate(bits)
        healthy.add(bits + (y,))
        for g in order:
            for m in g.modes:
                faulty.add(bits + (proto.evaluate(bits, {g.name: m}),))
    faulty -= healthy
    return Cluster(tuple(order), tuple(ins), out,
                   frozenset(bits_to_spins(t) for t in healthy),
                   frozenset(bits_to_spins(t) for t in faulty))


def _scope_size(members: list[Gate]) -> int:
    names = {g.name for g in members}
    return len({f for g in members for f in g.fanins if f not in names}) + 1


def cone_cluster(circuit: Circuit, max_cluster_vars: int | None = None) -> list[Cluster]:
    """Greedy fanout-free cone clustering under a scope cap.

    Roots are taken in reverse topological order. A gate joins the cluster of
    its only consumer when it is not a primary output and the merged scope
    stays within the cap; rejected gates are retried after every merge.
    ``None`` keeps one cluster per gate.
    """
    widest = max((len(g.fanins) + 1 for g in circuit.gates), default=0)
    if max_cluster_vars is not None and max_cluster_vars < widest:
        raise CircuitError(f"cluster cap {max_cluster_vars} is below the widest gate scope {widest}")
    by_name = {g.name: g for g in circuit.gates}
    if max_cluster_vars is None:
        return [_cluster(circuit, [g]) for g in circuit.gates]
    cons = circuit.consumers()
    outs = set(circuit.outputs)
    assigned: set[str] = set()
    clusters = []
    for root in reversed(circuit.gates):
        if root.name in assigned:
            continue
        members = [root]
        assigned.add(root.name)
        grew = True
        while grew:
            grew = False
            names = {g.name for g in members}
            cands = sorted(
                {f for g in members for f in g.fanins
                 if f in by_name and f not in assigned and f not in outs
                 and len(cons[f]) == 1 and cons[f][0] in names},
                key=circuit.wire_index, reverse=True,
            )
            for f in cands:
                trial = members + [by_name[f]]
                if _scope_size(trial) <= max_cluster_vars:
                    members = trial
                    assigned.add(f)
                    grew = True
                    break
        clusters.append(members)
    clusters.reverse()
    return [_cluster(circuit, m) for m in clusters]


def literal_count(clusters: Sequence[Cluster]) -> int:
    return sum(len(c.scope) for c in clusters)

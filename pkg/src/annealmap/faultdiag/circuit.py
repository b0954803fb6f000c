"""Combinational circuits, ISCAS-85 netlists and fault simulation."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ..csp import GATE_FUNCTIONS

ARITY = {"NOT": (1, 1), "BUFF": (1, 1)}
MULTI = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR")
# Associative core used when a wide gate is split into a tree.
_CORE = {"AND": "AND", "NAND": "AND", "OR": "OR", "NOR": "OR", "XOR": "XOR", "XNOR": "XOR"}
FAULT_MODES = ("sa0", "sa1", "inv")
DEFAULT_MODES = ("sa0", "sa1")


class CircuitError(ValueError):
    pass


def apply_mode(mode: str | None, healthy: int) -> int:
    if mode is None:
        return healthy
    if mode == "sa0":
        return 0
    if mode == "sa1":
        return 1
    if mode == "inv":
        return 1 - healthy
    raise CircuitError(f"unknown fault mode {mode!r}")


@dataclass(frozen=True)
class Gate:
    name: str
    kind: str
    fanins: tuple[str, ...]
    modes: tuple[str, ...] = DEFAULT_MODES

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "fanins", tuple(self.fanins))
        object.__setattr__(self, "modes", tuple(self.modes))
        if kind in ARITY:
            if len(self.fanins) != 1:
                raise CircuitError(f"{kind} gate {self.name} needs exactly one input")
        elif kind in MULTI:
            if len(self.fanins) < 2:
                raise CircuitError(f"{kind} gate {self.name} needs at least two inputs")
        else:
            raise CircuitError(f"unknown gate type {self.kind!r}")
        for m in self.modes:
            if m not in FAULT_MODES:
                raise CircuitError(f"unknown fault mode {m!r} on gate {self.name}")

    def evaluate(self, values: Sequence[int], mode: str | None = None) -> int:
        return apply_mode(mode, GATE_FUNCTIONS[self.kind](values))


@dataclass(frozen=True)
class Circuit:
    """Gates are stored in topological order; wire names are gate output names."""

    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: tuple[Gate, ...]
    name: str = ""
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        gates = _toposort(self.inputs, self.gates)
        object.__setattr__(self, "gates", gates)
        wires = list(self.inputs) + [g.name for g in gates]
        if len(set(wires)) != len(wires):
            raise CircuitError("a wire is driven more than once")
        for o in self.outputs:
            if o not in set(wires):
                raise CircuitError(f"output {o} is not driven")
        object.__setattr__(self, "_index", {w: k for k, w in enumerate(wires)})

    @property
    def wires(self) -> list[str]:
        return list(self.inputs) + [g.name for g in self.gates]

    def wire_index(self, w: str) -> int:
        return self._index[w]

    def gate(self, name: str) -> Gate:
        for g in self.gates:
            if g.name == name:
                return g
        raise KeyError(name)

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {w: [] for w in self.wires}
        for g in self.gates:
            for f in g.fanins:
                out[f].append(g.name)
        return out

    @property
    def fault_modes(self) -> list[tuple[str, str]]:
        return [(g.name, m) for g in self.gates for m in g.modes]

    def with_modes(self, modes: Mapping[str, Sequence[str]]) -> "Circuit":
        """Copy with the fault modes of the named gates replaced."""
        gates = [Gate(g.name, g.kind, g.fanins, tuple(modes.get(g.name, g.modes))) for g in self.gates]
        return Circuit(self.inputs, self.outputs, gates, self.name)


def _toposort(inputs, gates) -> tuple[Gate, ...]:
    known = set(inputs)
    pending = list(gates)
    names = {g.name for g in gates} | known
    for g in pending:
        for f in g.fanins:
            if f not in names:
                raise CircuitError(f"gate {g.name} reads undriven wire {f}")
    out = []
    while pending:
        ready = [g for g in pending if all(f in known for f in g.fanins)]
        if not ready:
            raise CircuitError("netlist is cyclic")
        ready_names = {g.name for g in ready}
        for g in ready:
            known.add(g.name)
            out.append(g)
        pending = [g for g in pending if g.name not in ready_names]
    return tuple(out)


def simulate(circuit: Circuit, inputs: Sequence[int], faults: Mapping[str, str] | None = None) -> dict[str, int]:
    """Value of every wire under the given (gate -> fault mode) assignment."""
    if len(inputs) != len(circuit.inputs):
        raise CircuitError(f"expected {len(circuit.inputs)} input bits, got {len(inputs)}")
    faults = faults or {}
    vals = {w: int(b) for w, b in zip(circuit.inputs, inputs)}
    for g in circuit.gates:
        vals[g.name] = g.evaluate([vals[f] for f in g.fanins], faults.get(g.name))
    return vals


def outputs(circuit: Circuit, inputs: Sequence[int], faults: Mapping[str, str] | None = None) -> tuple[int, ...]:
    vals = simulate(circuit, inputs, faults)
    return tuple(vals[o] for o in circuit.outputs)


def truth_table(circuit: Circuit) -> list[tuple[int, ...]]:
    return [outputs(circuit, bits) for bits in itertools.product((0, 1), repeat=len(circuit.inputs))]


# -- wide gate splitting --------------------------------------------------


def _chunks(items: Sequence[str], parts: int) -> list[list[str]]:
    q, r = divmod(len(items), parts)
    out, k = [], 0
    for p in range(parts):
        size = q + (1 if p < r else 0)
        out.append(list(items[k:k + size]))
        k += size
    return out


def split_gate(gate: Gate, max_fanin: int = 4) -> list[Gate]:
    """Balanced tree of gates with fanin at most ``max_fanin`` computing ``gate``.

    Inner gates use the associative core of the gate type and carry no fault
    modes; the root keeps the original type, name and modes.
    """
    if max_fanin < 2:
        raise CircuitError("max_fanin must be at least 2")
    if len(gate.fanins) <= max_fanin:
        return [gate]
    core = _CORE[gate.kind]
    new: list[Gate] = []
    counter = itertools.count()

    def build(wires: list[str]) -> str:
        if len(wires) == 1:
            return wires[0]
        if len(wires) <= max_fanin:
            name = f"{gate.name}~{next(counter)}"
            new.append(Gate(name, core, tuple(wires), ()))
            return name
        parts = min(max_fanin, -(-len(wires) // max_fanin))
        parts = max(parts, 2)
        return build([build(c) for c in _chunks(wires, parts)])

    parts = max(2, min(max_fanin, -(-len(gate.fanins) // max_fanin)))
    subs = [build(c) for c in _chunks(list(gate.fanins), parts)]
    while len(subs) > max_fanin:
        subs = [build(c) for c in _chunks(subs, max(2, -(-len(subs) // max_fanin)))]
    new.append(Gate(gate.name, gate.kind, tuple(subs), gate.modes))
    return new


def split_wide_gates(circuit: Circuit, max_fanin: int = 4) -> Circuit:
    gates = [g2 for g in circuit.gates for g2 in split_gate(g, max_fanin)]
    return Circuit(circuit.inputs, circuit.outputs, gates, circuit.name)


# -- ISCAS-85 netlists -----------------------------------------------------

_ISC_TYPES = {"and": "AND", "nand": "NAND", "or": "OR", "nor": "NOR", "xor": "XOR", "xnor": "XNOR",
              "not": "NOT", "buff": "BUFF"}


def parse_isc(text: str, max_fanin: int = 4, name: str = "") -> Circuit:
    """Circuit from an ISCAS-85 ``.isc`` netlist.

    Fanout branches are resolved to their stems. Line fault annotations are
    ignored: every gate gets stuck-at-0/1 output modes except buffers, which
    get none. Gates wider than ``max_fanin`` are split into balanced trees.
    """
    lines = text.splitlines()
    addr_wire: dict[int, str] = {}
    inputs: list[str] = []
    specs: list[tuple[str, str, int, list[int], int]] = []
    fanout: dict[str, int] = {}
    pending_from: list[tuple[int, str, int]] = []
    k = 0

    def fail(msg, ln):
        raise CircuitError(f"line {ln}: {msg}")

    while k < len(lines):
        ln = k + 1
        raw = lines[k].split("*", 1)[0] if lines[k].lstrip().startswith("*") else lines[k]
        tok = raw.split()
        k += 1
        if not tok:
            continue
        if len(tok) < 3:
            fail("expected 'address name type ...'", ln)
        try:
            addr = int(tok[0])
        except ValueError:
            fail(f"bad address {tok[0]!r}", ln)
        wname, typ = tok[1], tok[2].lower()
        if addr in addr_wire:
            fail(f"duplicate address {addr}", ln)
        if typ == "from":
            if len(tok) < 4:
                fail("fanout branch without stem", ln)
            pending_from.append((addr, tok[3], ln))
            addr_wire[addr] = tok[3]
            continue
        try:
            fo, fi = int(tok[3]), int(tok[4])
        except (IndexError, ValueError):
            fail("expected fanout and fanin counts", ln)
        addr_wire[addr] = wname
        fanout[wname] = fo
        if typ == "inpt":
            if fi != 0:
                fail("primary input with fanin", ln)
            inputs.append(wname)
            continue
        if typ not in _ISC_TYPES:
            fail(f"unknown gate type {typ!r}", ln)
        fins: list[int] = []
        while len(fins) < fi:
            if k >= len(lines):
                fail("netlist ends inside a fanin list", ln)
            try:
                fins.extend(int(t) for t in lines[k].split())
            except ValueError:
                fail("fanin list must be integer addresses", k + 1)
            k += 1
        if len(fins) != fi:
            fail(f"expected {fi} fanins, found {len(fins)}", ln)
        specs.append((wname, _ISC_TYPES[typ], addr, fins, ln))
    driven = set(inputs) | {s[0] for s in specs}
    for addr, stem, ln in pending_from:
        if stem not in driven:
            fail(f"fanout branch of unknown stem {stem}", ln)
    gates = []
    for wname, kind, addr, fins, ln in specs:
        try:
            srcs = tuple(addr_wire[a] for a in fins)
        except KeyError as e:
            fail(f"unknown fanin address {e.args[0]}", ln)
        modes = () if kind == "BUFF" else DEFAULT_MODES
        try:
            gates.append(Gate(wname, kind, srcs, modes))
        except CircuitError as e:
            fail(str(e), ln)
    outs = [w for w in inputs + [g.name for g in gates] if fanout.get(w) == 0]
    circ = Circuit(tuple(inputs), tuple(outs), tuple(gates), name)
    return split_wide_gates(circ, max_fanin)


def dumps_isc(circuit: Circuit, title: str = "") -> str:
    """ISCAS-85 style netlist; multi-consumer wires get explicit fanout branches.

    Primary outputs must not feed other gates, since the format marks
    outputs by a zero fanout count.
    """
    cons = circuit.consumers()
    for o in circuit.outputs:
        if cons[o]:
            raise CircuitError(f"output {o} also drives gates; not representable")
    lines = [f"*{title or circuit.name or 'circuit'}", "*"]
    addr = itertools.count(1)
    branch: dict[tuple[str, str], int] = {}

    def emit(w, head):
        a = next(addr)
        users = cons[w]
        lines.append(f"{a:5d} {w} {head}".replace("FO", str(len(users))))
        return a, users

    def branches(w, a, users):
        if len(users) == 1:
            branch[(w, users[0])] = a
        for u in users if len(users) > 1 else ():
            b = next(addr)
            branch[(w, u)] = b
            lines.append(f"{b:5d} {w}>{u} from {w}")

    for w in circuit.inputs:
        branches(w, *emit(w, "inpt FO 0"))
    for g in circuit.gates:
        a, users = emit(g.name, f"{g.kind.lower()} FO {len(g.fanins)}")
        lines.append("      " + " ".join(str(branch[(f, g.name)]) for f in g.fanins))
        branches(g.name, a, users)
    return "\n".join(lines) + "\n"


# -- standard test circuits -----------------------------------------------


def full_adder(a: str = "a", b: str = "b", cin: str = "cin", prefix: str = "") -> list[Gate]:
    p = prefix
    return [
        Gate(f"{p}x1", "XOR", (a, b)),
        Gate(f"{p}s", "XOR", (f"{p}x1", cin)),
        Gate(f"{p}a1", "AND", (a, b)),
        Gate(f"{p}a2", "AND", (f"{p}x1", cin)),
        Gate(f"{p}c", "OR", (f"{p}a1", f"{p}a2")),
    ]


def full_adder_circuit() -> Circuit:
    return Circuit(("a", "b", "cin"), ("s", "c"), tuple(full_adder()), "full_adder")


def ripple_adder(bits: int = 4) -> Circuit:
    """``bits``-bit ripple-carry adder with carry in; 5 gates per bit."""
    ins, gates, outs = [], [], []
    carry = "cin"
    for k in range(bits):
        ins += [f"a{k}", f"b{k}"]
        gates += full_adder(f"a{k}", f"b{k}", carry, prefix=f"f{k}_")
        outs.append(f"f{k}_s")
        carry = f"f{k}_c"
    outs.append(carry)
    return Circuit(tuple(ins + ["cin"]), tuple(outs), tuple(gates), f"adder{bits}")


def parse_modes(text: str, circuit: Circuit | None = None) -> dict[str, tuple[str, ...]]:
    """Fault-mode sidecar: lines ``gate: sa0 sa1 inv`` (``none`` for a healthy-only gate)."""
    out: dict[str, tuple[str, ...]] = {}
    known = {g.name for g in circuit.gates} if circuit is not None else None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, rest = line.partition(":")
        name = name.strip()
        if not sep or not name:
            raise CircuitError(f"line {lineno}: expected 'gate: modes'")
        if known is not None and name not in known:
            raise CircuitError(f"line {lineno}: unknown gate {name!r}")
        modes = tuple(m for m in rest.split() if m != "none")
        bad = [m for m in modes if m not in FAULT_MODES]
        if bad:
            raise CircuitError(f"line {lineno}: unknown fault mode {bad[0]!r}")
        out[name] = modes
    return out

"""Boolean CSP and MAX-CSP containers with a small relation library.

Constraint tuples are spin tuples (entries in {-1, +1}). ``feasible`` holds
the healthy states F1; ``faulty`` optionally holds the states F2 that are
allowed at a cost.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

Spins = tuple[int, ...]


class CspError(ValueError):
    pass


def bits_to_spins(bits: Iterable[int]) -> Spins:
    return tuple(2 * int(b) - 1 for b in bits)


def spins_to_bits(spins: Iterable[int]) -> tuple[int, ...]:
    return tuple((int(s) + 1) // 2 for s in spins)


def cube(n: int) -> list[Spins]:
    return [tuple(t) for t in itertools.product((-1, 1), repeat=n)]


@dataclass(frozen=True)
class Constraint:
    scope: tuple[int, ...]
    feasible: frozenset
    faulty: frozenset = frozenset()
    name: str = ""

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if not scope:
            raise CspError("constraint scope must be nonempty")
        if len(set(scope)) != len(scope):
            raise CspError(f"repeated variable in scope {scope}")
        feas = frozenset(tuple(int(x) for x in t) for t in self.feasible)
        faulty = frozenset(tuple(int(x) for x in t) for t in self.faulty)
        for t in feas | faulty:
            if len(t) != len(scope) or any(x not in (-1, 1) for x in t):
                raise CspError(f"tuple {t} does not match scope of size {len(scope)}")
        if feas & faulty:
            raise CspError("healthy and faulty sets overlap")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "feasible", feas)
        object.__setattr__(self, "faulty", faulty)

    @property
    def arity(self) -> int:
        return len(self.scope)

    def status(self, values: Sequence[int]) -> int:
        """0 healthy, 1 faulty, 2 infeasible for a tuple of scope values."""
        t = tuple(int(v) for v in values)
        if t in self.feasible:
            return 0
        if t in self.faulty:
            return 1
        return 2


@dataclass(frozen=True)
class Csp:
    variables: tuple[str, ...]
    constraints: tuple[Constraint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len(set(self.variables)) != len(self.variables):
            raise CspError("duplicate variable names")
        n = len(self.variables)
        for c in self.constraints:
            if any(not 0 <= v < n for v in c.scope):
                raise CspError(f"constraint {c.name or c.scope} references unknown variable")

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self.variables.index(name)

    def statuses(self, x: Sequence[int]) -> list[int]:
        return [c.status([x[v] for v in c.scope]) for c in self.constraints]

    def counts(self, x: Sequence[int]) -> tuple[int, int]:
        """(number of infeasible constraints, number of faulty constraints)."""
        st = self.statuses(x)
        return st.count(2), st.count(1)

    def is_satisfied(self, x: Sequence[int]) -> bool:
        return all(s == 0 for s in self.statuses(x))

    def cost(self, x: Sequence[int], infeasible_weight: float | None = None) -> float:
        """MAX-CSP objective: faulty constraints count 1, infeasible ones count more than all faults."""
        w = len(self.constraints) + 1 if infeasible_weight is None else infeasible_weight
        bad, faulty = self.counts(x)
        return w * bad + faulty

    def constraint_graph_edges(self) -> list[tuple[int, int]]:
        """Pairs of constraint indices that share a variable."""
        by_var: dict[int, list[int]] = {}
        for ci, c in enumerate(self.constraints):
            for v in c.scope:
                by_var.setdefault(v, []).append(ci)
        edges = set()
        for cs in by_var.values():
            for a, b in itertools.combinations(cs, 2):
                edges.add((a, b))
        return sorted(edges)

    def solutions(self) -> list[Spins]:
        """All satisfying assignments by exhaustive enumeration (small CSPs only)."""
        if self.num_vars > 24:
            raise CspError("too many variables for enumeration")
        return [x for x in cube(self.num_vars) if self.is_satisfied(x)]


# -- relation library -----------------------------------------------------


def relation(n: int, pred: Callable[..., bool]) -> frozenset:
    """Spin tuples whose boolean image satisfies ``pred``."""
    return frozenset(t for t in cube(n) if pred(*spins_to_bits(t)))


def parity(n: int, product: int = 1) -> frozenset:
    """Tuples whose spin product equals ``product``."""
    return frozenset(t for t in cube(n) if int(np.prod(t)) == product)


def equal(n: int = 2) -> frozenset:
    return frozenset({(-1,) * n, (1,) * n})


def not_equal() -> frozenset:
    return frozenset({(-1, 1), (1, -1)})


GATE_FUNCTIONS: dict[str, Callable[[Sequence[int]], int]] = {
    "AND": lambda xs: int(all(xs)),
    "NAND": lambda xs: int(not all(xs)),
    "OR": lambda xs: int(any(xs)),
    "NOR": lambda xs: int(not any(xs)),
    "XOR": lambda xs: sum(xs) % 2,
    "XNOR": lambda xs: 1 - sum(xs) % 2,
    "NOT": lambda xs: 1 - xs[0],
    "BUFF": lambda xs: xs[0],
}


def gate_relation(kind: str, fanin: int) -> frozenset:
    """Graph of ``out = kind(inputs)`` over (inputs..., out)."""
    f = GATE_FUNCTIONS[kind]
    return frozenset(
        bits_to_spins(bits + (f(bits),)) for bits in itertools.product((0, 1), repeat=fanin)
    )


def random_xorsat(n: int, ratio: float = 1.0, rng=None, unique: bool = True, max_tries: int = 10000) -> tuple[Csp, Spins | None]:
    """Random XOR-3-SAT instance with ``round(ratio * n)`` clauses.

    Each clause is a parity constraint on three distinct variables with a
    random right-hand side. With ``unique`` the instance is resampled until the
    GF(2) system has exactly one solution, which is returned alongside.
    """
    rng = np.random.default_rng(rng)
    m = int(round(ratio * n))
    for _ in range(max_tries):
        rows = []
        rhs = []
        for _ in range(m):
            scope = tuple(sorted(int(v) for v in rng.choice(n, size=3, replace=False)))
            rows.append(scope)
            rhs.append(int(rng.integers(2)))
        sol = _gf2_solve(n, rows, rhs)
        if sol is None:
            continue
        x, rank = sol
        if unique and rank < n:
            continue
        cons = [
            Constraint(s, parity(3, 1 if b == 0 else -1), name=f"xor{k}")
            for k, (s, b) in enumerate(zip(rows, rhs))
        ]
        csp = Csp(tuple(f"x{i}" for i in range(n)), tuple(cons))
        return csp, bits_to_spins(1 - xi for xi in x)
    raise CspError("could not draw an instance with the requested properties")


def _gf2_solve(n, rows, rhs):
    """Solve sum_{v in row} y_v = b (mod 2); returns (one solution, rank) or None.

    Here y_v = 1 means spin -1, so a clause with spin product +1 has b = 0.
    """
    mat = np.zeros((len(rows), n + 1), dtype=np.uint8)
    for r, (s, b) in enumerate(zip(rows, rhs)):
        mat[r, list(s)] = 1
        mat[r, n] = b
    pivots = []
    r = 0
    for col in range(n):
        hit = [i for i in range(r, len(rows)) if mat[i, col]]
        if not hit:
            continue
        mat[[r, hit[0]]] = mat[[hit[0], r]]
        for i in range(len(rows)):
            if i != r and mat[i, col]:
                mat[i] ^= mat[r]
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    if any(mat[i, n] for i in range(r, len(rows))):
        return None
    y = np.zeros(n, dtype=np.uint8)
    for i, col in enumerate(pivots):
        y[col] = mat[i, n]
    return [int(v) for v in y], len(pivots)


def random_planted_csp(n: int, m: int, rng=None, kinds: Sequence[str] = ("AND", "OR", "XOR")) -> tuple[Csp, Spins]:
    """Random 3-variable gate constraints satisfied by a hidden assignment.

    Each constraint is ``out = kind(a, b)`` on a random scope, where any
    literal may be negated so that the planted assignment satisfies it.
    """
    rng = np.random.default_rng(rng)
    x = tuple(int(v) for v in rng.choice((-1, 1), size=n))
    cons = []
    for k in range(m):
        scope = tuple(int(v) for v in rng.choice(n, size=3, replace=False))
        kind = kinds[int(rng.integers(len(kinds)))]
        base = gate_relation(kind, 2)
        flips = [int(f) for f in rng.choice((-1, 1), size=2)]
        vals = [x[v] for v in scope]
        ins = [vals[i] * flips[i] for i in range(2)]
        out_bit = GATE_FUNCTIONS[kind](spins_to_bits(ins))
        flips.append(vals[2] * (2 * out_bit - 1))
        rel = frozenset(tuple(t[i] * flips[i] for i in range(3)) for t in base)
        cons.append(Constraint(scope, rel, name=f"{kind.lower()}{k}"))
    return Csp(tuple(f"x{i}" for i in range(n)), tuple(cons)), x


def example_csp() -> Csp:
    """Two 3-way parities sharing ``x1`` plus a disequality, five variables."""
    xor = gate_relation("XOR", 2)
    return Csp(
        ("x1", "x2", "x3", "x4", "x5"),
        (Constraint((0, 1, 2), xor, name="xor_a"), Constraint((0, 3, 4), xor, name="xor_b"),
         Constraint((2, 4), not_equal(), name="neq")),
    )


# -- text format ----------------------------------------------------------
#
#   vars a b c
#   con NAME: a b c = +-- -+- ... [| faulty tuples]
#   gate NAME: AND a b -> c
#   parity NAME: a b c [even|odd]
#
# Tuples are strings over {+, -}; ``parity`` counts spins equal to -1.


def _tuple_text(t: Spins) -> str:
    return "".join("+" if s > 0 else "-" for s in t)


def _parse_tuple(tok: str, n: int, where: str) -> Spins:
    if len(tok) != n or any(ch not in "+-" for ch in tok):
        raise CspError(f"{where}: bad tuple {tok!r} for {n} variables")
    return tuple(1 if ch == "+" else -1 for ch in tok)


def dumps_csp(csp: Csp) -> str:
    lines = ["vars " + " ".join(csp.variables)]
    for k, c in enumerate(csp.constraints):
        names = " ".join(csp.variables[v] for v in c.scope)
        body = " ".join(_tuple_text(t) for t in sorted(c.feasible, reverse=True))
        if c.faulty:
            body += " | " + " ".join(_tuple_text(t) for t in sorted(c.faulty, reverse=True))
        lines.append(f"con {c.name or f'c{k}'}: {names} = {body}")
    return "\n".join(lines) + "\n"


def loads_csp(text: str) -> Csp:
    variables: list[str] | None = None
    cons = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        head, _, rest = line.partition(" ")
        if head == "vars":
            if variables is not None:
                raise CspError(f"{where}: repeated vars line")
            variables = rest.split()
            if len(set(variables)) != len(variables):
                raise CspError(f"{where}: duplicate variable names")
            continue
        if variables is None:
            raise CspError(f"{where}: constraint before vars line")
        name, sep, body = rest.partition(":")
        if not sep:
            raise CspError(f"{where}: expected 'NAME: ...'")
        name = name.strip()

        def scope_of(toks):
            try:
                return tuple(variables.index(t) for t in toks)
            except ValueError as e:
                raise CspError(f"{where}: unknown variable in {toks}") from e

        if head == "con":
            lhs, sep, rhs = body.partition("=")
            if not sep:
                raise CspError(f"{where}: expected '=' in con line")
            scope = scope_of(lhs.split())
            feas, _, bad = rhs.partition("|")
            F = frozenset(_parse_tuple(t, len(scope), where) for t in feas.split())
            F2 = frozenset(_parse_tuple(t, len(scope), where) for t in bad.split())
            if not F:
                raise CspError(f"{where}: empty feasible set")
            cons.append(Constraint(scope, F, F2, name))
        elif head == "gate":
            lhs, sep, out = body.partition("->")
            toks = lhs.split()
            if not sep or len(toks) < 2 or toks[0].upper() not in GATE_FUNCTIONS:
                raise CspError(f"{where}: expected 'gate NAME: KIND a b -> c'")
            scope = scope_of(toks[1:] + out.split())
            cons.append(Constraint(scope, gate_relation(toks[0].upper(), len(toks) - 1), name=name))
        elif head == "parity":
            toks = body.split()
            odd = bool(toks) and toks[-1] in ("even", "odd") and toks.pop() == "odd"
            scope = scope_of(toks)
            cons.append(Constraint(scope, parity(len(scope), -1 if odd else 1), name=name))
        else:
            raise CspError(f"{where}: unknown directive {head!r}")
    if variables is None:
        raise CspError("missing vars line")
    return Csp(tuple(variables), tuple(cons))

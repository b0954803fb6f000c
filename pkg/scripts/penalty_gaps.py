"""Best penalty gap of every small relation class on each complete bipartite shape.

Prints one TSV row per (relation, shape): arity, feasible tuples, shape,
best gap over placements (blank when not representable) and LP nodes.

    python scripts/penalty_gaps.py --max-arity 3
"""
import argparse
import itertools

import networkx as nx

from annealmap.compile import _SHAPES
from annealmap.csp import cube
from annealmap.penalty import PenaltyError, best_penalty


def classes(n):
    seen, out = set(), []
    for k in range(1, 2**n):
        for F in itertools.combinations(cube(n), k):
            F = frozenset(F)
            if F in seen:
                continue
            orbit = {frozenset(tuple(m[i] * t[p[i]] for i in range(n)) for t in F)
                     for p in itertools.permutations(range(n)) for m in itertools.product((-1, 1), repeat=n)}
            seen |= orbit
            out.append(F)
    return out


def fmt(F):
    return " ".join("".join("+" if v > 0 else "-" for v in t) for t in sorted(F))


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-arity", type=int, default=3)
    p.add_argument("--max-qubits", type=int, default=6)
    a = p.parse_args()
    print("arity\tfeasible\tshape\tgap\tnotes")
    for n in range(1, a.max_arity + 1):
        for F in classes(n):
            for s, t in _SHAPES:
                if s + t < n or s + t > a.max_qubits:
                    continue
                try:
                    pm = best_penalty(F, nx.complete_bipartite_graph(s, t))
                    gap, notes = f"{pm.gap:.6g}", ",".join(pm.notes)
                except PenaltyError:
                    gap, notes = "", ""
                print(f"{n}\t{fmt(F)}\tK{s},{t}\t{gap}\t{notes}", flush=True)

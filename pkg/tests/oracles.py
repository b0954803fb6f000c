"""Independent brute-force references used by the test-suite.

Nothing here imports the solvers it is used to check.
"""
import itertools
import math

import networkx as nx
import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp


def spins(n):
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8)


def brute_energies(model):
    """Energies of every configuration (row order as itertools.product)."""
    z = spins(model.num_vars).astype(float)
    e = np.full(len(z), model.offset)
    for i, v in model.linear.items():
        e += v * z[:, i]
    for (i, j), v in model.quadratic.items():
        e += v * z[:, i] * z[:, j]
    return z, e


def brute_ground(model):
    z, e = brute_energies(model)
    m = e.min()
    return m, [tuple(int(x) for x in r) for r in z[np.abs(e - m) < 1e-9]]


def brute_logz_marginals(model, T):
    z, e = brute_energies(model)
    w = np.exp(-(e - e.min()) / T)
    Z = w.sum()
    p = w / Z
    logz = math.log(Z) - e.min() / T
    return logz, (p[:, None] * (z > 0)).sum(0), p, z


def milp_max_gap(num_vertices, edges, var_map, F, F2=(), level=0.0, h=2.0, j=1.0):
    """Maximum gap over all witness choices via a big-M mixed-integer program.

    Symmetric bounds let every ancilla spin be flipped together with its
    couplings, so the first target state's witness is pinned to all +1.
    """
    m = num_vertices
    edges = list(edges)
    z = spins(m).astype(float)
    prods = [z[:, [a for a, _ in edges]] * z[:, [b for _, b in edges]]] if edges else []
    phi = np.hstack([np.ones((len(z), 1)), z] + prods)
    nf = phi.shape[1]
    anc = [v for v in range(m) if v not in var_map]
    s_of = [tuple(int(x) for x in row[list(var_map)]) for row in z]
    targets = {tuple(s): 0.0 for s in F}
    targets.update({tuple(s): level for s in F2})
    groups = {}
    for r, s in enumerate(s_of):
        groups.setdefault(s, []).append(r)
    touching = sum(1 for a, b in edges if a in anc or b in anc)
    big = 2 * (len(anc) * h + touching * j) + 1.0
    first = min(targets)
    all_up = [r for r in groups[first] if all(z[r, v] > 0 for v in anc)][0]
    rows_w = [(s, r) for s in sorted(targets) for r in groups[s]]
    nw = len(rows_w)
    nvar = nf + 1 + nw
    A, lo, hi = [], [], []
    for k, (s, r) in enumerate(rows_w):
        a = np.zeros(nvar); a[:nf] = phi[r]
        A.append(a); lo.append(targets[s]); hi.append(np.inf)
        a = np.zeros(nvar); a[:nf] = phi[r]; a[nf + 1 + k] = big
        A.append(a); lo.append(-np.inf); hi.append(targets[s] + big)
    for s in targets:
        a = np.zeros(nvar)
        for k, (s2, _) in enumerate(rows_w):
            if s2 == s:
                a[nf + 1 + k] = 1
        A.append(a); lo.append(1); hi.append(1)
    for s in groups:
        if s in targets:
            continue
        for r in groups[s]:
            a = np.zeros(nvar); a[:nf] = phi[r]; a[nf] = -1
            A.append(a); lo.append(0); hi.append(np.inf)
    lb = np.array([-np.inf] + [-h] * m + [-j] * len(edges) + [level if F2 else -np.inf] + [0] * nw)
    ub = np.array([np.inf] + [h] * m + [j] * len(edges) + [1e3] + [1] * nw)
    for k, (s, r) in enumerate(rows_w):
        if s == first:
            lb[nf + 1 + k] = ub[nf + 1 + k] = 1.0 if r == all_up else 0.0
    c = np.zeros(nvar); c[nf] = -1
    integrality = np.array([0] * (nf + 1) + [1] * nw)
    res = milp(c, constraints=LinearConstraint(np.array(A), lo, hi), bounds=Bounds(lb, ub),
               integrality=integrality, options={"mip_rel_gap": 1e-9})
    if res.status != 0 or res.x is None:
        return None
    return float(res.x[nf])


def exact_steiner(graph, terminals):
    """Fewest-vertex connected vertex set containing ``terminals`` (exhaustive)."""
    T = set(terminals)
    others = sorted(set(graph.nodes) - T)
    for k in range(len(others) + 1):
        for extra in itertools.combinations(others, k):
            nodes = T | set(extra)
            if nx.is_connected(graph.subgraph(nodes)):
                return len(nodes)
    return None


def dreyfus_wagner(graph, terminals):
    """Minimum vertex count of a tree spanning ``terminals`` (unit edge costs)."""
    T = sorted(set(terminals))
    if len(T) == 1:
        return 1
    nodes = list(graph.nodes)
    dist = dict(nx.all_pairs_shortest_path_length(graph))
    k = len(T) - 1
    root, rest = T[-1], T[:-1]
    inf = float("inf")
    dp = {}
    for i, t in enumerate(rest):
        dp[1 << i] = {v: dist[t].get(v, inf) for v in nodes}
    for mask in range(1, 1 << k):
        if mask & (mask - 1) == 0:
            continue
        merged = {v: inf for v in nodes}
        sub = (mask - 1) & mask
        while sub:
            if sub < (mask ^ sub):
                a, b = dp[sub], dp[mask ^ sub]
                for v in nodes:
                    c = a[v] + b[v]
                    if c < merged[v]:
                        merged[v] = c
            sub = (sub - 1) & mask
        dp[mask] = {v: min(merged[u] + dist[u].get(v, inf) for u in nodes) for v in nodes}
    return int(dp[(1 << k) - 1][root]) + 1


def exact_min_max_chain(graph, terminal_sets, limit=None):
    """Smallest M admitting disjoint connected chains S_i ⊇ T_i with |S_i| <= M."""
    sets = [frozenset(T) for T in terminal_sets]
    allterm = set().union(*sets)
    n = graph.number_of_nodes()
    limit = n if limit is None else limit

    def options(i, M):
        T = sets[i]
        free = sorted(set(graph.nodes) - allterm)
        out = []
        for k in range(0, M - len(T) + 1):
            for extra in itertools.combinations(free, k):
                S = T | set(extra)
                if nx.is_connected(graph.subgraph(S)):
                    out.append(frozenset(S))
        return out

    for M in range(max(len(T) for T in sets), limit + 1):
        opts = [options(i, M) for i in range(len(sets))]

        def place(i, used):
            if i == len(sets):
                return True
            return any(not (S & used) and place(i + 1, used | S) for S in opts[i])

        if all(opts) and place(0, frozenset()):
            return M
    return None


def brute_ground_chunked(model, chunk_bits=16):
    """Minimum energy and its minimisers by enumeration in blocks (for n up to ~22)."""
    n = model.num_vars
    lo = min(n, chunk_bits)
    low = spins(lo).astype(float)
    best, states = math.inf, []
    for high in itertools.product((-1, 1), repeat=n - lo):
        z = np.hstack([np.tile(np.array(high, float), (len(low), 1)), low])
        e = np.full(len(z), model.offset)
        for i, v in model.linear.items():
            e += v * z[:, i]
        for (i, j), v in model.quadratic.items():
            e += v * z[:, i] * z[:, j]
        m = e.min()
        if m < best - 1e-9:
            best, states = m, []
        if m < best + 1e-9:
            states.extend(tuple(int(x) for x in r) for r in z[np.abs(e - best) < 1e-9])
    return best, sorted(states)

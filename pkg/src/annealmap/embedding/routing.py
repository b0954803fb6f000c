"""Disjoint chain routing for fixed terminal sets and the chain-size search."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .steiner import ChainBound, GraphIndex, RoutingError, bcr_lower_bound, steiner_indices


@dataclass(frozen=True)
class RouteOutcome:
    success: bool
    chains: tuple[frozenset, ...]
    max_chain: int
    iterations: int
    overlap: int


def _route_idx(gi: GraphIndex, sets: list[list[int]], limit: int, max_iters: int,
               present: float, growth: float):
    k = len(sets)
    owner = np.full(gi.n, -1, dtype=np.int64)
    for i, T in enumerate(sets):
        for t in T:
            if owner[t] >= 0 and owner[t] != i:
                return None, 0, -1
            owner[t] = i
    hist = np.zeros(gi.n)
    lam = np.ones(k)
    chains: list[set[int]] = [set(T) for T in sets]
    use = np.zeros(gi.n, dtype=np.int64)
    for ch in chains:
        use[list(ch)] += 1
    order = sorted(range(k), key=lambda i: (-len(sets[i]), i))
    best = None
    for it in range(1, max_iters + 1):
        for i in order:
            use[list(chains[i])] -= 1
            blocked = (owner >= 0) & (owner != i)
            cong = (1.0 + hist) * (1.0 + present * use) - 1.0
            w = 1.0 + lam[i] * cong
            chains[i] = steiner_indices(gi, sets[i], w, blocked)
            use[list(chains[i])] += 1
        over = int(np.count_nonzero(use > 1))
        sizes = [len(c) for c in chains]
        long = [i for i in range(k) if sizes[i] > limit]
        if best is None or (over, max(sizes)) < best[0]:
            best = ((over, max(sizes)), [set(c) for c in chains])
        if over == 0 and not long:
            return chains, it, 0
        hist[use > 1] += 1.0
        present *= growth
        for i in long:
            lam[i] *= 0.5
    return None, max_iters, best[0][0] if best else -1


def route(graph, terminal_sets: Sequence[Iterable[int]], max_chain: int, max_iters: int = 40,
          present: float = 0.5, growth: float = 1.6) -> RouteOutcome:
    """Negotiated-congestion routing of disjoint chains of size at most ``max_chain``.

    Each round re-routes every chain as a weighted Steiner tree whose vertex
    costs grow with current sharing and with accumulated history. Chains that
    exceed the size limit have their congestion sensitivity halved so they
    take shorter routes in the next round. Failure is a heuristic verdict.
    """
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    sets = [list(dict.fromkeys(gi.to_index(T))) for T in terminal_sets]
    if any(not T for T in sets):
        raise RoutingError("empty terminal set")
    if any(len(T) > max_chain for T in sets):
        return RouteOutcome(False, (), 0, 0, -1)
    chains, it, over = _route_idx(gi, sets, max_chain, max_iters, present, growth)
    if chains is None:
        return RouteOutcome(False, (), 0, it, over)
    out = tuple(gi.to_labels(c) for c in chains)
    return RouteOutcome(True, out, max(len(c) for c in out), it, 0)


@dataclass(frozen=True)
class RouteSearch:
    chains: tuple[frozenset, ...]
    max_chain: int
    lower_bound: int
    bound: ChainBound
    history: tuple[tuple[int, bool], ...] = field(default_factory=tuple)

    @property
    def search_floor(self) -> int:
        """Smallest size not ruled out by the LP bound or by failed calls."""
        fails = [m for m, ok in self.history if not ok]
        return max([self.lower_bound] + [m + 1 for m in fails])


def optimal_route_search(graph, terminal_sets: Sequence[Iterable[int]], max_iters: int = 40,
                         bound: ChainBound | None = None) -> RouteSearch:
    """Search for the smallest maximal chain size at which :func:`route` succeeds.

    Starts from the LP bound, grows the step geometrically until a call
    succeeds, then bisects the bracket. Failed calls only narrow the search
    bracket; the certified lower bound stays the LP one.
    """
    gi = graph if isinstance(graph, GraphIndex) else GraphIndex(graph)
    bound = bound or bcr_lower_bound(gi, terminal_sets)
    lb = max(bound.best, max(len(set(T)) for T in terminal_sets))
    history = []
    best = None

    def attempt(m):
        nonlocal best
        res = route(gi, terminal_sets, m, max_iters)
        history.append((m, res.success))
        if res.success and (best is None or res.max_chain < best.max_chain):
            best = res
        return res.success

    lo = lb
    if not attempt(lb):
        step = 1
        hi = None
        while hi is None:
            m = lb + step
            if m > gi.n:
                raise RoutingError("no chain size up to the vertex count routes successfully")
            if attempt(m):
                hi = m
            else:
                lo = m + 1
                step *= 2
        hi = min(hi, best.max_chain)
        while lo < hi:
            mid = (lo + hi) // 2
            if attempt(mid):
                hi = min(mid, best.max_chain)
            else:
                lo = mid + 1
    return RouteSearch(best.chains, best.max_chain, lb, bound, tuple(history))

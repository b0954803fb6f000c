"""Classical samplers and exact solvers for Ising models.

Exact routines use variable elimination over the interaction graph with a
min-fill order. Factors are dense numpy tables with one axis of length 2 per
variable, index 0 holding spin -1 and index 1 spin +1.
"""
from __future__ import annotations

import itertools
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np
from scipy.special import logsumexp

from .csp import Csp
from .ising import IsingModel, ModelError

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

MAX_WIDTH = 22
GROUND_CAP = 10**6
_TIE = 1e-9


class WidthError(ModelError):
    """Induced width of the elimination order exceeds the budget."""


# -- elimination orders ---------------------------------------------------


@dataclass(frozen=True)
class EliminationOrder:
    order: tuple[int, ...]
    width: int


def _adjacency(model: IsingModel) -> list[set[int]]:
    adj = [set() for _ in range(model.num_vars)]
    for i, j in model.quadratic:
        adj[i].add(j)
        adj[j].add(i)
    return adj


def induced_width(model: IsingModel, order: Sequence[int]) -> int:
    adj = _adjacency(model)
    width = 0
    for v in order:
        nb = adj[v]
        width = max(width, len(nb))
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
    return width


def min_fill_order(model: IsingModel, last: Sequence[int] = ()) -> EliminationOrder:
    """Greedy min-fill ordering; variables in ``last`` are eliminated at the end."""
    adj = _adjacency(model)
    tail = [v for v in last]
    pending = set(range(model.num_vars)) - set(tail)
    order = []
    width = 0

    def fill(v):
        nb = list(adj[v])
        return sum(1 for a, b in itertools.combinations(nb, 2) if b not in adj[a])

    while pending:
        v = min(pending, key=lambda u: (fill(u), len(adj[u]), u))
        pending.remove(v)
        order.append(v)
        nb = adj[v]
        width = max(width, len(nb))
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
        adj[v] = set()
    for v in tail:
        nb = adj[v]
        width = max(width, len(nb))
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
        adj[v] = set()
    return EliminationOrder(tuple(order + tail), width)


def _resolve_order(model, order, max_width):
    if order is None:
        order = min_fill_order(model)
    elif not isinstance(order, EliminationOrder):
        order = tuple(int(v) for v in order)
        if sorted(order) != list(range(model.num_vars)):
            raise ModelError("elimination order is not a permutation of the variables")
        order = EliminationOrder(order, induced_width(model, order))
    if order.width > max_width:
        raise WidthError(f"induced width {order.width} exceeds budget {max_width}")
    return order


# -- factor tables --------------------------------------------------------


def _model_factors(model: IsingModel, scale: float = 1.0) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Energy factors (times ``scale``) with the offset dropped."""
    out = []
    for i, v in model.linear.items():
        out.append(((i,), scale * np.array([-v, v])))
    for (i, j), v in model.quadratic.items():
        out.append(((i, j), scale * np.array([[v, -v], [-v, v]])))
    return out


def _expand(scope, table, target):
    """Broadcast ``table`` over ``scope`` to the axes of ``target``."""
    perm = sorted(range(len(scope)), key=lambda k: target.index(scope[k]))
    t = np.transpose(table, perm)
    present = sorted(target.index(v) for v in scope)
    shape = [2 if k in present else 1 for k in range(len(target))]
    return t.reshape(shape)


def _combine(factors, target):
    acc = np.zeros((2,) * len(target))
    for scope, table in factors:
        acc = acc + _expand(scope, table, target)
    return acc


def _buckets(model, order, scale=1.0):
    """Assign factors to the bucket of their first-eliminated variable."""
    pos = {v: k for k, v in enumerate(order)}
    buckets = [[] for _ in order]
    for scope, table in _model_factors(model, scale):
        buckets[min(pos[v] for v in scope)].append((scope, table))
    return buckets, pos


# -- exact minimisation ---------------------------------------------------


@dataclass(frozen=True)
class GroundStates:
    energy: float
    states: np.ndarray
    truncated: bool
    order: EliminationOrder

    @property
    def count(self) -> int:
        return len(self.states)


def exact_ground_states(model: IsingModel, order=None, cap: int = GROUND_CAP,
                        max_width: int = MAX_WIDTH) -> GroundStates:
    """Minimum energy and all minimising configurations (up to ``cap``).

    Uses min-sum bucket elimination followed by a backward enumeration of
    every argmin branch.
    """
    order = _resolve_order(model, order, max_width)
    n = model.num_vars
    buckets, pos = _buckets(model, order.order)
    kept = []  # (scope, combined table) per eliminated variable
    total = model.offset
    for k, v in enumerate(order.order):
        facs = buckets[k]
        scope = tuple(sorted({u for s, _ in facs for u in s} | {v}, key=lambda u: pos[u]))
        table = _combine(facs, scope)
        kept.append((scope, table))
        msg = table.min(axis=0)
        rest = scope[1:]
        if rest:
            buckets[pos[rest[0]]].append((rest, msg))
        else:
            total += float(msg)
    # backward enumeration
    states = []
    truncated = False
    assign = np.zeros(n, dtype=np.int8)
    tol = _TIE * max(1.0, abs(total), sum(abs(x) for x in model.linear.values()) + sum(abs(x) for x in model.quadratic.values()))

    def rec(k):
        nonlocal truncated
        if len(states) >= cap:
            truncated = True
            return
        if k < 0:
            states.append(assign.copy())
            return
        v = order.order[k]
        scope, table = kept[k]
        idx = tuple((assign[u] + 1) // 2 for u in scope[1:])
        col = table[(slice(None),) + idx]
        best = col.min()
        for b in (0, 1):
            if col[b] <= best + tol:
                assign[v] = 2 * b - 1
                rec(k - 1)
                if truncated:
                    return

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, n + 100))
    try:
        rec(n - 1)
    finally:
        sys.setrecursionlimit(limit)
    arr = np.array(states, dtype=np.int8).reshape(-1, n)
    if len(arr):
        arr = arr[np.lexsort(arr.T[::-1])]
    return GroundStates(float(total), arr, truncated, order)


def min_energy(model: IsingModel, order=None) -> float:
    return exact_ground_states(model, order, cap=1).energy


def spectrum(model: IsingModel, levels: int = 2, max_vars: int = 26, chunk: int = 1 << 18) -> list[float]:
    """Lowest distinct energy levels by enumerating the active spins."""
    act = model.active_variables()
    if len(act) > max_vars:
        raise WidthError(f"{len(act)} active spins exceed the enumeration budget {max_vars}")
    pos = {v: k for k, v in enumerate(act)}
    small = model.relabel(pos, len(act))
    found: set[float] = set()
    n = len(act)
    total = 1 << n
    for start in range(0, total, chunk):
        r = np.arange(start, min(total, start + chunk), dtype=np.int64)[:, None]
        z = (2 * ((r >> np.arange(n - 1, -1, -1)) & 1) - 1).astype(np.int8) if n else np.zeros((1, 0), np.int8)
        en = np.round(small.energies(z), 9)
        found |= set(np.unique(en)[:levels].tolist())
        found = set(sorted(found)[:levels])
    return sorted(found)


# -- exact Boltzmann marginals --------------------------------------------


@dataclass(frozen=True)
class Marginals:
    """``single[i] = (p(s_i=-1), p(s_i=+1))``; ``pair[(i,j)][a,b]`` likewise."""

    single: np.ndarray
    pair: dict
    log_z: float
    temperature: float

    def mean(self) -> np.ndarray:
        return self.single[:, 1] - self.single[:, 0]


def exact_boltzmann_marginals(model: IsingModel, temperature: float, order=None,
                              max_width: int = MAX_WIDTH) -> Marginals:
    """Single-spin and coupled-pair marginals of exp(-E/T)/Z and log Z.

    Runs sum-product on the bucket tree of the elimination order in log
    space: an upward pass computes messages and log Z, a downward pass
    gives every bucket its exact marginal.
    """
    if not temperature > 0:
        raise ModelError("temperature must be positive")
    order = _resolve_order(model, order, max_width)
    n = model.num_vars
    buckets, pos = _buckets(model, order.order, scale=-1.0 / temperature)
    scopes, own = [], []
    parent = [-1] * n
    up = {}  # child bucket -> (sep scope, log message)
    children = [[] for _ in range(n)]
    log_z = -model.offset / temperature
    # own factors are the original ones; messages arrive later in the list
    orig_count = [len(b) for b in buckets]
    for k, v in enumerate(order.order):
        facs = buckets[k]
        scope = tuple(sorted({u for s, _ in facs for u in s} | {v}, key=lambda u: pos[u]))
        scopes.append(scope)
        own.append(_combine(facs[: orig_count[k]], scope))
        table = _combine(facs, scope)
        msg = logsumexp(table, axis=0)
        rest = scope[1:]
        if rest:
            p = pos[rest[0]]
            parent[k] = p
            children[p].append(k)
            up[k] = (rest, msg)
            buckets[p].append((rest, msg))
        else:
            log_z += float(msg)
    down = {}
    beliefs = [None] * n
    for k in range(n - 1, -1, -1):
        scope = scopes[k]
        table = own[k]
        for c in children[k]:
            table = table + _expand(*up[c], scope)
        if parent[k] >= 0:
            table = table + _expand(*down[k], scope)
        b = np.exp(table - logsumexp(table))
        beliefs[k] = b
        for c in children[k]:
            sep, m_up = up[c]
            t = table - _expand(sep, m_up, scope)
            drop = tuple(a for a, u in enumerate(scope) if u not in sep)
            m = logsumexp(t, axis=drop) if drop else t
            kept_scope = tuple(u for u in scope if u in sep)
            m = _expand(kept_scope, m, sep).reshape((2,) * len(sep))
            down[c] = (sep, m - logsumexp(m))
    single = np.zeros((n, 2))
    pair = {}
    for k, v in enumerate(order.order):
        scope = scopes[k]
        b = beliefs[k]
        single[v] = b.sum(axis=tuple(range(1, len(scope))))
        for a, u in enumerate(scope[1:], start=1):
            key = (min(u, v), max(u, v))
            if key in model.quadratic:
                axes = tuple(x for x in range(len(scope)) if x not in (0, a))
                m = b.sum(axis=axes) if axes else b
                pair[key] = m if v < u else m.T
    return Marginals(single, pair, float(log_z), float(temperature))


def exact_free_energy(model: IsingModel, temperature: float, order=None) -> float:
    """Helmholtz free energy -T log Z."""
    return -temperature * exact_boltzmann_marginals(model, temperature, order).log_z


# -- sample sets ----------------------------------------------------------


@dataclass
class SampleSet:
    samples: np.ndarray
    energies: np.ndarray
    counts: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int8).reshape(len(self.counts), -1)
        self.energies = np.asarray(self.energies, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 1):
            raise ModelError("multiplicities must be positive")

    @classmethod
    def from_reads(cls, reads: np.ndarray, model: IsingModel | None = None, info: dict | None = None) -> "SampleSet":
        """Aggregate raw reads; rows are sorted by energy, then lexicographically."""
        reads = np.asarray(reads, dtype=np.int8)
        if reads.ndim != 2:
            raise ModelError("reads must be a 2-d array")
        if len(reads) == 0:
            return cls(np.zeros((0, reads.shape[1]), np.int8), np.zeros(0), np.zeros(0, np.int64), dict(info or {}))
        uniq, counts = np.unique(reads, axis=0, return_counts=True)
        en = model.energies(uniq) if model is not None else np.full(len(uniq), np.nan)
        keys = [uniq[:, c] for c in range(uniq.shape[1] - 1, -1, -1)] + [en]
        idx = np.lexsort(keys)
        return cls(uniq[idx], en[idx], counts[idx], dict(info or {}))

    def __len__(self):
        return len(self.counts)

    @property
    def num_reads(self) -> int:
        return int(self.counts.sum())

    @property
    def num_vars(self) -> int:
        return self.samples.shape[1]

    def expanded(self) -> np.ndarray:
        return np.repeat(self.samples, self.counts, axis=0)

    def lowest(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.energies))
        return self.samples[k], float(self.energies[k])

    def to_text(self) -> str:
        lines = [f"# {k} {self.info[k]}" for k in sorted(self.info)]
        lines.append(f"vars {self.num_vars}")
        for s, e, c in zip(self.samples, self.energies, self.counts):
            bits = "".join("1" if x > 0 else "0" for x in s)
            lines.append(f"{float(e)!r} {int(c)} {bits}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SampleSet":
        info, rows, en, cnt = {}, [], [], []
        n = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].strip().split(" ", 1)
                info[parts[0]] = parts[1] if len(parts) > 1 else ""
                continue
            if line.startswith("vars"):
                n = int(line.split()[1])
                continue
            e, c, bits = (line.split() + [""])[:3]
            en.append(float(e))
            cnt.append(int(c))
            rows.append([1 if b == "1" else -1 for b in bits])
        if n is None:
            raise ModelError("missing 'vars' line")
        return cls(np.array(rows, dtype=np.int8).reshape(len(rows), n), np.array(en), np.array(cnt), info)


# -- simulated annealing --------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Geometric inverse-temperature ramp; ``beta_max=None`` means 10 / mean |J|."""

    sweeps: int = 1000
    beta_min: float = 0.1
    beta_max: float | None = None

    def betas(self, model: IsingModel) -> np.ndarray:
        hi = self.beta_max
        if hi is None:
            vals = [abs(v) for v in model.quadratic.values()] or [abs(v) for v in model.linear.values()] or [1.0]
            hi = 10.0 / float(np.mean(vals))
        lo = min(self.beta_min, hi)
        if self.sweeps == 1:
            return np.array([hi])
        return np.geomspace(lo, hi, self.sweeps)


def _csr(model: IsingModel):
    n = model.num_vars
    deg = np.zeros(n + 1, dtype=np.int64)
    for i, j in model.quadratic:
        deg[i + 1] += 1
        deg[j + 1] += 1
    ptr = np.cumsum(deg)
    nbr = np.zeros(ptr[-1], dtype=np.int64)
    w = np.zeros(ptr[-1])
    fill = ptr[:-1].copy()
    for (i, j), v in model.quadratic.items():
        nbr[fill[i]] = j
        w[fill[i]] = v
        fill[i] += 1
        nbr[fill[j]] = i
        w[fill[j]] = v
        fill[j] += 1
    h = np.zeros(n)
    for i, v in model.linear.items():
        h[i] = v
    return h, ptr, nbr, w


@numba.njit(cache=True)
def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _uniform(state):
    # xorshift64*, state is a length-1 uint64 array
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    r = x * np.uint64(2685821657736338717)
    return (r >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(parallel=True, cache=True)
def _anneal(h, ptr, nbr, w, betas, num_reads, seed):
    n = h.shape[0]
    out = np.empty((num_reads, n), dtype=np.int8)
    for r in numba.prange(num_reads):
        state = np.empty(1, dtype=np.uint64)
        state[0] = _splitmix(np.uint64(seed) * np.uint64(1000003) + np.uint64(r)) | np.uint64(1)
        s = np.empty(n, dtype=np.int8)
        for i in range(n):
            s[i] = 1 if _uniform(state) < 0.5 else -1
        field = h.copy()
        for i in range(n):
            for k in range(ptr[i], ptr[i + 1]):
                field[i] += w[k] * s[nbr[k]]
        for b in range(betas.shape[0]):
            beta = betas[b]
            for i in range(n):
                delta = -2.0 * s[i] * field[i]
                if delta <= 0.0 or _uniform(state) < math.exp(-beta * delta):
                    s[i] = -s[i]
                    for k in range(ptr[i], ptr[i + 1]):
                        field[nbr[k]] += 2.0 * w[k] * s[i]
        out[r] = s
    return out


def sa_sample(model: IsingModel, schedule: Schedule | None = None, num_reads: int = 100,
              seed: int = 0, gauge: Sequence[int] | None = None) -> SampleSet:
    """Independent single-spin Metropolis anneals.

    Read ``r`` depends only on ``(seed, r)``, so results do not change with
    the number of numba threads. With ``gauge`` the anneal runs on the
    spin-reversed model and reads are mapped back.
    """
    if num_reads < 1:
        raise ModelError("num_reads must be >= 1")
    schedule = schedule or Schedule()
    target = model
    if gauge is not None:
        from .ising import spin_reversal

        target = spin_reversal(model, gauge)
    h, ptr, nbr, w = _csr(target)
    betas = schedule.betas(target)
    reads = _anneal(h, ptr, nbr, w, betas, int(num_reads), int(seed) & 0x7FFFFFFFFFFFFFFF)
    if gauge is not None:
        reads = reads * np.asarray(gauge, dtype=np.int8)[None, :]
    info = {"seed": int(seed), "sweeps": schedule.sweeps, "beta_min": float(betas[0]), "beta_max": float(betas[-1])}
    if gauge is not None:
        info["gauge"] = "".join("1" if g > 0 else "0" for g in gauge)
    return SampleSet.from_reads(reads, model, info)


def exact_sample(model: IsingModel, num_reads: int = 1, seed: int = 0) -> SampleSet:
    """Uniform draws from the exact ground-state set (a zero-temperature sampler)."""
    small, act = model.compacted()
    gs = exact_ground_states(small)
    rng = np.random.default_rng(seed)
    pick = rng.integers(len(gs.states), size=num_reads)
    # Spins without terms are free in every ground state.
    reads = rng.choice(np.array([-1, 1], dtype=np.int8), size=(num_reads, model.num_vars))
    reads[:, act] = gs.states[pick]
    return SampleSet.from_reads(reads, model, {"seed": int(seed), "sampler": "exact"})


# -- decoding and post-processing -----------------------------------------


@dataclass(frozen=True)
class DecodeStats:
    broken_fraction: float
    broken_per_chain: np.ndarray
    ties: int


def majority_vote_decode(samples: SampleSet, chains: Sequence[Sequence[int]], seed: int = 0,
                         logical_model: IsingModel | None = None) -> tuple[SampleSet, DecodeStats]:
    """Logical spins by chain majority; exact ties are settled by a seeded coin.

    Reads are expanded before decoding so each tied read gets its own coin.
    """
    rng = np.random.default_rng(seed)
    reads = samples.expanded()
    k = len(reads)
    out = np.empty((k, len(chains)), dtype=np.int8)
    broken = np.zeros(len(chains))
    ties = 0
    for c, chain in enumerate(chains):
        chain = list(chain)
        block = reads[:, chain].astype(np.int64)
        tot = block.sum(axis=1)
        broken[c] = np.count_nonzero(np.abs(tot) != len(chain))
        val = np.sign(tot).astype(np.int8)
        tied = np.flatnonzero(tot == 0)
        ties += len(tied)
        if len(tied):
            val[tied] = rng.choice(np.array([-1, 1], dtype=np.int8), size=len(tied))
        out[:, c] = val
    dec = SampleSet.from_reads(out, logical_model, dict(samples.info))
    per_chain = broken / max(k, 1)
    frac = float(per_chain.mean()) if len(chains) else 0.0
    return dec, DecodeStats(frac, per_chain, ties)


def greedy_descent(target: Csp | IsingModel, assignment: Sequence[int], frozen: Sequence[int] = ()) -> np.ndarray:
    """Steepest single-flip descent; the lowest index wins ties between flips.

    Indices in ``frozen`` are never flipped.
    """
    x = np.array(assignment, dtype=np.int8)
    movable = np.ones(len(x), dtype=bool)
    movable[list(frozen)] = False
    if isinstance(target, IsingModel):
        h, ptr, nbr, w = _csr(target)
        field = h.copy()
        for i in range(len(x)):
            field[i] += np.dot(w[ptr[i]:ptr[i + 1]], x[nbr[ptr[i]:ptr[i + 1]]])
        while True:
            delta = np.where(movable, -2.0 * x * field, np.inf)
            i = int(np.argmin(delta))
            if delta[i] >= -1e-12:
                return x
            x[i] = -x[i]
            sl = slice(ptr[i], ptr[i + 1])
            field[nbr[sl]] += 2.0 * w[sl] * x[i]
    csp = target
    weight = len(csp.constraints) + 1
    by_var = [[] for _ in range(csp.num_vars)]
    for ci, c in enumerate(csp.constraints):
        for v in c.scope:
            by_var[v].append(ci)

    def local(ci):
        c = csp.constraints[ci]
        st = c.status([x[v] for v in c.scope])
        return 0 if st == 0 else (1 if st == 1 else weight)

    cur = np.array([local(ci) for ci in range(len(csp.constraints))], dtype=np.int64)
    while True:
        best, best_i = 0, -1
        for i in np.flatnonzero(movable):
            before = sum(int(cur[ci]) for ci in by_var[i])
            x[i] = -x[i]
            after = sum(local(ci) for ci in by_var[i])
            x[i] = -x[i]
            if after - before < best:
                best, best_i = after - before, i
        if best_i < 0:
            return x
        x[best_i] = -x[best_i]
        for ci in by_var[best_i]:
            cur[ci] = local(ci)


def st99(p: float) -> float:
    """Expected samples to see a success with 99% confidence at per-sample rate ``p``.

    Returns ``inf`` for ``p == 0``.
    """
    if not 0 <= p <= 1 or math.isnan(p):
        raise ValueError(f"success fraction must lie in [0, 1], got {p}")
    if p == 0:
        return math.inf
    if p == 1:
        return 1.0
    return max(1.0, math.log(1 - 0.99) / math.log1p(-p))

"""Coverage statistics for repeated sampling of a diagnosis set."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class CouponStats:
    expected_first: float
    expected_all: float
    coverage: dict

    def row(self) -> list[float]:
        return [self.expected_first, self.expected_all] + [self.coverage[n] for n in sorted(self.coverage)]


def expected_all(p: Sequence[float], epsrel: float = 1e-6) -> float:
    """Expected draws until every outcome with rate ``p_i`` is seen (Poissonised integral)."""
    p = np.asarray(p, dtype=np.float64)
    if (p <= 0).any():
        return math.inf

    def f(t):
        return 1.0 - np.prod(-np.expm1(-p * t))

    # Split where the slowest outcome has mostly arrived so the tail is smooth.
    cut = 50.0 / p.min()
    head, _ = integrate.quad(f, 0.0, cut, epsabs=0.0, epsrel=epsrel, limit=500,
                             points=sorted({1.0 / q for q in p if 1.0 / q < cut}))
    tail, _ = integrate.quad(f, cut, math.inf, epsabs=0.0, epsrel=epsrel, limit=200)
    return head + tail


def coupon_stats(counts: Sequence[int], total: int, ns: Sequence[int] = (10, 100, 1000)) -> CouponStats:
    """Expected samples to the first and to all diagnoses, and expected coverage.

    ``counts[i]`` is how often diagnosis ``i`` of the target set appeared in
    ``total`` samples. Coverage after ``N * len(counts)`` samples is given in
    percent.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if total <= 0 or (counts < 0).any() or counts.sum() > total:
        raise ValueError("counts must be non-negative and sum to at most total > 0")
    if not (counts > 0).any():
        raise ValueError("at least one count must be positive")
    p = counts / float(total)
    k = len(p)
    cov = {int(n): float(100.0 / k * np.sum(-np.expm1(-p * n * k))) for n in ns}
    return CouponStats(float(1.0 / p.sum()), expected_all(p), cov)


def simulate_all(p: Sequence[float], trials: int, seed: int = 0) -> float:
    """Monte-Carlo mean number of draws to see every outcome, leftover mass meaning a miss."""
    rng = np.random.default_rng(seed)
    p = np.asarray(p, dtype=np.float64)
    probs = np.append(p, max(0.0, 1.0 - p.sum()))
    k = len(p)
    out = np.empty(trials)
    for t in range(trials):
        seen = np.zeros(k, dtype=bool)
        draws = 0
        left = k
        while left:
            batch = rng.choice(k + 1, size=64, p=probs)
            for b in batch:
                draws += 1
                if b < k and not seen[b]:
                    seen[b] = True
                    left -= 1
                    if not left:
                        break
        out[t] = draws
    return float(out.mean())

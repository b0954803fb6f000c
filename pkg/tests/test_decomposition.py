import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annealmap.compile import csp_penalties
from annealmap.csp import Constraint, Csp, equal, not_equal, parity, random_planted_csp
from annealmap.decomposition import (
    DcParams,
    DecompositionError,
    GbpParams,
    RegionGraph,
    corrective_energy,
    dc_solve,
    exact_oracle,
    exact_region_sampler,
    gbp_solve,
    partition_constraints,
    partition_regions,
    region_distribution,
    regional_bethe_energy,
    sa_region_sampler,
)
from annealmap.ising import IsingModel
from annealmap.penalty import PenaltyCache
from annealmap.samplers import exact_boltzmann_marginals, exact_free_energy
from instances import split_tree
from oracles import brute_energies, brute_logz_marginals, spins

CACHE = PenaltyCache()


def chain_csp():
    # x0 = x1, x1 != x2
    return Csp(("x0", "x1", "x2"), (Constraint((0, 1), equal()), Constraint((1, 2), not_equal())))


# -- partitioning ---------------------------------------------------------


def test_small_csp_single_region():
    csp = chain_csp()
    rg = partition_regions(csp, csp_penalties(csp, CACHE), fits=lambda g: True)
    assert len(rg) == 1 and rg.boundary == ((),)


def test_disconnected_halves():
    cons = (Constraint((0, 1), equal()), Constraint((1, 2), equal()),
            Constraint((3, 4), not_equal()), Constraint((4, 5), not_equal()))
    csp = Csp(tuple("abcdef"), cons)
    groups = partition_constraints(csp, 2)
    assert sorted(groups) == [[0, 1], [2, 3]]
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), groups)
    assert rg.boundary == ((), ())


def test_budget_forces_split_and_is_deterministic():
    csp, _ = random_planted_csp(12, 10, 3)
    pens = csp_penalties(csp, CACHE)
    fits = lambda g: len({v for c in g for v in csp.constraints[c].scope}) <= 7
    a = partition_regions(csp, pens, fits, seed=1)
    b = partition_regions(csp, pens, fits, seed=1)
    assert len(a) >= 2
    assert [r.constraints for r in a.regions] == [r.constraints for r in b.regions]
    assert all(len(r.variables) <= 7 for r in a.regions)


def test_region_graph_invariants():
    csp, _ = random_planted_csp(14, 12, 5)
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), partition_constraints(csp, 3))
    assert sorted(c for r in rg.regions for c in r.constraints) == list(range(12))
    for r, reg in enumerate(rg.regions):
        assert set(rg.boundary[r]) == {v for v in reg.variables if len(rg.regions_of(v)) >= 2}
    for v in range(csp.num_vars):
        assert rg.counts[v] == len(rg.regions_of(v))


def test_oversized_constraint_rejected():
    csp = Csp(tuple("abc"), (Constraint((0, 1, 2), parity(3)),))
    with pytest.raises(DecompositionError):
        partition_regions(csp, csp_penalties(csp, CACHE), fits=lambda g: False)


# -- corrected energy -----------------------------------------------------


def _single_region(model):
    return RegionGraph.from_models(model.num_vars, [(range(model.num_vars), model)])


def test_zero_bias_unchanged():
    m = IsingModel(2, {0: 0.5}, {(0, 1): -1.0})
    rg = RegionGraph.from_models(3, [((0, 1), m), ((1, 2), IsingModel(2))])
    assert corrective_energy(rg, 0, {}) == m
    assert corrective_energy(rg, 0, {1: (0.0, 0.0)}) == m


def test_single_bias_shift():
    m = IsingModel(2, {}, {(0, 1): -1.0})
    rg = RegionGraph.from_models(3, [((0, 1), m), ((1, 2), IsingModel(2))])
    out = corrective_energy(rg, 0, {1: (0.0, 1.0)})
    assert out.linear == {1: 0.5} and out.offset == 0.5


def test_bias_outside_boundary_rejected():
    rg = RegionGraph.from_models(3, [((0, 1), IsingModel(2)), ((1, 2), IsingModel(2))])
    with pytest.raises(DecompositionError):
        corrective_energy(rg, 0, {0: (0.0, 1.0)})


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_corrected_energy_identity(seed, n):
    rng = np.random.default_rng(seed)
    m = IsingModel(n, {i: float(rng.normal()) for i in range(n)},
                   {(i, j): float(rng.normal()) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3})
    shared = sorted(int(v) for v in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
    rg = RegionGraph.from_models(n, [(range(n), m), (shared, IsingModel(len(shared)))])
    V = {v: (float(rng.normal()), float(rng.normal())) for v in shared}
    _, base = brute_energies(m)
    z, got = brute_energies(corrective_energy(rg, 0, V))
    extra = sum(np.where(z[:, v] > 0, V[v][1], V[v][0]) for v in shared)
    np.testing.assert_allclose(got, base + extra, atol=1e-10)


# -- regional free energy -------------------------------------------------


def test_bethe_single_region_is_free_energy():
    m = IsingModel(4, {0: 0.3, 3: -0.2}, {(0, 1): 1.0, (1, 2): -0.5, (2, 3): 0.7, (0, 3): 0.2})
    T = 0.7
    rg = _single_region(m)
    b = region_distribution(m, T)
    logz, *_ = brute_logz_marginals(m, T)
    assert regional_bethe_energy(rg, [b], np.full((4, 2), 0.5), T) == pytest.approx(-T * logz, abs=1e-10)


def test_bethe_no_correction_when_counts_are_one():
    m = IsingModel(2, {0: 0.5})
    rg = RegionGraph.from_models(4, [((0, 1), m), ((2, 3), m)])
    b = [region_distribution(m, 1.0)] * 2
    low = regional_bethe_energy(rg, b, np.full((4, 2), 0.5), 1.0)
    other = regional_bethe_energy(rg, b, np.tile([0.9, 0.1], (4, 1)), 1.0)
    assert low == pytest.approx(other, abs=1e-12)


def test_bethe_rejects_unnormalised():
    m = IsingModel(1)
    with pytest.raises(DecompositionError):
        regional_bethe_energy(_single_region(m), [np.array([0.5, 0.6])], np.full((1, 2), 0.5), 1.0)


# -- GBP ------------------------------------------------------------------


def test_gbp_single_region_exact():
    m = IsingModel(3, {0: 0.4}, {(0, 1): -1.0, (1, 2): 0.3})
    T = 0.9
    res = gbp_solve(_single_region(m), exact_region_sampler(), T)
    assert res.converged and res.biases == [{}]
    _, up, _, _ = brute_logz_marginals(m, T)
    np.testing.assert_allclose(res.beliefs[:, 1], up, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_gbp_tree_exact_sampler(seed):
    full, rg, cut = split_tree(seed)
    T = 1.0
    res = gbp_solve(rg, exact_region_sampler(), T)
    ex = exact_boltzmann_marginals(full, T)
    assert res.converged
    assert np.abs(res.beliefs - ex.single).max() < 1e-3
    # fixpoint consistency of the shared variable across regions
    for r in range(len(rg)):
        assert np.abs(res.region_marginals[r][rg.local(r, cut)] - res.beliefs[cut]).max() < 1e-3
    dists = res.region_distributions(rg)
    bethe = regional_bethe_energy(rg, dists, res.beliefs, T)
    assert bethe == pytest.approx(exact_free_energy(full, T), abs=1e-3)
    for f in res.messages_in + res.messages_out:
        assert (f >= GbpParams().floor).all()


def test_gbp_tree_sa_sampler():
    full, rg, _ = split_tree(0)
    T = 1.0
    res = gbp_solve(rg, sa_region_sampler(10_000, 300, seed=1), T, GbpParams(max_iters=6))
    ex = exact_boltzmann_marginals(full, T)
    assert np.abs(res.beliefs - ex.single).max() < 0.05


def test_gbp_timeout_reports_failure():
    _, rg, _ = split_tree(1)
    res = gbp_solve(rg, exact_region_sampler(), 1.0, GbpParams(max_iters=1, tol=0.0))
    assert not res.converged and res.verdict == "failure" and res.iterations == 1


def test_gbp_rejects_bad_temperature():
    with pytest.raises(DecompositionError):
        gbp_solve(_single_region(IsingModel(1)), exact_region_sampler(), 0.0)


def test_gbp_on_csp_trace_monotone():
    csp, _ = random_planted_csp(10, 8, 2)
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), partition_constraints(csp, 2))
    res = gbp_solve(rg, exact_region_sampler(), 0.3, GbpParams(max_iters=30))
    best = [row.best_violations for row in res.trace]
    assert best == sorted(best, reverse=True)
    assert all(row.violations >= row.best_violations for row in res.trace)


# -- divide and concur ----------------------------------------------------


def test_dc_single_region_one_iteration():
    csp = chain_csp()
    groups = [[0, 1]]
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), groups)
    res = dc_solve(rg, exact_oracle(0))
    assert res.consensus and res.iterations == 1 and csp.is_satisfied(res.assignment)


def test_dc_two_regions_sharing_a_variable():
    csp = chain_csp()
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), [[0], [1]])
    assert rg.boundary == ((1,), (1,))
    sols = {s for s in itertools.product((-1, 1), repeat=3) if csp.is_satisfied(s)}
    for seed in range(5):
        res = dc_solve(rg, exact_oracle(seed))
        assert res.consensus and tuple(int(v) for v in res.assignment) in sols


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("dmap", [True, False])
def test_dc_sound_on_random_csps(seed, dmap):
    csp, x = random_planted_csp(20, 16, seed)
    assert csp.is_satisfied(x)
    rg = partition_regions(csp, csp_penalties(csp, CACHE), num_regions=3, seed=seed)
    res = dc_solve(rg, exact_oracle(seed), DcParams(200, dmap))
    if res.consensus:
        assert csp.is_satisfied(res.assignment)
    best = [row.best_violations for row in res.trace]
    assert best == sorted(best, reverse=True)
    assert res.violations == sum(1 for s in csp.statuses(res.assignment) if s == 2)


def test_dc_needs_csp():
    with pytest.raises(DecompositionError):
        dc_solve(_single_region(IsingModel(1)), exact_oracle())


def test_trace_line_format():
    csp = chain_csp()
    rg = RegionGraph.from_csp(csp, csp_penalties(csp, CACHE), [[0], [1]])
    row = dc_solve(rg, exact_oracle(0)).trace[0]
    fields = row.line().split("\t")
    assert len(fields) == 5 and int(fields[0]) == 1 and fields[-1] == "nan"

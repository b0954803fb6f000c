import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from annealmap.compile import compile_csp, hardware_gap
from annealmap.csp import example_csp, gate_relation, not_equal
from annealmap.ising import (
    IsingModel,
    ModelError,
    ParameterBounds,
    all_spins,
    chimera_graph,
    compose_embedded,
    dumps,
    energy,
    loads,
    spanning_tree_edges,
    spin_reversal,
)
from annealmap.penalty import best_penalty
from oracles import brute_energies, spins


def random_model(rng, n, density=0.6, scale=2.0):
    lin = {i: float(rng.uniform(-scale, scale)) for i in range(n) if rng.random() < 0.8}
    quad = {(i, j): float(rng.uniform(-scale, scale))
            for i in range(n) for j in range(i + 1, n) if rng.random() < density}
    return IsingModel(n, lin, quad, float(rng.uniform(-1, 1)))


models = st.builds(
    lambda seed, n: random_model(np.random.default_rng(seed), n),
    st.integers(0, 2**32 - 1), st.integers(1, 8),
)


# -- energy ---------------------------------------------------------------


def test_energy_direct_sums():
    m = IsingModel(2, {0: 1.0, 1: -1.0}, {(0, 1): 1.0})
    assert energy(m, (1, 1)) == 1.0
    assert energy(m, (-1, 1)) == -3.0
    zero = IsingModel(3)
    assert energy(zero, (1, -1, 1)) == 0.0


def test_energy_length_mismatch():
    with pytest.raises(ModelError):
        energy(IsingModel(3), (1, 1))


@given(models)
def test_vectorised_energies_match_scalar(m):
    z, ref = brute_energies(m)
    np.testing.assert_allclose(m.energies(z.astype(np.int8)), ref, atol=1e-12)
    for row, e in zip(z[:5], ref[:5]):
        assert m.energy(row.astype(int)) == pytest.approx(e, abs=1e-12)


def test_model_invariants():
    with pytest.raises(ModelError):
        IsingModel(2, {}, {(1, 1): 1.0})
    with pytest.raises(ModelError):
        IsingModel(2, {2: 1.0})
    with pytest.raises(ModelError):
        IsingModel(2, {0: math.inf})
    m = IsingModel(3, {}, {(2, 0): 1.5})
    assert m.quadratic == {(0, 2): 1.5}


def test_all_spins_order():
    assert all_spins(2).tolist() == [[-1, -1], [-1, 1], [1, -1], [1, 1]]
    np.testing.assert_array_equal(all_spins(5), spins(5))


# -- hardware graphs ------------------------------------------------------


def test_single_cell():
    hw = chimera_graph(1, 1, 4)
    assert len(hw.vertices) == 8 and len(hw.edges) == 16
    g = hw.graph
    assert nx.is_bipartite(g)
    assert all(g.degree(q) == 4 for q in g)


def test_full_chimera_size():
    hw = chimera_graph(12, 12, 4)
    assert len(hw.vertices) == 1152
    # 144 cells of 16 edges plus 2 * 12 * 11 * 4 inter-cell couplers.
    assert len(hw.edges) == 144 * 16 + 2 * 12 * 11 * 4


def test_dead_qubit_removed():
    hw = chimera_graph(1, 1, 4, dead={0})
    assert len(hw.vertices) == 7 and len(hw.edges) == 12
    with pytest.raises(ModelError):
        chimera_graph(1, 1, 4, dead={8})


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_chimera_structure(rows, cols, shore):
    hw = chimera_graph(rows, cols, shore)
    assert len(hw.vertices) == rows * cols * 2 * shore
    for u, v in hw.edges:
        ru, cu, su, _ = hw.coordinates(u)
        rv, cv, sv, _ = hw.coordinates(v)
        if (ru, cu) == (rv, cv):
            assert su != sv
        else:
            # Like-shore couplers between adjacent cells only.
            assert su == sv and abs(ru - rv) + abs(cu - cv) == 1
            assert (su == 0) == (cu == cv)


# -- gauge ----------------------------------------------------------------


def test_spin_reversal_identities():
    m = IsingModel(3, {0: 1.0, 2: -0.5}, {(0, 1): 0.25, (1, 2): -1.0}, 0.5)
    assert spin_reversal(m, (1, 1, 1)) == m
    flipped = spin_reversal(m, (-1, -1, -1))
    assert flipped.linear == {0: -1.0, 2: 0.5}
    assert flipped.quadratic == m.quadratic


@given(models, st.integers(0, 2**32 - 1))
def test_gauge_covariance_exhaustive(m, seed):
    mask = np.random.default_rng(seed).choice((-1, 1), size=m.num_vars)
    g = spin_reversal(m, mask)
    z = spins(m.num_vars)
    np.testing.assert_allclose(g.energies(z * mask[None, :]), m.energies(z), atol=1e-12)


# -- composition ----------------------------------------------------------


def test_single_penalty_without_chains_is_unchanged():
    pm = best_penalty(gate_relation("XOR", 2), nx.complete_bipartite_graph(3, 3))
    g = nx.complete_bipartite_graph(3, 3)
    placed = [(pm.model, {i: i for i in range(6)})]
    chains = {v: [pm.placement.var_map[v]] for v in range(3)}
    model, scale = compose_embedded(placed, chains, g, 1.0, ParameterBounds())
    assert scale == 1.0 and model == pm.model


def test_local_embedding_gap_two():
    comp = compile_csp(example_csp(), chimera_graph(2), chain_strength=1.0)
    assert comp.scale == 1.0
    assert hardware_gap(comp.model) == pytest.approx(2.0, abs=1e-9)


def _global_example():
    """Aggregate of two 4-qubit XOR penalties and a NEQ, with x1 split over a 2-qubit chain."""
    k4 = best_penalty(gate_relation("XOR", 2), nx.complete_graph(4))
    assert k4.gap == pytest.approx(1.0)
    vm = k4.placement.var_map
    anc = [v for v in range(4) if v not in vm][0]
    g = nx.Graph()
    g.add_edges_from(nx.complete_graph([0, 1, 2, 3]).edges)
    g.add_edges_from(nx.complete_graph([4, 5, 6, 7]).edges)
    g.add_edges_from([(0, 4), (2, 6)])
    first = {vm[0]: 0, vm[1]: 1, vm[2]: 2, anc: 3}
    second = {vm[0]: 4, vm[1]: 5, vm[2]: 6, anc: 7}
    neq = IsingModel(2, {}, {(0, 1): 0.5}, 0.5)
    placed = [(k4.model, first), (k4.model, second), (neq, {0: 2, 1: 6})]
    chains = {"x1": [0, 4], "x2": [1], "x3": [2], "x4": [5], "x5": [6]}
    return placed, chains, g


def _levels(model):
    _, e = brute_energies(model)
    lv = np.unique(np.round(e, 9))
    return lv[0], lv[1] - lv[0]


def test_global_embedding_rescaled_gap_halves():
    placed, chains, g = _global_example()
    raw, s1 = compose_embedded(placed, chains, g, 2.0, None)
    assert s1 == 1.0
    assert _levels(raw)[1] == pytest.approx(1.0)
    scaled, s2 = compose_embedded(placed, chains, g, 2.0, ParameterBounds())
    assert s2 == pytest.approx(0.5)
    assert _levels(scaled)[1] == pytest.approx(0.5)


def test_scaling_multiplies_every_energy():
    placed, chains, g = _global_example()
    raw, _ = compose_embedded(placed, chains, g, 2.0, None)
    scaled, s = compose_embedded(placed, chains, g, 2.0, ParameterBounds())
    _, e_raw = brute_energies(raw)
    _, e_scaled = brute_energies(scaled)
    np.testing.assert_allclose(e_scaled, s * e_raw, atol=1e-12)
    assert set(np.flatnonzero(np.isclose(e_raw, e_raw.min()))) == set(
        np.flatnonzero(np.isclose(e_scaled, e_scaled.min())))


def test_compose_rejects_bad_chains():
    g = nx.path_graph(4)
    with pytest.raises(ModelError):
        compose_embedded([], {"a": [0, 1], "b": [1, 2]}, g)
    with pytest.raises(ModelError):
        compose_embedded([], {"a": [0, 2]}, g)


def test_spanning_tree_uses_chain_edges_only():
    g = nx.cycle_graph(5)
    edges = spanning_tree_edges(g, [0, 1, 2, 3, 4])
    assert len(edges) == 4 and all(g.has_edge(*e) for e in edges)


# -- interchange format ---------------------------------------------------


@given(models)
def test_text_round_trip_exact(m):
    back = loads(dumps(m, ["generated"]))
    assert back == m


def test_loads_rejects_malformed():
    with pytest.raises(ModelError):
        loads("vars 2\nJ 1 0 1.0\n")
    with pytest.raises(ModelError):
        loads("h 0 1.0\n")
    with pytest.raises(ModelError):
        loads("vars 2\nfoo 1\n")


def test_bounds_scale_factor():
    b = ParameterBounds()
    m = IsingModel(2, {0: 4.0}, {(0, 1): -0.5})
    assert b.scale_to_fit(m) == 0.5
    assert b.contains(m.scaled(0.5))
    with pytest.raises(ModelError):
        ParameterBounds(1.0, 0.0)

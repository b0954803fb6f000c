import numpy as np
import pytest

from annealmap.compile import (
    chains_to_hardware,
    compile_csp,
    csp_penalties,
    embed_csp,
    hardware_gap,
    library_penalty,
)
from annealmap.csp import Constraint, Csp, example_csp, gate_relation, not_equal, parity
from annealmap.embedding import EmbeddingError
from annealmap.ising import IsingModel, chimera_graph
from annealmap.penalty import PenaltyCache, PenaltyError, verify_penalty
from annealmap.samplers import exact_ground_states
from oracles import brute_ground

CACHE = PenaltyCache()


def test_library_prefers_smallest_shape_reaching_target():
    pm = library_penalty(not_equal(), cache=CACHE)
    assert pm.placement.num_vertices == 2 and pm.gap == pytest.approx(2.0)
    xor = library_penalty(gate_relation("XOR", 2), cache=CACHE)
    assert xor.placement.num_vertices == 6 and xor.gap == pytest.approx(2.0)
    assert verify_penalty(xor).gap == pytest.approx(2.0)


def test_library_falls_back_to_best_gap():
    pm = library_penalty(parity(3), target_gap=100.0, cache=CACHE,
                         shapes=((1, 2), (2, 2), (3, 3)))
    assert pm.gap == pytest.approx(2.0) and pm.placement.num_vertices == 6


def test_library_budget_marks_abandoned_placements():
    with pytest.raises(PenaltyError):
        library_penalty(parity(3), cache=PenaltyCache(), shapes=((2, 2),), max_nodes=1)


def test_free_variable_rejected():
    csp = Csp(("a", "b", "c"), (Constraint((0, 1), not_equal()),))
    with pytest.raises(EmbeddingError):
        embed_csp(csp, chimera_graph(1))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 4.0])
def test_example_solutions_are_hardware_ground_states(alpha):
    csp = example_csp()
    comp = compile_csp(csp, chimera_graph(2), csp_penalties(csp, CACHE), chain_strength=alpha)
    small, active = comp.model.compacted()
    e0, ground = brute_ground(small) if small.num_vars <= 20 else (exact_ground_states(small).energy, None)
    for x in csp.solutions():
        z = chains_to_hardware(comp, x)
        assert comp.model.energy(z) == pytest.approx(e0, abs=1e-9)
    gs = exact_ground_states(small)
    # every hardware ground state has intact chains that decode to a solution
    pos = {q: k for k, q in enumerate(active)}
    for zs in gs.states:
        x = []
        for ch in comp.chains:
            vals = {int(zs[pos[q]]) for q in ch}
            assert len(vals) == 1
            x.append(vals.pop())
        assert csp.is_satisfied(x)


def test_hardware_gap_of_single_edge():
    assert hardware_gap(IsingModel(2, {}, {(0, 1): 1.0})) == pytest.approx(2.0)
    assert hardware_gap(IsingModel(1)) == np.inf

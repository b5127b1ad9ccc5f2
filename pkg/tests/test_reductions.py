import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from services.cascade_engine import CascadeModel, deterministic_spread, propagate, run_cascade
from services.graph_core import DirectedGraph
from services.reductions import (amplification_size, amplify_instance, cycle_gap_fractional_spread,
                                 cycle_gap_integral_bound, make_cycle_gap, make_path_gap, reduce_fractional_to_integral,
                                 reduce_independent_set, reduce_max_coverage)
from services.types import ContractViolation, DomainError, InfluenceVector, ModelKind, SizeError
from tests.conftest import random_instance


def test_reduction_layout(diamond_dag):
    reduced = reduce_fractional_to_integral(diamond_dag, "1/2")
    assert reduced.graph.node_count == 4 * 3
    assert reduced.activator_map[0] == [4, 5]
    assert reduced.activator_map[3] == [10, 11]
    assert reduced.graph.weight(10, 3) == 0.5
    assert list(reduced.graph.node_weights[4:]) == [0.0] * 8
    assert reduced.restrict([0, 3, 5, 11]) == {0, 3}


def test_reduced_model_clamps_activator_weight(diamond_dag):
    reduced = reduce_fractional_to_integral(diamond_dag, "1/2")
    assert reduced.model.kind == ModelKind.CAPPED_LINEAR
    assert reduced.graph.in_weight[3] == pytest.approx(2.0)
    with pytest.raises(ContractViolation):
        CascadeModel.linear(reduced.graph)


def test_map_allocation(diamond_dag):
    reduced = reduce_fractional_to_integral(diamond_dag, "1/3")
    x = InfluenceVector(values=[1.0, 0.0, 1 / 3, 2 / 3])
    assert reduced.map_allocation(x) == [4, 5, 6, 10, 13, 14]
    with pytest.raises(DomainError):
        reduced.map_allocation(InfluenceVector(values=[0.5, 0.0, 0.0, 0.0]))
    with pytest.raises(ContractViolation):
        reduced.map_allocation(InfluenceVector.zeros(3))


def test_reduction_requires_linear_contract():
    g = DirectedGraph.from_arcs(3, [(0, 2, 0.7), (1, 2, 0.7)])
    with pytest.raises(ContractViolation):
        reduce_fractional_to_integral(g)


@given(st.integers(0, 10_000), st.integers(1, 3), st.sampled_from(["1/2", "1/3"]))
def test_fractional_and_reduced_runs_coincide_on_shared_thresholds(seed, n, delta):
    g = random_instance(seed, n)
    reduced = reduce_fractional_to_integral(g, delta)
    rows = 300
    thresholds = 1.0 - np.random.default_rng(seed).random((rows, n))
    padded = np.hstack((thresholds, np.ones((rows, reduced.graph.node_count - n))))
    for units in itertools.product(range(reduced.steps + 1), repeat=n):
        x = InfluenceVector(values=np.array(units) / reduced.steps)
        seeds = np.zeros(reduced.graph.node_count, dtype=bool)
        seeds[reduced.map_allocation(x)] = True
        fractional = propagate(CascadeModel.linear(g), x.values, thresholds)
        integral = propagate(reduced.model, np.zeros(reduced.graph.node_count), padded, initial=seeds)
        np.testing.assert_array_equal(fractional, integral[:, :n])


@pytest.mark.parametrize("n", [4, 10, 50])
def test_path_gap(n):
    instance = make_path_gap(n)
    model = CascadeModel.linear(instance.graph)
    assert instance.witness.budget_used == pytest.approx(1.0)
    assert deterministic_spread(model, instance.witness, instance.thresholds) == n
    zeros = InfluenceVector.zeros(n)
    assert max(deterministic_spread(model, zeros, instance.thresholds, initial=[v]) for v in range(n)) == 1


def test_cycle_gap_construction():
    g = make_cycle_gap(4, 2)
    assert list(g.arcs()) == [(0, 1, 0.5), (1, 2, 0.5), (2, 3, 0.5), (3, 0, 0.5)]
    assert cycle_gap_fractional_spread(4, 2) == pytest.approx(3.75)
    assert cycle_gap_integral_bound(4, 2) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        make_cycle_gap(4, 5)


@st.composite
def small_graphs(draw, min_nodes: int = 2):
    n = draw(st.integers(min_nodes, 5))
    pairs = list(itertools.combinations(range(n), 2))
    edges = [p for p in pairs if draw(st.booleans())]
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    return g


@given(small_graphs())
def test_independent_set_spread_formula(g):
    n = g.number_of_nodes()
    instance = reduce_independent_set(g, 1)
    for size in range(n + 1):
        for seeds in itertools.combinations(range(n), size):
            inside = g.subgraph(seeds).number_of_edges()
            assert instance.spread(seeds) == n * size - inside


def test_independent_set_decoder_returns_labels():
    g = nx.Graph([("b", "c")])
    g.add_node("a")
    instance = reduce_independent_set(g, 2)
    assert instance.target == 6
    assert instance.decode([0, 2, 5]) == ["a", "c"]


@st.composite
def set_systems(draw):
    m = draw(st.integers(1, 5))
    return [draw(st.lists(st.integers(0, 6), max_size=4)) for _ in range(m)]


@given(set_systems(), st.integers(1, 3), st.booleans())
def test_max_coverage_spread_formula(sets, copies, or_tree):
    instance = reduce_max_coverage(sets, 1, copies, or_tree=or_tree)
    gates = set(instance.gate_nodes)
    for size in range(len(sets) + 1):
        for chosen in itertools.combinations(range(len(sets)), size):
            outcome = run_cascade(instance.model, InfluenceVector.zeros(instance.graph.node_count),
                                  instance.thresholds, initial=chosen)
            covered = set().union(*(set(sets[j]) for j in chosen)) if chosen else set()
            assert len(outcome.final_active - gates) == size + copies * len(covered)
            if not or_tree:
                assert instance.spread(chosen) == size + copies * len(covered)


def test_or_tree_bounds_triggering_sets():
    instance = reduce_max_coverage([[1], [1], [1], [1], [1]], 2, 1, or_tree=True)
    assert max(len(s) for s in instance.model.triggering_sets()) <= 2
    assert instance.gate_nodes


@given(small_graphs(min_nodes=3))
def test_amplification_separates_yes_and_no(g):
    n = g.number_of_nodes()
    base = reduce_independent_set(g, 2)
    target = 2 * n
    amplified = amplify_instance(base, target, 1.0, sink_count=3)
    assert amplified.target == target + 3
    for seeds in itertools.combinations(range(n), 2):
        independent = not g.has_edge(*seeds)
        spread = amplified.spread(seeds)
        if independent:
            assert spread == target + 3
        else:
            assert spread == base.spread(seeds) < target


def test_amplification_size():
    assert amplification_size(2, 1.0) == 8
    assert amplification_size(2, 0.5) == 64
    with pytest.raises(SizeError):
        amplification_size(1000, 0.1)


def test_amplification_needs_linear_instance():
    coverage = reduce_max_coverage([[1, 2], [2, 3]], 1, 2)
    with pytest.raises(DomainError):
        amplify_instance(coverage, 3, 1.0, sink_count=2)

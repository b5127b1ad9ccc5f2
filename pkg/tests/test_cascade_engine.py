from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from services.cascade_engine import (CascadeModel, crosses_threshold, deterministic_spread, estimate_spread,
                                     exact_spread_of_set, exact_spread_small, run_cascade, simulate_replicates,
                                     spread_of_set)
from services.graph_core import DirectedGraph
from services.reductions import cycle_gap_fractional_spread, make_cycle_gap
from services.types import (ContractViolation, DomainError, InfluenceVector, SizeError, ThresholdVector,
                            TriggeringKind)
from tests.conftest import random_instance


def test_crosses_threshold_tolerates_rounding_only_under_influence():
    total = np.array([0.3 - 1e-13, 0.0, 0.2])
    thresholds = np.array([0.3, 1e-13, 0.5])
    assert list(crosses_threshold(total, thresholds)) == [True, False, False]


def test_run_cascade_records_stages(path_graph):
    model = CascadeModel.linear(path_graph)
    x = InfluenceVector(values=[0.5, 0.0, 0.0, 0.0])
    outcome = run_cascade(model, x, ThresholdVector.fixed([0.5, 0.5, 0.5, 0.6]))
    assert outcome.final_active == frozenset({0, 1, 2})
    assert outcome.stage_trace == [frozenset({0}), frozenset({1}), frozenset({2})]


def test_run_cascade_integral_seeds_ignore_thresholds(path_graph):
    model = CascadeModel.linear(path_graph)
    outcome = run_cascade(model, InfluenceVector.zeros(4), ThresholdVector.fixed(np.ones(4)), initial=[2])
    assert outcome.initial == frozenset({2})
    assert outcome.final_active == frozenset({2})


def test_influence_is_clamped_at_one():
    g = DirectedGraph.from_arcs(3, [(0, 2, 0.8), (1, 2, 0.8)])
    model = CascadeModel.linear(g, allow_overweight=True)
    with pytest.raises(ContractViolation):
        CascadeModel.linear(g)
    x = InfluenceVector(values=[1.0, 1.0, 0.5])
    assert deterministic_spread(model, x, ThresholdVector.fixed([1.0, 1.0, 1.0])) == 3.0


def test_node_weights_weigh_the_objective(path_graph):
    model = CascadeModel.linear(path_graph.with_node_weights([2.0, 0.0, 1.0, 1.0]))
    x = InfluenceVector(values=[1.0, 0.0, 0.0, 0.0])
    assert deterministic_spread(model, x, ThresholdVector.fixed([0.5] * 4)) == 4.0


def test_size_mismatch_is_rejected(path_graph):
    model = CascadeModel.linear(path_graph)
    with pytest.raises(ContractViolation):
        estimate_spread(model, InfluenceVector.zeros(3), 10, 0)
    with pytest.raises(ContractViolation):
        estimate_spread(model, InfluenceVector.zeros(4), 0, 0)


def test_zero_allocation_spreads_nothing(path_graph):
    estimate = estimate_spread(CascadeModel.linear(path_graph), InfluenceVector.zeros(4), 100, 0)
    assert estimate.mean == 0.0
    assert estimate.stderr == 0.0


def test_estimate_is_reproducible_and_worker_independent(diamond_dag):
    model = CascadeModel.linear(diamond_dag)
    x = InfluenceVector(values=[0.6, 0.2, 0.0, 0.1])
    with patch("services.cascade_engine.REPLICATE_BLOCK_SIZE", 64):
        serial = simulate_replicates(model, x, 300, master_seed=11, workers=1)
        parallel = simulate_replicates(model, x, 300, master_seed=11, workers=4)
        prefix = simulate_replicates(model, x, 100, master_seed=11, workers=1)
    np.testing.assert_array_equal(serial, parallel)
    np.testing.assert_array_equal(serial[:100], prefix)
    assert not np.array_equal(serial, simulate_replicates(model, x, 300, master_seed=12))


@given(st.integers(0, 10_000), st.integers(2, 5))
def test_common_random_numbers_keep_spreads_monotone(seed, n):
    g = random_instance(seed, n)
    model = CascadeModel.linear(g)
    rng = np.random.default_rng(seed)
    low = rng.random(n) * 0.5
    high = np.minimum(low + rng.random(n) * 0.5, 1.0)
    small = simulate_replicates(model, InfluenceVector(values=low), 200, master_seed=seed)
    large = simulate_replicates(model, InfluenceVector(values=high), 200, master_seed=seed)
    assert np.all(small <= large)


def test_cycle_gap_exact_value():
    model = CascadeModel.linear(make_cycle_gap(3, 1.5))
    x = InfluenceVector(values=np.full(3, 0.5))
    assert abs(exact_spread_small(model, x) - 2.625) <= 1e-9
    assert cycle_gap_fractional_spread(3, 1.5) == pytest.approx(2.625)


def test_cycle_gap_monte_carlo_matches_formula():
    model = CascadeModel.linear(make_cycle_gap(4, 2))
    estimate = estimate_spread(model, InfluenceVector(values=np.full(4, 0.5)), 20_000, master_seed=5)
    assert abs(estimate.mean - 3.75) <= 4 * estimate.stderr


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_exact_oracle_agrees_with_monte_carlo(seed, n):
    g = random_instance(seed, n)
    model = CascadeModel.linear(g)
    x = InfluenceVector(values=np.random.default_rng(seed).random(n))
    exact = exact_spread_small(model, x)
    estimate = estimate_spread(model, x, 4000, master_seed=seed)
    assert abs(exact - estimate.mean) <= 5 * estimate.stderr + 1e-9


def test_exact_spread_of_set_on_path(path_graph):
    model = CascadeModel.linear(path_graph)
    assert exact_spread_of_set(model, [0]) == pytest.approx(1 + 0.5 + 0.25 + 0.125, abs=1e-12)


def test_exact_oracle_size_limit():
    model = CascadeModel.linear(DirectedGraph.from_arcs(11, []))
    with pytest.raises(SizeError):
        exact_spread_small(model, InfluenceVector(values=np.full(11, 0.5)))


def test_exact_oracle_rejects_random_triggering(path_graph):
    model = CascadeModel.triggering_model(path_graph, TriggeringKind.INDEPENDENT_CASCADE)
    with pytest.raises(DomainError):
        exact_spread_small(model, InfluenceVector.zeros(4))


def test_deterministic_triggering_sets(diamond_dag):
    model = CascadeModel.triggering_model(diamond_dag, sets=[[], [0], [], [2]])
    assert model.triggering_sets() == [frozenset(), frozenset({0}), frozenset(), frozenset({2})]
    outcome = run_cascade(model, InfluenceVector.zeros(4), ThresholdVector.fixed(np.ones(4)), initial=[0])
    assert outcome.final_active == frozenset({0, 1})
    with pytest.raises(ContractViolation):
        CascadeModel.triggering_model(diamond_dag, sets=[[], [3], [], []])


def test_linear_threshold_sampler_matches_linear_model():
    g = random_instance(7, 5, arc_probability=0.7)
    seeds = [0, 3]
    linear = spread_of_set(CascadeModel.linear(g), seeds, 6000, master_seed=1)
    live_edge = spread_of_set(CascadeModel.triggering_model(g, TriggeringKind.LINEAR_THRESHOLD), seeds, 6000,
                              master_seed=2)
    bound = 5 * np.hypot(linear.stderr, live_edge.stderr) + 1e-9
    assert abs(linear.mean - live_edge.mean) <= bound


def test_independent_cascade_keeps_arcs_with_their_weight():
    g = DirectedGraph.from_arcs(2, [(0, 1, 0.3)])
    estimate = spread_of_set(CascadeModel.triggering_model(g, TriggeringKind.INDEPENDENT_CASCADE), [0], 8000, 3)
    assert abs(estimate.mean - 1.3) <= 5 * estimate.stderr


def test_random_triggering_needs_sampled_arcs(path_graph):
    model = CascadeModel.triggering_model(path_graph, TriggeringKind.INDEPENDENT_CASCADE)
    t = ThresholdVector.fixed(np.ones(4))
    with pytest.raises(ContractViolation):
        run_cascade(model, InfluenceVector.zeros(4), t, initial=[0])
    outcome = run_cascade(model, InfluenceVector.zeros(4), t, initial=[0], live_arcs=np.ones(3, dtype=bool))
    assert outcome.final_active == frozenset({0, 1, 2, 3})


@pytest.mark.parametrize("seed", range(3))
def test_seed_set_matches_its_indicator_allocation(seed):
    model = CascadeModel.linear(random_instance(seed, 6))
    s = [0, 3]
    zeros = InfluenceVector.zeros(6)
    as_set = simulate_replicates(model, zeros, 300, master_seed=seed, initial=s)
    as_allocation = simulate_replicates(model, InfluenceVector.indicator(6, s), 300, master_seed=seed)
    assert np.array_equal(as_set, as_allocation)
    assert spread_of_set(model, s, 300, master_seed=seed).mean == pytest.approx(as_allocation.mean())

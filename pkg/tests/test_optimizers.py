import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from services.cascade_engine import CascadeModel, estimate_spread, exact_spread_small
from services.graph_core import DirectedGraph
from services.optimizers import (BudgetedProblem, ExactOracle, FixedThresholdOracle, MonteCarloOracle,
                                 brute_force_grid_optimum, dag_all_single_node_spreads, dag_linear_optimize,
                                 dag_single_node_spread, greedy_fractional, greedy_integral, naive_greedy_fractional,
                                 satisfies_linearity_condition, saturation_sets)
from services.reductions import make_path_gap, reduce_max_coverage
from services.types import DomainError, InfluenceVector, TriggeringKind
from tests.conftest import random_instance


def exact_problem(g: DirectedGraph, budget: float, delta: str = "1/2") -> BudgetedProblem:
    model = CascadeModel.linear(g)
    return BudgetedProblem(model=model, budget=budget, delta=delta, oracle=ExactOracle(model))


def test_budgeted_problem_validation(diamond_dag):
    model = CascadeModel.linear(diamond_dag)
    with pytest.raises(DomainError):
        BudgetedProblem(model=model, budget=5)
    with pytest.raises(DomainError):
        BudgetedProblem(model=model, budget=1, delta="2/3")
    with pytest.raises(DomainError):
        BudgetedProblem(model=model, budget=0.75, delta="1/2").step_count()
    assert BudgetedProblem(model=model, budget=1.5, delta="1/4").step_count() == 6


def test_greedy_spends_the_budget_in_steps(diamond_dag):
    result = greedy_fractional(exact_problem(diamond_dag, 1.5))
    assert result.x.budget_used == pytest.approx(1.5)
    assert all(move.amount == 0.5 for move in result.spend_log)
    assert len(result.spend_log) == 3
    assert np.all(result.x.values <= 1.0)


@given(st.integers(0, 10_000), st.integers(2, 4), st.sampled_from([1, 2]))
def test_greedy_reaches_the_approximation_ratio(seed, n, budget):
    g = random_instance(seed, n)
    result = greedy_fractional(exact_problem(g, budget))
    optimum, _ = brute_force_grid_optimum(CascadeModel.linear(g), budget, "1/2")
    assert result.estimated_spread.mean >= (1 - 1 / np.e) * optimum - 1e-9


@given(st.integers(0, 10_000), st.integers(2, 4))
def test_lazy_and_naive_greedy_agree(seed, n):
    g = random_instance(seed, n)
    lazy = greedy_fractional(exact_problem(g, 2))
    naive = naive_greedy_fractional(exact_problem(g, 2))
    assert lazy.spend_log == naive.spend_log
    assert lazy.estimated_spread.mean == pytest.approx(naive.estimated_spread.mean, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_monte_carlo_greedy_matches_naive_greedy(seed):
    model = CascadeModel.linear(random_instance(seed, 6))

    def problem() -> BudgetedProblem:
        return BudgetedProblem(model=model, budget=2, delta="1/2", replicates=200, master_seed=17)

    naive = naive_greedy_fractional(problem())
    assert greedy_fractional(problem()).spend_log == naive.spend_log
    assert greedy_fractional(problem(), lazy=True).spend_log == naive.spend_log


@given(st.integers(0, 10_000), st.integers(2, 3))
def test_grid_refinement_loss_is_bounded(seed, n):
    g = random_instance(seed, n)
    model = CascadeModel.linear(g)
    budget = n - 0.5
    coarse, _ = brute_force_grid_optimum(model, budget, "1/2")
    fine, _ = brute_force_grid_optimum(model, budget, "1/4")
    assert coarse >= (1 - 0.5 * n / budget) * fine - 1e-9
    assert fine >= coarse - 1e-9


def test_fixed_threshold_greedy_walks_the_path_gap():
    instance = make_path_gap(4)
    model = CascadeModel.linear(instance.graph)
    problem = BudgetedProblem(model=model, budget=1, delta="1/5",
                              oracle=FixedThresholdOracle(model, instance.thresholds))
    result = greedy_fractional(problem)
    assert result.estimated_spread.mean == 4.0
    assert result.estimated_spread.stderr == 0.0
    np.testing.assert_allclose(result.x.values, [0.4, 0.2, 0.2, 0.2])


def test_fixed_threshold_oracle_needs_deterministic_model(path_graph):
    model = CascadeModel.triggering_model(path_graph, TriggeringKind.INDEPENDENT_CASCADE)
    with pytest.raises(DomainError):
        FixedThresholdOracle(model, make_path_gap(4).thresholds)


def test_monte_carlo_greedy_is_reproducible(diamond_dag):
    model = CascadeModel.linear(diamond_dag)
    first = greedy_fractional(BudgetedProblem(model=model, budget=1, delta="1/2", replicates=300, master_seed=4))
    second = greedy_fractional(BudgetedProblem(model=model, budget=1, delta="1/2", replicates=300, master_seed=4))
    np.testing.assert_array_equal(first.x.values, second.x.values)
    assert first.estimated_spread == second.estimated_spread


def test_refined_oracle_doubles_replicates(diamond_dag):
    oracle = MonteCarloOracle(CascadeModel.linear(diamond_dag), replicates=100, master_seed=1)
    refined = oracle.refined()
    assert refined.replicates == 200
    assert refined.master_seed == 1


def test_greedy_integral_picks_the_hub(star_graph):
    model = CascadeModel.linear(star_graph)
    result = greedy_integral(BudgetedProblem(model=model, budget=1, oracle=ExactOracle(model)))
    assert result.seed_set == [0]
    assert result.integral
    assert result.estimated_spread.mean == pytest.approx(4.0)
    with pytest.raises(DomainError):
        greedy_integral(BudgetedProblem(model=model, budget=1.5, oracle=ExactOracle(model)))


def test_dag_single_node_spread_on_diamond(diamond_dag):
    # 1 + 0.5 + 0.25 + (0.5 * 0.5 + 0.25 * 0.5)
    assert dag_single_node_spread(diamond_dag, 0) == pytest.approx(2.125)
    np.testing.assert_allclose(dag_all_single_node_spreads(diamond_dag), [2.125, 1.5, 1.5, 1.0])


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_dag_single_node_spread_matches_exact(seed, n):
    g = random_instance(seed, n, dag=True)
    model = CascadeModel.linear(g)
    sigma = dag_all_single_node_spreads(g)
    for v in range(n):
        exact = exact_spread_small(model, InfluenceVector.indicator(n, [v]))
        assert dag_single_node_spread(g, v) == pytest.approx(exact, abs=1e-9)
        assert sigma[v] == pytest.approx(exact, abs=1e-9)


def test_dag_routines_reject_cycles():
    cyclic = DirectedGraph.from_arcs(3, [(0, 1, 0.5), (1, 2, 0.5), (2, 0, 0.5)])
    with pytest.raises(DomainError):
        dag_all_single_node_spreads(cyclic)
    with pytest.raises(DomainError):
        dag_linear_optimize(cyclic, 1)


def test_saturation_sets(diamond_dag):
    x = InfluenceVector(values=[0.0, 0.6, 0.0, 0.1])
    sets = saturation_sets(diamond_dag, x)
    assert sets.influenced == [1, 3]
    assert sets.saturated == [1, 3]
    assert not satisfies_linearity_condition(diamond_dag, x)
    assert satisfies_linearity_condition(diamond_dag, InfluenceVector(values=[1.0, 0.5, 0.0, 0.0]))
    # tails 0 and 2 never activate, so only the arc 1 -> 3 counts
    assert saturation_sets(diamond_dag, x, live_only=True).saturated == []
    assert satisfies_linearity_condition(diamond_dag, x, live_only=True)


@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.1, 2.0))
def test_dag_linear_allocation_is_linear_and_exact(seed, n, budget):
    g = random_instance(seed, n, dag=True)
    budget = min(budget, n)
    result = dag_linear_optimize(g, budget)
    assert result.x.budget_used <= budget + 1e-9
    assert satisfies_linearity_condition(g, result.x, live_only=True)
    exact = exact_spread_small(CascadeModel.linear(g), result.x)
    assert result.predicted_spread == pytest.approx(exact, abs=1e-9)


def test_dag_linear_allocation_stays_on_the_set_layer_of_a_coverage_instance():
    instance = reduce_max_coverage([[1, 2], [2, 3]], 1, 2)
    sigma = dag_all_single_node_spreads(instance.graph)
    assert sigma[0] == sigma[1] == 5.0
    result = dag_linear_optimize(instance.graph, 1)
    assert {move.node for move in result.spend_log} <= set(instance.source_layer)
    np.testing.assert_array_equal(result.x.values, np.eye(instance.graph.node_count)[0])
    assert result.predicted_spread == 5.0
    model = CascadeModel.linear(instance.graph, allow_overweight=True)
    estimate = estimate_spread(model, result.x, 200, master_seed=0)
    assert estimate.mean == 5.0
    assert estimate.stderr == 0.0


def test_dag_linear_allocation_skips_sets_sharing_an_element():
    instance = reduce_max_coverage([[1, 2], [2, 3]], 2, 2)
    result = dag_linear_optimize(instance.graph, 2)
    # the second set would give the copies of element 2 two live in-arcs of weight 1
    assert [move.node for move in result.spend_log] == [0, 6]
    model = CascadeModel.linear(instance.graph, allow_overweight=True)
    assert estimate_spread(model, result.x, 200, master_seed=0).mean == pytest.approx(result.predicted_spread)

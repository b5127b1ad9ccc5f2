"""
End-to-end checks of the modelled guarantees. Desk-scale variants run by default; the full-scale runs carry the
`slow` marker and are selected with `pytest -m slow`.
"""
import itertools

import numpy as np
import pytest

from services.cascade_engine import CascadeModel, estimate_spread, exact_spread_small, propagate
from services.experiment_harness import ExperimentConfig, pointwise_gain, run_experiment
from services.optimizers import (BudgetedProblem, ExactOracle, brute_force_grid_optimum, dag_single_node_spread,
                                 greedy_fractional)
from services.reductions import make_cycle_gap, reduce_fractional_to_integral
from services.types import InfluenceVector, SizeError
from tests.conftest import random_instance


def grid_points(n: int, per_unit: int):
    for units in itertools.product(range(per_unit + 1), repeat=n):
        yield np.asarray(units)


def check_grid_submodularity(g, per_unit: int = 2, slack: float = 1e-9):
    model = CascadeModel.linear(g)
    n = g.node_count
    cache = {}

    def sigma(units) -> float:
        key = tuple(int(u) for u in units)
        if key not in cache:
            cache[key] = exact_spread_small(model, InfluenceVector(values=np.asarray(key) / per_unit))
        return cache[key]

    points = list(grid_points(n, per_unit))
    for low in points:
        for high in points:
            if np.any(low > high):
                continue
            for v in range(n):
                if high[v] == per_unit:
                    continue
                step = np.eye(n, dtype=int)[v]
                low_gain = sigma(low + step) - sigma(low)
                assert low_gain >= -slack
                assert low_gain >= sigma(high + step) - sigma(high) - slack


def check_coupling(g, delta: str, rows: int, seed: int):
    n = g.node_count
    reduced = reduce_fractional_to_integral(g, delta)
    thresholds = 1.0 - np.random.default_rng(seed).random((rows, n))
    padded = np.hstack((thresholds, np.ones((rows, reduced.graph.node_count - n))))
    linear = CascadeModel.linear(g)
    for units in grid_points(n, reduced.steps):
        x = InfluenceVector(values=units / reduced.steps)
        seeds = np.zeros(reduced.graph.node_count, dtype=bool)
        seeds[reduced.map_allocation(x)] = True
        fractional = propagate(linear, x.values, thresholds)
        integral = propagate(reduced.model, np.zeros(reduced.graph.node_count), padded, initial=seeds)
        assert np.array_equal(fractional, integral[:, :n])


@pytest.mark.parametrize("seed", range(5))
def test_grid_submodularity_and_monotonicity(seed):
    check_grid_submodularity(random_instance(seed, 3))


@pytest.mark.slow
def test_cycle_gap_at_full_scale():
    model = CascadeModel.linear(make_cycle_gap(4, 2))
    estimate = estimate_spread(model, InfluenceVector(values=np.full(4, 0.5)), 1_000_000, master_seed=0, workers=4)
    assert abs(estimate.mean - 3.75) <= 3 * estimate.stderr


@pytest.mark.slow
def test_reduction_coupling_at_full_scale():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = random_instance(seed, int(rng.integers(1, 5)))
        check_coupling(g, "1/2" if seed % 2 else "1/3", 10_000, seed)


@pytest.mark.slow
def test_grid_submodularity_at_full_scale():
    for seed in range(50):
        check_grid_submodularity(random_instance(seed, 2 + seed % 4))


@pytest.mark.slow
def test_greedy_ratio_and_grid_loss_at_full_scale():
    for seed in range(30):
        n = 2 + seed % 5
        g = random_instance(seed, n)
        model = CascadeModel.linear(g)
        for budget in (1, 2):
            greedy = greedy_fractional(BudgetedProblem(model=model, budget=budget, delta="1/2",
                                                       oracle=ExactOracle(model)))
            optimum, _ = brute_force_grid_optimum(model, budget, "1/2")
            assert greedy.estimated_spread.mean >= (1 - 1 / np.e) * optimum - 1e-9
            if 0.5 * n / budget < 1 and n <= 3:
                fine, _ = brute_force_grid_optimum(model, budget, "1/20")
                assert optimum >= (1 - 0.5 * n / budget) * fine - 1e-9


@pytest.mark.slow
def test_dag_spreads_against_monte_carlo():
    for seed in range(10):
        g = random_instance(seed, 200, dag=True, arc_probability=0.02)
        model = CascadeModel.linear(g)
        v = int(np.argmax(g.out_degree))
        estimate = estimate_spread(model, InfluenceVector.indicator(200, [v]), 20_000, master_seed=seed)
        assert abs(dag_single_node_spread(g, v) - estimate.mean) <= 4 * estimate.stderr + 1e-9


@pytest.mark.slow
def test_dag_spreads_match_the_exact_oracle_on_small_dags():
    checked = 0
    for seed in range(100):
        n = 6 + seed % 3
        g = random_instance(seed, n, dag=True, arc_probability=0.25)
        model = CascadeModel.linear(g)
        try:
            exact = [exact_spread_small(model, InfluenceVector.indicator(n, [v])) for v in range(n)]
        except SizeError:
            continue
        checked += 1
        for v in range(n):
            assert dag_single_node_spread(g, v) == pytest.approx(exact[v], abs=1e-9)
    assert checked >= 90


def sweep(dataset: str, out=None):
    cfg = ExperimentConfig(graph=dataset, budgets=[1, 5, 10, 20, 50], sims=2000, seed=0, workers=4,
                           record_wallclock=False, out=out)
    return run_experiment(cfg)


@pytest.mark.slow
@pytest.mark.parametrize("dataset", ["synthetic:pa:1000", "synthetic:dag:1000", "synthetic:grid:30"])
def test_fractional_beats_integral_on_synthetic_graphs(dataset):
    rows = sweep(dataset)
    for budget in (1, 5, 10, 20, 50):
        at_budget = [r for r in rows if r.budget == budget]
        fractional = max((r for r in at_budget if not r.algorithm.endswith("Int")), key=lambda r: r.mean_spread)
        integral = max((r for r in at_budget if r.algorithm.endswith("Int")), key=lambda r: r.mean_spread)
        bound = 4 * np.hypot(fractional.stderr, integral.stderr)
        assert fractional.mean_spread >= integral.mean_spread - bound
    assert pointwise_gain(rows).mean_gain > 0


@pytest.mark.slow
def test_sweep_is_byte_identical(tmp_path):
    sweep("synthetic:grid:30", tmp_path / "a.csv")
    sweep("synthetic:grid:30", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

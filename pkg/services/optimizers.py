import heapq
import itertools
import logging
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import DEFAULT_SEED, DEFAULT_SIMS, DEFAULT_WORKERS
from services.cascade_engine import (CascadeModel, exact_spread_of_set, exact_spread_small, propagate,
                                     simulate_replicates)
from services.graph_core import DirectedGraph, reachable_from, topological_order
from services.types import (VALUE_SLACK, Algorithm, AllocationResult, DomainError, InfluenceVector, ModelKind,
                            SpendMove, SpreadEstimate, ThresholdVector, parse_delta)

logger = logging.getLogger(__name__)

GAIN_DECIMALS = 12


class SpreadOracle(ABC):
    """
    Source of spread values for the optimizers.

    `samples` returns per-replicate spreads; gains between two allocations are taken replicate by replicate,
    so stochastic oracles must reuse the same random numbers on every call.
    """
    submodular: bool = True
    stochastic: bool = False

    def __init__(self, model: CascadeModel):
        self.model = model

    @abstractmethod
    def samples(self, x: InfluenceVector, initial: Optional[Sequence[int]] = None) -> np.ndarray:
        ...

    def evaluate(self, x: InfluenceVector, initial: Optional[Sequence[int]] = None) -> SpreadEstimate:
        values = self.samples(x, initial)
        replicates = int(values.shape[0])
        stderr = float(values.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
        return SpreadEstimate(mean=float(values.mean()), stderr=stderr, replicates=replicates,
                              master_seed=getattr(self, "master_seed", None))

    def refined(self) -> "SpreadOracle":
        """Oracle with twice the sampling effort, for separating near-ties."""
        return self


class MonteCarloOracle(SpreadOracle):
    """
    Monte-Carlo estimates sharing one master seed, hence common random numbers across calls.

    A finite-sample average is not submodular even when σ is, so stale gains do not bound fresh ones.
    """
    stochastic = True
    submodular = False

    def __init__(self, model: CascadeModel, replicates: int = DEFAULT_SIMS, master_seed: int = DEFAULT_SEED,
                 workers: int = DEFAULT_WORKERS):
        super().__init__(model)
        self.replicates = replicates
        self.master_seed = master_seed
        self.workers = workers

    def samples(self, x: InfluenceVector, initial: Optional[Sequence[int]] = None) -> np.ndarray:
        if initial is not None and not len(initial):
            initial = None
        if initial is None and not x.values.any():
            return np.zeros(self.replicates)
        return simulate_replicates(self.model, x, self.replicates, self.master_seed, initial=initial,
                                   workers=self.workers)

    def refined(self) -> "MonteCarloOracle":
        return MonteCarloOracle(self.model, self.replicates * 2, self.master_seed, self.workers)


class ExactOracle(SpreadOracle):
    """Exact spread by threshold-cell enumeration; small instances only."""

    def samples(self, x: InfluenceVector, initial: Optional[Sequence[int]] = None) -> np.ndarray:
        if initial is not None:
            return np.array([exact_spread_of_set(self.model, initial)])
        return np.array([exact_spread_small(self.model, x)])


class FixedThresholdOracle(SpreadOracle):
    """Deterministic spread under one fixed threshold vector. Not submodular in general."""
    submodular = False

    def __init__(self, model: CascadeModel, thresholds: ThresholdVector):
        if model.is_random_triggering:
            raise DomainError("Fixed-threshold spread needs deterministic triggering sets")
        super().__init__(model)
        self.thresholds = thresholds

    def samples(self, x: InfluenceVector, initial: Optional[Sequence[int]] = None) -> np.ndarray:
        initial_mask = None
        if initial is not None:
            initial_mask = np.zeros(self.model.n, dtype=bool)
            initial_mask[list(initial)] = True
        live = self.model.sample_live_arcs(None, 1) if self.model.kind == ModelKind.TRIGGERING else None
        final = propagate(self.model, x.values, self.thresholds.values.reshape(1, -1), live=live,
                          initial=initial_mask)
        return final.astype(float) @ self.model.node_weights


class BudgetedProblem(BaseModel):
    """Budget K, grid step δ and the estimator used to compare allocations"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: CascadeModel
    budget: float = Field(..., ge=0, description="Total budget K")
    delta: Fraction = Field(Fraction(1, 10), description="Grid step 1/N")
    replicates: int = Field(DEFAULT_SIMS, ge=1, description="Monte-Carlo replicates per estimate")
    master_seed: int = Field(DEFAULT_SEED, description="Seed of the estimator")
    workers: int = Field(DEFAULT_WORKERS, ge=1)
    oracle: Optional[SpreadOracle] = Field(None, description="Overrides the Monte-Carlo estimator")

    @field_validator("delta", mode="before")
    @classmethod
    def _parse_delta(cls, v):
        return parse_delta(v)

    @model_validator(mode="after")
    def _check_budget(self):
        if self.budget > self.model.n + VALUE_SLACK:
            raise DomainError(f"Budget {self.budget} exceeds the node count {self.model.n}")
        return self

    @property
    def spread_oracle(self) -> SpreadOracle:
        if self.oracle is None:
            self.oracle = MonteCarloOracle(self.model, self.replicates, self.master_seed, self.workers)
        return self.oracle

    def step_count(self) -> int:
        """K/δ, which must be an integer."""
        steps = self.budget * self.delta.denominator
        rounded = round(steps)
        if abs(steps - rounded) > 1e-9:
            raise DomainError(f"Budget {self.budget} is not a whole number of steps of {self.delta}")
        return int(rounded)


Evaluator = Callable[[np.ndarray], np.ndarray]


def _gain(current: np.ndarray, candidate: np.ndarray) -> Tuple[float, float]:
    diff = candidate - current
    stderr = float(diff.std(ddof=1) / np.sqrt(diff.shape[0])) if diff.shape[0] > 1 else 0.0
    return float(diff.mean()), stderr


def _break_ties(fresh: Dict[int, Tuple[float, float]], evaluate_refined: Optional[Callable[[int], float]]) -> int:
    """Best fresh candidate; candidates within one stderr of the leader are re-estimated once, then lowest id wins."""
    leader = min(fresh, key=lambda v: (-round(fresh[v][0], GAIN_DECIMALS), v))
    gain, stderr = fresh[leader]
    if stderr <= 0 or evaluate_refined is None:
        return leader
    close = sorted(v for v, (g, _) in fresh.items() if g >= gain - stderr)
    if len(close) == 1:
        return leader
    refined = {v: evaluate_refined(v) for v in close}
    logger.debug(f"Re-estimating near-tied candidates {close}")
    return min(close, key=lambda v: (-round(refined[v], GAIN_DECIMALS), v))


def _greedy(n: int, steps: int, cap: int, evaluate: Evaluator, lazy: bool,
            evaluate_refined: Optional[Evaluator] = None) -> List[int]:
    """
    Greedy over integer step counts per node.
    :param steps: number of rounds.
    :param cap: maximum step count of a node.
    :param evaluate: per-replicate spreads of a step-count vector.
    :return: chosen node of every round.
    """
    units = np.zeros(n, dtype=np.int64)
    current = evaluate(units)
    chosen: List[int] = []

    def fresh_gain(v: int) -> Tuple[float, float]:
        units[v] += 1
        try:
            return _gain(current, evaluate(units))
        finally:
            units[v] -= 1

    refine = None
    if evaluate_refined is not None:
        def refine(v: int) -> float:
            base = evaluate_refined(units)
            units[v] += 1
            try:
                return _gain(base, evaluate_refined(units))[0]
            finally:
                units[v] -= 1

    heap: List[Tuple[float, int]] = []
    stamp = np.full(n, -1)
    gains: Dict[int, Tuple[float, float]] = {}
    if lazy:
        for v in range(n):
            gains[v] = fresh_gain(v)
            stamp[v] = 0
            heapq.heappush(heap, (-round(gains[v][0], GAIN_DECIMALS), v))

    for round_index in range(steps):
        candidates = [v for v in range(n) if units[v] < cap]
        if not candidates:
            break
        if lazy:
            fresh: Dict[int, Tuple[float, float]] = {}
            while heap:
                bound, v = heap[0]
                if units[v] >= cap:
                    heapq.heappop(heap)
                    continue
                if stamp[v] != round_index:
                    heapq.heappop(heap)
                    gains[v] = fresh_gain(v)
                    stamp[v] = round_index
                    heapq.heappush(heap, (-round(gains[v][0], GAIN_DECIMALS), v))
                    continue
                if fresh:
                    leader_gain, leader_err = max(fresh.values(), key=lambda gs: gs[0])
                    if -bound < round(leader_gain - leader_err, GAIN_DECIMALS):
                        break
                heapq.heappop(heap)
                fresh[v] = gains[v]
            best = _break_ties(fresh, refine)
            for v in fresh:
                if v != best:
                    heapq.heappush(heap, (-round(gains[v][0], GAIN_DECIMALS), v))
        else:
            fresh = {v: fresh_gain(v) for v in candidates}
            best = _break_ties(fresh, refine)

        logger.debug(f"Round {round_index}: node {best}, gain {fresh[best][0]:.6f} ± {fresh[best][1]:.6f}")
        units[best] += 1
        current = evaluate(units)
        chosen.append(best)
        if lazy and units[best] < cap:
            stamp[best] = -1
            heapq.heappush(heap, (-round(fresh[best][0], GAIN_DECIMALS), best))
    return chosen


def _lazy_for(oracle: SpreadOracle, lazy: Optional[bool]) -> bool:
    if lazy is None:
        return oracle.submodular
    if lazy and not oracle.submodular:
        logger.warning(f"{type(oracle).__name__} is not submodular; re-evaluating every candidate each round")
        return False
    return lazy


def _fractional_evaluators(oracle: SpreadOracle, steps_per_unit: int):
    def evaluate_with(o: SpreadOracle) -> Evaluator:
        return lambda units: o.samples(InfluenceVector(values=units / steps_per_unit))

    refined = oracle.refined()
    return evaluate_with(oracle), (evaluate_with(refined) if oracle.stochastic else None)


def greedy_fractional(p: BudgetedProblem, lazy: Optional[bool] = None) -> AllocationResult:
    """
    Discretized greedy: K/δ rounds, each adding δ to the node with the largest marginal gain.

    Lazy evaluation is used only when the oracle is submodular, since stale gains are upper bounds only then.
    """
    steps = p.step_count()
    oracle = p.spread_oracle
    lazy = _lazy_for(oracle, lazy)
    per_unit = p.delta.denominator
    evaluate, evaluate_refined = _fractional_evaluators(oracle, per_unit)
    chosen = _greedy(p.model.n, steps, per_unit, evaluate, lazy, evaluate_refined)

    values = np.bincount(np.asarray(chosen, dtype=np.int64), minlength=p.model.n) / per_unit
    x = InfluenceVector(values=values)
    moves = [SpendMove(node=v, amount=float(p.delta)) for v in chosen]
    logger.info(f"Greedy fractional spent {x.budget_used:.4f} of {p.budget} over {len(chosen)} rounds")
    return AllocationResult(algorithm=Algorithm.GREEDY_FRAC.value, x=x, spend_log=moves,
                            estimated_spread=oracle.evaluate(x))


def naive_greedy_fractional(p: BudgetedProblem) -> AllocationResult:
    """Greedy re-evaluating every candidate each round."""
    return greedy_fractional(p, lazy=False)


def greedy_integral(p: BudgetedProblem, lazy: Optional[bool] = None) -> AllocationResult:
    """Greedy seed-set selection under integral semantics; K must be an integer."""
    if abs(p.budget - round(p.budget)) > VALUE_SLACK:
        raise DomainError(f"Integral greedy needs an integer budget, got {p.budget}")
    oracle = p.spread_oracle
    lazy = _lazy_for(oracle, lazy)

    def evaluate_with(o: SpreadOracle) -> Evaluator:
        zeros = InfluenceVector.zeros(p.model.n)
        return lambda units: o.samples(zeros, initial=[int(v) for v in np.flatnonzero(units)])

    refined = evaluate_with(oracle.refined()) if oracle.stochastic else None
    chosen = _greedy(p.model.n, int(round(p.budget)), 1, evaluate_with(oracle), lazy, refined)
    x = InfluenceVector.indicator(p.model.n, chosen)
    return AllocationResult(algorithm=Algorithm.GREEDY_INT.value, x=x, integral=True,
                            spend_log=[SpendMove(node=v, amount=1.0) for v in chosen],
                            estimated_spread=oracle.evaluate(InfluenceVector.zeros(p.model.n), initial=chosen))


def _grid_vectors(n: int, per_unit: int, budget_units: int, maximal_only: bool):
    target = min(budget_units, n * per_unit)
    for units in itertools.product(range(per_unit + 1), repeat=n):
        total = sum(units)
        if total > budget_units or (maximal_only and total != target):
            continue
        yield np.asarray(units, dtype=float)


def brute_force_grid_optimum(model: CascadeModel, budget: float, delta: Union[str, float, Fraction],
                             oracle: Optional[SpreadOracle] = None,
                             maximal_only: bool = True) -> Tuple[float, InfluenceVector]:
    """
    Best grid allocation with ‖x‖₁ <= K by exhaustive enumeration.
    :param maximal_only: only score allocations spending min(K, n) in full, which suffices for monotone σ.
    """
    delta = parse_delta(delta)
    per_unit = delta.denominator
    budget_units = int(np.floor(budget * per_unit + 1e-9))
    oracle = oracle or ExactOracle(model)
    best_value, best_x = -np.inf, InfluenceVector.zeros(model.n)
    for units in _grid_vectors(model.n, per_unit, budget_units, maximal_only):
        x = InfluenceVector(values=units / per_unit)
        value = float(oracle.samples(x).mean())
        if value > best_value + 1e-12:
            best_value, best_x = value, x
    return best_value, best_x


class SaturationSets(BaseModel):
    """Nodes influenced by x and nodes (over-)saturated by x"""
    influenced: List[int] = Field(default_factory=list)
    saturated: List[int] = Field(default_factory=list)


def _live_in_weight(g: DirectedGraph, influenced: Sequence[int]) -> np.ndarray:
    """In-weight counting only arcs whose tail is influenced or reachable from an influenced node."""
    reached = reachable_from(g, influenced)
    live = np.zeros(g.node_count, dtype=bool)
    live[list(influenced)] = True
    live[np.fromiter(reached, dtype=np.int64, count=len(reached))] = True
    return np.bincount(g.heads, weights=g.weights * live[g.tails], minlength=g.node_count)


def saturation_sets(g: DirectedGraph, x: InfluenceVector, live_only: bool = False) -> SaturationSets:
    """
    I(x) and S(x).
    :param live_only: count in-weight only from tails that can activate under x. Other tails never activate, so
        the cascade runs as on the subgraph reachable from I(x).
    """
    influenced = [int(v) for v in np.flatnonzero(x.values > 0)]
    in_weight = _live_in_weight(g, influenced) if live_only else g.in_weight
    saturated = np.flatnonzero(x.values + in_weight > 1 + VALUE_SLACK)
    return SaturationSets(influenced=influenced, saturated=[int(v) for v in saturated])


def satisfies_linearity_condition(g: DirectedGraph, x: InfluenceVector, live_only: bool = False) -> bool:
    """True when no path of at least one arc leads from an influenced node to a saturated one."""
    sets = saturation_sets(g, x, live_only)
    return not (reachable_from(g, sets.influenced) & set(sets.saturated))


def _require_dag(g: DirectedGraph) -> List[int]:
    result = topological_order(g)
    if not result.is_dag:
        raise DomainError(f"Graph is not a DAG; cycle through {result.cycle}")
    return result.order


def dag_single_node_spread(g: DirectedGraph, v: int) -> float:
    """σ(1_v) on a DAG: p(v) = 1 and p(u) = Σ_z w_zu p(z) in topological order."""
    order = _require_dag(g)
    if not 0 <= v < g.node_count:
        raise DomainError(f"Node {v} is not in the graph")
    p = np.zeros(g.node_count)
    p[v] = 1.0
    for u in order:
        if u == v:
            continue
        tails, weights = g.in_neighbors(u)
        p[u] = float(weights @ p[tails])
    return float(p @ g.node_weights)


def dag_all_single_node_spreads(g: DirectedGraph) -> np.ndarray:
    """σ(1_v) for every v, by σ(1_v) = ω_v + Σ_{u∈δ+(v)} w_vu σ(1_u) in reverse topological order."""
    order = _require_dag(g)
    sigma = np.zeros(g.node_count)
    for v in reversed(order):
        heads, weights = g.out_neighbors(v)
        sigma[v] = g.node_weights[v] + float(weights @ sigma[heads])
    return sigma


def dag_linear_optimize(g: DirectedGraph, budget: float) -> AllocationResult:
    """
    Fill nodes in decreasing σ(1_v) while keeping the allocation linear.

    Linearity is checked on the live subgraph: in-weight counts only tails that can activate. A node whose
    influence would put a saturated node below an influenced one is skipped; otherwise it is filled up to
    1 - (live in-weight of v), so that it never becomes saturated itself. On a layered graph with unit weights
    this keeps the budget on the first layer.
    """
    if budget > g.node_count + VALUE_SLACK:
        raise DomainError(f"Budget {budget} exceeds the node count {g.node_count}")
    sigma = dag_all_single_node_spreads(g)
    order = sorted(range(g.node_count), key=lambda v: (-sigma[v], v))
    x = np.zeros(g.node_count)
    moves: List[SpendMove] = []
    remaining = float(budget)

    for v in order:
        if remaining <= VALUE_SLACK:
            break
        influenced = [int(u) for u in np.flatnonzero(x > 0)] + [v]
        amount = min(remaining, 1.0 - _live_in_weight(g, influenced)[v])
        if amount <= VALUE_SLACK:
            continue
        trial = x.copy()
        trial[v] = amount
        if not satisfies_linearity_condition(g, InfluenceVector(values=trial), live_only=True):
            continue
        x = trial
        remaining -= amount
        moves.append(SpendMove(node=v, amount=amount))

    allocation = InfluenceVector(values=x)
    predicted = float(x @ sigma)
    logger.info(f"DAG allocation over {len(moves)} nodes, predicted spread {predicted:.4f}")
    return AllocationResult(algorithm=Algorithm.DAG_LINEAR.value, x=allocation, spend_log=moves,
                            predicted_spread=predicted)

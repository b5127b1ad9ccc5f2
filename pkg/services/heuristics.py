import heapq
import logging
from typing import Callable, Dict, List

import numpy as np

from services.graph_core import DirectedGraph
from services.types import VALUE_SLACK, Algorithm, AllocationResult, DomainError, InfluenceVector, SpendMove

logger = logging.getLogger(__name__)


def _integral_budget(g: DirectedGraph, budget: float) -> int:
    if abs(budget - round(budget)) > VALUE_SLACK:
        raise DomainError(f"Integral heuristics need an integer budget, got {budget}")
    if budget > g.node_count:
        raise DomainError(f"Budget {budget} exceeds the node count {g.node_count}")
    return int(round(budget))


def _seed_result(algorithm: Algorithm, g: DirectedGraph, seeds: List[int]) -> AllocationResult:
    return AllocationResult(algorithm=algorithm.value, x=InfluenceVector.indicator(g.node_count, seeds),
                            spend_log=[SpendMove(node=v, amount=1.0) for v in seeds], integral=True)


def _fractional_result(algorithm: Algorithm, values: np.ndarray, moves: List[SpendMove]) -> AllocationResult:
    return AllocationResult(algorithm=algorithm.value, x=InfluenceVector(values=values), spend_log=moves)


def degree_int(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    """Top-B nodes by out-degree, ties by id."""
    b = _integral_budget(g, budget)
    order = sorted(range(g.node_count), key=lambda v: (-g.out_degree[v], v))
    return _seed_result(Algorithm.DEGREE_INT, g, order[:b])


def discount_int(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    """
    B rounds of picking the node with the largest remaining degree.

    After u is chosen, every unselected in-neighbor of u loses one from its degree, since its arc into u no
    longer reaches an unselected node. On undirected inputs this decrements all neighbors of u.
    """
    b = _integral_budget(g, budget)
    degree = g.out_degree.astype(np.int64).copy()
    selected = np.zeros(g.node_count, dtype=bool)
    heap = [(-int(degree[v]), v) for v in range(g.node_count)]
    heapq.heapify(heap)
    seeds: List[int] = []
    while len(seeds) < b and heap:
        key, u = heapq.heappop(heap)
        if selected[u] or -key != degree[u]:
            continue
        selected[u] = True
        seeds.append(u)
        for z in g.in_neighbors(u)[0]:
            if not selected[z]:
                degree[z] -= 1
                heapq.heappush(heap, (-int(degree[z]), int(z)))
    return _seed_result(Algorithm.DISCOUNT_INT, g, seeds)


def random_int(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    b = _integral_budget(g, budget)
    rng = np.random.default_rng(seed)
    seeds = [int(v) for v in rng.choice(g.node_count, size=b, replace=False)]
    return _seed_result(Algorithm.RANDOM_INT, g, seeds)


def _fractional_budget(g: DirectedGraph, budget: float) -> float:
    if budget < 0 or budget > g.node_count + VALUE_SLACK:
        raise DomainError(f"Fractional budget must lie in [0, {g.node_count}], got {budget}")
    return min(float(budget), float(g.node_count))


def uniform_frac(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    b = _fractional_budget(g, budget)
    if g.node_count == 0 or b == 0:
        return _fractional_result(Algorithm.UNIFORM_FRAC, np.zeros(g.node_count), [])
    values = np.full(g.node_count, b / g.node_count)
    moves = [SpendMove(node=v, amount=float(values[v])) for v in range(g.node_count)]
    return _fractional_result(Algorithm.UNIFORM_FRAC, values, moves)


def degree_frac(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    """
    x_v = min(1, B·d_out(v)/m), m the arc count, then the budget cut off by the cap is redistributed
    proportionally to degree among uncapped nodes until none is left. Graphs without arcs get UniformFrac.
    """
    b = _fractional_budget(g, budget)
    if g.arc_count == 0:
        result = uniform_frac(g, b)
        return _fractional_result(Algorithm.DEGREE_FRAC, result.x.values, result.spend_log)
    degree = g.out_degree.astype(float)
    values = np.minimum(1.0, b * degree / g.arc_count)
    residual = b - values.sum()
    while residual > VALUE_SLACK:
        open_nodes = values < 1.0
        weight = np.where(open_nodes, degree, 0.0)
        if weight.sum() <= 0:
            # only zero-degree nodes have room left
            weight = open_nodes.astype(float)
        share = residual * weight / weight.sum()
        values = np.minimum(1.0, values + share)
        residual = b - values.sum()
    moves = [SpendMove(node=int(v), amount=float(values[v])) for v in np.flatnonzero(values > 0)]
    return _fractional_result(Algorithm.DEGREE_FRAC, values, moves)


def discount_frac(g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    """
    Repeatedly take the unselected u with the largest out-weight into unselected nodes, spend
    min(b, max(0, 1 - in-weight from selected nodes)) on it and select it, until the budget runs out or
    every node is selected.
    """
    b = _fractional_budget(g, budget)
    out_to_open = g.out_weight.astype(float).copy()
    in_from_selected = np.zeros(g.node_count)
    selected = np.zeros(g.node_count, dtype=bool)
    values = np.zeros(g.node_count)
    moves: List[SpendMove] = []
    heap = [(-out_to_open[v], v) for v in range(g.node_count)]
    heapq.heapify(heap)

    while b > VALUE_SLACK and heap:
        key, u = heapq.heappop(heap)
        if selected[u] or -key != out_to_open[u]:
            continue
        spend = min(b, max(0.0, 1.0 - in_from_selected[u]))
        selected[u] = True
        if spend > 0:
            values[u] = spend
            b -= spend
            moves.append(SpendMove(node=u, amount=spend))
        heads, weights = g.out_neighbors(u)
        in_from_selected[heads] += weights
        tails, weights = g.in_neighbors(u)
        for z, w in zip(tails, weights):
            if not selected[z]:
                out_to_open[z] -= w
                heapq.heappush(heap, (-out_to_open[z], int(z)))
    return _fractional_result(Algorithm.DISCOUNT_FRAC, values, moves)


HEURISTICS: Dict[Algorithm, Callable[[DirectedGraph, float, int], AllocationResult]] = {
    Algorithm.DEGREE_INT: degree_int,
    Algorithm.DISCOUNT_INT: discount_int,
    Algorithm.RANDOM_INT: random_int,
    Algorithm.DEGREE_FRAC: degree_frac,
    Algorithm.DISCOUNT_FRAC: discount_frac,
    Algorithm.UNIFORM_FRAC: uniform_frac,
}


def heuristic_allocate(name, g: DirectedGraph, budget: float, seed: int = 0) -> AllocationResult:
    algorithm = name if isinstance(name, Algorithm) else Algorithm.parse(name)
    if algorithm not in HEURISTICS:
        raise DomainError(f"'{algorithm.value}' is not a heuristic; choose from {[a.value for a in HEURISTICS]}")
    result = HEURISTICS[algorithm](g, budget, seed)
    logger.debug(f"{algorithm.value} at budget {budget}: {len(result.spend_log)} moves")
    return result

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from services.cascade_engine import CascadeModel, deterministic_spread
from services.graph_core import DirectedGraph
from services.types import (ContractViolation, DomainError, InfluenceVector, ModelKind, SizeError, ThresholdVector,
                            TriggeringKind, parse_delta)

logger = logging.getLogger(__name__)

# Largest sink count amplify_instance will materialize.
MAX_AMPLIFICATION_SIZE = 10 ** 6


class ReducedInstance(BaseModel):
    """
    Integral instance equivalent to the fractional problem on a grid of step δ.

    Every original node v gets 1/δ activator nodes, each with a single arc of weight δ into v and zero
    objective weight. Activator ids follow the original nodes: A_v = n + v/δ, ..., n + (v+1)/δ - 1.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base_graph: DirectedGraph
    graph: DirectedGraph = Field(..., description="Original graph plus activator nodes and arcs")
    activator_map: List[List[int]] = Field(..., description="Activator ids of every original node, in order")
    delta: Fraction
    model: CascadeModel

    @property
    def original_count(self) -> int:
        return self.base_graph.node_count

    @property
    def steps(self) -> int:
        return self.delta.denominator

    def map_allocation(self, x: InfluenceVector) -> List[int]:
        """Seed set taking the first x_v/δ activators of every node; x must lie on the grid."""
        if x.n != self.original_count:
            raise ContractViolation(f"Allocation has {x.n} entries, instance has {self.original_count} nodes")
        units = x.values * self.steps
        rounded = np.rint(units)
        if np.any(np.abs(units - rounded) > 1e-9):
            raise DomainError(f"Allocation is not on the grid of step {self.delta}")
        seeds = []
        for v, count in enumerate(rounded.astype(int)):
            seeds.extend(self.activator_map[v][:count])
        return seeds

    def restrict(self, nodes: Iterable[int]) -> Set[int]:
        """Original nodes among `nodes`."""
        return {v for v in nodes if v < self.original_count}


def reduce_fractional_to_integral(g: DirectedGraph, delta: Union[str, float, Fraction] = Fraction(1, 2)) -> ReducedInstance:
    delta = parse_delta(delta)
    overweight = g.check_linear_contract()
    if overweight:
        raise ContractViolation(f"Reduction needs in-weights summing to at most 1; violated on {overweight[:10]}")
    n, steps = g.node_count, delta.denominator
    step = float(delta)

    activator_map = [list(range(n + v * steps, n + (v + 1) * steps)) for v in range(n)]
    tails = list(g.tails) + [a for activators in activator_map for a in activators]
    heads = list(g.heads) + [v for v in range(n) for _ in range(steps)]
    weights = list(g.weights) + [step] * (n * steps)

    next_id = int(g.original_ids.max()) + 1 if n else 0
    original_ids = np.concatenate((g.original_ids, np.arange(next_id, next_id + n * steps)))
    node_weights = np.concatenate((g.node_weights, np.zeros(n * steps)))
    graph = DirectedGraph(n * (1 + steps), tails, heads, weights, directed=True, weighted=True,
                          original_ids=original_ids, node_weights=node_weights)
    logger.debug(f"Reduced {g} at step {delta} to {graph}")
    return ReducedInstance(base_graph=g, graph=graph, activator_map=activator_map, delta=delta,
                           model=CascadeModel.capped_linear(graph))


class GapInstance(NamedTuple):
    graph: DirectedGraph
    thresholds: ThresholdVector
    witness: InfluenceVector


def make_path_gap(n: int) -> GapInstance:
    """
    Directed path of n nodes with weights 1/(n+1) and fixed thresholds 2/(n+1).

    The witness spends 2/(n+1) on the source and 1/(n+1) on every other node (total 1) and activates
    the whole path; any single integral seed activates only itself.
    """
    if n < 2:
        raise DomainError("Path gap instance needs n >= 2")
    unit = 1.0 / (n + 1)
    graph = DirectedGraph(n, range(n - 1), range(1, n), [unit] * (n - 1))
    witness = np.full(n, unit)
    witness[0] = 2.0 / (n + 1)
    return GapInstance(graph, ThresholdVector.fixed(np.full(n, 2.0 / (n + 1))), InfluenceVector(values=witness))


def make_cycle_gap(n: int, k: float) -> DirectedGraph:
    """One-directional cycle of n nodes with weight 1 - K/n on every arc; thresholds stay uniform."""
    if n < 2:
        raise DomainError("Cycle gap instance needs n >= 2")
    if not 0 < k <= n:
        raise DomainError(f"Cycle gap budget must satisfy 0 < K <= n, got K={k}")
    return DirectedGraph(n, range(n), [(v + 1) % n for v in range(n)], [1.0 - k / n] * n)


def cycle_gap_fractional_spread(n: int, k: float) -> float:
    """σ of the uniform allocation x_v = K/n on the cycle gap instance."""
    return n * (1.0 - (1.0 - k / n) ** n)


def cycle_gap_integral_bound(n: int, k: float) -> float:
    """Spread of K integral seeds splitting the cycle into equal intervals."""
    return n * (1.0 - (1.0 - k / n) ** (n / k))


class HardnessInstance(BaseModel):
    """Fixed-threshold layered instance with a known relation between seed sets and a source problem."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: str = Field(..., description="Source problem of the construction")
    graph: DirectedGraph
    model: CascadeModel
    thresholds: ThresholdVector = Field(..., description="Fixed thresholds of every node")
    budget: float = Field(..., ge=0, description="Seed budget k")
    target: Optional[float] = Field(None, description="Spread a yes-instance reaches")
    source_layer: List[int] = Field(..., description="Nodes seeds are drawn from")
    gate_nodes: List[int] = Field(default_factory=list, description="Internal OR-gate nodes")
    certificate_decoder: Callable[[Iterable[int]], List[int]] = Field(
        ..., description="Maps a seed set back to a solution of the source problem")

    def spread(self, seeds: Iterable[int]) -> float:
        """Deterministic integral spread of `seeds`."""
        return deterministic_spread(self.model, InfluenceVector.zeros(self.graph.node_count), self.thresholds,
                                    initial=seeds)

    def decode(self, seeds: Iterable[int]) -> List[int]:
        return self.certificate_decoder(seeds)


def _layer_decoder(layer: Sequence[int], labels: Sequence[int]) -> Callable[[Iterable[int]], List[int]]:
    label_of = dict(zip(layer, labels))

    def decode(seeds: Iterable[int]) -> List[int]:
        return sorted(label_of[s] for s in set(seeds) if s in label_of)

    return decode


def reduce_independent_set(g: nx.Graph, k: int) -> HardnessInstance:
    """
    Two-layer DAG on which a k-seed set from the first layer reaches spread kn iff it is an independent set.

    Every pair {u, v} gets one shared child when it is an edge and one private child per endpoint otherwise;
    weights and thresholds are all 1/2, so σ(S) = n|S| - |edges inside S|.
    """
    n = g.number_of_nodes()
    if not 0 < k <= n:
        raise DomainError(f"Independent set size must satisfy 0 < k <= n, got k={k}")
    relabeled = nx.convert_node_labels_to_integers(g, ordering="sorted", label_attribute="label")
    labels = [relabeled.nodes[v]["label"] for v in range(n)]

    tails, heads = [], []
    child = n
    for u in range(n):
        for v in range(u + 1, n):
            if relabeled.has_edge(u, v):
                tails.extend((u, v))
                heads.extend((child, child))
                child += 1
            else:
                tails.extend((u, v))
                heads.extend((child, child + 1))
                child += 2
    graph = DirectedGraph(child, tails, heads, [0.5] * len(tails))
    return HardnessInstance(
        kind="independent_set",
        graph=graph,
        model=CascadeModel.linear(graph),
        thresholds=ThresholdVector.fixed(np.full(child, 0.5)),
        budget=k,
        target=k * n,
        source_layer=list(range(n)),
        certificate_decoder=_layer_decoder(range(n), labels),
    )


def amplification_size(n: int, delta_exponent: float, limit: int = MAX_AMPLIFICATION_SIZE) -> int:
    """⌈(2n²)^(1/δ)⌉, raising SizeError when it exceeds `limit`."""
    if delta_exponent <= 0:
        raise DomainError("Amplification exponent must be positive")
    exponent = math.log10(2 * n * n) / delta_exponent
    if exponent > math.log10(limit):
        raise SizeError(f"Amplification would add about 10^{exponent:.1f} nodes (limit {limit}); "
                        f"pass sink_count explicitly or use a larger exponent")
    return math.ceil((2 * n * n) ** (1.0 / delta_exponent))


def amplify_instance(inst: HardnessInstance, target: float, delta_exponent: float,
                     sink_count: Optional[int] = None) -> HardnessInstance:
    """
    Append N sinks, each fed by every node of `inst` with weight 1/n and fixed threshold T/n.

    A seed set reaching spread T in `inst` activates all sinks; below T no sink activates.
    :param sink_count: N; derived from `delta_exponent` by amplification_size when omitted.
    """
    if inst.model.kind != ModelKind.LINEAR:
        raise DomainError("Amplification applies to linear-model instances only")
    n = inst.graph.node_count
    if not 0 < inst.budget < target <= n:
        raise DomainError(f"Amplification needs 0 < k < T <= n, got k={inst.budget}, T={target}, n={n}")
    sinks = sink_count if sink_count is not None else amplification_size(n, delta_exponent)
    if sinks < 1:
        raise DomainError("Amplification needs at least one sink")

    g = inst.graph
    tails = list(g.tails) + [u for _ in range(sinks) for u in range(n)]
    heads = list(g.heads) + [n + s for s in range(sinks) for _ in range(n)]
    weights = list(g.weights) + [1.0 / n] * (n * sinks)
    graph = DirectedGraph(n + sinks, tails, heads, weights)
    thresholds = np.concatenate((inst.thresholds.values, np.full(sinks, target / n)))

    return HardnessInstance(
        kind=f"amplified_{inst.kind}",
        graph=graph,
        model=CascadeModel.linear(graph),
        thresholds=ThresholdVector.fixed(thresholds),
        budget=inst.budget,
        target=target + sinks,
        source_layer=inst.source_layer,
        certificate_decoder=inst.certificate_decoder,
    )


def _or_tree(parents: List[int], next_id: int) -> Tuple[List[int], List[Tuple[int, int]], int]:
    """Fan-in-2 OR gates over `parents`; returns (at most two roots, arcs, next free id)."""
    arcs = []
    level = list(parents)
    while len(level) > 2:
        merged = []
        for i in range(0, len(level) - 1, 2):
            arcs.extend(((level[i], next_id), (level[i + 1], next_id)))
            merged.append(next_id)
            next_id += 1
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level, arcs, next_id


def reduce_max_coverage(sets: Sequence[Iterable[int]], k: int, copies: int, or_tree: bool = False,
                        target_cover: Optional[int] = None) -> HardnessInstance:
    """
    Two-layer triggering instance: one node per set, `copies` nodes per element.

    Each element copy is triggered by the nodes of the sets containing the element, so a first-layer seed
    set W reaches σ(W) = |W| + N|∪_{j∈W} S_j|. With or_tree, the trigger of every element is split into a
    shared tree of fan-in-2 OR gates, bounding every triggering set to two nodes; active gates add to the
    spread.
    """
    sets = [sorted(set(int(e) for e in s)) for s in sets]
    m = len(sets)
    if not 0 < k <= m:
        raise DomainError(f"Coverage budget must satisfy 0 < k <= m, got k={k}, m={m}")
    if copies < 1:
        raise DomainError("Each element needs at least one copy")
    elements = sorted(set(e for s in sets for e in s))
    containing: Dict[int, List[int]] = {e: [j for j, s in enumerate(sets) if e in s] for e in elements}

    arcs: List[Tuple[int, int]] = []
    gate_nodes: List[int] = []
    next_id = m
    element_roots: Dict[int, List[int]] = {}
    if or_tree:
        for e in elements:
            roots, gate_arcs, after = _or_tree(containing[e], next_id)
            gate_nodes.extend(range(next_id, after))
            arcs.extend(gate_arcs)
            element_roots[e] = roots
            next_id = after
    else:
        element_roots = containing
    for e in elements:
        for _ in range(copies):
            arcs.extend((root, next_id) for root in element_roots[e])
            next_id += 1

    graph = DirectedGraph(next_id, [u for u, _ in arcs], [v for _, v in arcs], [1.0] * len(arcs))
    return HardnessInstance(
        kind="max_coverage",
        graph=graph,
        model=CascadeModel.triggering_model(graph, TriggeringKind.DETERMINISTIC),
        thresholds=ThresholdVector.fixed(np.ones(next_id)),
        budget=k,
        target=k + copies * target_cover if target_cover is not None else None,
        source_layer=list(range(m)),
        gate_nodes=gate_nodes,
        certificate_decoder=_layer_decoder(range(m), range(m)),
    )

import logging
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from config import (ACTIVATION_TOLERANCE, DEFAULT_WORKERS, EXACT_MAX_BREAKPOINTS, EXACT_MAX_CELLS,
                    EXACT_MAX_NODES, REPLICATE_BLOCK_SIZE)
from services.graph_core import DirectedGraph
from services.types import (CascadeOutcome, ContractViolation, DomainError, InfluenceVector, ModelKind, SizeError,
                            SpreadEstimate, ThresholdVector, TriggeringKind)
from utils.rng import block_ranges, chunk_rows, threshold_stream, trigger_stream

logger = logging.getLogger(__name__)

BREAKPOINT_DECIMALS = 12


class CascadeModel:
    """
    Influence-function family the cascade runs under.

    LINEAR and CAPPED_LINEAR both sum in-weights of active in-neighbors and clamp total applied
    influence at 1; CAPPED_LINEAR is the form produced by the activator reduction, whose graph carries
    the activator arcs explicitly. TRIGGERING gives f_v(S) = 1 when S meets v's triggering set.
    """

    def __init__(self, kind: ModelKind, graph: DirectedGraph, triggering: Optional[TriggeringKind] = None,
                 live_arcs: Optional[np.ndarray] = None):
        self.kind = ModelKind(kind)
        self.graph = graph
        self.triggering = TriggeringKind(triggering) if triggering is not None else None
        self._live_arcs = live_arcs

    @classmethod
    def linear(cls, graph: DirectedGraph, allow_overweight: bool = False) -> "CascadeModel":
        """Linear model; in-weights must sum to at most 1 unless allow_overweight (clamp mode)."""
        overweight = graph.check_linear_contract()
        if overweight and not allow_overweight:
            raise ContractViolation(f"In-weight exceeds 1 on nodes {overweight[:10]}; pass allow_overweight to clamp")
        return cls(ModelKind.LINEAR, graph)

    @classmethod
    def capped_linear(cls, graph: DirectedGraph) -> "CascadeModel":
        """Linear model whose in-weights may exceed 1 through activator arcs; applied influence is clamped at 1."""
        return cls(ModelKind.CAPPED_LINEAR, graph)

    @classmethod
    def triggering_model(cls, graph: DirectedGraph, kind: TriggeringKind = TriggeringKind.DETERMINISTIC,
                         sets: Optional[Sequence[Iterable[int]]] = None) -> "CascadeModel":
        """
        Triggering model.
        :param kind: DETERMINISTIC uses `sets` (all in-neighbors when omitted); LINEAR_THRESHOLD picks at most
            one in-neighbor u of v with probability w_uv; INDEPENDENT_CASCADE keeps each in-arc with probability w_uv.
        :param sets: per-node triggering sets for the deterministic sampler; each must be a subset of δ−(v).
        """
        kind = TriggeringKind(kind)
        if kind != TriggeringKind.DETERMINISTIC:
            if sets is not None:
                raise ContractViolation("Explicit triggering sets only apply to the deterministic sampler")
            if kind == TriggeringKind.LINEAR_THRESHOLD and graph.check_linear_contract():
                raise ContractViolation("Linear-threshold triggering needs in-weights summing to at most 1")
            return cls(ModelKind.TRIGGERING, graph, triggering=kind)
        live = np.ones(graph.arc_count, dtype=bool)
        if sets is not None:
            if len(sets) != graph.node_count:
                raise ContractViolation("One triggering set per node is required")
            live[:] = False
            for v, members in enumerate(sets):
                tails = graph.in_neighbors(v)[0]
                arc_ids = graph.in_arc_ids(v)
                members = set(int(u) for u in members)
                unknown = members - set(int(u) for u in tails)
                if unknown:
                    raise ContractViolation(f"Triggering set of node {v} contains non-in-neighbors {sorted(unknown)}")
                live[arc_ids[np.isin(tails, list(members))]] = True
        return cls(ModelKind.TRIGGERING, graph, triggering=kind, live_arcs=live)

    @property
    def n(self) -> int:
        return self.graph.node_count

    @property
    def node_weights(self) -> np.ndarray:
        return self.graph.node_weights

    @property
    def is_random_triggering(self) -> bool:
        return self.kind == ModelKind.TRIGGERING and self.triggering != TriggeringKind.DETERMINISTIC

    def triggering_sets(self) -> List[frozenset]:
        """Triggering set of every node under the deterministic sampler."""
        if self.is_random_triggering or self.kind != ModelKind.TRIGGERING:
            raise DomainError("Only deterministic triggering models have fixed triggering sets")
        g = self.graph
        return [frozenset(int(u) for u in g.tails[g.in_arc_ids(v)[self._live_arcs[g.in_arc_ids(v)]]])
                for v in range(g.node_count)]

    @cached_property
    def head_incidence(self) -> sp.csr_matrix:
        """H with H[v, a] = 1 when arc a enters v."""
        g = self.graph
        return sp.csr_matrix((np.ones(g.arc_count), (g.heads, np.arange(g.arc_count))), shape=(g.node_count, g.arc_count))

    def sample_live_arcs(self, generator: np.random.Generator, rows: int) -> np.ndarray:
        """(rows, arc_count) mask of the arcs kept by the triggering sampler."""
        g = self.graph
        if self.triggering == TriggeringKind.DETERMINISTIC:
            return np.broadcast_to(self._live_arcs, (rows, g.arc_count))
        draws = generator.random((rows, g.arc_count if self.triggering == TriggeringKind.INDEPENDENT_CASCADE
                                  else g.node_count))
        if self.triggering == TriggeringKind.INDEPENDENT_CASCADE:
            return draws < g.weights
        # live-edge form of the linear model: arc a of head v is picked when the draw of v lands in its slice
        order = np.lexsort((g.tails, g.heads))
        upper = np.empty(g.arc_count)
        upper[order] = np.cumsum(g.weights[order])
        group_start = np.concatenate(([0.0], np.cumsum(np.bincount(g.heads, weights=g.weights,
                                                                     minlength=g.node_count))))[g.heads]
        upper -= group_start
        lower = upper - g.weights
        at_head = draws[:, g.heads]
        return (at_head >= lower) & (at_head < upper)

    def applied_influence(self, active: np.ndarray, live: Optional[np.ndarray]) -> np.ndarray:
        """f_v(S) for every row of the (rows, n) active mask."""
        if self.kind == ModelKind.TRIGGERING:
            hit = live & active[:, self.graph.tails]
            return (np.asarray((self.head_incidence @ hit.T.astype(float)).T) > 0).astype(float)
        return np.asarray((self.graph.in_matrix @ active.T.astype(float)).T)

    def __repr__(self) -> str:
        extra = f", {self.triggering.value}" if self.triggering else ""
        return f"CascadeModel({self.kind.value}{extra}, {self.graph})"


def crosses_threshold(total: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Activation test min(f + x, 1) >= τ, tolerant to rounding when any influence is applied."""
    return (total >= thresholds) | ((total > 0) & (total + ACTIVATION_TOLERANCE >= thresholds))


def propagate(model: CascadeModel, x: np.ndarray, thresholds: np.ndarray, live: Optional[np.ndarray] = None,
              initial: Optional[np.ndarray] = None, record_stages: bool = False):
    """
    Run the staged process for a batch of threshold rows.
    :param thresholds: (rows, n) thresholds, one cascade per row.
    :param live: (rows, arc_count) live-arc mask for triggering models.
    :param initial: (rows, n) or (n,) mask active at stage 0.
    :return: final (rows, n) active mask, plus the cumulative stage masks when record_stages.
    """
    rows, n = thresholds.shape
    active = np.zeros((rows, n), dtype=bool)
    if initial is not None:
        active |= np.broadcast_to(initial, (rows, n))
    stages = []
    for _ in range(n):
        total = np.minimum(model.applied_influence(active, live) + x, 1.0)
        newly = ~active & crosses_threshold(total, thresholds)
        if not newly.any():
            break
        active |= newly
        if record_stages:
            stages.append(active.copy())
    return (active, stages) if record_stages else active


def _check_sizes(model: CascadeModel, x: InfluenceVector, thresholds: Optional[ThresholdVector] = None) -> None:
    if x.n != model.n:
        raise ContractViolation(f"Influence vector has {x.n} entries, model has {model.n} nodes")
    if thresholds is not None and thresholds.n != model.n:
        raise ContractViolation(f"Threshold vector has {thresholds.n} entries, model has {model.n} nodes")


def _as_mask(n: int, nodes: Optional[Iterable[int]]) -> Optional[np.ndarray]:
    if nodes is None:
        return None
    mask = np.zeros(n, dtype=bool)
    mask[list(nodes)] = True
    return mask


def run_cascade(model: CascadeModel, x: InfluenceVector, t: ThresholdVector, initial: Optional[Iterable[int]] = None,
                live_arcs: Optional[np.ndarray] = None, trigger_seed: Optional[int] = None) -> CascadeOutcome:
    """
    Run one cascade under fixed thresholds.

    Stage i+1 activates every inactive v with min(f_v(S_i) + x_v, 1) >= τ_v, stopping at the first stage that
    adds nothing, or after n stages. Random triggering models need either explicit `live_arcs` or a
    `trigger_seed` to sample them.
    """
    _check_sizes(model, x, t)
    live = None
    if model.kind == ModelKind.TRIGGERING:
        if live_arcs is not None:
            live = np.asarray(live_arcs, dtype=bool).reshape(1, -1)
        elif model.is_random_triggering:
            if trigger_seed is None:
                raise ContractViolation("Random triggering models need live_arcs or trigger_seed")
            live = model.sample_live_arcs(np.random.default_rng(trigger_seed), 1)
        else:
            live = model.sample_live_arcs(None, 1)
    initial_mask = _as_mask(model.n, initial)
    final, stages = propagate(model, x.values, t.values.reshape(1, -1), live=live, initial=initial_mask,
                              record_stages=True)
    return CascadeOutcome(
        initial=frozenset(int(v) for v in np.flatnonzero(initial_mask)) if initial_mask is not None else frozenset(),
        final_active=frozenset(int(v) for v in np.flatnonzero(final[0])),
        stages=[frozenset(int(v) for v in np.flatnonzero(stage[0])) for stage in stages],
        thresholds=t,
    )


def deterministic_spread(model: CascadeModel, x: InfluenceVector, t: ThresholdVector,
                         initial: Optional[Iterable[int]] = None) -> float:
    """Objective weight of the final set under fixed thresholds (and deterministic triggering sets)."""
    if model.is_random_triggering:
        raise DomainError("Fixed-threshold spread needs deterministic triggering sets")
    outcome = run_cascade(model, x, t, initial=initial)
    return float(sum(model.node_weights[v] for v in outcome.final_active))


def _simulate_block(model: CascadeModel, x: np.ndarray, initial: Optional[np.ndarray], master_seed: int,
                    block_index: int, rows: int) -> np.ndarray:
    threshold_gen = threshold_stream(master_seed, block_index)
    live_gen = trigger_stream(master_seed, block_index) if model.is_random_triggering else None
    width = model.n + (model.graph.arc_count if model.kind == ModelKind.TRIGGERING else 0)
    spreads = []
    for chunk in chunk_rows(rows, width):
        thresholds = 1.0 - threshold_gen.random((chunk, model.n))
        live = model.sample_live_arcs(live_gen, chunk) if model.kind == ModelKind.TRIGGERING else None
        final = propagate(model, x, thresholds, live=live, initial=initial)
        spreads.append(final.astype(float) @ model.node_weights)
    return np.concatenate(spreads) if spreads else np.zeros(0)


def simulate_replicates(model: CascadeModel, x: InfluenceVector, replicates: int, master_seed: int,
                        initial: Optional[Iterable[int]] = None, workers: int = DEFAULT_WORKERS) -> np.ndarray:
    """
    Per-replicate spreads in replicate-index order.

    Replicate r draws its thresholds (and sampled triggering sets) from the stream of block
    r // REPLICATE_BLOCK_SIZE derived from master_seed, so the result depends only on (master_seed, r):
    calls sharing a master seed see common random numbers, and worker count never changes the output.
    """
    _check_sizes(model, x)
    if replicates < 1:
        raise ContractViolation("replicates must be at least 1")
    initial_mask = _as_mask(model.n, initial)
    blocks = block_ranges(replicates, REPLICATE_BLOCK_SIZE)

    def run(block):
        block_index, _, rows = block
        return _simulate_block(model, x.values, initial_mask, master_seed, block_index, rows)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, blocks))
    else:
        results = [run(block) for block in blocks]
    return np.concatenate(results)


def summarize(spreads: np.ndarray, master_seed: Optional[int]) -> SpreadEstimate:
    replicates = int(spreads.shape[0])
    stderr = float(spreads.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0
    return SpreadEstimate(mean=float(spreads.mean()), stderr=stderr, replicates=replicates, master_seed=master_seed)


def estimate_spread(model: CascadeModel, x: InfluenceVector, replicates: int, master_seed: int,
                    workers: int = DEFAULT_WORKERS) -> SpreadEstimate:
    """Monte-Carlo estimate of σ(x) with thresholds drawn i.i.d. Unif[0,1] per node per replicate."""
    _check_sizes(model, x)
    if replicates < 1:
        raise ContractViolation("replicates must be at least 1")
    if not x.values.any():
        # no influence is ever applied
        return SpreadEstimate(mean=0.0, stderr=0.0, replicates=replicates, master_seed=master_seed)
    return summarize(simulate_replicates(model, x, replicates, master_seed, workers=workers), master_seed)


def spread_of_set(model: CascadeModel, s: Iterable[int], replicates: int, master_seed: int,
                  workers: int = DEFAULT_WORKERS) -> SpreadEstimate:
    """Monte-Carlo estimate of σ(S) under integral semantics: S is active at stage 0, no direct influence."""
    s = list(s)
    x = InfluenceVector.zeros(model.n)
    if replicates < 1:
        raise ContractViolation("replicates must be at least 1")
    if not s:
        return SpreadEstimate(mean=0.0, stderr=0.0, replicates=replicates, master_seed=master_seed)
    return summarize(simulate_replicates(model, x, replicates, master_seed, initial=s, workers=workers), master_seed)


def _influence_levels(model: CascadeModel, v: int) -> np.ndarray:
    """Every value f_v(S) can take, deduplicated."""
    g = model.graph
    if model.kind == ModelKind.TRIGGERING:
        has_trigger = bool(model._live_arcs[g.in_arc_ids(v)].any())
        return np.array([0.0, 1.0]) if has_trigger else np.array([0.0])
    levels = np.array([0.0])
    for w in g.in_neighbors(v)[1]:
        levels = np.unique(np.round(np.concatenate((levels, levels + w)), BREAKPOINT_DECIMALS))
        if len(levels) > EXACT_MAX_BREAKPOINTS:
            raise SizeError(f"Node {v} has more than {EXACT_MAX_BREAKPOINTS} influence breakpoints")
    return levels


def _threshold_cells(model: CascadeModel, x: np.ndarray, initial: Optional[np.ndarray]):
    """Per-node (representatives, lengths) of the threshold intervals on which the outcome is constant."""
    representatives, lengths = [], []
    for v in range(model.n):
        if initial is not None and initial[v]:
            representatives.append(np.array([0.5]))
            lengths.append(np.array([1.0]))
            continue
        levels = np.minimum(x[v] + _influence_levels(model, v), 1.0)
        points = np.unique(np.round(np.concatenate(([0.0, 1.0], levels)), BREAKPOINT_DECIMALS))
        if len(points) - 1 > EXACT_MAX_BREAKPOINTS:
            raise SizeError(f"Node {v} has more than {EXACT_MAX_BREAKPOINTS} threshold cells")
        representatives.append((points[:-1] + points[1:]) / 2)
        lengths.append(np.diff(points))
    return representatives, lengths


def _exact_spread(model: CascadeModel, x: InfluenceVector, initial: Optional[Iterable[int]]) -> float:
    _check_sizes(model, x)
    if model.is_random_triggering:
        raise DomainError("The exact oracle supports deterministic triggering sets only")
    if model.n == 0:
        return 0.0
    initial_mask = _as_mask(model.n, initial)
    representatives, lengths = _threshold_cells(model, x.values, initial_mask)
    shape = tuple(len(r) for r in representatives)
    random_nodes = sum(1 for k in shape if k > 1)
    if random_nodes > EXACT_MAX_NODES:
        raise SizeError(f"Exact oracle handles at most {EXACT_MAX_NODES} nodes with random outcome, got {random_nodes}")
    cells = int(np.prod(shape, dtype=object))
    if cells > EXACT_MAX_CELLS:
        raise SizeError(f"Exact oracle would enumerate {cells} threshold cells (limit {EXACT_MAX_CELLS})")

    live = None
    if model.kind == ModelKind.TRIGGERING:
        live = model.sample_live_arcs(None, 1)
    total = 0.0
    chunk = max(1, (1 << 20) // max(model.n, 1))
    for start in range(0, cells, chunk):
        index = np.unravel_index(np.arange(start, min(cells, start + chunk)), shape)
        thresholds = np.column_stack([representatives[v][index[v]] for v in range(model.n)])
        volume = np.prod(np.column_stack([lengths[v][index[v]] for v in range(model.n)]), axis=1)
        final = propagate(model, x.values, thresholds, live=live, initial=initial_mask)
        total += float((final.astype(float) @ model.node_weights) @ volume)
    return total


def exact_spread_small(model: CascadeModel, x: InfluenceVector) -> float:
    """
    Exact σ(x) for small instances.

    The outcome only changes where a threshold crosses one of the finitely many values
    min(x_v + f_v(S), 1), so σ is the volume-weighted sum of outcomes over the product of per-node
    threshold intervals between those breakpoints.
    """
    return _exact_spread(model, x, None)


def exact_spread_of_set(model: CascadeModel, s: Iterable[int]) -> float:
    """Exact σ(S) under integral semantics."""
    return _exact_spread(model, InfluenceVector.zeros(model.n), list(s))

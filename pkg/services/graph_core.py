import gzip
import logging
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, Field

from config import LINEAR_CONTRACT_SLACK
from services.types import DomainError, ParseError, WeightDomainError, WeightModel

logger = logging.getLogger(__name__)

TRIVALENCY_WEIGHTS = (0.001, 0.01, 0.1)

Arc = Tuple[int, int, float]


class DirectedGraph:
    """
    Immutable weighted digraph.

    Arcs are kept in insertion order (the order they were first seen in the input) and indexed in
    compressed form by tail (out-adjacency) and by head (in-adjacency). Undirected inputs are stored
    as two opposite arcs.
    """

    def __init__(self, node_count: int, tails: Sequence[int], heads: Sequence[int], weights: Sequence[float],
                 directed: bool = True, weighted: bool = True, original_ids: Optional[Sequence[int]] = None,
                 node_weights: Optional[Sequence[float]] = None):
        self._n = int(node_count)
        self._tails = np.asarray(tails, dtype=np.int64).copy()
        self._heads = np.asarray(heads, dtype=np.int64).copy()
        self._weights = np.asarray(weights, dtype=float).copy()
        self._directed = bool(directed)
        self._weighted = bool(weighted)
        if not (len(self._tails) == len(self._heads) == len(self._weights)):
            raise DomainError("tails, heads and weights must have the same length")
        if len(self._tails) and (self._tails.min() < 0 or self._heads.min() < 0
                                 or self._tails.max() >= self._n or self._heads.max() >= self._n):
            raise DomainError(f"Arc endpoint outside 0..{self._n - 1}")
        if np.any(self._tails == self._heads):
            raise DomainError("Self-loops are not allowed")
        if np.any(~np.isfinite(self._weights)) or np.any(self._weights < 0) or np.any(self._weights > 1):
            raise WeightDomainError("Every edge weight must lie in [0, 1]")
        self._original_ids = (np.arange(self._n, dtype=np.int64) if original_ids is None
                              else np.asarray(original_ids, dtype=np.int64).copy())
        self._node_weights = (np.ones(self._n) if node_weights is None
                              else np.asarray(node_weights, dtype=float).copy())
        if self._original_ids.shape != (self._n,) or self._node_weights.shape != (self._n,):
            raise DomainError("original_ids and node_weights must have one entry per node")

        for arr in (self._tails, self._heads, self._weights, self._original_ids, self._node_weights):
            arr.setflags(write=False)

        out_order = np.lexsort((self._heads, self._tails))
        in_order = np.lexsort((self._tails, self._heads))
        self._out_arcs = out_order
        self._in_arcs = in_order
        self._out_indptr = np.concatenate(([0], np.cumsum(np.bincount(self._tails, minlength=self._n))))
        self._in_indptr = np.concatenate(([0], np.cumsum(np.bincount(self._heads, minlength=self._n))))

    @classmethod
    def from_arcs(cls, node_count: int, arcs: Iterable[Union[Tuple[int, int], Arc]], directed: bool = True,
                  node_weights: Optional[Sequence[float]] = None) -> "DirectedGraph":
        """Build a graph from (u, v) or (u, v, w) tuples; duplicates keep the last weight, self-loops are dropped."""
        collected: Dict[Tuple[int, int], float] = {}
        weighted = True
        for arc in arcs:
            u, v = int(arc[0]), int(arc[1])
            if len(arc) > 2:
                w = float(arc[2])
            else:
                w, weighted = 1.0, False
            if u == v:
                continue
            collected[(u, v)] = w
            if not directed:
                collected[(v, u)] = w
        tails = [u for u, _ in collected]
        heads = [v for _, v in collected]
        return cls(node_count, tails, heads, list(collected.values()), directed=directed, weighted=weighted,
                   node_weights=node_weights)

    @property
    def node_count(self) -> int:
        return self._n

    @property
    def arc_count(self) -> int:
        return int(self._tails.shape[0])

    @property
    def directed(self) -> bool:
        return self._directed

    @property
    def weighted(self) -> bool:
        """Whether the weights came with the input (False when every arc defaulted to 1)."""
        return self._weighted

    @property
    def tails(self) -> np.ndarray:
        return self._tails

    @property
    def heads(self) -> np.ndarray:
        return self._heads

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def original_ids(self) -> np.ndarray:
        return self._original_ids

    @property
    def node_weights(self) -> np.ndarray:
        return self._node_weights

    def arcs(self) -> Iterator[Arc]:
        for u, v, w in zip(self._tails, self._heads, self._weights):
            yield int(u), int(v), float(w)

    def out_neighbors(self, u: int) -> Tuple[np.ndarray, np.ndarray]:
        idx = self._out_arcs[self._out_indptr[u]:self._out_indptr[u + 1]]
        return self._heads[idx], self._weights[idx]

    def in_neighbors(self, v: int) -> Tuple[np.ndarray, np.ndarray]:
        idx = self._in_arcs[self._in_indptr[v]:self._in_indptr[v + 1]]
        return self._tails[idx], self._weights[idx]

    def in_arc_ids(self, v: int) -> np.ndarray:
        return self._in_arcs[self._in_indptr[v]:self._in_indptr[v + 1]]

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self._out_indptr)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.diff(self._in_indptr)

    @cached_property
    def in_weight(self) -> np.ndarray:
        """Total weight entering each node."""
        return np.bincount(self._heads, weights=self._weights, minlength=self._n)

    @cached_property
    def out_weight(self) -> np.ndarray:
        return np.bincount(self._tails, weights=self._weights, minlength=self._n)

    @cached_property
    def in_matrix(self) -> sp.csr_matrix:
        """W with W[v, u] = w_uv, so that W @ active gives the influence on every node."""
        return sp.csr_matrix((self._weights, (self._heads, self._tails)), shape=(self._n, self._n))

    @cached_property
    def nx_graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self._n))
        g.add_weighted_edges_from(self.arcs())
        return g

    def weight(self, u: int, v: int) -> float:
        heads, weights = self.out_neighbors(u)
        hit = np.flatnonzero(heads == v)
        return float(weights[hit[0]]) if len(hit) else 0.0

    def check_linear_contract(self, slack: float = LINEAR_CONTRACT_SLACK) -> List[int]:
        """Nodes whose total in-weight exceeds 1 + slack."""
        return [int(v) for v in np.flatnonzero(self.in_weight > 1 + slack)]

    def with_weights(self, weights: Sequence[float]) -> "DirectedGraph":
        return DirectedGraph(self._n, self._tails, self._heads, weights, directed=self._directed, weighted=True,
                             original_ids=self._original_ids, node_weights=self._node_weights)

    def with_node_weights(self, node_weights: Sequence[float]) -> "DirectedGraph":
        return DirectedGraph(self._n, self._tails, self._heads, self._weights, directed=self._directed,
                             weighted=self._weighted, original_ids=self._original_ids, node_weights=node_weights)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return (self._n == other._n
                and np.array_equal(self._tails, other._tails)
                and np.array_equal(self._heads, other._heads)
                and np.array_equal(self._weights, other._weights))

    __hash__ = None

    def __repr__(self) -> str:
        kind = "directed" if self._directed else "undirected"
        return f"DirectedGraph(n={self._n}, arcs={self.arc_count}, {kind})"


class TopologicalResult(BaseModel):
    order: Optional[List[int]] = Field(None, description="Topological order when the graph is a DAG")
    cycle: Optional[List[int]] = Field(None, description="Nodes along one cycle otherwise")

    @property
    def is_dag(self) -> bool:
        return self.order is not None


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_edge_list(path: Union[str, Path], directed: bool = True) -> DirectedGraph:
    """
    Load a whitespace-separated "u v [w]" edge list.
    :param path: file to read; '#' lines are comments, a .gz suffix is decompressed.
    :param directed: when False every line yields the two opposite arcs.
    :return: graph relabeled to 0..n-1 in first-appearance order, original ids kept in original_ids.
    """
    path = Path(path)
    dense: Dict[int, int] = {}
    collected: Dict[Tuple[int, int], float] = {}
    weighted = True

    with _open_text(path) as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens = stripped.split()
            if len(tokens) not in (2, 3):
                raise ParseError(f"expected 'u v [w]', got {len(tokens)} fields", line_number)
            u_raw, v_raw = _parse_id(tokens[0], line_number), _parse_id(tokens[1], line_number)
            if u_raw == v_raw:
                continue
            u = dense.setdefault(u_raw, len(dense))
            v = dense.setdefault(v_raw, len(dense))
            if len(tokens) == 3:
                try:
                    w = float(tokens[2])
                except ValueError:
                    raise ParseError(f"weight '{tokens[2]}' is not a number", line_number)
                if not 0.0 <= w <= 1.0:
                    raise WeightDomainError(f"line {line_number}: weight {w} outside [0, 1]")
            else:
                w, weighted = 1.0, False
            collected[(u, v)] = w
            if not directed:
                collected[(v, u)] = w

    original_ids = np.empty(len(dense), dtype=np.int64)
    for raw, idx in dense.items():
        original_ids[idx] = raw
    graph = DirectedGraph(len(dense), [u for u, _ in collected], [v for _, v in collected], list(collected.values()),
                          directed=directed, weighted=weighted, original_ids=original_ids)
    logger.info(f"Loaded {graph} from {path}")
    return graph


def _parse_id(raw: str, line_number: int) -> int:
    try:
        node = int(raw)
    except ValueError:
        raise ParseError(f"node id '{raw}' is not an integer", line_number)
    if node < 0:
        raise ParseError(f"node id {node} is negative", line_number)
    return node


def serialize_edge_list(g: DirectedGraph, path: Union[str, Path]) -> Path:
    """Write every arc as "u v w" with original ids and full-precision weights, in arc order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = g.original_ids
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# nodes={g.node_count} arcs={g.arc_count}\n")
        for u, v, w in g.arcs():
            f.write(f"{ids[u]} {ids[v]} {w!r}\n")
    return path


def assign_weights(g: DirectedGraph, model: WeightModel, seed: int = 0) -> DirectedGraph:
    """
    Assign arc weights under one of the weight models.
    :param g: graph with its final topology.
    :param model: WeightedCascade (1/in-degree), Trivalency ({0.001, 0.01, 0.1} i.i.d.),
        RandomNormalized (Unif[0,1] normalized per head) or FromFile (identity).
    :param seed: seed of the random models.
    """
    model = WeightModel(model)
    if model == WeightModel.FROM_FILE:
        if not g.weighted:
            raise DomainError("Weight model 'file' requires weights in the input")
        return g
    if model == WeightModel.WEIGHTED_CASCADE:
        weights = 1.0 / g.in_degree[g.heads] if g.arc_count else np.zeros(0)
        return g.with_weights(weights)

    rng = np.random.default_rng(seed)
    if model == WeightModel.TRIVALENCY:
        weighted = g.with_weights(rng.choice(TRIVALENCY_WEIGHTS, size=g.arc_count))
        overweight = weighted.check_linear_contract()
        if overweight:
            logger.warning(f"Trivalency weights push in-weight above 1 on {len(overweight)} nodes; "
                           f"activation will clamp total influence at 1")
        return weighted
    raw = rng.random(g.arc_count)
    totals = np.bincount(g.heads, weights=raw, minlength=g.node_count)
    return g.with_weights(np.minimum(raw / totals[g.heads], 1.0) if g.arc_count else raw)


def topological_order(g: DirectedGraph) -> TopologicalResult:
    """Smallest-id-first topological order, or a cycle witness if g has a cycle."""
    graph = g.nx_graph
    if nx.is_directed_acyclic_graph(graph):
        return TopologicalResult(order=list(nx.lexicographical_topological_sort(graph)))
    cycle_edges = nx.find_cycle(graph)
    return TopologicalResult(cycle=[int(u) for u, _ in cycle_edges])


def reachable_from(g: DirectedGraph, sources: Iterable[int]) -> set:
    """Nodes reachable from `sources` along at least one arc."""
    reached = set()
    for s in sources:
        for v in nx.descendants(g.nx_graph, s):
            reached.add(int(v))
    return reached

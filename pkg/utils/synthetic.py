import logging
import re
from typing import Tuple

import networkx as nx
import numpy as np

from services.graph_core import DirectedGraph
from services.types import DataError

logger = logging.getLogger(__name__)

SYNTHETIC_PREFIX = "synthetic:"
_SPEC = re.compile(r"^synthetic:(pa|dag|grid):(\d+)$")

# Arcs per new node in the preferential-attachment model.
PA_ATTACHMENT = 3
# Expected out-degree of the random DAG.
DAG_MEAN_DEGREE = 4.0


def is_synthetic(source: str) -> bool:
    return str(source).startswith(SYNTHETIC_PREFIX)


def parse_synthetic(source: str) -> Tuple[str, int]:
    match = _SPEC.match(str(source))
    if not match:
        raise DataError(f"Unknown synthetic dataset '{source}'; use synthetic:pa:N, synthetic:dag:N or synthetic:grid:S")
    return match.group(1), int(match.group(2))


def _from_nx(graph: nx.Graph, directed: bool) -> DirectedGraph:
    mapping = {node: i for i, node in enumerate(sorted(graph.nodes()))}
    arcs = [(mapping[u], mapping[v]) for u, v in graph.edges()]
    return DirectedGraph.from_arcs(len(mapping), arcs, directed=directed)


def preferential_attachment(n: int, seed: int = 0, m: int = PA_ATTACHMENT) -> DirectedGraph:
    """Undirected Barabási–Albert graph stored as opposite arc pairs."""
    return _from_nx(nx.barabasi_albert_graph(n, min(m, max(n - 1, 1)), seed=seed), directed=False)


def random_dag(n: int, seed: int = 0, mean_degree: float = DAG_MEAN_DEGREE) -> DirectedGraph:
    """G(n, p) with every edge oriented from the lower to the higher id."""
    p = min(1.0, 2 * mean_degree / max(n - 1, 1))
    graph = nx.gnp_random_graph(n, p, seed=seed)
    arcs = sorted((min(u, v), max(u, v)) for u, v in graph.edges())
    return DirectedGraph.from_arcs(n, arcs, directed=True)


def grid(side: int) -> DirectedGraph:
    """side x side 2-D lattice, undirected."""
    return _from_nx(nx.grid_2d_graph(side, side), directed=False)


def synthetic_graph(source: str, seed: int = 0) -> DirectedGraph:
    """Builds the graph named by 'synthetic:pa:N', 'synthetic:dag:N' or 'synthetic:grid:S' (S x S nodes)."""
    kind, size = parse_synthetic(source)
    if size < 2:
        raise DataError(f"Synthetic dataset '{source}' is too small")
    if kind == "pa":
        graph = preferential_attachment(size, seed)
    elif kind == "dag":
        graph = random_dag(size, seed)
    else:
        graph = grid(size)
    logger.info(f"Generated {source}: {graph}")
    return graph


def random_linear_instance(n: int, rng: np.random.Generator, arc_probability: float = 0.5,
                           dag: bool = False) -> DirectedGraph:
    """Small random digraph whose in-weights sum to at most 1 at every node."""
    arcs = []
    for u in range(n):
        for v in range(n):
            if u == v or (dag and u > v):
                continue
            if rng.random() < arc_probability:
                arcs.append((u, v))
    raw = rng.random(len(arcs))
    heads = np.array([v for _, v in arcs], dtype=np.int64)
    # scale each head's weights to a random total in [0, 1]
    totals = np.bincount(heads, weights=raw, minlength=n) if arcs else np.zeros(n)
    budget = rng.random(n)
    weights = [float(raw[i] / totals[v] * budget[v]) for i, (_, v) in enumerate(arcs)]
    return DirectedGraph.from_arcs(n, [(u, v, w) for (u, v), w in zip(arcs, weights)])

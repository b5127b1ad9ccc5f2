from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from services.graph_core import DirectedGraph, assign_weights
from services.types import GainTable, ResultRow, TriggeringKind, WeightModel
from utils.synthetic import synthetic_graph


class ArcModel(BaseModel):
    tail: int = Field(..., ge=0)
    head: int = Field(..., ge=0)
    weight: float = Field(1.0, ge=0, le=1)


class GraphPayload(BaseModel):
    """Inline arcs or a synthetic dataset name"""
    arcs: List[ArcModel] = Field(default_factory=list)
    node_count: Optional[int] = Field(None, ge=0, description="Defaults to the largest endpoint + 1")
    directed: bool = True
    dataset: Optional[str] = Field(None, description="synthetic:<pa|dag|grid>:<size>, replaces arcs")
    weights: WeightModel = Field(WeightModel.FROM_FILE, description="Weight model applied to the arcs")
    weight_seed: int = 0

    def to_graph(self) -> DirectedGraph:
        if self.dataset:
            graph = synthetic_graph(self.dataset, seed=self.weight_seed)
            weights = WeightModel.WEIGHTED_CASCADE if self.weights == WeightModel.FROM_FILE else self.weights
            return assign_weights(graph, weights, seed=self.weight_seed)
        n = self.node_count
        if n is None:
            n = max((max(a.tail, a.head) for a in self.arcs), default=-1) + 1
        graph = DirectedGraph.from_arcs(n, [(a.tail, a.head, a.weight) for a in self.arcs], directed=self.directed)
        return assign_weights(graph, self.weights, seed=self.weight_seed)


class EstimateRequest(BaseModel):
    graph: GraphPayload
    x: Dict[int, float] = Field(default_factory=dict, description="Direct influence per node; missing nodes get 0")
    replicates: int = Field(2000, ge=1, le=1_000_000)
    seed: int = 0
    exact: bool = False
    triggering: Optional[TriggeringKind] = None


class EstimateResponse(BaseModel):
    mean: float
    stderr: float
    replicates: int
    seed: Optional[int]
    exact: bool = False


class ExperimentRequest(BaseModel):
    graph: GraphPayload
    dataset: str = "request"
    algos: List[str] = Field(default_factory=lambda: ["DegreeInt", "DiscountInt", "DiscountFrac", "UniformFrac"])
    budgets: List[float]
    sims: int = Field(2000, ge=1, le=100_000)
    seed: int = 0
    delta: str = "1/10"
    record_wallclock: bool = False


class ExperimentResponse(BaseModel):
    rows: List[ResultRow]
    gain: Optional[GainTable] = None


class DagSpreadsRequest(BaseModel):
    graph: GraphPayload
    budget: Optional[float] = Field(None, ge=0, description="Also compute the linear allocation for this budget")


class DagSpreadsResponse(BaseModel):
    spreads: List[float]
    allocation: Optional[Dict[int, float]] = None
    predicted_spread: Optional[float] = None


class GenerateRequest(BaseModel):
    n: int = Field(4, ge=2, description="Node count (path, cycle)")
    k: float = Field(1, gt=0, description="Budget K (cycle) or seed count k (is, maxcov, amplify)")
    edges: List[List[int]] = Field(default_factory=list, description="Undirected source graph edges (is, amplify)")
    vertices: Optional[int] = Field(None, ge=1, description="Vertex count of the source graph (is, amplify)")
    sets: List[List[int]] = Field(default_factory=list, description="Set system (maxcov)")
    copies: int = Field(1, ge=1)
    or_tree: bool = False
    target: Optional[float] = None
    delta_exponent: float = Field(1.0, gt=0)
    sink_count: Optional[int] = Field(None, ge=1)


class GenerateResponse(BaseModel):
    node_count: int
    arcs: List[ArcModel]
    thresholds: Optional[List[float]] = None
    witness: Optional[List[float]] = None
    budget: Optional[float] = None
    target: Optional[float] = None

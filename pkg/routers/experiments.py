import logging

import networkx as nx
import numpy as np
from fastapi import APIRouter, HTTPException, status
from pydantic import ValidationError

from services.cascade_engine import CascadeModel, estimate_spread, exact_spread_small
from services.experiment_harness import ExperimentConfig, pointwise_gain, run_experiment
from services.graph_core import DirectedGraph
from services.optimizers import dag_all_single_node_spreads, dag_linear_optimize
from services.reductions import (amplify_instance, make_cycle_gap, make_path_gap, reduce_independent_set,
                                 reduce_max_coverage)
from services.types import (ConfigError, ContractViolation, DataError, DomainError, FracSpreadError, InfluenceVector,
                            SizeError, ThresholdVector)
from routers.experiments_models import (ArcModel, DagSpreadsRequest, DagSpreadsResponse, EstimateRequest,
                                        EstimateResponse, ExperimentRequest, ExperimentResponse, GenerateRequest,
                                        GenerateResponse)

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Influence Experiments"])

GENERATORS = ("path", "cycle", "is", "maxcov", "amplify")

responses = {
    400: {
        "description": "Bad Request - Invalid instance or parameters",
        "content": {
            "application/json": {
                "examples": {
                    "budget_too_large": {
                        "summary": "Budget Exceeds Node Count",
                        "value": {"detail": "Budget 12 exceeds the node count 10"}
                    },
                    "not_a_dag": {
                        "summary": "Graph Has a Cycle",
                        "value": {"detail": "Graph is not a DAG; cycle through nodes [3, 5, 7]"}
                    },
                    "linear_contract": {
                        "summary": "In-Weights Exceed One",
                        "value": {"detail": "In-weights of node 4 sum to 1.3 > 1"}
                    }
                }
            }
        }
    },
    413: {
        "description": "Instance too large for the requested oracle",
        "content": {
            "application/json": {
                "example": {"detail": "Exact oracle supports at most 10 nodes with a breakpoint, got 14"}
            }
        }
    },
    422: {
        "description": "Unreadable input data",
        "content": {
            "application/json": {
                "example": {"detail": "Allocation has 3 entries but the graph has 5 nodes"}
            }
        }
    }
}


def _http_error(e: Exception) -> HTTPException:
    if isinstance(e, SizeError):
        return HTTPException(status_code=status.HTTP_413_REQUEST_ENTITY_TOO_LARGE, detail=str(e))
    if isinstance(e, (DataError, ValidationError)):
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    if isinstance(e, (ConfigError, DomainError, ContractViolation)):
        return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    logger.exception("Unexpected error")
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Unexpected error: {e}")


def _allocation(graph: DirectedGraph, x: dict) -> InfluenceVector:
    values = np.zeros(graph.node_count)
    for v, amount in x.items():
        if not 0 <= v < graph.node_count:
            raise DataError(f"Allocation names node {v} outside [0, {graph.node_count})")
        values[v] = amount
    return InfluenceVector(values=values)


def _arcs(graph: DirectedGraph):
    return [ArcModel(tail=u, head=v, weight=w) for u, v, w in graph.arcs()]


@router.post("/estimate",
             response_model=EstimateResponse,
             responses={
                 200: {
                     "description": "Spread estimate",
                     "content": {
                         "application/json": {
                             "example": {"mean": 3.412, "stderr": 0.021, "replicates": 2000, "seed": 0, "exact": False}
                         }
                     }
                 },
                 **responses
             },
             summary="Estimate the spread of an allocation",
             description="""
             Monte Carlo estimate of the expected number of active nodes under the linear model
             (or a triggering model when `triggering` is set). With `exact` the small-instance
             oracle integrates over thresholds instead and `stderr` is 0.
             """)
def estimate(request: EstimateRequest):
    try:
        graph = request.graph.to_graph()
        x = _allocation(graph, request.x)
        if request.triggering:
            model = CascadeModel.triggering_model(graph, request.triggering)
        else:
            model = CascadeModel.linear(graph, allow_overweight=True)
        if request.exact:
            return EstimateResponse(mean=exact_spread_small(model, x), stderr=0.0, replicates=0, seed=None,
                                    exact=True)
        result = estimate_spread(model, x, request.replicates, request.seed)
        return EstimateResponse(mean=result.mean, stderr=result.stderr, replicates=result.replicates,
                                seed=request.seed)
    except (FracSpreadError, ValidationError) as e:
        raise _http_error(e)


@router.post("/experiments",
             response_model=ExperimentResponse,
             responses={200: {"description": "One row per algorithm and budget, plus the pointwise gain table"},
                        **responses},
             summary="Run a budget sweep",
             description="""
             Runs every requested algorithm at every budget on the given graph and evaluates each allocation
             with the shared Monte Carlo estimator. Rows come back sorted by algorithm then budget. The gain
             table is included when both integral and fractional algorithms ran.
             """)
def run_experiments(request: ExperimentRequest):
    try:
        graph = request.graph.to_graph()
        cfg = ExperimentConfig(graph=request.graph.dataset or request.dataset, dataset=request.dataset,
                               algos=request.algos, budgets=request.budgets, sims=request.sims, seed=request.seed,
                               delta=request.delta, record_wallclock=request.record_wallclock)
        rows = run_experiment(cfg, graph=graph)
        sides = {algo.is_integral for algo in cfg.algos}
        gain = pointwise_gain(rows) if sides == {True, False} else None
        return ExperimentResponse(rows=rows, gain=gain)
    except (FracSpreadError, ValidationError) as e:
        raise _http_error(e)


@router.post("/dag/spreads",
             response_model=DagSpreadsResponse,
             responses={200: {"description": "Single-node spreads, and the allocation when a budget is given"},
                        **responses},
             summary="Single-node spreads of a DAG",
             description="Exact σ({v}) for every node of a DAG and, optionally, the linear allocation for `budget`.")
def dag_spreads(request: DagSpreadsRequest):
    try:
        graph = request.graph.to_graph()
        spreads = dag_all_single_node_spreads(graph)
        response = DagSpreadsResponse(spreads=[float(s) for s in spreads])
        if request.budget is not None:
            result = dag_linear_optimize(graph, request.budget)
            response.allocation = {v: float(a) for v, a in enumerate(result.x.values) if a > 0}
            response.predicted_spread = result.predicted_spread
        return response
    except (FracSpreadError, ValidationError) as e:
        raise _http_error(e)


def _source_graph(request: GenerateRequest) -> nx.Graph:
    if not request.edges:
        raise DomainError("edges are required for this generator")
    source = nx.Graph()
    if request.vertices:
        source.add_nodes_from(range(request.vertices))
    for edge in request.edges:
        if len(edge) != 2:
            raise DataError(f"Edge {edge} must have two endpoints")
        source.add_edge(*edge)
    return source


@router.post("/generate/{kind}",
             response_model=GenerateResponse,
             responses={200: {"description": "Generated instance"}, **responses},
             summary="Generate a gap or hardness instance",
             description="""
             `path` and `cycle` build the small gap instances, `is` reduces an independent-set instance,
             `maxcov` reduces a max-coverage instance and `amplify` attaches sinks to the `is` reduction.
             """)
def generate(kind: str, request: GenerateRequest):
    if kind not in GENERATORS:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND,
                            detail=f"Unknown generator '{kind}'. Available: {list(GENERATORS)}")
    try:
        if kind == "path":
            instance = make_path_gap(request.n)
            return GenerateResponse(node_count=request.n, arcs=_arcs(instance.graph),
                                    thresholds=instance.thresholds.values.tolist(),
                                    witness=instance.witness.values.tolist(), budget=1.0)
        if kind == "cycle":
            graph = make_cycle_gap(request.n, request.k)
            return GenerateResponse(node_count=request.n, arcs=_arcs(graph), budget=request.k,
                                    witness=[request.k / request.n] * request.n)
        if kind == "maxcov":
            if not request.sets:
                raise DomainError("sets are required for maxcov")
            hard = reduce_max_coverage(request.sets, int(request.k), request.copies, or_tree=request.or_tree)
        else:
            hard = reduce_independent_set(_source_graph(request), int(request.k))
            if kind == "amplify":
                if request.target is None:
                    raise DomainError("target is required for amplify")
                hard = amplify_instance(hard, request.target, request.delta_exponent, sink_count=request.sink_count)
        thresholds: ThresholdVector = hard.thresholds
        return GenerateResponse(node_count=hard.graph.node_count, arcs=_arcs(hard.graph),
                                thresholds=thresholds.values.tolist(), budget=hard.budget, target=hard.target)
    except (FracSpreadError, ValidationError) as e:
        raise _http_error(e)

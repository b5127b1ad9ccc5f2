import logging
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import DEFAULT_SEED, DEFAULT_SIMS, DEFAULT_WORKERS
from services.cascade_engine import CascadeModel, deterministic_spread, estimate_spread, spread_of_set
from services.graph_core import DirectedGraph, assign_weights, load_edge_list
from services.heuristics import heuristic_allocate
from services.optimizers import (BudgetedProblem, FixedThresholdOracle, dag_linear_optimize, greedy_fractional,
                                 greedy_integral)
from services.types import (VALUE_SLACK, Algorithm, AllocationResult, ConfigError, DataError, DomainError, GainRow,
                            GainTable, InfluenceVector, ResultRow, SpreadEstimate, ThresholdVector, WeightModel,
                            parse_delta)
from utils.conf import load_config
from utils.file_system import fs_util
from utils.rng import derive_seed
from utils.synthetic import is_synthetic, synthetic_graph

logger = logging.getLogger(__name__)

RESULT_HEADER = ("dataset", "algorithm", "budget", "mean_spread", "stderr", "wallclock_ms", "seed")
SPEND_HEADER = ("node", "amount", "cumulative_budget")


def _split(value) -> List[str]:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return list(value)


class ExperimentConfig(BaseModel):
    """One budget sweep over a set of algorithms on one dataset"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    graph: str = Field(..., description="Edge-list path or synthetic:<pa|dag|grid>:<size>")
    undirected: bool = Field(False, description="Read every edge as two opposite arcs")
    weights: WeightModel = Field(WeightModel.WEIGHTED_CASCADE, description="Arc weight model")
    weight_seed: Optional[int] = Field(None, description="Seed of random weight models; derived from seed if unset")
    algos: List[Algorithm] = Field(default_factory=Algorithm.heuristics, description="Algorithms to run")
    budgets: List[float] = Field(..., description="Nondecreasing budgets")
    sims: int = Field(DEFAULT_SIMS, ge=1, description="Replicates per spread estimate")
    seed: int = Field(DEFAULT_SEED, description="Master seed every cell seed derives from")
    delta: Fraction = Field(Fraction(1, 10), description="Grid step of GreedyFrac")
    out: Optional[Path] = Field(None, description="CSV output path")
    thresholds: Optional[Path] = Field(None, description="Sidecar of fixed thresholds ('v τ_v' lines)")
    dataset: Optional[str] = Field(None, description="Dataset label for the rows")
    workers: int = Field(DEFAULT_WORKERS, ge=1, description="Cells run concurrently")
    record_wallclock: bool = Field(True, description="Record allocation + estimation time per cell")

    @field_validator("algos", mode="before")
    @classmethod
    def _parse_algos(cls, v):
        try:
            return [a if isinstance(a, Algorithm) else Algorithm.parse(a) for a in _split(v)]
        except DomainError as e:
            raise ValueError(str(e))

    @field_validator("budgets", mode="before")
    @classmethod
    def _parse_budgets(cls, v):
        if isinstance(v, (int, float)):
            return [v]
        return [float(b) for b in _split(v)]

    @field_validator("budgets")
    @classmethod
    def _check_budgets(cls, v):
        if not v:
            raise ValueError("at least one budget is required")
        if any(b < 0 for b in v):
            raise ValueError("budgets must be nonnegative")
        if any(b2 < b1 for b1, b2 in zip(v, v[1:])):
            raise ValueError("budgets must be nondecreasing")
        return v

    @field_validator("delta", mode="before")
    @classmethod
    def _parse_delta(cls, v):
        try:
            return parse_delta(v)
        except DomainError as e:
            raise ValueError(str(e))

    @model_validator(mode="after")
    def _check_algos(self):
        if not self.algos:
            raise ValueError("at least one algorithm is required")
        return self

    @property
    def label(self) -> str:
        if self.dataset:
            return self.dataset
        return self.graph if is_synthetic(self.graph) else Path(self.graph).name.split(".")[0]

    @classmethod
    def from_settings(cls, settings: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls(**settings)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment configuration: {e}")

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        return cls.from_settings(load_config(path, overrides))


def load_graph(cfg: ExperimentConfig) -> DirectedGraph:
    """Loads (or generates) the dataset and assigns its weights."""
    if is_synthetic(cfg.graph):
        graph = synthetic_graph(cfg.graph, seed=derive_seed(cfg.seed, "dataset"))
    else:
        graph = load_edge_list(cfg.graph, directed=not cfg.undirected)
    weight_seed = cfg.weight_seed if cfg.weight_seed is not None else derive_seed(cfg.seed, "weights")
    return assign_weights(graph, cfg.weights, seed=weight_seed)


def load_thresholds(cfg: ExperimentConfig, graph: DirectedGraph) -> Optional[ThresholdVector]:
    if cfg.thresholds is None:
        return None
    original_ids = None if is_synthetic(cfg.graph) else graph.original_ids
    values = fs_util.read_node_values(cfg.thresholds, graph.node_count, original_ids)
    try:
        return ThresholdVector.fixed(values)
    except ValidationError as e:
        raise DataError(f"Invalid thresholds in {cfg.thresholds}: {e}")


def allocate(algorithm: Algorithm, model: CascadeModel, budget: float, cfg: ExperimentConfig, seed: int,
             thresholds: Optional[ThresholdVector] = None) -> AllocationResult:
    """Computes the allocation of one (algorithm, budget) cell."""
    if algorithm in (Algorithm.GREEDY_FRAC, Algorithm.GREEDY_INT):
        oracle = FixedThresholdOracle(model, thresholds) if thresholds is not None else None
        problem = BudgetedProblem(model=model, budget=budget, delta=cfg.delta, replicates=cfg.sims,
                                  master_seed=seed, oracle=oracle)
        return greedy_fractional(problem) if algorithm == Algorithm.GREEDY_FRAC else greedy_integral(problem)
    if algorithm == Algorithm.DAG_LINEAR:
        return dag_linear_optimize(model.graph, budget)
    return heuristic_allocate(algorithm, model.graph, budget, seed)


def evaluate(result: AllocationResult, model: CascadeModel, cfg: ExperimentConfig, seed: int,
             thresholds: Optional[ThresholdVector] = None) -> SpreadEstimate:
    """Spread of an allocation; seed sets use integral semantics."""
    zeros = InfluenceVector.zeros(model.n)
    if thresholds is not None:
        value = (deterministic_spread(model, zeros, thresholds, initial=result.seed_set) if result.integral
                 else deterministic_spread(model, result.x, thresholds))
        return SpreadEstimate(mean=value, stderr=0.0, replicates=1, master_seed=seed)
    if result.integral:
        return spread_of_set(model, result.seed_set, cfg.sims, seed)
    return estimate_spread(model, result.x, cfg.sims, seed)


def _run_cell(cell: Tuple[Algorithm, float], model: CascadeModel, cfg: ExperimentConfig,
              thresholds: Optional[ThresholdVector]) -> ResultRow:
    algorithm, budget = cell
    seed = derive_seed(cfg.seed, algorithm.value, budget)
    started = time.perf_counter()
    result = allocate(algorithm, model, budget, cfg, seed, thresholds)
    estimate = evaluate(result, model, cfg, seed, thresholds)
    elapsed = (time.perf_counter() - started) * 1000.0 if cfg.record_wallclock else 0.0
    logger.info(f"{cfg.label} {algorithm.value} B={budget}: {estimate.mean:.3f} ± {estimate.stderr:.3f}")
    return ResultRow(dataset=cfg.label, algorithm=algorithm.value, budget=budget, mean_spread=estimate.mean,
                     stderr=estimate.stderr, wallclock_ms=elapsed, seed=seed)


def run_experiment(cfg: ExperimentConfig, graph: Optional[DirectedGraph] = None) -> List[ResultRow]:
    """
    Runs every (algorithm, budget) cell of the sweep.
    :param graph: already weighted graph; loaded from cfg.graph when omitted.
    :return: rows ordered by algorithm name, then budget.
    """
    graph = graph if graph is not None else load_graph(cfg)
    if cfg.budgets[-1] > graph.node_count + VALUE_SLACK:
        raise DomainError(f"Budget {cfg.budgets[-1]} exceeds the node count {graph.node_count}")
    model = CascadeModel.linear(graph, allow_overweight=True)
    thresholds = load_thresholds(cfg, graph)
    cells = sorted(((a, b) for a in dict.fromkeys(cfg.algos) for b in dict.fromkeys(cfg.budgets)),
                   key=lambda cell: (cell[0].value, cell[1]))
    logger.info(f"Running {len(cells)} cells on {cfg.label} ({graph}) with {cfg.sims} replicates")

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
            rows = list(executor.map(lambda cell: _run_cell(cell, model, cfg, thresholds), cells))
    else:
        rows = [_run_cell(cell, model, cfg, thresholds) for cell in cells]
    if cfg.out is not None:
        emit_csv(rows, cfg.out)
    return rows


def pointwise_gain(rows: Sequence[ResultRow]) -> GainTable:
    """Per budget, best fractional mean over best integral mean minus one, with mean and median over budgets."""
    best: Dict[Tuple[str, float], Dict[bool, float]] = {}
    for row in rows:
        integral = Algorithm.parse(row.algorithm).is_integral
        side = best.setdefault((row.dataset, row.budget), {})
        side[integral] = max(side.get(integral, -np.inf), row.mean_spread)

    gain_rows = []
    for (dataset, budget), side in sorted(best.items()):
        if True not in side or False not in side:
            missing = "integral" if True not in side else "fractional"
            raise DomainError(f"No {missing} algorithm at budget {budget} of {dataset}")
        fractional, integral = side[False], side[True]
        if integral > 0:
            gain = fractional / integral - 1.0
        else:
            gain = 0.0 if fractional <= 0 else float("inf")
        gain_rows.append(GainRow(dataset=dataset, budget=budget, best_fractional=fractional,
                                 best_integral=integral, gain=gain))
    if not gain_rows:
        raise DomainError("No rows to compare")
    gains = np.array([r.gain for r in gain_rows])
    return GainTable(rows=gain_rows, mean_gain=float(gains.mean()), median_gain=float(np.median(gains)))


def result_records(rows: Sequence[ResultRow]) -> List[Tuple]:
    """CSV records ordered by dataset, algorithm name, then budget; floats at full precision."""
    ordered = sorted(rows, key=lambda r: (r.dataset, r.algorithm, r.budget))
    return [(r.dataset, r.algorithm, repr(r.budget), repr(r.mean_spread), repr(r.stderr), repr(r.wallclock_ms), r.seed)
            for r in ordered]


def emit_csv(rows: Sequence[ResultRow], path: Union[str, Path]) -> Path:
    return fs_util.write_csv(path, RESULT_HEADER, result_records(rows))


def read_csv(path: Union[str, Path]) -> List[ResultRow]:
    rows = []
    for record in fs_util.read_csv(path, RESULT_HEADER):
        try:
            rows.append(ResultRow(dataset=record["dataset"], algorithm=record["algorithm"],
                                  budget=float(record["budget"]), mean_spread=float(record["mean_spread"]),
                                  stderr=float(record["stderr"]), wallclock_ms=float(record["wallclock_ms"]),
                                  seed=int(record["seed"])))
        except (ValueError, ValidationError) as e:
            raise DataError(f"Invalid result row in {path}: {e}")
    return rows


def write_spend_log(result: AllocationResult, path: Union[str, Path], original_ids: Sequence[int] = None) -> Path:
    """Exports the spend log as (node, amount, cumulative_budget) rows."""
    return fs_util.write_csv(path, SPEND_HEADER, (
        (int(original_ids[row["node"]]) if original_ids is not None else row["node"],
         repr(row["amount"]), repr(row["cumulative_budget"]))
        for row in result.spend_rows()
    ))

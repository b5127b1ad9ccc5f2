from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

VALUE_SLACK = 1e-9


class FracSpreadError(Exception):
    """Base class for all fracspread errors"""


class DataError(FracSpreadError):
    """Raised when input data cannot be used"""


class ParseError(DataError):
    """Raised when an input file has a malformed line"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class WeightDomainError(DataError):
    """Raised when an edge weight lies outside [0, 1]"""


class DomainError(FracSpreadError):
    """Raised when a parameter value is outside the operation's domain"""


class ContractViolation(FracSpreadError):
    """Raised when arguments break an operation's preconditions"""


class SizeError(FracSpreadError):
    """Raised when an instance is too large for the requested operation"""


class ConfigError(FracSpreadError):
    """Raised when an experiment configuration is invalid"""


class WeightModel(str, Enum):
    WEIGHTED_CASCADE = "wc"
    TRIVALENCY = "trivalency"
    FROM_FILE = "file"
    RANDOM_NORMALIZED = "random"


class ModelKind(str, Enum):
    LINEAR = "linear"
    CAPPED_LINEAR = "capped_linear"
    TRIGGERING = "triggering"


class TriggeringKind(str, Enum):
    DETERMINISTIC = "deterministic"
    LINEAR_THRESHOLD = "linear_threshold"
    INDEPENDENT_CASCADE = "independent_cascade"


class ThresholdOrigin(str, Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"


class Algorithm(str, Enum):
    DEGREE_INT = "DegreeInt"
    DISCOUNT_INT = "DiscountInt"
    RANDOM_INT = "RandomInt"
    DEGREE_FRAC = "DegreeFrac"
    DISCOUNT_FRAC = "DiscountFrac"
    UNIFORM_FRAC = "UniformFrac"
    GREEDY_FRAC = "GreedyFrac"
    GREEDY_INT = "GreedyInt"
    DAG_LINEAR = "DagLinear"

    @property
    def is_integral(self) -> bool:
        return self in (Algorithm.DEGREE_INT, Algorithm.DISCOUNT_INT, Algorithm.RANDOM_INT, Algorithm.GREEDY_INT)

    @classmethod
    def heuristics(cls) -> List["Algorithm"]:
        return [cls.DEGREE_INT, cls.DISCOUNT_INT, cls.RANDOM_INT,
                cls.DEGREE_FRAC, cls.DISCOUNT_FRAC, cls.UNIFORM_FRAC]

    @classmethod
    def parse(cls, name: str) -> "Algorithm":
        for algorithm in cls:
            if algorithm.value.lower() == name.strip().lower():
                return algorithm
        raise DomainError(f"Unknown algorithm '{name}'. Available: {[a.value for a in cls]}")


def parse_delta(value) -> Fraction:
    """Parse a grid step given as '1/N', a float or a Fraction; it must equal 1/N for a positive integer N."""
    try:
        delta = Fraction(str(value)).limit_denominator(10 ** 6) if not isinstance(value, Fraction) else value
    except (ValueError, ZeroDivisionError) as e:
        raise DomainError(f"Invalid grid step '{value}': {e}")
    if delta <= 0 or delta > 1 or delta.numerator != 1:
        raise DomainError(f"Grid step must be of the form 1/N, got {value}")
    return delta


def _as_unit_interval_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr < -VALUE_SLACK) or np.any(arr > 1 + VALUE_SLACK):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    arr.setflags(write=False)
    return arr


class InfluenceVector(BaseModel):
    """Direct influence x in [0,1]^n applied to every node"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="Per-node direct influence")

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, v):
        return _as_unit_interval_array(v, "influence")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def budget_used(self) -> float:
        return float(self.values.sum())

    @property
    def support(self) -> List[int]:
        return [int(v) for v in np.flatnonzero(self.values > 0)]

    @classmethod
    def zeros(cls, n: int) -> "InfluenceVector":
        return cls(values=np.zeros(n))

    @classmethod
    def indicator(cls, n: int, nodes: Iterable[int]) -> "InfluenceVector":
        values = np.zeros(n)
        values[list(nodes)] = 1.0
        return cls(values=values)

    @classmethod
    def from_mapping(cls, n: int, amounts: Dict[int, float]) -> "InfluenceVector":
        values = np.zeros(n)
        for node, amount in amounts.items():
            values[node] = amount
        return cls(values=values)

    def as_dict(self) -> Dict[int, float]:
        return {v: float(self.values[v]) for v in self.support}


class ThresholdVector(BaseModel):
    """Per-node activation thresholds, fixed or drawn Unif[0,1]"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(..., description="Threshold of each node")
    origin: ThresholdOrigin = Field(ThresholdOrigin.FIXED, description="How the thresholds were obtained")
    seed: Optional[int] = Field(None, description="Seed of the uniform draw, if any")

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, v):
        return _as_unit_interval_array(v, "threshold")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def fixed(cls, values) -> "ThresholdVector":
        return cls(values=values, origin=ThresholdOrigin.FIXED)

    @classmethod
    def uniform(cls, n: int, seed: int) -> "ThresholdVector":
        rng = np.random.default_rng(seed)
        return cls(values=1.0 - rng.random(n), origin=ThresholdOrigin.UNIFORM, seed=seed)


class CascadeOutcome(BaseModel):
    """Result of one threshold cascade"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    initial: FrozenSet[int] = Field(frozenset(), description="Nodes active at stage 0 (integral seeds)")
    final_active: FrozenSet[int] = Field(..., description="Nodes active once the process converged")
    stages: List[FrozenSet[int]] = Field(default_factory=list, description="Cumulative active set after each stage")
    thresholds: ThresholdVector = Field(..., description="Thresholds the cascade ran against")

    @property
    def stage_trace(self) -> List[FrozenSet[int]]:
        """Nodes newly activated in each stage"""
        trace, previous = [], self.initial
        for stage in self.stages:
            trace.append(stage - previous)
            previous = stage
        return trace


class SpreadEstimate(BaseModel):
    """Monte-Carlo (or exact, stderr 0) estimate of the expected spread"""
    mean: float = Field(..., description="Mean objective weight of the final active set")
    stderr: float = Field(0.0, ge=0, description="Sample standard deviation over sqrt(replicates)")
    replicates: int = Field(1, ge=1, description="Number of replicates averaged")
    master_seed: Optional[int] = Field(None, description="Seed all replicate streams derive from")


class SpendMove(BaseModel):
    node: int
    amount: float


class AllocationResult(BaseModel):
    """Allocation produced by an optimizer together with its spend history"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    algorithm: str = Field(..., description="Name of the algorithm that produced the allocation")
    x: InfluenceVector = Field(..., description="Final allocation")
    spend_log: List[SpendMove] = Field(default_factory=list, description="Ordered spend moves")
    integral: bool = Field(False, description="Whether x is a seed set under integral semantics")
    estimated_spread: Optional[SpreadEstimate] = Field(None, description="Spread estimate of x, when computed")
    predicted_spread: Optional[float] = Field(None, description="Model-predicted spread (DAG linear solver)")

    @model_validator(mode="after")
    def _check_replay(self):
        replay = np.zeros(self.x.n)
        for move in self.spend_log:
            replay[move.node] += move.amount
        if not np.allclose(replay, self.x.values, atol=VALUE_SLACK):
            raise ValueError("spend_log does not replay to x")
        return self

    @property
    def seed_set(self) -> List[int]:
        return self.x.support

    def spend_rows(self) -> List[Dict[str, float]]:
        """Spend log as (node, amount, cumulative_budget) rows"""
        rows, cumulative = [], 0.0
        for move in self.spend_log:
            cumulative += move.amount
            rows.append({"node": move.node, "amount": move.amount, "cumulative_budget": cumulative})
        return rows


class ResultRow(BaseModel):
    """One (algorithm, budget) cell of an experiment"""
    dataset: str = Field(..., description="Dataset label")
    algorithm: str = Field(..., description="Algorithm name")
    budget: float = Field(..., ge=0, description="Budget the allocation was computed for")
    mean_spread: float = Field(..., description="Estimated expected number of adopters")
    stderr: float = Field(..., ge=0, description="Standard error of mean_spread")
    wallclock_ms: float = Field(0.0, ge=0, description="Time spent allocating and estimating")
    seed: int = Field(..., description="Seed of this cell")


class GainRow(BaseModel):
    dataset: str = ""
    budget: float
    best_fractional: float
    best_integral: float
    gain: float


class GainTable(BaseModel):
    """Pointwise gain of the best fractional over the best integral algorithm"""
    rows: List[GainRow] = Field(default_factory=list)
    mean_gain: float = Field(..., description="Mean of the per-budget gains")
    median_gain: float = Field(..., description="Median of the per-budget gains")

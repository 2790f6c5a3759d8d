import math
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

from mechlab.constants import (
    CMP_TOLERANCE,
    DEFAULT_ALLOCATION_CAP,
    DEFAULT_VALUE_HIGH,
    SE_MULTIPLIER,
    SOLVER_AGREEMENT_TOLERANCE,
    UNASSIGNED,
    CheckKind,
    DensityKind,
    EnvironmentKind,
    MechanismName,
    PredictionClass,
    PredictorKind,
    PriorKind,
    Relation,
    Solver,
    Suite,
    Valuation,
    Verdict,
)
from mechlab.utils.pydantic import BaseModelWithEnumValues, FrozenModel


class LabConfig(BaseModel):
    # Two welfare values closer than this are a tie
    cmp_tolerance: float = CMP_TOLERANCE

    # LP and constraint generation must agree to within this
    solver_tolerance: float = SOLVER_AGREEMENT_TOLERANCE

    # Combinatorial auctions with more than this many allocations are rejected
    allocation_cap: int = DEFAULT_ALLOCATION_CAP

    se_multiplier: float = SE_MULTIPLIER

    solver: Solver = Solver.LP


class AllocationSpace(FrozenModel):
    labels: list[str]
    # Item names and, per allocation, the agent receiving each item (UNASSIGNED if nobody).
    # Empty for spaces that are not built from items.
    items: list[str] = []
    owners: list[list[int]] = []

    @validator("labels")
    def labels_are_distinct(cls, labels: list[str]):
        if not labels:
            raise ValueError("An allocation space needs at least one allocation")
        if len(set(labels)) != len(labels):
            raise ValueError("Allocation labels must be distinct")
        return labels

    @root_validator(skip_on_failure=True)
    def owners_match_labels(cls, values: dict):
        owners = values["owners"]
        if owners and len(owners) != len(values["labels"]):
            raise ValueError("Every allocation needs an owner assignment")
        if any(len(assignment) != len(values["items"]) for assignment in owners):
            raise ValueError("Every owner assignment must cover every item")
        return values

    @property
    def size(self) -> int:
        return len(self.labels)

    def bundle(self, allocation: int, agent: int) -> frozenset[str]:
        if not self.owners:
            return frozenset()

        return frozenset(
            item
            for item, owner in zip(self.items, self.owners[allocation])
            if owner == agent
        )

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError as error:
            raise ValueError(f"Unknown allocation label {label!r}") from error


class TypeVector(FrozenModel):
    values: list[float]

    @validator("values")
    def values_are_non_negative(cls, values: list[float]):
        if not values:
            raise ValueError("A type vector needs at least one coordinate")
        if any(not math.isfinite(value) or value < 0 for value in values):
            raise ValueError("Type values must be finite and non-negative")
        return values

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "TypeVector":
        # Solver output may carry round-off just below zero
        return cls(values=np.maximum(np.asarray(values, dtype=float), 0.0).tolist())


class TypeProfile(FrozenModel):
    space: AllocationSpace
    agents: list[TypeVector]

    @root_validator(skip_on_failure=True)
    def agents_match_space(cls, values: dict):
        agents: list[TypeVector] = values["agents"]
        if not agents:
            raise ValueError("A profile needs at least one agent")
        if any(len(agent.values) != values["space"].size for agent in agents):
            raise ValueError("Every type vector must have one value per allocation")
        return values

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([agent.values for agent in self.agents], dtype=float)


class LinearConstraint(FrozenModel):
    coefficients: dict[int, float] = Field(alias="coeffs")
    relation: Relation = Field(alias="rel")
    bound: float

    @validator("coefficients")
    def has_a_coefficient(cls, coefficients: dict[int, float]):
        if not any(value != 0 for value in coefficients.values()):
            raise ValueError("A constraint needs at least one non-zero coefficient")
        if any(index < 0 for index in coefficients):
            raise ValueError("Constraint coefficients must reference allocations")
        return coefficients

    def row(self, size: int) -> np.ndarray:
        row = np.zeros(size)
        for index, value in self.coefficients.items():
            row[index] = value
        return row


class Polytope(FrozenModel):
    """A polytope inside the non-negative orthant; non-negativity is implicit."""

    constraints: list[LinearConstraint] = []

    def allocations(self) -> list[int]:
        return sorted(
            {
                index
                for constraint in self.constraints
                for index, value in constraint.coefficients.items()
                if value != 0
            }
        )

    def check_dimension(self, size: int) -> None:
        if any(index >= size for index in self.allocations()):
            raise ValueError(
                f"Polytope references an allocation outside a space of size {size}"
            )


class PolytopePredictor(FrozenModel):
    kind: Literal[PredictorKind.POLYTOPE] = PredictorKind.POLYTOPE
    polytope: Polytope


class ZeroPredictor(FrozenModel):
    kind: Literal[PredictorKind.ZERO] = PredictorKind.ZERO


class PointPredictor(FrozenModel):
    kind: Literal[PredictorKind.EXACT] = PredictorKind.EXACT
    values: list[float]


class ScaledOtherPredictor(FrozenModel):
    """θ̃[α] ≥ factor · θ_other[α] for each listed allocation (all allocations if none listed)."""

    kind: Literal[PredictorKind.SCALED_OTHER] = PredictorKind.SCALED_OTHER
    other: int
    factor: float
    allocations: list[int] = []


class ItemFloorPredictor(FrozenModel):
    """θ̃[α] ≥ floor for every allocation in which the agent receives `item`."""

    kind: Literal[PredictorKind.ITEM_FLOOR] = PredictorKind.ITEM_FLOOR
    item: str
    floor: float


Predictor = Union[
    PolytopePredictor,
    ZeroPredictor,
    PointPredictor,
    ScaledOtherPredictor,
    ItemFloorPredictor,
]


class Density(FrozenModel):
    kind: DensityKind
    point: list[float] = []
    low: list[float] = []
    high: list[float] = []

    @root_validator(skip_on_failure=True)
    def has_support(cls, values: dict):
        if values["kind"] == DensityKind.POINT and not values["point"]:
            raise ValueError("A point density needs a point")
        if values["kind"] == DensityKind.UNIFORM_BOX:
            low, high = values["low"], values["high"]
            if not low or len(low) != len(high):
                raise ValueError("A box density needs matching low and high corners")
            if any(lo < 0 or lo > hi for lo, hi in zip(low, high)):
                raise ValueError("A box density needs 0 <= low <= high")
        return values


class PartitionCell(FrozenModel):
    polytope: Polytope
    probability: float
    density: Optional[Density] = None

    @validator("probability")
    def probability_in_range(cls, probability: float):
        if not 0 <= probability <= 1:
            raise ValueError("Cell probabilities must lie in [0, 1]")
        return probability


class PartitionPredictor(FrozenModel):
    kind: Literal[PredictorKind.PARTITION] = PredictorKind.PARTITION
    cells: list[PartitionCell]

    @validator("cells")
    def probabilities_sum_to_one(cls, cells: list[PartitionCell]):
        if not cells:
            raise ValueError("A partition needs at least one cell")
        if abs(sum(cell.probability for cell in cells) - 1) > 1e-9:
            raise ValueError("Cell probabilities must sum to 1")
        return cells


PredictorSpec = Union[Predictor, PartitionPredictor]


class WeakestTypeResult(FrozenModel):
    weakest: TypeVector
    welfare: float
    # Allocation attaining the weakest welfare
    certificate: int
    cell: Optional[int] = None
    cuts: int = 0
    oracle_calls: int = 0


class ErrorMeasures(FrozenModel):
    agent: int
    delta_err: float
    delta_vcg: float
    true_welfare: float
    weakest_welfare: float
    baseline_welfare: float


class AxisHalfspace(FrozenModel):
    """{θ̃ : θ̃[allocation] ≥ threshold}"""

    allocation: int
    threshold: float

    def contains(self, values: np.ndarray, tol: float = CMP_TOLERANCE) -> bool:
        return bool(values[self.allocation] >= self.threshold - tol)


class PredictionReport(FrozenModel):
    agent: int
    classification: PredictionClass
    measures: ErrorMeasures


class TuningParams(FrozenModel):
    zeta: list[float]
    lambdas: list[float] = Field(alias="lambda")
    seed: int = 0

    @validator("zeta", "lambdas", pre=True)
    def scalar_to_list(cls, value: Any):
        return value if isinstance(value, (list, tuple)) else [value]

    @validator("lambdas")
    def lambdas_are_positive(cls, lambdas: list[float]):
        if any(lam <= 0 for lam in lambdas):
            raise ValueError("λ must be positive")
        return lambdas

    def for_agents(self, num_agents: int) -> tuple[list[float], list[float]]:
        return _broadcast(self.zeta, num_agents, "ζ"), _broadcast(
            self.lambdas, num_agents, "λ"
        )


class AMParams(FrozenModel):
    weights: list[float] = Field(alias="omega")
    boosts: list[float] = Field(alias="tau")

    @validator("weights")
    def weights_are_positive(cls, weights: list[float]):
        if not weights or any(weight <= 0 for weight in weights):
            raise ValueError("Affine maximizer weights must be positive")
        return weights

    @validator("boosts")
    def boosts_are_non_negative(cls, boosts: list[float]):
        if any(boost < 0 for boost in boosts):
            raise ValueError("Affine maximizer boosts must be non-negative")
        return boosts


class SubspaceSpec(FrozenModel):
    # bases[agent][direction] is a unit vector over the allocation space
    bases: list[list[list[float]]]
    value_bound: int = Field(alias="H")

    @validator("value_bound")
    def is_power_of_two(cls, value_bound: int):
        if value_bound < 2 or value_bound & (value_bound - 1):
            raise ValueError("H must be a power of two, at least 2")
        return value_bound

    @validator("bases")
    def bases_are_orthonormal(cls, bases: list[list[list[float]]]):
        for basis in bases:
            if not basis:
                raise ValueError("Every agent needs at least one basis direction")
            directions = np.array(basis, dtype=float)
            if (directions < -CMP_TOLERANCE).any():
                raise ValueError("Basis directions must be non-negative")
            gram = directions @ directions.T
            if not np.allclose(gram, np.eye(len(basis)), atol=CMP_TOLERANCE):
                raise ValueError("Basis directions must be orthonormal")
        return bases

    @property
    def levels(self) -> int:
        return self.value_bound.bit_length() - 1


class DiscretePrior(FrozenModel):
    kind: Literal[PriorKind.DISCRETE] = PriorKind.DISCRETE
    support: list[list[float]]
    probabilities: list[float]

    @root_validator(skip_on_failure=True)
    def support_matches_probabilities(cls, values: dict):
        support, probabilities = values["support"], values["probabilities"]
        if not support:
            raise ValueError("A discrete prior needs a non-empty support")
        if len(support) != len(probabilities):
            raise ValueError("Every support type needs a probability")
        if any(p < 0 for p in probabilities) or abs(sum(probabilities) - 1) > 1e-9:
            raise ValueError("Prior probabilities must be non-negative and sum to 1")
        return values


class SingleItemPrior(FrozenModel):
    """Every bidder's value for the single item is drawn iid from a scipy.stats distribution."""

    kind: Literal[PriorKind.SINGLE_ITEM_IID] = PriorKind.SINGLE_ITEM_IID
    distribution: str = "uniform"
    args: list[float] = []
    loc: float = 0.0
    scale: float = 1.0


PriorModel = Union[DiscretePrior, SingleItemPrior]


class MechanismSpec(BaseModelWithEnumValues):
    name: MechanismName
    params: Optional[TuningParams] = None
    beta: float = 0.5
    am: Optional[AMParams] = None
    subspace: Optional[SubspaceSpec] = None
    priors: list[PriorModel] = []
    solver: Optional[Solver] = None

    @validator("beta")
    def beta_in_range(cls, beta: float):
        if not 0 <= beta <= 1:
            raise ValueError("β must lie in [0, 1]")
        return beta


class Instance(FrozenModel):
    profile: TypeProfile
    predictors: list[Predictor] = []
    partitions: list[Optional[PartitionPredictor]] = []


class MechanismOutcome(BaseModelWithEnumValues):
    mechanism: MechanismName
    allocation: int
    payments: list[float]
    participants: list[int]
    welfare: float
    revenue: float
    # The part of each payment that does not depend on the agent's own report
    pivots: list[float]
    draws: dict[str, Any] = {}

    @root_validator(skip_on_failure=True)
    def excluded_agents_pay_nothing(cls, values: dict):
        participants = set(values["participants"])
        payments = values["payments"]
        if any(
            payment != 0
            for agent, payment in enumerate(payments)
            if agent not in participants
        ):
            raise ValueError("Excluded agents must pay exactly 0")
        return values


class CellPlan(FrozenModel):
    probability: float
    weakest_welfare: Optional[float] = None
    density: Optional[Density] = None


class LevelPlan(FrozenModel):
    # points[direction][level - 1] is the halving point z^level of that direction
    points: list[list[list[float]]]
    levels: int


class MechanismRun(BaseModelWithEnumValues):
    """Everything about a mechanism that does not depend on the random draws.

    A run is prepared once per instance; each trial then only draws the random parts.
    """

    mechanism: MechanismName
    profile: TypeProfile
    allocation: int
    weights: list[float]
    offsets: list[float]
    pivots: list[float]
    baselines: list[float] = []
    others: list[list[float]] = []
    zeta: list[float] = []
    lambdas: list[float] = []
    top_draws: list[int] = []
    beta: float = 0.0
    fallback_pivots: list[float] = []
    cells: list[list[CellPlan]] = []
    levels: list[LevelPlan] = []
    cmp_tolerance: float = CMP_TOLERANCE

    class Config:
        allow_mutation = False


class BoundCheck(BaseModelWithEnumValues):
    name: str
    kind: CheckKind
    target: float
    empirical: float
    se: float = 0.0
    verdict: Verdict


class AgentGuarantee(BaseModelWithEnumValues):
    agent: int
    expected_value: Optional[float] = None
    payment_lower_bound: Optional[float] = None
    exact_payment: Optional[float] = None
    empirical_value: float
    value_se: float
    empirical_payment: float
    payment_se: float


class GuaranteeReport(BaseModelWithEnumValues):
    mechanism: MechanismName
    trials: int
    seed: int
    se_multiplier: float = SE_MULTIPLIER
    agents: list[AgentGuarantee]
    welfare_mean: float
    welfare_se: float
    revenue_mean: float
    revenue_se: float
    welfare_bound: Optional[float] = None
    revenue_bound: Optional[float] = None
    checks: list[BoundCheck] = []


class ConsistencyRobustness(FrozenModel):
    consistency_welfare: float
    consistency_revenue: float
    robustness_welfare: float
    robustness_revenue: float


class SweepRow(FrozenModel):
    param: float
    lam: float
    expected_value: float
    expected_payment: float
    empirical_value: Optional[float] = None
    empirical_payment: Optional[float] = None
    se: Optional[float] = None


class SuiteResult(BaseModelWithEnumValues):
    suite: Suite
    seed: int
    checks: list[BoundCheck]
    # Reported only; they never decide whether the suite passes
    informational: list[BoundCheck] = []
    details: dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return all(check.verdict == Verdict.SATISFIED for check in self.checks)


class RunReport(BaseModelWithEnumValues):
    mechanism: MechanismName
    seed: int
    measures: list[PredictionReport]
    guarantees: GuaranteeReport


class EnvironmentConfig(BaseModelWithEnumValues):
    kind: EnvironmentKind
    agents: int = 2
    items: int = 2
    outcomes: int = 3
    seed: int = 0
    value_high: float = DEFAULT_VALUE_HIGH
    valuation: Valuation = Valuation.GENERAL
    # Explicit environments
    allocations: list[str] = []
    values: list[list[float]] = []
    # Auctions with given bids: item names and one {bundle: value} map per bidder,
    # bundles written as item names joined by "+"
    item_names: list[str] = []
    bids: list[dict[str, float]] = []

    @root_validator(skip_on_failure=True)
    def explicit_has_values(cls, values: dict):
        if values["kind"] == EnvironmentKind.EXPLICIT and not (
            values["allocations"] and values["values"]
        ):
            raise ValueError("An explicit environment needs allocations and values")
        if values["bids"] and not values["item_names"]:
            raise ValueError("Auction bids need item names")
        return values


class RangeSpec(FrozenModel):
    start: float
    stop: float
    num: int

    @validator("num")
    def non_empty(cls, num: int):
        if num < 1:
            raise ValueError("A sweep range needs at least one point")
        return num

    def points(self) -> list[float]:
        return np.linspace(self.start, self.stop, self.num).tolist()


class SweepConfig(FrozenModel):
    theta_star: float
    delta_vcg: float
    delta_err: float = 0.0
    zeta: float = 0.0
    lambdas: list[float] = []
    # λ = 2^e, for values too small to write out
    lambda_exponents: list[int] = []
    zeta_range: Optional[RangeSpec] = None
    err_range: Optional[RangeSpec] = None
    trials: int = 0

    @root_validator(skip_on_failure=True)
    def has_range_and_lambdas(cls, values: dict):
        if (values["zeta_range"] is None) == (values["err_range"] is None):
            raise ValueError("A sweep needs exactly one of zeta_range or err_range")
        if not values["lambdas"] and not values["lambda_exponents"]:
            raise ValueError("A sweep needs at least one λ")
        return values

    def lambda_values(self) -> list[float]:
        return self.lambdas + [
            math.ldexp(1.0, exponent) for exponent in self.lambda_exponents
        ]


class ExperimentConfig(BaseModelWithEnumValues):
    environment: Optional[EnvironmentConfig] = None
    predictors: list[PredictorSpec] = []
    mechanism: Optional[MechanismSpec] = None
    sweep: Optional[SweepConfig] = None
    trials: int = 1
    seed: int
    workers: int = 1
    output_dir: str = "out"

    @validator("trials")
    def trials_positive(cls, trials: int):
        if trials < 1:
            raise ValueError("trials must be at least 1")
        return trials


def _broadcast(values: list[float], num_agents: int, name: str) -> list[float]:
    if len(values) == 1:
        return values * num_agents
    if len(values) != num_agents:
        raise ValueError(f"Expected 1 or {num_agents} values of {name}, got {len(values)}")
    return list(values)

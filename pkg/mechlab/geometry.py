import logging
from itertools import combinations
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from mechlab.constants import (
    CMP_TOLERANCE,
    FEASIBILITY_TOLERANCE,
    SOLVER_AGREEMENT_TOLERANCE,
    DensityKind,
    PredictionClass,
    Relation,
    Solver,
)
from mechlab.env import (
    best_allocation,
    others_totals,
    replace_agent,
    welfare,
    welfare_with_replacement,
)
from mechlab.errors import InfeasiblePolytopeError
from mechlab.types import (
    AxisHalfspace,
    Density,
    ErrorMeasures,
    ItemFloorPredictor,
    LinearConstraint,
    PartitionPredictor,
    PointPredictor,
    Polytope,
    PolytopePredictor,
    Predictor,
    ScaledOtherPredictor,
    TypeProfile,
    TypeVector,
    WeakestTypeResult,
    ZeroPredictor,
)
from mechlab.utils import simplex

logger = logging.getLogger(__name__)


@runtime_checkable
class WelfareOracle(Protocol):
    def __call__(self, replacement: np.ndarray) -> tuple[float, int]:
        """Returns the efficient welfare with agent i replaced, and its allocation."""
        ...


def predicted_polytope(predictor: Predictor, profile: TypeProfile, agent: int) -> Polytope:
    """Builds the polytope a predictor outputs for `agent`.

    The predictor only sees the other agents: agent i's own row is zeroed before the
    template is evaluated, so the polytope cannot depend on agent i's report.

    Args:
        predictor (Predictor): a predictor template
        profile (TypeProfile): the reported profile
        agent (int): the agent whose type is predicted

    Raises:
        ValueError: the template references an unknown agent, item or allocation

    Returns:
        Polytope: the predicted set of types for agent i
    """
    size = profile.space.size
    others_only = replace_agent(profile, agent, np.zeros(size))

    if isinstance(predictor, PolytopePredictor):
        polytope = predictor.polytope
    elif isinstance(predictor, ZeroPredictor):
        polytope = Polytope()
    elif isinstance(predictor, PointPredictor):
        if len(predictor.values) != size:
            raise ValueError(
                f"Point prediction has {len(predictor.values)} values, expected {size}"
            )
        polytope = Polytope(
            constraints=[
                LinearConstraint(coefficients={index: 1.0}, relation=Relation.EQ, bound=value)
                for index, value in enumerate(predictor.values)
            ]
        )
    elif isinstance(predictor, ScaledOtherPredictor):
        polytope = _scaled_other_polytope(predictor, others_only, agent)
    elif isinstance(predictor, ItemFloorPredictor):
        polytope = _item_floor_polytope(predictor, others_only, agent)
    else:
        raise ValueError(f"Unknown predictor {predictor!r}")

    polytope.check_dimension(size)

    return polytope


def _scaled_other_polytope(
    predictor: ScaledOtherPredictor, profile: TypeProfile, agent: int
) -> Polytope:
    if predictor.other == agent or not 0 <= predictor.other < profile.num_agents:
        raise ValueError(f"Agent {agent} cannot be predicted from agent {predictor.other}")

    other_values = profile.agents[predictor.other].values
    allocations = predictor.allocations or list(range(profile.space.size))

    return Polytope(
        constraints=[
            LinearConstraint(
                coefficients={allocation: 1.0},
                relation=Relation.GE,
                bound=predictor.factor * other_values[allocation],
            )
            for allocation in allocations
        ]
    )


def _item_floor_polytope(
    predictor: ItemFloorPredictor, profile: TypeProfile, agent: int
) -> Polytope:
    space = profile.space
    if predictor.item not in space.items:
        raise ValueError(f"Unknown item {predictor.item!r}")

    allocations = [
        allocation
        for allocation in range(space.size)
        if predictor.item in space.bundle(allocation, agent)
    ]

    return Polytope(
        constraints=[
            LinearConstraint(
                coefficients={allocation: 1.0},
                relation=Relation.GE,
                bound=predictor.floor,
            )
            for allocation in allocations
        ]
    )


def in_polytope(
    polytope: Polytope, values: np.ndarray, tol: float = FEASIBILITY_TOLERANCE
) -> bool:
    """Membership test; each violation is measured relative to the constraint norm."""
    values = np.asarray(values, dtype=float)
    if (values < -tol).any():
        return False

    for constraint in polytope.constraints:
        row = constraint.row(values.size)
        slack = float(row @ values) - constraint.bound
        allowed = tol * max(1.0, float(np.linalg.norm(row)))
        if constraint.relation == Relation.LE and slack > allowed:
            return False
        if constraint.relation == Relation.GE and slack < -allowed:
            return False
        if constraint.relation == Relation.EQ and abs(slack) > allowed:
            return False

    return True


def is_feasible(polytope: Polytope, size: int) -> bool:
    rows, relations, bounds = _constraint_rows(polytope, size)
    try:
        simplex.solve(np.zeros(size), rows, relations, bounds)
    except InfeasiblePolytopeError:
        return False

    return True


def weakest_type(
    polytope: Polytope,
    profile: TypeProfile,
    agent: int,
    solver: Solver = Solver.LP,
) -> WeakestTypeResult:
    if solver == Solver.CONSTRAINT_GENERATION:
        return weakest_type_cg(polytope, profile, agent)

    return weakest_type_lp(polytope, profile, agent)


def weakest_type_lp(
    polytope: Polytope, profile: TypeProfile, agent: int
) -> WeakestTypeResult:
    """Finds argmin over θ̃ ∈ polytope of w(θ̃, θ_{-i}) with one LP.

    Variables are θ̃ and γ; minimize γ subject to θ̃[α] + Σ_{j≠i} θ_j[α] ≤ γ for every
    allocation and θ̃ in the polytope.

    Args:
        polytope (Polytope): the predicted set for agent i
        profile (TypeProfile): the reported profile
        agent (int): index of agent i

    Raises:
        InfeasiblePolytopeError: the polytope is empty

    Returns:
        WeakestTypeResult: the weakest type, its welfare and the allocation attaining it
    """
    return weakest_for_offsets(polytope, others_totals(profile, agent), agent=agent)


def weakest_for_offsets(
    polytope: Polytope,
    offsets: np.ndarray,
    *,
    scale: float = 1.0,
    agent: Optional[int] = None,
    tol: float = CMP_TOLERANCE,
) -> WeakestTypeResult:
    """min over θ̃ ∈ polytope of max_α (offsets[α] + scale · θ̃[α]).

    With offsets = Σ_{j≠i} θ_j and scale 1 this is the weakest-type program; the
    affine maximizer uses weighted, boosted offsets and scale ω_i.
    """
    size = offsets.size
    polytope.check_dimension(size)

    polytope_rows, relations, bounds = _constraint_rows(polytope, size)
    welfare_rows = np.hstack([scale * np.eye(size), -np.ones((size, 1))])
    rows = np.vstack(
        [welfare_rows, np.hstack([polytope_rows, np.zeros((len(polytope_rows), 1))])]
    )
    objective = np.zeros(size + 1)
    objective[-1] = 1.0
    # γ is a non-negative LP variable, so negative offsets (boosts) are lifted first
    lift = max(0.0, -float(offsets.min()))

    try:
        solution = simplex.solve(
            objective,
            rows,
            [Relation.LE] * size + relations,
            np.concatenate([-(offsets + lift), bounds]),
        )
    except InfeasiblePolytopeError as error:
        raise InfeasiblePolytopeError(
            f"Predicted polytope{_for_agent(agent)} contains no type"
        ) from error

    weakest = TypeVector.from_array(np.array(solution.x[:size]))
    value, certificate = best_allocation(offsets + scale * weakest.array, tol)

    return WeakestTypeResult(weakest=weakest, welfare=value, certificate=certificate)


class ExhaustiveOracle:
    """Welfare oracle that scans the whole allocation space."""

    def __init__(self, offsets: np.ndarray, scale: float = 1.0, tol: float = CMP_TOLERANCE):
        self.offsets = offsets
        self.scale = scale
        self.tol = tol

    def __call__(self, replacement: np.ndarray) -> tuple[float, int]:
        return best_allocation(self.offsets + self.scale * replacement, self.tol)


def weakest_type_cg(
    polytope: Polytope,
    profile: TypeProfile,
    agent: int,
    oracle: Optional[WelfareOracle] = None,
    *,
    tol: float = SOLVER_AGREEMENT_TOLERANCE,
) -> WeakestTypeResult:
    """Finds the weakest type by constraint generation.

    The restricted program only carries variables for allocations that appear in the
    polytope's constraints or that the oracle has returned; every other coordinate of
    θ̃ stays 0. Each round solves the restricted program, asks the oracle for the
    efficient allocation under the candidate θ̃, and adds that allocation's welfare
    constraint if it is violated.

    Args:
        polytope (Polytope): the predicted set for agent i
        profile (TypeProfile): the reported profile
        agent (int): index of agent i
        oracle (Optional[WelfareOracle], optional): welfare maximizer under replacement.
            Defaults to an exhaustive scan of the allocation space.
        tol (float, optional): violation below which a cut is not added.
            Defaults to SOLVER_AGREEMENT_TOLERANCE.

    Raises:
        InfeasiblePolytopeError: the polytope is empty

    Returns:
        WeakestTypeResult: the weakest type, with the number of cuts and oracle calls
    """
    offsets = others_totals(profile, agent)
    size = offsets.size
    polytope.check_dimension(size)
    oracle = oracle or ExhaustiveOracle(offsets)

    constrained = polytope.allocations()
    cuts: list[int] = []
    oracle_calls = 0

    while True:
        columns = sorted(set(constrained) | set(cuts))
        candidate, gamma = _solve_restricted(polytope, offsets, columns, cuts, agent)

        value, allocation = oracle(candidate)
        oracle_calls += 1
        logger.debug(
            "Constraint generation round %d: γ=%.6g, oracle welfare %.6g at %d",
            oracle_calls,
            gamma,
            value,
            allocation,
        )

        if value <= gamma + tol:
            break
        if allocation in cuts:
            logger.debug("Oracle returned an existing cut; stopping at round-off")
            break
        cuts.append(allocation)

    return WeakestTypeResult(
        weakest=TypeVector.from_array(candidate),
        welfare=value,
        certificate=allocation,
        cuts=len(cuts),
        oracle_calls=oracle_calls,
    )


def _solve_restricted(
    polytope: Polytope,
    offsets: np.ndarray,
    columns: list[int],
    cuts: list[int],
    agent: int,
) -> tuple[np.ndarray, float]:
    size = offsets.size
    position = {allocation: index for index, allocation in enumerate(columns)}
    width = len(columns) + 1

    rows, relations, bounds = [], [], []
    for allocation in cuts:
        row = np.zeros(width)
        row[position[allocation]] = 1.0
        row[-1] = -1.0
        rows.append(row)
        relations.append(Relation.LE)
        bounds.append(-offsets[allocation])

    for constraint in polytope.constraints:
        row = np.zeros(width)
        for allocation, coefficient in constraint.coefficients.items():
            if coefficient != 0:
                row[position[allocation]] = coefficient
        rows.append(row)
        relations.append(constraint.relation)
        bounds.append(constraint.bound)

    objective = np.zeros(width)
    objective[-1] = 1.0
    try:
        solution = simplex.solve(
            objective, np.array(rows).reshape(-1, width), relations, np.array(bounds)
        )
    except InfeasiblePolytopeError as error:
        raise InfeasiblePolytopeError(
            f"Predicted polytope{_for_agent(agent)} contains no type"
        ) from error

    candidate = np.zeros(size)
    candidate[columns] = np.maximum(solution.x[:-1], 0.0)

    return candidate, solution.x[-1]


def error_measures(
    predictor: Predictor,
    profile: TypeProfile,
    agent: int,
    solver: Solver = Solver.LP,
) -> ErrorMeasures:
    """Δ^err = w(θ) − min-welfare and Δ^VCG = min-welfare − w(0, θ_{-i})."""
    polytope = predicted_polytope(predictor, profile, agent)
    weakest = weakest_type(polytope, profile, agent, solver)
    true_welfare, _ = welfare(profile)
    baseline = welfare_with_replacement(profile, agent, np.zeros(profile.space.size))

    return ErrorMeasures(
        agent=agent,
        delta_err=true_welfare - weakest.welfare,
        delta_vcg=weakest.welfare - baseline,
        true_welfare=true_welfare,
        weakest_welfare=weakest.welfare,
        baseline_welfare=baseline,
    )


def classify_prediction(
    predictor: Predictor,
    profile: TypeProfile,
    agent: int,
    tol: float = SOLVER_AGREEMENT_TOLERANCE,
) -> PredictionClass:
    return classify_measures(error_measures(predictor, profile, agent), tol)


def classify_measures(
    measures: ErrorMeasures, tol: float = SOLVER_AGREEMENT_TOLERANCE
) -> PredictionClass:
    """Exact when Δ^err vanishes, aggressive when it is negative, uninformative when the
    prediction reaches the baseline level set (Δ^VCG = 0), conservative otherwise."""
    if abs(measures.delta_err) <= tol:
        return PredictionClass.EXACT
    if measures.delta_err < 0:
        return PredictionClass.AGGRESSIVE
    if measures.delta_vcg <= tol:
        return PredictionClass.UNINFORMATIVE
    return PredictionClass.CONSERVATIVE


def level_set_halfspaces(
    level: float, profile: TypeProfile, agent: int
) -> list[AxisHalfspace]:
    """The level set {θ̃ : w(θ̃, θ_{-i}) ≥ level} as a union of axis-aligned halfspaces."""
    others = others_totals(profile, agent)

    return [
        AxisHalfspace(allocation=allocation, threshold=float(level - others[allocation]))
        for allocation in range(others.size)
    ]


def in_level_set(
    halfspaces: list[AxisHalfspace], values: np.ndarray, tol: float = CMP_TOLERANCE
) -> bool:
    return any(halfspace.contains(values, tol) for halfspace in halfspaces)


def sample_weakest(
    predictor: PartitionPredictor,
    profile: TypeProfile,
    agent: int,
    rng: np.random.Generator,
) -> WeakestTypeResult:
    """Draws a cell with its probability and returns a weakest type inside it.

    Cells without a density yield their deterministic weakest type. Cells with a
    density yield a type drawn from it.
    """
    cell_index = int(
        rng.choice(len(predictor.cells), p=[cell.probability for cell in predictor.cells])
    )
    cell = predictor.cells[cell_index]
    if cell.density is None:
        result = weakest_type_lp(cell.polytope, profile, agent)
    else:
        drawn = draw_from_density(cell.density, rng)
        value, certificate = best_allocation(others_totals(profile, agent) + drawn)
        result = WeakestTypeResult(
            weakest=TypeVector.from_array(drawn), welfare=value, certificate=certificate
        )

    return result.copy(update={"cell": cell_index})


def draw_from_density(density: Density, rng: np.random.Generator) -> np.ndarray:
    if density.kind == DensityKind.POINT:
        return np.array(density.point, dtype=float)
    return rng.uniform(np.array(density.low), np.array(density.high))


def polytope_vertices(
    polytope: Polytope, size: int, tol: float = FEASIBILITY_TOLERANCE
) -> list[np.ndarray]:
    """Brute-force vertex enumeration: solve every set of `size` tight constraints.

    Non-negativity bounds count as constraints. Only usable for small dimensions.
    """
    polytope_rows, relations, bounds = _constraint_rows(polytope, size)
    rows = np.vstack([polytope_rows, np.eye(size)])
    rhs = np.concatenate([bounds, np.zeros(size)])
    equalities = _independent_rows(
        polytope_rows,
        [index for index, relation in enumerate(relations) if relation == Relation.EQ],
    )
    # Dependent equalities are left to the membership check
    optional = [
        index
        for index in range(len(rows))
        if index >= len(relations) or relations[index] != Relation.EQ
    ]

    vertices: dict[tuple, np.ndarray] = {}
    for chosen in combinations(optional, size - len(equalities)):
        tight = equalities + list(chosen)
        matrix = rows[tight]
        if abs(np.linalg.det(matrix)) < 1e-12:
            continue
        point = np.linalg.solve(matrix, rhs[tight])
        if in_polytope(polytope, point, tol):
            vertices.setdefault(tuple(np.round(point, 9)), np.maximum(point, 0.0))

    return list(vertices.values())


def weakest_welfare_by_vertices(polytope: Polytope, offsets: np.ndarray) -> float:
    """Minimum of γ over the vertices of the weakest-type program's feasible region.

    The region lives in (θ̃, γ) space. A max of linear functions is not always
    minimized at a vertex of the polytope itself, so the enumeration runs on the
    lifted region, where the optimum of the linear objective γ is a vertex.
    """
    size = offsets.size
    lifted = Polytope(
        constraints=[
            *polytope.constraints,
            *[
                LinearConstraint(
                    coefficients={allocation: 1.0, size: -1.0},
                    relation=Relation.LE,
                    bound=float(-offsets[allocation]),
                )
                for allocation in range(size)
            ],
        ]
    )
    vertices = polytope_vertices(lifted, size + 1)
    if not vertices:
        raise InfeasiblePolytopeError("Polytope has no vertex")

    return min(float(vertex[-1]) for vertex in vertices)


def _independent_rows(rows: np.ndarray, candidates: list[int]) -> list[int]:
    """A maximal subset of `candidates` whose rows are linearly independent."""
    kept: list[int] = []
    for index in candidates:
        if np.linalg.matrix_rank(rows[kept + [index]]) > len(kept):
            kept.append(index)

    return kept


def _constraint_rows(
    polytope: Polytope, size: int
) -> tuple[np.ndarray, list[Relation], np.ndarray]:
    rows = np.array([constraint.row(size) for constraint in polytope.constraints]).reshape(
        -1, size
    )
    relations = [constraint.relation for constraint in polytope.constraints]
    bounds = np.array([constraint.bound for constraint in polytope.constraints], dtype=float)

    return rows, relations, bounds


def _for_agent(agent: Optional[int]) -> str:
    return "" if agent is None else f" for agent {agent}"

import numpy as np
import pytest

from mechlab.constants import DensityKind, EnvironmentKind, PredictionClass, Relation, Solver
from mechlab.env import explicit_profile, make_environment
from mechlab.errors import InfeasiblePolytopeError
from mechlab.geometry import (
    ExhaustiveOracle,
    WelfareOracle,
    classify_prediction,
    error_measures,
    in_level_set,
    in_polytope,
    is_feasible,
    level_set_halfspaces,
    polytope_vertices,
    predicted_polytope,
    sample_weakest,
    weakest_for_offsets,
    weakest_type,
    weakest_type_cg,
    weakest_type_lp,
    weakest_welfare_by_vertices,
)
from mechlab.mechanisms import vcg, weakest_type_vcg
from mechlab.types import (
    Density,
    ItemFloorPredictor,
    LinearConstraint,
    PartitionCell,
    PartitionPredictor,
    PointPredictor,
    Polytope,
    PolytopePredictor,
    ScaledOtherPredictor,
    TypeProfile,
    ZeroPredictor,
)
from mechlab.verify import random_polytope, random_predictors


class CountingOracle:
    def __init__(self, offsets: np.ndarray):
        self.scan = ExhaustiveOracle(offsets)
        self.calls = 0

    def __call__(self, replacement: np.ndarray) -> tuple[float, int]:
        self.calls += 1
        return self.scan(replacement)


def empty_polytope() -> Polytope:
    return Polytope(
        constraints=[
            LinearConstraint(coefficients={0: 1.0}, relation=Relation.GE, bound=3.0),
            LinearConstraint(coefficients={0: 1.0}, relation=Relation.LE, bound=1.0),
        ]
    )


def test_weakest_type_of_polygon(
    example_profile: TypeProfile, polygon_predictor: PolytopePredictor
):
    result = weakest_type_lp(polygon_predictor.polytope, example_profile, 0)

    assert result.welfare == pytest.approx(4.0)
    assert result.certificate == 0
    assert result.weakest.values[0] == pytest.approx(3.0)
    assert in_polytope(polygon_predictor.polytope, result.weakest.array)


@pytest.mark.parametrize("solver", [Solver.LP, Solver.CONSTRAINT_GENERATION])
def test_solvers_agree(
    example_profile: TypeProfile, polygon_predictor: PolytopePredictor, solver: Solver
):
    result = weakest_type(polygon_predictor.polytope, example_profile, 0, solver)

    assert result.welfare == pytest.approx(4.0, abs=1e-6)


def test_constraint_generation_with_custom_oracle(
    example_profile: TypeProfile, polygon_predictor: PolytopePredictor
):
    oracle = CountingOracle(np.array([1.0, 3.0]))
    assert isinstance(oracle, WelfareOracle)

    result = weakest_type_cg(polygon_predictor.polytope, example_profile, 0, oracle)

    assert result.welfare == pytest.approx(4.0, abs=1e-6)
    assert result.oracle_calls == oracle.calls
    assert result.cuts <= example_profile.space.size


def test_vertex_enumeration(polygon_predictor: PolytopePredictor):
    box = Polytope(
        constraints=[
            LinearConstraint(coefficients={0: 1.0}, relation=Relation.LE, bound=1.0),
            LinearConstraint(coefficients={1: 1.0}, relation=Relation.LE, bound=1.0),
        ]
    )

    assert len(polytope_vertices(box, 2)) == 4
    assert len(polytope_vertices(polygon_predictor.polytope, 2)) == 4
    assert weakest_welfare_by_vertices(
        polygon_predictor.polytope, np.array([1.0, 3.0])
    ) == pytest.approx(4.0)


def test_vertex_enumeration_with_parallel_equalities():
    point = 1.337 / 1.605
    polytope = Polytope(
        constraints=[
            LinearConstraint(coefficients={0: 1.605}, relation=Relation.EQ, bound=1.337),
            LinearConstraint(coefficients={1: -0.231}, relation=Relation.GE, bound=-2.753),
            LinearConstraint(coefficients={0: 0.3596}, relation=Relation.EQ, bound=0.3596 * point),
            LinearConstraint(coefficients={0: -0.193}, relation=Relation.LE, bound=2.326),
        ]
    )
    offsets = np.array([1.0, 3.0])

    vertices = polytope_vertices(polytope, 2)
    assert sorted(vertex[1] for vertex in vertices) == pytest.approx([0.0, 2.753 / 0.231])
    assert all(vertex[0] == pytest.approx(point) for vertex in vertices)

    assert weakest_welfare_by_vertices(polytope, offsets) == pytest.approx(3.0)
    assert weakest_for_offsets(polytope, offsets).welfare == pytest.approx(3.0)


def test_infeasible_polytope(example_profile: TypeProfile):
    assert not is_feasible(empty_polytope(), 2)

    with pytest.raises(InfeasiblePolytopeError, match="agent 0"):
        weakest_type_lp(empty_polytope(), example_profile, 0)

    with pytest.raises(InfeasiblePolytopeError):
        weakest_type_cg(empty_polytope(), example_profile, 0)


def test_negative_offsets():
    # max(θ̃[0] − 2, θ̃[1] + 1) is smallest at θ̃ = 0
    result = weakest_for_offsets(Polytope(), np.array([-2.0, 1.0]))

    assert result.welfare == pytest.approx(1.0)
    assert result.certificate == 1


def test_error_measures(example_profile: TypeProfile, polygon_predictor: PolytopePredictor):
    measures = error_measures(polygon_predictor, example_profile, 0)

    assert measures.true_welfare == 5.0
    assert measures.baseline_welfare == 3.0
    assert measures.delta_err == pytest.approx(1.0)
    assert measures.delta_vcg == pytest.approx(1.0)


def test_classification(example_profile: TypeProfile, polygon_predictor: PolytopePredictor):
    assert (
        classify_prediction(PointPredictor(values=[4.0, 1.0]), example_profile, 0)
        == PredictionClass.EXACT
    )
    assert (
        classify_prediction(polygon_predictor, example_profile, 0)
        == PredictionClass.CONSERVATIVE
    )
    assert (
        classify_prediction(ZeroPredictor(), example_profile, 0)
        == PredictionClass.UNINFORMATIVE
    )
    # Half of agent 0's values on both allocations: weakest welfare 6 > 5
    assert (
        classify_prediction(
            ScaledOtherPredictor(other=0, factor=0.5), example_profile, 1
        )
        == PredictionClass.AGGRESSIVE
    )


def test_predictor_templates(example_profile: TypeProfile, unit_demand_profile: TypeProfile):
    scaled = predicted_polytope(ScaledOtherPredictor(other=0, factor=0.5), example_profile, 1)
    assert [constraint.bound for constraint in scaled.constraints] == [2.0, 0.5]

    floor = predicted_polytope(ItemFloorPredictor(item="X", floor=7.0), unit_demand_profile, 0)
    space = unit_demand_profile.space
    assert floor.allocations() == [
        allocation for allocation in range(space.size) if "X" in space.bundle(allocation, 0)
    ]
    assert weakest_type_lp(floor, unit_demand_profile, 0).welfare == pytest.approx(11.0)

    with pytest.raises(ValueError):
        predicted_polytope(ScaledOtherPredictor(other=1, factor=0.5), example_profile, 1)
    with pytest.raises(ValueError):
        predicted_polytope(PointPredictor(values=[1.0]), example_profile, 0)
    with pytest.raises(ValueError):
        predicted_polytope(ItemFloorPredictor(item="Z", floor=1.0), unit_demand_profile, 0)


def test_prediction_ignores_own_report(example_profile: TypeProfile):
    predictor = ScaledOtherPredictor(other=0, factor=0.5)
    changed = example_profile.copy(
        update={"agents": [example_profile.agents[0], example_profile.agents[0]]}
    )

    assert predicted_polytope(predictor, changed, 1) == predicted_polytope(
        predictor, example_profile, 1
    )


def test_level_set(example_profile: TypeProfile):
    halfspaces = level_set_halfspaces(4.0, example_profile, 0)

    assert [halfspace.threshold for halfspace in halfspaces] == [3.0, 1.0]
    assert in_level_set(halfspaces, np.array([3.0, 0.0]))
    assert in_level_set(halfspaces, np.array([0.0, 1.0]))
    assert not in_level_set(halfspaces, np.array([2.0, 0.5]))


def test_sample_weakest(example_profile: TypeProfile, polygon_predictor: PolytopePredictor):
    partition = PartitionPredictor(
        cells=[
            PartitionCell(polytope=polygon_predictor.polytope, probability=0.5),
            PartitionCell(
                polytope=Polytope(),
                probability=0.5,
                density=Density(kind=DensityKind.POINT, point=[4.0, 1.0]),
            ),
        ]
    )
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(50):
        result = sample_weakest(partition, example_profile, 0, rng)
        seen.add(result.cell)
        assert result.welfare == pytest.approx(4.0 if result.cell == 0 else 5.0)

    assert seen == {0, 1}


def test_sample_weakest_error_distribution(
    example_profile: TypeProfile, polygon_predictor: PolytopePredictor
):
    partition = PartitionPredictor(
        cells=[
            PartitionCell(polytope=polygon_predictor.polytope, probability=0.25),
            PartitionCell(
                polytope=Polytope(),
                probability=0.75,
                density=Density(kind=DensityKind.POINT, point=[4.0, 1.0]),
            ),
        ]
    )
    rng = np.random.default_rng(1)
    errors = np.array(
        [5.0 - sample_weakest(partition, example_profile, 0, rng).welfare for _ in range(2000)]
    )

    assert set(np.round(errors, 9)) == {0.0, 1.0}
    share = float(np.mean(errors > 0.5))
    assert abs(share - 0.25) <= 4 * np.sqrt(0.25 * 0.75 / errors.size)


def test_weakest_welfare_grows_as_the_polytope_shrinks():
    rng = np.random.default_rng(12)
    intersections = 0
    for _ in range(30):
        size = int(rng.integers(2, 6))
        profile = explicit_profile(
            [f"a{allocation}" for allocation in range(size)],
            rng.uniform(0.0, 10.0, size=(2, size)).tolist(),
        )
        polytope = random_polytope(rng, size)
        loose = weakest_type_lp(polytope, profile, 0)

        # Upper bounds above the weakest type keep it inside
        anchor = loose.weakest.array + rng.uniform(0.0, 2.0, size=size)
        boxed = polytope.copy(
            update={
                "constraints": polytope.constraints
                + [
                    LinearConstraint(
                        coefficients={allocation: 1.0},
                        relation=Relation.LE,
                        bound=float(anchor[allocation]),
                    )
                    for allocation in range(size)
                ]
            }
        )
        assert weakest_type_lp(boxed, profile, 0).welfare == pytest.approx(
            loose.welfare, abs=1e-7
        )

        shrunk = polytope.copy(
            update={
                "constraints": polytope.constraints + random_polytope(rng, size).constraints
            }
        )
        if not is_feasible(shrunk, size):
            continue
        intersections += 1
        assert weakest_type_lp(shrunk, profile, 0).welfare >= loose.welfare - 1e-7

    assert intersections > 0


def test_solvers_agree_on_random_polytopes():
    rng = np.random.default_rng(21)
    for _ in range(30):
        size = int(rng.integers(2, 7))
        profile = explicit_profile(
            [f"a{allocation}" for allocation in range(size)],
            rng.uniform(0.0, 10.0, size=(3, size)).tolist(),
        )
        polytope = random_polytope(rng, size)
        agent = int(rng.integers(3))

        by_lp = weakest_type_lp(polytope, profile, agent)
        by_cuts = weakest_type_cg(polytope, profile, agent)

        assert by_cuts.welfare == pytest.approx(by_lp.welfare, abs=1e-6)
        assert in_polytope(polytope, by_lp.weakest.array)


def test_weakest_type_pays_at_least_vcg():
    rng = np.random.default_rng(3)
    for seed in range(30):
        _, profile = make_environment(
            EnvironmentKind.SHARED_OUTCOME, seed=seed, agents=3, outcomes=4
        )
        plain = vcg(profile)
        predicted = weakest_type_vcg(profile, random_predictors(profile, rng))

        assert predicted.allocation == plain.allocation
        for agent in range(profile.num_agents):
            assert predicted.pivots[agent] >= plain.pivots[agent] - 1e-7
            if agent in predicted.participants:
                assert predicted.payments[agent] >= plain.payments[agent] - 1e-7

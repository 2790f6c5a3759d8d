import pytest

from mechlab.constants import Relation, Valuation
from mechlab.env import auction_profile, explicit_profile
from mechlab.lab import MechanismLab
from mechlab.types import (
    Instance,
    LinearConstraint,
    Polytope,
    PolytopePredictor,
    TypeProfile,
    ZeroPredictor,
)


@pytest.fixture(scope="module")
def lab() -> MechanismLab:
    return MechanismLab()


@pytest.fixture(scope="module")
def example_profile() -> TypeProfile:
    # Agent 0 prefers a1, agent 1 prefers a2; a1 is efficient with welfare 5
    return explicit_profile(["a1", "a2"], [[4.0, 1.0], [1.0, 3.0]])


@pytest.fixture(scope="module")
def polygon_predictor() -> PolytopePredictor:
    return PolytopePredictor(
        polytope=Polytope(
            constraints=[
                LinearConstraint(coefficients={0: 1.0}, relation=Relation.GE, bound=3.0),
                LinearConstraint(coefficients={0: 1.0}, relation=Relation.LE, bound=5.0),
                LinearConstraint(coefficients={1: 1.0}, relation=Relation.GE, bound=0.5),
                LinearConstraint(coefficients={1: 1.0}, relation=Relation.LE, bound=2.0),
            ]
        )
    )


@pytest.fixture(scope="module")
def example_instance(
    example_profile: TypeProfile, polygon_predictor: PolytopePredictor
) -> Instance:
    return Instance(
        profile=example_profile, predictors=[polygon_predictor, ZeroPredictor()]
    )


@pytest.fixture(scope="module")
def unit_demand_profile() -> TypeProfile:
    _, profile = auction_profile(
        ["X", "Y"],
        [{"X": 10.0, "Y": 10.0}, {"X": 5.0, "Y": 4.0}],
        Valuation.UNIT_DEMAND,
    )
    return profile

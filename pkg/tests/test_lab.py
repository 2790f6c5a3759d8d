from pathlib import Path

import pytest

from mechlab.constants import MechanismName, PredictionClass, Solver, Suite
from mechlab.errors import ConfigError, InfeasiblePolytopeError
from mechlab.lab import MechanismLab
from mechlab.types import (
    ExperimentConfig,
    Instance,
    LabConfig,
    MechanismSpec,
    PartitionPredictor,
    TuningParams,
    ZeroPredictor,
)
from mechlab.utils.config import load_experiment_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_run_example(lab: MechanismLab):
    outcome, report = lab.run(load_experiment_config(CONFIGS / "two_allocations.yaml"))

    assert outcome.payments == pytest.approx([3.0, 0.0])
    assert report.mechanism == MechanismName.WEAKEST_TYPE_VCG
    assert report.measures[0].measures.delta_err == pytest.approx(1.0)
    assert report.measures[0].classification == PredictionClass.CONSERVATIVE
    assert report.measures[1].classification == PredictionClass.UNINFORMATIVE
    assert report.guarantees.revenue_mean == pytest.approx(3.0)


def test_run_unit_demand_auction(lab: MechanismLab):
    outcome, _ = lab.run(load_experiment_config(CONFIGS / "unit_demand_auction.yaml"))

    assert outcome.welfare == 15.0
    assert outcome.payments == pytest.approx([6.0, 0.0])


def test_run_zeta_lambda(lab: MechanismLab):
    experiment = load_experiment_config(CONFIGS / "zeta_lambda.yaml").copy(
        update={"trials": 500}
    )
    outcome, report = lab.run(experiment)

    target = report.guarantees.agents[0]
    assert "k" in outcome.draws
    assert target.expected_value is not None
    assert target.payment_lower_bound <= target.exact_payment


def test_constraint_generation_lab():
    lab = MechanismLab(LabConfig(solver=Solver.CONSTRAINT_GENERATION))
    instance = lab.build_instance(load_experiment_config(CONFIGS / "two_allocations.yaml"))

    outcome = lab.sample(MechanismSpec(name=MechanismName.WEAKEST_TYPE_VCG), instance, 0)

    assert outcome.payments == pytest.approx([3.0, 0.0], abs=1e-6)


def test_partition_predictors(lab: MechanismLab):
    experiment = load_experiment_config(CONFIGS / "generalized.yaml")
    instance = lab.build_instance(experiment)

    assert isinstance(instance.partitions[0], PartitionPredictor)
    assert instance.partitions[1] is None
    assert instance.predictors[0] == ZeroPredictor()
    assert [report.agent for report in lab.measure(instance)] == [1]

    outcome = lab.sample(experiment.mechanism, instance, experiment.seed)
    assert outcome.draws["cell"][0] in (0, 1)


def test_measure_agents_without_predictor(lab: MechanismLab):
    experiment = load_experiment_config(CONFIGS / "two_allocations.yaml")
    instance = lab.build_instance(
        experiment.copy(update={"predictors": experiment.predictors[:1]})
    )

    assert len(instance.predictors) == 1
    reports = lab.measure(instance)
    assert [report.agent for report in reports] == [0, 1]
    assert reports[1].classification == PredictionClass.UNINFORMATIVE
    assert reports[1].measures.delta_vcg == pytest.approx(0.0)


def test_build_instance_errors(lab: MechanismLab):
    with pytest.raises(ConfigError):
        lab.build_instance(ExperimentConfig(seed=0))

    experiment = load_experiment_config(CONFIGS / "two_allocations.yaml")
    crowded = experiment.copy(update={"predictors": [ZeroPredictor()] * 3})
    with pytest.raises(ConfigError):
        lab.build_instance(crowded)

    with pytest.raises(ConfigError):
        lab.run(experiment.copy(update={"mechanism": None}))
    with pytest.raises(ConfigError):
        lab.sweep(experiment)


def test_infeasible_prediction(lab: MechanismLab):
    experiment = ExperimentConfig.parse_obj(
        {
            "seed": 0,
            "environment": {
                "kind": "explicit",
                "allocations": ["a1", "a2"],
                "values": [[4, 1], [1, 3]],
            },
            "predictors": [
                {
                    "kind": "polytope",
                    "polytope": {
                        "constraints": [
                            {"coeffs": {0: 1}, "rel": ">=", "bound": 3},
                            {"coeffs": {0: 1}, "rel": "<=", "bound": 1},
                        ]
                    },
                }
            ],
            "mechanism": {"name": "weakest_type_vcg"},
        }
    )

    with pytest.raises(InfeasiblePolytopeError):
        lab.run(experiment)


def test_lab_tolerance_reaches_the_run(example_instance: Instance):
    lab = MechanismLab(LabConfig(cmp_tolerance=0.5))
    spec = MechanismSpec(
        name=MechanismName.ZETA_ZERO, params=TuningParams(zeta=[1.4, 0.0], lambdas=[1.0])
    )

    # Agent 0 pays 4.4 for a value of 4: excluded at the default tolerance only
    assert lab.prepare(spec, example_instance).cmp_tolerance == 0.5
    assert lab.sample(spec, example_instance, 0).participants == [0, 1]
    assert MechanismLab().sample(spec, example_instance, 0).participants == [1]


def test_lab_sweep_and_verify(lab: MechanismLab):
    rows = lab.sweep(load_experiment_config(CONFIGS / "sweep_zeta.yaml"))
    assert len(rows) == 3 * 81
    assert rows[0].expected_payment == pytest.approx(6.8)

    assert lab.verify(Suite.THM6, 0).passed

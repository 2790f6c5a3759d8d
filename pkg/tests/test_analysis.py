import math

import numpy as np
import pytest

from mechlab.analysis import (
    baseline_discard,
    baseline_trust,
    bound_check,
    cell_branches,
    consistency_robustness,
    discard_expectation,
    exact_expected_payment,
    expected_value,
    generalized_expected_value,
    generalized_payment_lower_bound,
    mean_and_se,
    monte_carlo,
    participation_probability,
    payment_lower_bound,
    simulate,
    sweep,
    threshold_instance,
    threshold_spec,
)
from mechlab.constants import CheckKind, MechanismName, Verdict
from mechlab.env import explicit_profile
from mechlab.mechanisms import prepare_mechanism
from mechlab.types import (
    Instance,
    MechanismSpec,
    PartitionCell,
    PartitionPredictor,
    PointPredictor,
    Polytope,
    PolytopePredictor,
    RangeSpec,
    SweepConfig,
    TuningParams,
    TypeProfile,
    ZeroPredictor,
)

THRESHOLD = dict(delta_err=2.0, delta_vcg=10.0)


def test_threshold_instance_payment():
    assert exact_expected_payment(15.0, zeta=0.0, lam=1.0, **THRESHOLD) == pytest.approx(6.8)
    assert payment_lower_bound(15.0, zeta=0.0, lam=1.0, **THRESHOLD) == pytest.approx(5.0)


def test_expected_value():
    assert expected_value(15.0, zeta=0.0, lam=1.0, **THRESHOLD) == 15.0
    # Draws k = 2, 3, 4 of K = 4 keep the agent
    assert expected_value(15.0, zeta=5.0, lam=1.0, **THRESHOLD) == pytest.approx(9.0)
    assert participation_probability(zeta=5.0, lam=1.0, **THRESHOLD) == pytest.approx(0.6)


def test_payment_is_affine_below_the_knee():
    for zeta in (0.0, 1.0, 2.0, 3.0):
        assert exact_expected_payment(15.0, zeta=zeta, lam=1.0, **THRESHOLD) == pytest.approx(
            6.8 + zeta
        )
        assert expected_value(15.0, zeta=zeta, lam=1.0, **THRESHOLD) == 15.0

    assert expected_value(15.0, zeta=3.5, lam=1.0, **THRESHOLD) < 15.0


def test_lower_bound_below_exact_payment():
    for delta_vcg in (0.5, 10.0, 40.0):
        for delta_err in (-1.0, 0.0, 2.0):
            for zeta in (0.0, 2.0, 6.0):
                for lam in (2.0**-10, 1.0, 4.0):
                    arguments = dict(
                        zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=delta_vcg
                    )
                    assert payment_lower_bound(15.0, **arguments) <= exact_expected_payment(
                        15.0, **arguments
                    ) + 1e-9


def test_exact_payment_matches_summation():
    zeta, lam, delta_err, delta_vcg = 4.0, 0.5, 1.0, 6.0
    top = math.ceil(math.log2((delta_vcg + zeta) / lam))
    prices = [15.0 - delta_err + zeta - lam * 2**k for k in range(top + 1)]
    summed = sum(price for price in prices if price <= 15.0) / (top + 1)

    assert exact_expected_payment(
        15.0, zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=delta_vcg
    ) == pytest.approx(summed)


def test_consistency_robustness():
    ratios = consistency_robustness([10.0])

    assert ratios.consistency_welfare == 1.0
    assert ratios.consistency_revenue == pytest.approx(0.2)
    assert consistency_robustness([1.0, 10.0, 100.0]).robustness_welfare == pytest.approx(1 / 8)


def test_generalized_branches(example_profile: TypeProfile, polygon_predictor: PolytopePredictor):
    partition = PartitionPredictor(
        cells=[PartitionCell(polytope=polygon_predictor.polytope, probability=1.0)]
    )
    branches = cell_branches(partition, example_profile, 0)

    assert branches == [pytest.approx((1.0, 1.0, 1.0))]
    assert generalized_expected_value(
        4.0, [(0.5, 2.0, 10.0), (0.5, 2.0, 10.0)], zeta=5.0, lam=1.0
    ) == pytest.approx(expected_value(4.0, zeta=5.0, lam=1.0, **THRESHOLD))
    assert generalized_payment_lower_bound(
        15.0, [(0.25, 2.0, 10.0), (0.75, 2.0, 10.0)], zeta=0.0, lam=1.0
    ) == pytest.approx(5.0)


def test_bound_check_verdicts():
    assert bound_check("a", CheckKind.AT_LEAST, 1.0, 1.0).verdict == Verdict.SATISFIED
    assert bound_check("a", CheckKind.AT_LEAST, 1.0, 2.0, 0.1).verdict == Verdict.SATISFIED
    assert bound_check("a", CheckKind.AT_LEAST, 1.0, 0.75, 0.1).verdict == Verdict.SATISFIED
    assert bound_check("a", CheckKind.AT_LEAST, 1.0, 0.65, 0.1).verdict == Verdict.INCONCLUSIVE
    assert bound_check("a", CheckKind.AT_LEAST, 1.0, 0.9, 0.01).verdict == Verdict.VIOLATED

    assert bound_check("e", CheckKind.EQUAL, 1.0, 1.25, 0.1).verdict == Verdict.SATISFIED
    assert bound_check("e", CheckKind.EQUAL, 1.0, 1.35, 0.1).verdict == Verdict.INCONCLUSIVE
    assert bound_check("e", CheckKind.EQUAL, 1.0, 1.5, 0.1).verdict == Verdict.VIOLATED
    assert (
        bound_check("e", CheckKind.EQUAL, 1.0, 1.005, tolerance=0.01).verdict
        == Verdict.SATISFIED
    )


def test_mean_and_se():
    assert mean_and_se(np.full(10, 2.5)) == (2.5, 0.0)

    mean, se = mean_and_se(np.array([1.0, 3.0]))
    assert mean == 2.0
    assert se == pytest.approx(1.0)

    with pytest.raises(ValueError):
        mean_and_se(np.array([]))


def test_baselines(example_profile: TypeProfile):
    exact = [PointPredictor(values=agent.values) for agent in example_profile.agents]
    aggressive = [
        PointPredictor(values=[value + 1.0 for value in agent.values])
        for agent in example_profile.agents
    ]

    trusted = baseline_trust(example_profile, exact)
    assert (trusted.welfare, trusted.revenue) == pytest.approx((5.0, 5.0))

    failed = baseline_trust(example_profile, aggressive)
    assert (failed.welfare, failed.revenue) == (0.0, 0.0)

    # β·VCG (5, 2) + (1 − β)·trust (5, 5)
    assert discard_expectation(example_profile, exact, 0.3) == pytest.approx((5.0, 4.1))

    rng = np.random.default_rng(0)
    assert baseline_discard(example_profile, exact, 1.0, rng).revenue == pytest.approx(2.0)
    kept = baseline_discard(example_profile, exact, 0.0, rng)
    assert kept.mechanism == MechanismName.DISCARD
    assert kept.draws == {"discarded": False}
    assert kept.revenue == pytest.approx(5.0)


def test_threshold_instance():
    instance = threshold_instance(15.0, **THRESHOLD)
    run = prepare_mechanism(threshold_spec(0.0, 1.0), instance)

    assert run.pivots[0] - run.baselines[0] == pytest.approx(10.0)
    assert run.profile.agents[0].values[run.allocation] == 15.0

    with pytest.raises(ValueError):
        threshold_instance(5.0, **THRESHOLD)


def test_monte_carlo_against_closed_forms():
    report = monte_carlo(threshold_spec(0.0, 1.0), threshold_instance(15.0, **THRESHOLD), 4000, 0)
    target = report.agents[0]

    assert report.trials == 4000
    assert target.exact_payment == pytest.approx(6.8)
    assert target.expected_value == 15.0
    assert target.payment_se > 0
    assert not [check for check in report.checks if check.verdict == Verdict.VIOLATED]


def test_monte_carlo_without_closed_forms(example_instance: Instance):
    report = monte_carlo(
        MechanismSpec(name=MechanismName.WEAKEST_TYPE_VCG),
        example_instance,
        10,
        0,
    )

    assert report.checks == []
    assert report.revenue_mean == pytest.approx(3.0)
    assert report.revenue_se == 0.0


def test_generalized_matches_cell_mixture():
    profile = explicit_profile(["target", "other"], [[15.0, 0.0], [0.0, 3.0]])
    partition = PartitionPredictor(
        cells=[
            PartitionCell(
                polytope=Polytope.parse_obj(
                    {"constraints": [{"coeffs": {0: 1}, "rel": "=", "bound": 15}]}
                ),
                probability=0.5,
            ),
            PartitionCell(
                polytope=Polytope.parse_obj(
                    {"constraints": [{"coeffs": {0: 1}, "rel": ">=", "bound": 9}]}
                ),
                probability=0.5,
            ),
        ]
    )
    instance = Instance(
        profile=profile,
        predictors=[ZeroPredictor(), PointPredictor(values=[0.0, 3.0])],
        partitions=[partition, None],
    )
    branches = cell_branches(partition, profile, 0)
    assert branches == [pytest.approx((0.5, 0.0, 12.0)), pytest.approx((0.5, 6.0, 6.0))]

    value = generalized_expected_value(15.0, branches, zeta=3.0, lam=1.0)
    payment = sum(
        probability
        * exact_expected_payment(
            15.0, zeta=3.0, lam=1.0, delta_err=delta_err, delta_vcg=delta_vcg
        )
        for probability, delta_err, delta_vcg in branches
    )
    assert value == pytest.approx(12.0)
    assert payment == pytest.approx(5.5)

    spec = MechanismSpec(
        name=MechanismName.GENERALIZED, params=TuningParams(zeta=[3.0], lambdas=[1.0])
    )
    samples = simulate(prepare_mechanism(spec, instance), 4000, 7)
    for column, target in ((2, value), (4, payment)):
        mean, se = mean_and_se(samples[:, column])
        assert se > 0
        assert abs(mean - target) <= 3 * se


def test_simulation_does_not_depend_on_workers():
    run = prepare_mechanism(threshold_spec(1.0, 0.25), threshold_instance(15.0, **THRESHOLD))

    serial = simulate(run, 2500, 42, workers=1)
    parallel = simulate(run, 2500, 42, workers=2)

    assert np.array_equal(serial, parallel)
    assert not np.array_equal(serial, simulate(run, 2500, 43))


def test_sweep_over_zeta():
    config = SweepConfig(
        theta_star=15.0,
        delta_vcg=10.0,
        delta_err=2.0,
        lambdas=[1.0],
        lambda_exponents=[-10],
        zeta_range=RangeSpec(start=0.0, stop=3.0, num=4),
    )
    rows = sweep(config, seed=0)

    assert len(rows) == 8
    assert [row.lam for row in rows[4:]] == [2.0**-10] * 4
    assert [row.expected_payment for row in rows[:4]] == pytest.approx([6.8, 7.8, 8.8, 9.8])
    assert all(row.empirical_payment is None for row in rows)


def test_sweep_with_trials():
    config = SweepConfig(
        theta_star=15.0,
        delta_vcg=10.0,
        lambdas=[1.0],
        err_range=RangeSpec(start=2.0, stop=2.0, num=1),
        trials=200,
    )
    (row,) = sweep(config, seed=1)

    assert row.param == 2.0
    assert row.empirical_payment is not None
    assert row.se is not None and row.se > 0


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(theta_star=15.0, delta_vcg=10.0, lambdas=[1.0])
    with pytest.raises(ValueError):
        SweepConfig(
            theta_star=15.0,
            delta_vcg=10.0,
            zeta_range=RangeSpec(start=0.0, stop=1.0, num=2),
        )
    with pytest.raises(ValueError):
        RangeSpec(start=0.0, stop=1.0, num=0)

import numpy as np
import pytest

from mechlab.constants import Suite, Verdict
from mechlab.geometry import in_polytope, is_feasible
from mechlab.mechanisms import prepare_subspace
from mechlab.types import BoundCheck, SingleItemPrior
from mechlab.verify import (
    dominated_box,
    optimal_single_item_revenue,
    random_polytope,
    run_suite,
    subspace_instance,
)


def violations(checks: list[BoundCheck]) -> list[str]:
    return [check.name for check in checks if check.verdict == Verdict.VIOLATED]


def unsatisfied(checks: list[BoundCheck]) -> list[str]:
    return [check.name for check in checks if check.verdict != Verdict.SATISFIED]


@pytest.mark.parametrize(
    "suite", [Suite.THM2, Suite.THM6, Suite.LP_ORACLE, Suite.LEMMA1, Suite.IC_IR]
)
def test_exact_suite_passes(suite: Suite):
    result = run_suite(suite, seed=0)

    assert result.suite == suite
    assert result.checks
    assert unsatisfied(result.checks) == []
    assert result.passed


@pytest.mark.parametrize(
    "suite, trials",
    [
        (Suite.THM5, 300),
        (Suite.THM7, 300),
        (Suite.THM9, 200),
        (Suite.MYERSON, 2000),
        (Suite.BASELINES, 500),
    ],
)
def test_monte_carlo_suite_has_no_violation(suite: Suite, trials: int):
    # A few checks may land between 3 and 4 SE at this many trials
    result = run_suite(suite, seed=0, trials=trials)

    assert result.suite == suite
    assert result.checks
    assert violations(result.checks) == []


def test_robustness_suite_gates_welfare():
    result = run_suite(Suite.THM7, seed=0, trials=200)
    gating = {check.name for check in result.checks}
    reported = {check.name for check in result.informational}

    assert {f"arbitrary instance {index}: welfare" for index in range(10)} <= gating
    assert {f"adversarial instance {index}: revenue" for index in range(10)} <= gating
    assert reported == {f"arbitrary instance {index}: revenue" for index in range(10)}
    assert len([name for name in gating if name.startswith("exact instance")]) >= 40


def test_payment_bound_suite_spot_values():
    result = run_suite(Suite.THM6, seed=0)
    by_name = {check.name: check for check in result.checks}

    assert by_name["exact payment at ζ=0, λ=1"].empirical == pytest.approx(6.8)
    assert by_name["lower bound at ζ=0, λ=1"].empirical == pytest.approx(5.0)
    assert by_name["draw count at λ=2^-10"].empirical == 15.0
    assert len(result.checks) == 4**4 + 3


def test_myerson_details():
    result = run_suite(Suite.MYERSON, seed=3, trials=100)

    assert result.details["reserve"] == pytest.approx(0.5, abs=1e-6)
    assert result.details["optimal_revenue"] == pytest.approx(5 / 12)


def test_rejects_non_positive_trials():
    with pytest.raises(ValueError):
        run_suite(Suite.THM5, seed=0, trials=0)


def test_suites_are_seeded():
    first = run_suite(Suite.LP_ORACLE, seed=5)
    second = run_suite(Suite.LP_ORACLE, seed=5)

    assert first == second


def test_failed_check_fails_the_suite():
    result = run_suite(Suite.THM6, seed=0)
    first, *rest = result.checks

    def with_first(verdict: Verdict):
        return result.copy(update={"checks": [first.copy(update={"verdict": verdict}), *rest]})

    assert not with_first(Verdict.VIOLATED).passed
    assert not with_first(Verdict.INCONCLUSIVE).passed

    reported = result.copy(
        update={"informational": [first.copy(update={"verdict": Verdict.VIOLATED})]}
    )
    assert reported.passed


def test_instance_generators():
    rng = np.random.default_rng(2)

    for _ in range(20):
        size = int(rng.integers(2, 7))
        assert is_feasible(random_polytope(rng, size), size)

    box = dominated_box([4.0, 0.0, 2.0], 0.5)
    assert in_polytope(box.polytope, np.array([4.0, 0.0, 2.0]))
    assert box.polytope.allocations() == [0, 2]

    for dims in (1, 2):
        profile, spec = subspace_instance(rng, dims=dims, value_bound=16)
        assert len(spec.bases[0]) == dims
        prepare_subspace(profile, spec)


def test_optimal_single_item_revenue():
    prior = SingleItemPrior(distribution="uniform")

    assert optimal_single_item_revenue(prior, 2, 0.5) == pytest.approx(5 / 12)
    # Without a reserve the second price auction earns E[min] = 1/3
    assert optimal_single_item_revenue(prior, 2, 0.0) == pytest.approx(1 / 3)

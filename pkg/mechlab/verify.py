"""Acceptance suites: each one checks a guarantee of the mechanisms on seeded instances.

Every suite returns a `SuiteResult` whose checks carry a verdict. A suite passes when
all of its checks are satisfied. Informational checks are kept apart and only reported.
"""
import logging
from itertools import product
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.stats

from mechlab.analysis import (
    baseline_trust,
    bound_check,
    consistency_robustness,
    discard_expectation,
    exact_expected_payment,
    monte_carlo,
    payment_lower_bound,
    threshold_instance,
    threshold_spec,
)
from mechlab.constants import (
    CMP_TOLERANCE,
    SOLVER_AGREEMENT_TOLERANCE,
    CheckKind,
    EnvironmentKind,
    MechanismName,
    Relation,
    Suite,
    Verdict,
)
from mechlab.env import (
    combinatorial_space,
    explicit_profile,
    make_environment,
    others_totals,
    replace_agent,
    welfare,
)
from mechlab.geometry import (
    error_measures,
    predicted_polytope,
    weakest_type,
    weakest_type_cg,
    weakest_type_lp,
    weakest_welfare_by_vertices,
)
from mechlab.mechanisms import (
    draw,
    halving_points,
    key_claim_tuple,
    myerson_reserve,
    prepare_groves,
    prepare_zeta_lambda,
    subspace_expectation,
    top_draw,
    vcg,
    weakest_type_am,
    weakest_type_vcg,
    weakest_welfares,
)
from mechlab.types import (
    AMParams,
    BoundCheck,
    Instance,
    LinearConstraint,
    MechanismSpec,
    PointPredictor,
    Polytope,
    PolytopePredictor,
    Predictor,
    SingleItemPrior,
    SubspaceSpec,
    SuiteResult,
    TuningParams,
    TypeProfile,
    TypeVector,
)

logger = logging.getLogger(__name__)

SuiteRunner = Callable[[int, Optional[int], int], SuiteResult]

# Monte Carlo trials per check when none are requested
DEFAULT_TRIALS = {
    Suite.THM5: 100_000,
    Suite.THM7: 20_000,
    Suite.THM9: 5_000,
    Suite.MYERSON: 50_000,
    Suite.BASELINES: 20_000,
}

REFERENCE_THETA_STAR = 15.0
REFERENCE_DELTA_VCG = 10.0
REFERENCE_DELTA_ERR = 2.0

RANDOM_ENVIRONMENTS = (
    EnvironmentKind.SHARED_OUTCOME,
    EnvironmentKind.COMBINATORIAL_AUCTION,
    EnvironmentKind.MATCHING,
)


def run_suite(
    suite: Suite, *, seed: int, trials: Optional[int] = None, workers: int = 1
) -> SuiteResult:
    """Runs one acceptance suite.

    Args:
        suite (Suite): the suite to run
        seed (int): master seed of every instance and Monte Carlo stream in the suite
        trials (Optional[int], optional): Monte Carlo trials per check. Defaults to the
            suite's own count; suites without Monte Carlo ignore it.
        workers (int, optional): joblib workers for Monte Carlo. Defaults to 1.

    Raises:
        ValueError: unknown suite or trials < 1

    Returns:
        SuiteResult: every check with its verdict
    """
    suite = Suite(suite)
    if trials is not None and trials < 1:
        raise ValueError("trials must be at least 1")

    result = SUITES[suite](seed, trials or DEFAULT_TRIALS.get(suite), workers)
    unsatisfied = [
        check.name for check in result.checks if check.verdict != Verdict.SATISFIED
    ]
    logger.info(
        "Suite %s: %d checks, %s",
        suite.value,
        len(result.checks),
        "passed" if result.passed else f"not satisfied {unsatisfied}",
    )

    return result


def verify_conservative_vcg(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """Weakest-type VCG with conservative predictors keeps OPT as welfare and earns
    OPT − Σ Δ_i^err as revenue."""
    rng = np.random.default_rng(seed)
    checks = []
    for index in range(20):
        _, profile = make_environment(
            RANDOM_ENVIRONMENTS[index % len(RANDOM_ENVIRONMENTS)],
            seed=_child_seed(rng),
            agents=3,
            items=2,
            outcomes=4,
        )
        predictors = [
            dominated_box(agent.values, float(rng.uniform(0.2, 1.0)))
            for agent in profile.agents
        ]
        outcome = weakest_type_vcg(profile, predictors)
        optimum, _ = welfare(profile)
        errors = sum(
            error_measures(predictor, profile, agent).delta_err
            for agent, predictor in enumerate(predictors)
        )
        checks += [
            bound_check(f"instance {index} welfare", CheckKind.EQUAL, optimum, outcome.welfare),
            bound_check(
                f"instance {index} revenue",
                CheckKind.EQUAL,
                optimum - errors,
                outcome.revenue,
                tolerance=SOLVER_AGREEMENT_TOLERANCE,
            ),
        ]

    return SuiteResult(suite=Suite.THM2, seed=seed, checks=checks)


def verify_threshold_grid(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """Simulated value and payment of M_{ζ,λ} against the closed forms on a grid of
    threshold instances around θ* = 15, Δ^VCG = 10."""
    checks = []
    grid = product((REFERENCE_DELTA_ERR, -1.0), (0.0, 1.0, 3.0, 5.0, 8.0, 12.0), (0.5, 1.0, 2.0))
    for index, (delta_err, zeta, lam) in enumerate(grid):
        label = f"Δerr={delta_err:g} ζ={zeta:g} λ={lam:g}"
        report = monte_carlo(
            threshold_spec(zeta, lam),
            threshold_instance(
                REFERENCE_THETA_STAR, delta_err=delta_err, delta_vcg=REFERENCE_DELTA_VCG
            ),
            trials,
            point_seed(seed, index),
            workers,
        )
        checks += [
            _prefixed(check, label)
            for check in report.checks
            if check.name in ("agent 0 expected value", "agent 0 expected payment")
        ]

        arguments = dict(zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=REFERENCE_DELTA_VCG)
        checks.append(
            bound_check(
                f"{label}: exact payment above its lower bound",
                CheckKind.AT_LEAST,
                payment_lower_bound(REFERENCE_THETA_STAR, **arguments),
                exact_expected_payment(REFERENCE_THETA_STAR, **arguments),
            )
        )

    checks.append(
        bound_check(
            "exact payment at ζ=0, λ=1",
            CheckKind.EQUAL,
            6.8,
            exact_expected_payment(
                REFERENCE_THETA_STAR,
                zeta=0.0,
                lam=1.0,
                delta_err=REFERENCE_DELTA_ERR,
                delta_vcg=REFERENCE_DELTA_VCG,
            ),
        )
    )

    return SuiteResult(suite=Suite.THM5, seed=seed, checks=checks)


def verify_payment_bound(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """The payment lower bound never exceeds the exact expected payment."""
    checks = []
    grid = product(
        (0.5, 3.0, 10.0, 40.0),
        (-1.0, 0.0, 2.0, 7.0),
        (0.0, 0.5, 2.0, 6.0),
        (2.0**-10, 0.25, 1.0, 4.0),
    )
    for delta_vcg, delta_err, zeta, lam in grid:
        arguments = dict(zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=delta_vcg)
        checks.append(
            bound_check(
                f"ΔVCG={delta_vcg:g} Δerr={delta_err:g} ζ={zeta:g} λ={lam:g}",
                CheckKind.AT_LEAST,
                payment_lower_bound(REFERENCE_THETA_STAR, **arguments),
                exact_expected_payment(REFERENCE_THETA_STAR, **arguments),
            )
        )

    reference = dict(delta_err=REFERENCE_DELTA_ERR, delta_vcg=REFERENCE_DELTA_VCG)
    checks += [
        bound_check(
            "lower bound at ζ=0, λ=1",
            CheckKind.EQUAL,
            5.0,
            payment_lower_bound(REFERENCE_THETA_STAR, zeta=0.0, lam=1.0, **reference),
        ),
        bound_check(
            "exact payment at ζ=0, λ=1",
            CheckKind.EQUAL,
            6.8,
            exact_expected_payment(REFERENCE_THETA_STAR, zeta=0.0, lam=1.0, **reference),
        ),
        bound_check(
            "draw count at λ=2^-10",
            CheckKind.EQUAL,
            15.0,
            1.0 + top_draw(REFERENCE_DELTA_VCG, 0.0, 2.0**-10),
        ),
    ]

    return SuiteResult(suite=Suite.THM6, seed=seed, checks=checks)


def verify_consistency_robustness(
    seed: int, trials: Optional[int], workers: int
) -> SuiteResult:
    """M_{1,1} with exact predictions keeps OPT deterministically and earns at least
    θ_i[α*]/(1 + ⌈log2(1 + Δ_i^VCG)⌉) per agent; with adversarial predictions it keeps
    the robustness ratios of welfare and VCG revenue.

    Adversarial predictions put the weakest welfare just below w(0, θ_{-i}) + 2^m − 1,
    the least favourable point of each draw range. With predictions at arbitrary levels
    the welfare ratio still has to hold; their revenue is informational.
    """
    rng = np.random.default_rng(seed)
    spec = zeta_lambda_spec(1.0, 1.0)
    checks = []
    informational = []
    details = {
        "ratio_at_delta_vcg_10": consistency_robustness([REFERENCE_DELTA_VCG]).dict()
    }
    checks.append(
        bound_check(
            "consistency revenue ratio at Δ^VCG=10",
            CheckKind.EQUAL,
            0.2,
            details["ratio_at_delta_vcg_10"]["consistency_revenue"],
        )
    )

    for index in range(10):
        # Values stay above 8 so that each agent's own value covers the price discount
        profile = shared_outcome_profile(rng, agents=3, outcomes=4, low=8.0)
        optimum, _ = welfare(profile)
        exact = [PointPredictor(values=agent.values) for agent in profile.agents]
        report = monte_carlo(
            spec,
            Instance(profile=profile, predictors=exact),
            trials,
            point_seed(seed, index),
            workers,
        )
        label = f"exact instance {index}"
        checks.append(
            bound_check(
                f"{label}: welfare",
                CheckKind.EQUAL,
                optimum,
                report.welfare_mean,
                report.welfare_se,
            )
        )
        values = profile.matrix[:, welfare(profile)[1]]
        for agent, guarantee in enumerate(report.agents):
            delta_vcg = error_measures(exact[agent], profile, agent).delta_vcg
            checks.append(
                bound_check(
                    f"{label}: agent {agent} exact payment",
                    CheckKind.AT_LEAST,
                    values[agent] / (1 + top_draw(delta_vcg, 1.0, 1.0)),
                    guarantee.exact_payment,
                )
            )
        checks += [_prefixed(check, label) for check in report.checks]

    for index in range(10):
        profile = shared_outcome_profile(rng, agents=3, outcomes=4)
        welfare_check, revenue_check = _robustness_checks(
            f"adversarial instance {index}",
            profile,
            [
                adversarial_point(profile, agent, int(rng.integers(1, 7)), rng)
                for agent in range(profile.num_agents)
            ],
            spec,
            trials,
            point_seed(seed, 100 + index),
            workers,
        )
        checks += [welfare_check, revenue_check]
        welfare_check, revenue_check = _robustness_checks(
            f"arbitrary instance {index}",
            profile,
            [
                arbitrary_point(profile, agent, float(rng.uniform(0.0, 50.0)), rng)
                for agent in range(profile.num_agents)
            ],
            spec,
            trials,
            point_seed(seed, 200 + index),
            workers,
        )
        checks.append(welfare_check)
        informational.append(revenue_check)

    return SuiteResult(
        suite=Suite.THM7,
        seed=seed,
        checks=checks,
        informational=informational,
        details=details,
    )


def verify_subspace(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """The subspace mechanism keeps OPT/log2 H of the welfare and OPT/(2k (log2 H)^k) of
    the revenue on types that lie on their agents' k-dimensional subspaces."""
    rng = np.random.default_rng(seed)
    checks = []
    details = {}

    for dims, value_bound in product((1, 2), (4, 16)):
        levels = value_bound.bit_length() - 1
        for index in range(20):
            profile, spec = subspace_instance(rng, dims=dims, value_bound=value_bound)
            optimum, _ = welfare(profile)
            welfare_bound = optimum / levels
            revenue_bound = optimum / (2 * dims * levels**dims)
            label = f"k={dims} H={value_bound} instance {index}"

            expected_welfare, expected_payments = subspace_expectation(profile, spec)
            report = monte_carlo(
                MechanismSpec(name=MechanismName.SUBSPACE, subspace=spec),
                Instance(profile=profile),
                trials,
                point_seed(seed, 1000 * dims + 10 * value_bound + index),
                workers,
            )
            checks += [
                bound_check(
                    f"{label}: exact welfare", CheckKind.AT_LEAST, welfare_bound, expected_welfare
                ),
                bound_check(
                    f"{label}: exact revenue",
                    CheckKind.AT_LEAST,
                    revenue_bound,
                    sum(expected_payments),
                ),
                bound_check(
                    f"{label}: simulated welfare",
                    CheckKind.AT_LEAST,
                    welfare_bound,
                    report.welfare_mean,
                    report.welfare_se,
                ),
                bound_check(
                    f"{label}: simulated revenue",
                    CheckKind.AT_LEAST,
                    revenue_bound,
                    report.revenue_mean,
                    report.revenue_se,
                ),
            ]
            for agent, basis in enumerate(spec.bases):
                values = profile.agents[agent].array
                combo = key_claim_tuple(values, basis, value_bound)
                covering = np.sum(
                    [
                        halving_points(direction, value_bound)[level - 1]
                        for direction, level in zip(basis, combo)
                    ],
                    axis=0,
                )
                checks.append(
                    bound_check(
                        f"{label}: agent {agent} halving cover",
                        CheckKind.AT_LEAST,
                        0.0,
                        float(np.min(covering - values / 2)),
                    )
                )

    single = explicit_profile(["only"], [[4.0]])
    expected_welfare, expected_payments = subspace_expectation(
        single, SubspaceSpec(bases=[[[1.0]]], value_bound=4)
    )
    details["single_allocation"] = {
        "expected_welfare": expected_welfare,
        "expected_payment": expected_payments[0],
    }
    checks += [
        bound_check(
            "single allocation expected payment", CheckKind.EQUAL, 1.5, expected_payments[0]
        ),
        bound_check("single allocation expected welfare", CheckKind.EQUAL, 4.0, expected_welfare),
    ]

    return SuiteResult(suite=Suite.THM9, seed=seed, checks=checks, details=details)


def verify_myerson(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """The revenue-optimal Groves pivot for two iid Uniform[0, 1] bidders is a second
    price auction with reserve 0.5, whose expected revenue is 5/12."""
    prior = SingleItemPrior(distribution="uniform")
    bidders = 2
    reserve = myerson_reserve(prior)
    optimum = optimal_single_item_revenue(prior, bidders, reserve)

    rng = np.random.default_rng(seed)
    space = combinatorial_space(bidders, 1, item_names=["item"])
    distribution = scipy.stats.uniform(loc=prior.loc, scale=prior.scale)
    revenues = np.zeros(trials)
    for trial, bids in enumerate(distribution.rvs(size=(trials, bidders), random_state=rng)):
        agents = []
        for bidder, bid in enumerate(bids):
            values = [0.0] * space.size
            values[space.index(f"item->{bidder}")] = float(bid)
            agents.append(TypeVector(values=values))
        profile = TypeProfile(space=space, agents=agents)
        revenues[trial] = draw(prepare_groves(profile, [prior])).revenue

    revenue_se = float(revenues.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    checks = [
        bound_check("reserve price", CheckKind.EQUAL, 0.5, reserve, tolerance=1e-6),
        bound_check(
            "revenue against the integrated optimum",
            CheckKind.EQUAL,
            optimum,
            float(revenues.mean()),
            revenue_se,
            tolerance=0.01 * optimum,
        ),
        bound_check("integrated optimum", CheckKind.EQUAL, 5 / 12, optimum, tolerance=1e-8),
    ]

    return SuiteResult(
        suite=Suite.MYERSON,
        seed=seed,
        checks=checks,
        details={"reserve": reserve, "optimal_revenue": optimum},
    )


def verify_lp_oracle(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """The weakest-type LP, vertex enumeration of its feasible region and constraint
    generation agree on random feasible polytopes."""
    rng = np.random.default_rng(seed)
    checks = []
    most_cuts = 0
    for index in range(100):
        size = int(rng.integers(2, 7))
        profile = explicit_profile(
            [f"a{allocation}" for allocation in range(size)],
            rng.uniform(0.0, 10.0, size=(2, size)).tolist(),
        )
        polytope = random_polytope(rng, size)
        offsets = others_totals(profile, 0)

        by_lp = weakest_type_lp(polytope, profile, 0)
        by_vertices = weakest_welfare_by_vertices(polytope, offsets)
        by_cuts = weakest_type_cg(polytope, profile, 0)
        most_cuts = max(most_cuts, by_cuts.cuts)

        label = f"polytope {index} (|Γ|={size})"
        checks += [
            bound_check(
                f"{label}: LP against vertices",
                CheckKind.EQUAL,
                by_vertices,
                by_lp.welfare,
                tolerance=SOLVER_AGREEMENT_TOLERANCE,
            ),
            bound_check(
                f"{label}: constraint generation against LP",
                CheckKind.EQUAL,
                by_lp.welfare,
                by_cuts.welfare,
                tolerance=SOLVER_AGREEMENT_TOLERANCE,
            ),
            bound_check(
                f"{label}: allocations cover the cuts",
                CheckKind.AT_LEAST,
                float(by_cuts.cuts),
                float(size),
            ),
        ]

    return SuiteResult(
        suite=Suite.LP_ORACLE, seed=seed, checks=checks, details={"most_cuts": most_cuts}
    )


def verify_weakest_price(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """The weakest-type VCG price of each agent is at least the weakest type's value for
    the chosen allocation, for conservative and aggressive predictors alike."""
    rng = np.random.default_rng(seed)
    smallest_margin = np.inf
    pairs = 0
    for _ in range(1000):
        _, profile = make_environment(
            RANDOM_ENVIRONMENTS[int(rng.integers(len(RANDOM_ENVIRONMENTS)))],
            seed=_child_seed(rng),
            agents=3,
            items=2,
            outcomes=4,
        )
        _, allocation = welfare(profile)
        for agent, predictor in enumerate(random_predictors(profile, rng)):
            result = weakest_type(predicted_polytope(predictor, profile, agent), profile, agent)
            price = result.welfare - others_totals(profile, agent)[allocation]
            smallest_margin = min(smallest_margin, price - result.weakest.values[allocation])
            pairs += 1

    return SuiteResult(
        suite=Suite.LEMMA1,
        seed=seed,
        checks=[
            bound_check(
                "smallest price margin over the weakest type",
                CheckKind.AT_LEAST,
                -CMP_TOLERANCE,
                float(smallest_margin),
            )
        ],
        details={"pairs": pairs},
    )


def verify_baselines(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """Trusting predictions completely gives (OPT, OPT) when they are exact and (0, 0)
    when they are all aggressive; discarding them with probability β averages the two
    branches. M_{1,1} on the same predictions is reported for comparison."""
    rng = np.random.default_rng(seed)
    beta = 0.3
    checks = []
    informational = []
    for index in range(10):
        profile = shared_outcome_profile(rng, agents=3, outcomes=4)
        optimum, _ = welfare(profile)
        exact = [PointPredictor(values=agent.values) for agent in profile.agents]
        aggressive = [
            PointPredictor(values=[value + 1.0 for value in agent.values])
            for agent in profile.agents
        ]
        mixed = [exact[0], aggressive[1], exact[2]]
        label = f"instance {index}"

        trusted = baseline_trust(profile, exact)
        misled = baseline_trust(profile, aggressive)
        checks += [
            bound_check(
                f"{label}: trust exact welfare",
                CheckKind.EQUAL,
                optimum,
                trusted.welfare,
                tolerance=SOLVER_AGREEMENT_TOLERANCE,
            ),
            bound_check(
                f"{label}: trust exact revenue",
                CheckKind.EQUAL,
                optimum,
                trusted.revenue,
                tolerance=SOLVER_AGREEMENT_TOLERANCE,
            ),
            bound_check(f"{label}: trust aggressive welfare", CheckKind.EQUAL, 0.0, misled.welfare),
            bound_check(f"{label}: trust aggressive revenue", CheckKind.EQUAL, 0.0, misled.revenue),
        ]

        expected_welfare, expected_revenue = discard_expectation(profile, mixed, beta)
        report = monte_carlo(
            MechanismSpec(name=MechanismName.DISCARD, beta=beta),
            Instance(profile=profile, predictors=mixed),
            trials,
            point_seed(seed, index),
            workers,
        )
        checks += [
            bound_check(
                f"{label}: discard welfare",
                CheckKind.EQUAL,
                expected_welfare,
                report.welfare_mean,
                report.welfare_se,
            ),
            bound_check(
                f"{label}: discard revenue",
                CheckKind.EQUAL,
                expected_revenue,
                report.revenue_mean,
                report.revenue_se,
            ),
        ]

        for name, predictors in (("exact", exact), ("aggressive", aggressive)):
            balanced = monte_carlo(
                zeta_lambda_spec(1.0, 1.0),
                Instance(profile=profile, predictors=predictors),
                trials,
                point_seed(seed, 100 + index),
                workers,
            )
            denominator = max(
                1 + top_draw(error_measures(predictor, profile, agent).delta_vcg, 1.0, 1.0)
                for agent, predictor in enumerate(predictors)
            )
            informational.append(
                bound_check(
                    f"{label}: M11 welfare with {name} predictions",
                    CheckKind.AT_LEAST,
                    optimum / denominator,
                    balanced.welfare_mean,
                    balanced.welfare_se,
                )
            )

    return SuiteResult(
        suite=Suite.BASELINES,
        seed=seed,
        checks=checks,
        informational=informational,
        details={"beta": beta},
    )


def verify_incentives(seed: int, trials: Optional[int], workers: int) -> SuiteResult:
    """No sampled misreport beats truth-telling against a fixed pivot, participants never
    lose, and the weakest-type affine maximizer with unit weights and no boosts is
    weakest-type VCG."""
    rng = np.random.default_rng(seed)
    incentive_margin = participation_margin = np.inf
    pivot_drift = excluded_payments = am_mismatches = 0.0

    for index in range(500):
        _, profile = make_environment(
            RANDOM_ENVIRONMENTS[index % len(RANDOM_ENVIRONMENTS)],
            seed=_child_seed(rng),
            agents=3,
            items=2,
            outcomes=4,
        )
        predictors = random_predictors(profile, rng)
        plain = weakest_type_vcg(profile, predictors)
        randomized = draw(
            prepare_zeta_lambda(profile, predictors, TuningParams(zeta=[1.0], lambdas=[1.0])),
            rng,
        )
        affine = weakest_type_am(
            profile,
            predictors,
            AMParams(weights=[1.0] * profile.num_agents, boosts=[0.0] * profile.space.size),
        )
        am_mismatches += float(
            affine.allocation != plain.allocation
            or affine.payments != plain.payments
            or affine.participants != plain.participants
        )

        for outcome in (plain, randomized):
            values = profile.matrix[:, outcome.allocation]
            for agent in range(profile.num_agents):
                participates = agent in outcome.participants
                truthful = values[agent] - outcome.payments[agent] if participates else 0.0
                if participates:
                    participation_margin = min(participation_margin, truthful)
                else:
                    excluded_payments += abs(outcome.payments[agent])

                for _ in range(20):
                    lie = misreport(profile, agent, rng)
                    utility = _misreport_utility(profile, agent, lie, outcome.pivots[agent])
                    incentive_margin = min(incentive_margin, truthful - utility)

        agent = int(rng.integers(profile.num_agents))
        lied = replace_agent(profile, agent, misreport(profile, agent, rng))
        pivot_drift = max(
            pivot_drift,
            abs(weakest_welfares(lied, predictors)[agent] - plain.pivots[agent]),
        )

    checks = [
        bound_check(
            "truthful utility minus misreport utility",
            CheckKind.AT_LEAST,
            -CMP_TOLERANCE,
            float(incentive_margin),
        ),
        bound_check(
            "participant utility", CheckKind.AT_LEAST, -CMP_TOLERANCE, float(participation_margin)
        ),
        bound_check("payments of excluded agents", CheckKind.EQUAL, 0.0, excluded_payments),
        bound_check("pivot change under a misreport", CheckKind.EQUAL, 0.0, pivot_drift),
        bound_check(
            "affine maximizer outcomes differing from weakest-type VCG",
            CheckKind.EQUAL,
            0.0,
            am_mismatches,
            tolerance=0.0,
        ),
    ]

    return SuiteResult(suite=Suite.IC_IR, seed=seed, checks=checks)


SUITES: dict[Suite, SuiteRunner] = {
    Suite.THM2: verify_conservative_vcg,
    Suite.THM5: verify_threshold_grid,
    Suite.THM6: verify_payment_bound,
    Suite.THM7: verify_consistency_robustness,
    Suite.THM9: verify_subspace,
    Suite.MYERSON: verify_myerson,
    Suite.LP_ORACLE: verify_lp_oracle,
    Suite.LEMMA1: verify_weakest_price,
    Suite.BASELINES: verify_baselines,
    Suite.IC_IR: verify_incentives,
}


def zeta_lambda_spec(zeta: float, lam: float) -> MechanismSpec:
    return MechanismSpec(
        name=MechanismName.ZETA_LAMBDA, params=TuningParams(zeta=[zeta], lambdas=[lam])
    )


def point_seed(seed: int, index: int) -> int:
    """An independent seed for the index-th point of a suite."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def shared_outcome_profile(
    rng: np.random.Generator,
    *,
    agents: int,
    outcomes: int,
    low: float = 0.0,
    high: float = 100.0,
) -> TypeProfile:
    return explicit_profile(
        [f"outcome_{outcome}" for outcome in range(outcomes)],
        rng.uniform(low, high, size=(agents, outcomes)).tolist(),
    )


def dominated_box(values: list[float], shrink: float) -> PolytopePredictor:
    """θ̃[α] ≥ shrink · θ[α] on every allocation the agent values: always conservative."""
    return PolytopePredictor(
        polytope=Polytope(
            constraints=[
                LinearConstraint(
                    coefficients={allocation: 1.0},
                    relation=Relation.GE,
                    bound=shrink * value,
                )
                for allocation, value in enumerate(values)
                if value > 0
            ]
        )
    )


def adversarial_point(
    profile: TypeProfile, agent: int, exponent: int, rng: np.random.Generator
) -> PointPredictor:
    """A point prediction with weakest welfare just below w(0, θ_{-i}) + 2^exponent − 1.

    Δ^VCG + 1 then sits just below a power of two, which makes the top draw of M_{1,1}
    price the agent at its VCG payment.
    """
    return arbitrary_point(profile, agent, 2.0**exponent - 1.0 - 1e-6, rng)


def arbitrary_point(
    profile: TypeProfile, agent: int, lift: float, rng: np.random.Generator
) -> PointPredictor:
    """A point prediction whose weakest welfare is w(0, θ_{-i}) + lift, reached on one
    random allocation."""
    others = others_totals(profile, agent)
    target = float(others.max()) + lift
    values = np.zeros(profile.space.size)
    allocation = int(rng.integers(profile.space.size))
    values[allocation] = target - others[allocation]

    return PointPredictor(values=values.tolist())


def random_predictors(profile: TypeProfile, rng: np.random.Generator) -> list[Predictor]:
    """One predictor per agent: a dominated box, a point above the type or the truth."""
    predictors = []
    for agent in profile.agents:
        choice = int(rng.integers(3))
        if choice == 0:
            predictors.append(dominated_box(agent.values, float(rng.uniform(0.0, 1.0))))
        elif choice == 1:
            bump = rng.uniform(0.0, 20.0, size=len(agent.values))
            predictors.append(PointPredictor(values=(agent.array + bump).tolist()))
        else:
            predictors.append(PointPredictor(values=agent.values))

    return predictors


def misreport(profile: TypeProfile, agent: int, rng: np.random.Generator) -> np.ndarray:
    """Either an unrelated type or the true type scaled and perturbed."""
    values = profile.agents[agent].array
    if rng.random() < 0.5:
        return rng.uniform(0.0, 2.0 * max(1.0, float(values.max())), size=values.size)

    return np.maximum(values * rng.uniform(0.0, 2.0) + rng.normal(0.0, 5.0, size=values.size), 0.0)


def subspace_instance(
    rng: np.random.Generator,
    *,
    dims: int,
    value_bound: int,
    agents: int = 2,
    size: int = 4,
) -> tuple[TypeProfile, SubspaceSpec]:
    """Types on k-dimensional subspaces spanned by directions with disjoint supports.

    The supports split the allocations, so every coordinate of a type is covered and
    can be kept inside [1, H].
    """
    supports = np.array_split(np.arange(size), dims)
    bases, rows = [], []
    for _ in range(agents):
        basis, values = [], np.zeros(size)
        for support in supports:
            direction = np.zeros(size)
            direction[support] = rng.uniform(0.5, 1.0, size=support.size)
            direction /= np.linalg.norm(direction)
            low = 1.0 / direction[support].min()
            high = value_bound / direction[support].max()
            values += rng.uniform(low, high) * direction
            basis.append(direction.tolist())
        bases.append(basis)
        rows.append(values.tolist())

    profile = explicit_profile([f"outcome_{allocation}" for allocation in range(size)], rows)

    return profile, SubspaceSpec(bases=bases, value_bound=value_bound)


def random_polytope(rng: np.random.Generator, size: int) -> Polytope:
    """One to four random constraints, all satisfied by a random anchor point."""
    anchor = rng.uniform(0.0, 5.0, size=size)
    constraints = []
    for _ in range(int(rng.integers(1, 5))):
        coefficients = rng.uniform(-1.0, 2.0, size=size)
        coefficients[rng.random(size) < 0.3] = 0.0
        if not coefficients.any():
            coefficients[int(rng.integers(size))] = 1.0
        level = float(coefficients @ anchor)
        relation = [Relation.LE, Relation.GE, Relation.EQ][int(rng.choice(3, p=[0.45, 0.45, 0.1]))]
        slack = float(rng.uniform(0.0, 3.0))
        bound = {Relation.LE: level + slack, Relation.GE: level - slack, Relation.EQ: level}[
            relation
        ]
        constraints.append(
            LinearConstraint(
                coefficients={
                    allocation: float(value)
                    for allocation, value in enumerate(coefficients)
                    if value != 0
                },
                relation=relation,
                bound=bound,
            )
        )

    return Polytope(constraints=constraints)


def optimal_single_item_revenue(prior: SingleItemPrior, bidders: int, reserve: float) -> float:
    """Expected revenue of a second price auction with the given reserve:
    n ∫_r φ(v) F(v)^{n−1} f(v) dv, integrated numerically."""
    distribution = getattr(scipy.stats, prior.distribution)(
        *prior.args, loc=prior.loc, scale=prior.scale
    )
    _, high = distribution.support()

    def integrand(value: float) -> float:
        density = distribution.pdf(value)
        virtual = value - distribution.sf(value) / density
        return bidders * virtual * distribution.cdf(value) ** (bidders - 1) * density

    revenue, _ = scipy.integrate.quad(integrand, reserve, high)

    return float(revenue)


def _robustness_checks(
    label: str,
    profile: TypeProfile,
    predictors: list[PointPredictor],
    spec: MechanismSpec,
    trials: int,
    seed: int,
    workers: int,
) -> tuple[BoundCheck, BoundCheck]:
    """Welfare and revenue of `spec` against the robustness ratios of the predictions."""
    optimum, _ = welfare(profile)
    vcg_revenue = vcg(profile).revenue
    ratios = consistency_robustness(
        [
            error_measures(predictor, profile, agent).delta_vcg
            for agent, predictor in enumerate(predictors)
        ]
    )
    instance = Instance(profile=profile, predictors=predictors)
    report = monte_carlo(spec, instance, trials, seed, workers)

    return (
        bound_check(
            f"{label}: welfare",
            CheckKind.AT_LEAST,
            ratios.robustness_welfare * optimum,
            report.welfare_mean,
            report.welfare_se,
        ),
        bound_check(
            f"{label}: revenue",
            CheckKind.AT_LEAST,
            ratios.robustness_revenue * vcg_revenue,
            report.revenue_mean,
            report.revenue_se,
        ),
    )


def _misreport_utility(
    profile: TypeProfile, agent: int, report: np.ndarray, pivot: float
) -> float:
    """True utility of reporting `report` when the agent's pivot stays fixed."""
    lied = replace_agent(profile, agent, report)
    _, allocation = welfare(lied)
    payment = pivot - others_totals(profile, agent)[allocation]
    if report[allocation] - payment < -CMP_TOLERANCE:
        return 0.0

    return float(profile.agents[agent].values[allocation] - payment)


def _prefixed(check: BoundCheck, prefix: str) -> BoundCheck:
    return check.copy(update={"name": f"{prefix}: {check.name}"})


def _child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**31))

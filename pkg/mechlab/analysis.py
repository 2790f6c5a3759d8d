import logging
import math
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from mechlab.constants import (
    CMP_TOLERANCE,
    INCONCLUSIVE_SE_MULTIPLIER,
    MONTE_CARLO_BLOCK_SIZE,
    SE_MULTIPLIER,
    CheckKind,
    MechanismName,
    Solver,
    Verdict,
)
from mechlab.env import explicit_profile, welfare, welfare_with_replacement
from mechlab.geometry import weakest_type_lp
from mechlab.mechanisms import (
    ceil_log2_plus,
    draw,
    prepare_discard,
    prepare_mechanism,
    top_draw,
    vcg,
    weakest_type_vcg,
)
from mechlab.types import (
    AgentGuarantee,
    BoundCheck,
    ConsistencyRobustness,
    GuaranteeReport,
    Instance,
    MechanismOutcome,
    MechanismRun,
    MechanismSpec,
    PartitionPredictor,
    PointPredictor,
    Predictor,
    SweepConfig,
    SweepRow,
    TuningParams,
    TypeProfile,
)
from mechlab.utils.rng import trial_rng

logger = logging.getLogger(__name__)


def first_participating_draw(*, delta_err: float, zeta: float, lam: float) -> int:
    """k* = ⌈log2⁺((ζ − Δ^err)/λ)⌉, with the exclusion rule's tolerance: an agent whose
    price exceeds its value by at most CMP_TOLERANCE still participates.
    """
    return ceil_log2_plus((zeta - delta_err - CMP_TOLERANCE) / lam)


def participation_probability(
    *, delta_err: float, delta_vcg: float, zeta: float, lam: float
) -> float:
    """Probability that an agent of M_{ζ,λ} is not excluded.

    The agent participates for every draw k ∈ {0..K} with 2^k λ ≥ ζ − Δ^err, that is for
    k ≥ k* = ⌈log2⁺((ζ − Δ^err)/λ)⌉.
    """
    top = top_draw(delta_vcg, zeta, lam)
    first = first_participating_draw(delta_err=delta_err, zeta=zeta, lam=lam)

    return max(0, top - first + 1) / (top + 1)


def expected_value(
    theta_star: float, *, zeta: float, lam: float, delta_err: float, delta_vcg: float
) -> float:
    """Closed-form expected value θ*·(1 − min(k*, K+1)/(1+K)) an agent of M_{ζ,λ} contributes.

    Args:
        theta_star (float): the agent's value for the efficient allocation
        zeta (float): price shift ζ
        lam (float): discretization step λ
        delta_err (float): prediction error w(θ) − min-welfare
        delta_vcg (float): prediction strength min-welfare − w(0, θ_{-i})

    Raises:
        MechanismDomainError: λ ≤ 0 or Δ^VCG + ζ ≤ 0

    Returns:
        float: expected value
    """
    return theta_star * participation_probability(
        delta_err=delta_err, delta_vcg=delta_vcg, zeta=zeta, lam=lam
    )


def exact_expected_payment(
    theta_star: float, *, zeta: float, lam: float, delta_err: float, delta_vcg: float
) -> float:
    """E[p] = (1/(1+K)) Σ_{k=k*}^{K} (θ* − Δ^err + ζ − 2^k λ), summed in closed form."""
    top = top_draw(delta_vcg, zeta, lam)
    first = first_participating_draw(delta_err=delta_err, zeta=zeta, lam=lam)
    if first > top:
        return 0.0

    count = top - first + 1
    discounts = math.ldexp(lam, top + 1) - math.ldexp(lam, first)

    return (count * (theta_star - delta_err + zeta) - discounts) / (top + 1)


def payment_lower_bound(
    theta_star: float, *, zeta: float, lam: float, delta_err: float, delta_vcg: float
) -> float:
    """factor · (θ* − (Δ^err − ζ)) − max(4(Δ^VCG + ζ), 2^{K+1} λ) / (1 + K).

    For (Δ^VCG + ζ)/λ ≥ 1 the maximum is always 4(Δ^VCG + ζ). Below that, K is clamped
    at 0 and the 2^{K+1} λ term keeps the bound under the exact expectation.
    """
    top = top_draw(delta_vcg, zeta, lam)
    factor = participation_probability(
        delta_err=delta_err, delta_vcg=delta_vcg, zeta=zeta, lam=lam
    )
    penalty = max(4 * (delta_vcg + zeta), math.ldexp(lam, top + 1))

    return factor * (theta_star - (delta_err - zeta)) - penalty / (1 + top)


def consistency_robustness(delta_vcgs: Sequence[float]) -> ConsistencyRobustness:
    """Welfare and revenue ratios of M_{1,1}.

    Each agent's denominator is 1 + ⌈log2(1 + Δ_i^VCG)⌉; the ratios use the largest.
    Consistency is measured against OPT with exact predictions, robustness against
    OPT and VCG revenue with arbitrary predictions.
    """
    denominator = max(1 + top_draw(delta_vcg, 1.0, 1.0) for delta_vcg in delta_vcgs)

    return ConsistencyRobustness(
        consistency_welfare=1.0,
        consistency_revenue=1 / denominator,
        robustness_welfare=1 / denominator,
        robustness_revenue=1 / denominator,
    )


def generalized_expected_value(
    theta_star: float,
    branches: Sequence[tuple[float, float, float]],
    *,
    zeta: float,
    lam: float,
) -> float:
    """Expected value over a discrete distribution of (probability, Δ^err, Δ^VCG) branches."""
    return sum(
        probability
        * expected_value(
            theta_star, zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=delta_vcg
        )
        for probability, delta_err, delta_vcg in branches
    )


def generalized_payment_lower_bound(
    theta_star: float,
    branches: Sequence[tuple[float, float, float]],
    *,
    zeta: float,
    lam: float,
) -> float:
    return sum(
        probability
        * payment_lower_bound(
            theta_star, zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=delta_vcg
        )
        for probability, delta_err, delta_vcg in branches
    )


def cell_branches(
    predictor: PartitionPredictor, profile: TypeProfile, agent: int
) -> list[tuple[float, float, float]]:
    """(probability, Δ^err, Δ^VCG) for each cell of a partition predictor without densities."""
    true_welfare, _ = welfare(profile)
    baseline = welfare_with_replacement(profile, agent, np.zeros(profile.space.size))

    branches = []
    for cell in predictor.cells:
        if cell.density is not None:
            raise ValueError("Branches are only defined for cells without a density")
        minimum = weakest_type_lp(cell.polytope, profile, agent).welfare
        branches.append((cell.probability, true_welfare - minimum, minimum - baseline))

    return branches


def baseline_trust(
    profile: TypeProfile, predictors: Sequence[Predictor], solver: Solver = Solver.LP
) -> MechanismOutcome:
    """Always trust the predictions: weakest-type VCG, which is M_{0,0}."""
    outcome = weakest_type_vcg(profile, predictors, solver)

    return outcome.copy(update={"mechanism": MechanismName.TRUST})


def baseline_discard(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    beta: float,
    rng: np.random.Generator,
    solver: Solver = Solver.LP,
) -> MechanismOutcome:
    """With probability β ignore the predictions and run VCG, otherwise trust them."""
    return draw(prepare_discard(profile, predictors, beta, solver=solver), rng)


def discard_expectation(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    beta: float,
    solver: Solver = Solver.LP,
) -> tuple[float, float]:
    """Exact expected (welfare, revenue) of the discard baseline: β·VCG + (1 − β)·trust."""
    plain = vcg(profile)
    trusted = weakest_type_vcg(profile, predictors, solver)

    return (
        beta * plain.welfare + (1 - beta) * trusted.welfare,
        beta * plain.revenue + (1 - beta) * trusted.revenue,
    )


def bound_check(
    name: str,
    kind: CheckKind,
    target: float,
    empirical: float,
    se: float = 0.0,
    *,
    multiplier: float = SE_MULTIPLIER,
    tolerance: Optional[float] = None,
) -> BoundCheck:
    """Verdict of an empirical mean against a closed-form target.

    The shortfall is how far the mean falls below the target for at-least checks and
    how far it lies from the target for equality checks. It is satisfied within
    multiplier·SE, inconclusive up to INCONCLUSIVE_SE_MULTIPLIER·SE and violated beyond.
    Both bands are widened by `tolerance`, by default CMP_TOLERANCE relative to the target.
    """
    slack = CMP_TOLERANCE * max(1.0, abs(target)) if tolerance is None else tolerance
    if kind == CheckKind.AT_LEAST:
        shortfall = max(0.0, target - empirical)
    else:
        shortfall = abs(empirical - target)

    if shortfall <= multiplier * se + slack:
        verdict = Verdict.SATISFIED
    elif shortfall <= INCONCLUSIVE_SE_MULTIPLIER * se + slack:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.VIOLATED

    return BoundCheck(
        name=name,
        kind=kind,
        target=target,
        empirical=empirical,
        se=se,
        verdict=verdict,
    )


def simulate_block(run: MechanismRun, master_seed: int, start: int, stop: int) -> np.ndarray:
    """Rows (welfare, revenue, realized values..., payments...) for trials start..stop-1."""
    num_agents = run.profile.num_agents
    values = run.profile.matrix[:, run.allocation]
    rows = np.zeros((stop - start, 2 + 2 * num_agents))

    for row, trial in enumerate(range(start, stop)):
        outcome = draw(run, trial_rng(master_seed, trial))
        realized = np.zeros(num_agents)
        realized[outcome.participants] = values[outcome.participants]
        rows[row, 0] = outcome.welfare
        rows[row, 1] = outcome.revenue
        rows[row, 2 : 2 + num_agents] = realized
        rows[row, 2 + num_agents :] = outcome.payments

    return rows


def mean_and_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error; constant samples have SE exactly 0."""
    if samples.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    if np.ptp(samples) == 0:
        return float(samples[0]), 0.0
    if samples.size == 1:
        return float(samples[0]), 0.0

    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size))


def simulate(
    run: MechanismRun,
    trials: int,
    master_seed: int,
    workers: int = 1,
    *,
    block_size: int = MONTE_CARLO_BLOCK_SIZE,
) -> np.ndarray:
    """Draws `trials` outcomes, split into fixed blocks that workers process in any order.

    The block split does not depend on `workers`, and every trial draws from its own
    stream, so the samples are identical for any number of workers.
    """
    if trials < 1:
        raise ValueError("Monte Carlo needs at least one trial")

    blocks = Parallel(n_jobs=workers)(
        delayed(simulate_block)(run, master_seed, start, min(start + block_size, trials))
        for start in range(0, trials, block_size)
    )

    return np.vstack(blocks)


def monte_carlo(
    spec: MechanismSpec,
    instance: Instance,
    trials: int,
    master_seed: int,
    workers: int = 1,
    *,
    solver: Solver = Solver.LP,
    se_multiplier: float = SE_MULTIPLIER,
    cmp_tolerance: float = CMP_TOLERANCE,
) -> GuaranteeReport:
    """Runs a mechanism repeatedly and compares the empirical means with the closed forms.

    Closed forms (expected value, exact expected payment, payment lower bound) are
    reported per agent for M_{ζ,λ}; other mechanisms get empirical statistics only.

    Args:
        spec (MechanismSpec): the mechanism and its parameters
        instance (Instance): profile and predictors
        trials (int): number of trials
        master_seed (int): seed of the per-trial streams
        workers (int, optional): joblib workers. Defaults to 1.
        solver (Solver, optional): weakest-type solver. Defaults to Solver.LP.
        se_multiplier (float, optional): standard errors allowed by the verdicts.
            Defaults to SE_MULTIPLIER.
        cmp_tolerance (float, optional): slack of the exclusion rule. Defaults to CMP_TOLERANCE.

    Raises:
        ValueError: trials < 1
        MechanismDomainError: invalid mechanism parameters

    Returns:
        GuaranteeReport: empirical statistics with a verdict per closed-form bound
    """
    run = prepare_mechanism(spec, instance, solver=solver).copy(
        update={"cmp_tolerance": cmp_tolerance}
    )
    samples = simulate(run, trials, master_seed, workers)
    num_agents = run.profile.num_agents
    logger.debug("Simulated %d trials of %s", trials, run.mechanism.value)

    welfare_mean, welfare_se = mean_and_se(samples[:, 0])
    revenue_mean, revenue_se = mean_and_se(samples[:, 1])
    closed_forms = _closed_forms(run)

    agents, checks = [], []
    for agent in range(num_agents):
        value_mean, value_se = mean_and_se(samples[:, 2 + agent])
        payment_mean, payment_se = mean_and_se(samples[:, 2 + num_agents + agent])
        forms = closed_forms[agent] if closed_forms else {}
        agents.append(
            AgentGuarantee(
                agent=agent,
                empirical_value=value_mean,
                value_se=value_se,
                empirical_payment=payment_mean,
                payment_se=payment_se,
                **forms,
            )
        )
        if forms:
            checks += [
                bound_check(
                    f"agent {agent} expected value",
                    CheckKind.EQUAL,
                    forms["expected_value"],
                    value_mean,
                    value_se,
                    multiplier=se_multiplier,
                ),
                bound_check(
                    f"agent {agent} expected payment",
                    CheckKind.EQUAL,
                    forms["exact_payment"],
                    payment_mean,
                    payment_se,
                    multiplier=se_multiplier,
                ),
                bound_check(
                    f"agent {agent} payment lower bound",
                    CheckKind.AT_LEAST,
                    forms["payment_lower_bound"],
                    payment_mean,
                    payment_se,
                    multiplier=se_multiplier,
                ),
            ]

    welfare_bound = revenue_bound = None
    if closed_forms:
        welfare_bound = sum(forms["expected_value"] for forms in closed_forms)
        revenue_bound = sum(forms["payment_lower_bound"] for forms in closed_forms)
        checks += [
            bound_check(
                "welfare",
                CheckKind.EQUAL,
                welfare_bound,
                welfare_mean,
                welfare_se,
                multiplier=se_multiplier,
            ),
            bound_check(
                "revenue lower bound",
                CheckKind.AT_LEAST,
                revenue_bound,
                revenue_mean,
                revenue_se,
                multiplier=se_multiplier,
            ),
        ]

    return GuaranteeReport(
        mechanism=run.mechanism,
        trials=trials,
        seed=master_seed,
        se_multiplier=se_multiplier,
        agents=agents,
        welfare_mean=welfare_mean,
        welfare_se=welfare_se,
        revenue_mean=revenue_mean,
        revenue_se=revenue_se,
        welfare_bound=welfare_bound,
        revenue_bound=revenue_bound,
        checks=checks,
    )


def _closed_forms(run: MechanismRun) -> Optional[list[dict[str, float]]]:
    if run.mechanism != MechanismName.ZETA_LAMBDA:
        return None

    true_welfare, _ = welfare(run.profile)
    values = run.profile.matrix[:, run.allocation]
    forms = []
    for agent in range(run.profile.num_agents):
        zeta, lam = run.zeta[agent], run.lambdas[agent]
        minimum = run.pivots[agent] - zeta
        arguments = dict(
            zeta=zeta,
            lam=lam,
            delta_err=true_welfare - minimum,
            delta_vcg=minimum - run.baselines[agent],
        )
        forms.append(
            {
                "expected_value": expected_value(values[agent], **arguments),
                "exact_payment": exact_expected_payment(values[agent], **arguments),
                "payment_lower_bound": payment_lower_bound(values[agent], **arguments),
            }
        )

    return forms


def threshold_instance(
    theta_star: float, *, delta_err: float, delta_vcg: float
) -> Instance:
    """A two-allocation instance whose first agent has the given θ*, Δ^err and Δ^VCG.

    Agent 0 values the efficient allocation at θ* and is predicted exactly at weakest
    welfare θ* − Δ^err. Agent 1 only values the other allocation, at
    θ* − Δ^err − Δ^VCG, which sets w(0, θ_{-0}). Agent 1 is predicted exactly.

    Raises:
        ValueError: the triple is not realizable (Δ^VCG < 0, Δ^err + Δ^VCG < 0 or
            θ* − Δ^err − Δ^VCG < 0)
    """
    other = theta_star - delta_err - delta_vcg
    if delta_vcg < 0 or other < 0 or delta_err + delta_vcg < 0:
        raise ValueError(
            f"Cannot realize θ*={theta_star}, Δ^err={delta_err}, Δ^VCG={delta_vcg}"
        )

    profile = explicit_profile(["target", "other"], [[theta_star, 0.0], [0.0, other]])

    return Instance(
        profile=profile,
        predictors=[
            PointPredictor(values=[theta_star - delta_err, 0.0]),
            PointPredictor(values=[0.0, other]),
        ],
    )


def threshold_spec(zeta: float, lam: float) -> MechanismSpec:
    """M_{ζ,λ} for the first agent of a threshold instance; the second agent, whose
    Δ^VCG is 0, runs M_{1,1}."""
    return MechanismSpec(
        name=MechanismName.ZETA_LAMBDA,
        params=TuningParams(zeta=[zeta, 1.0], lambdas=[lam, 1.0]),
    )


def is_realizable(theta_star: float, *, delta_err: float, delta_vcg: float) -> bool:
    return delta_vcg >= 0 and delta_err + delta_vcg >= 0 and theta_star - delta_err - delta_vcg >= 0


def sweep(config: SweepConfig, *, seed: int, workers: int = 1) -> list[SweepRow]:
    """Closed-form expected value and payment of one agent of M_{ζ,λ} over a range.

    The range runs over ζ (zeta_range) or Δ^err (err_range), once per λ. With trials > 0
    each realizable point also gets Monte Carlo estimates on a threshold instance;
    every point reuses `seed`.
    """
    by_zeta = config.zeta_range is not None
    points = (config.zeta_range or config.err_range).points()

    rows = []
    for lam in config.lambda_values():
        for param in points:
            zeta, delta_err = (param, config.delta_err) if by_zeta else (config.zeta, param)
            arguments = dict(
                zeta=zeta, lam=lam, delta_err=delta_err, delta_vcg=config.delta_vcg
            )
            row = SweepRow(
                param=param,
                lam=lam,
                expected_value=expected_value(config.theta_star, **arguments),
                expected_payment=exact_expected_payment(config.theta_star, **arguments),
            )
            if config.trials and is_realizable(
                config.theta_star, delta_err=delta_err, delta_vcg=config.delta_vcg
            ):
                report = monte_carlo(
                    threshold_spec(zeta, lam),
                    threshold_instance(
                        config.theta_star, delta_err=delta_err, delta_vcg=config.delta_vcg
                    ),
                    config.trials,
                    seed,
                    workers,
                )
                target = report.agents[0]
                row = row.copy(
                    update={
                        "empirical_value": target.empirical_value,
                        "empirical_payment": target.empirical_payment,
                        "se": target.payment_se,
                    }
                )
            rows.append(row)

    logger.info("Swept %d points", len(rows))

    return rows

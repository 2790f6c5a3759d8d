import logging
import math
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from mechlab.constants import CMP_TOLERANCE, MechanismName, Solver
from mechlab.env import best_allocation, others_totals, welfare, welfare_with_replacement
from mechlab.errors import MechanismDomainError
from mechlab.geometry import (
    draw_from_density,
    predicted_polytope,
    weakest_for_offsets,
    weakest_type,
)
from mechlab.types import (
    AMParams,
    CellPlan,
    DiscretePrior,
    Instance,
    LevelPlan,
    MechanismOutcome,
    MechanismRun,
    MechanismSpec,
    PartitionCell,
    PartitionPredictor,
    Predictor,
    PriorModel,
    SingleItemPrior,
    SubspaceSpec,
    TuningParams,
    TypeProfile,
    ZeroPredictor,
)
from mechlab.utils.rng import agent_streams

logger = logging.getLogger(__name__)

# Allowed distance of a subspace type from its span, and from the [1, H] box
SUBSPACE_TOLERANCE = 1e-6


def ceil_log2(x: float) -> int:
    """Smallest integer k with 2^k ≥ x, exact for every positive float."""
    if x <= 0:
        raise ValueError("ceil_log2 needs a positive argument")
    mantissa, exponent = math.frexp(x)

    return exponent - 1 if mantissa == 0.5 else exponent


def ceil_log2_plus(x: float) -> int:
    """⌈log2⁺(x)⌉: 0 for x ≤ 1, else ⌈log2(x)⌉."""
    return 0 if x <= 1 else ceil_log2(x)


def top_draw(delta_vcg: float, zeta: float, lam: float) -> int:
    """K = ⌈log2((Δ^VCG + ζ)/λ)⌉, clamped at 0 so the draw set {0..K} is never empty.

    Raises:
        MechanismDomainError: λ ≤ 0 or Δ^VCG + ζ ≤ 0
    """
    if lam <= 0:
        raise MechanismDomainError(f"λ must be positive, got {lam}")
    if delta_vcg + zeta <= 0:
        raise MechanismDomainError(
            f"Δ^VCG + ζ must be positive, got {delta_vcg} + {zeta}"
        )

    return max(0, ceil_log2((delta_vcg + zeta) / lam))


def vcg(profile: TypeProfile) -> MechanismOutcome:
    return draw(prepare_vcg(profile))


def weakest_type_vcg(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    solver: Solver = Solver.LP,
) -> MechanismOutcome:
    return draw(prepare_weakest_type_vcg(profile, predictors, solver=solver))


def mechanism_zeta_zero(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    zeta: Sequence[float],
    solver: Solver = Solver.LP,
) -> MechanismOutcome:
    return draw(prepare_zeta_zero(profile, predictors, zeta, solver=solver))


def mechanism_zeta_lambda(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    params: TuningParams,
    rng: np.random.Generator,
    solver: Solver = Solver.LP,
) -> MechanismOutcome:
    return draw(prepare_zeta_lambda(profile, predictors, params, solver=solver), rng)


def mechanism_generalized(
    profile: TypeProfile,
    predictors: Sequence[PartitionPredictor],
    params: TuningParams,
    rng: np.random.Generator,
    solver: Solver = Solver.LP,
) -> MechanismOutcome:
    return draw(prepare_generalized(profile, predictors, params, solver=solver), rng)


def subspace_mechanism(
    profile: TypeProfile, spec: SubspaceSpec, rng: np.random.Generator
) -> MechanismOutcome:
    return draw(prepare_subspace(profile, spec), rng)


def groves_mechanism(profile: TypeProfile, priors: Sequence[PriorModel]) -> MechanismOutcome:
    return draw(prepare_groves(profile, priors))


def weakest_type_am(
    profile: TypeProfile, predictors: Sequence[Predictor], am: AMParams
) -> MechanismOutcome:
    return draw(prepare_weakest_type_am(profile, predictors, am))


def prepare_vcg(profile: TypeProfile) -> MechanismRun:
    zeros = np.zeros(profile.space.size)
    pivots = [
        welfare_with_replacement(profile, agent, zeros)
        for agent in range(profile.num_agents)
    ]

    return _run(MechanismName.VCG, profile, pivots)


def prepare_weakest_type_vcg(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    *,
    solver: Solver = Solver.LP,
    mechanism: MechanismName = MechanismName.WEAKEST_TYPE_VCG,
) -> MechanismRun:
    """The pivot of agent i is the weakest welfare min over θ̃ ∈ T_i of w(θ̃, θ_{-i})."""
    return _run(mechanism, profile, weakest_welfares(profile, predictors, solver))


def prepare_zeta_zero(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    zeta: Sequence[float],
    *,
    solver: Solver = Solver.LP,
) -> MechanismRun:
    zetas = _per_agent(zeta, profile.num_agents, "ζ")
    minimum = weakest_welfares(profile, predictors, solver)

    return _run(
        MechanismName.ZETA_ZERO,
        profile,
        [value + shift for value, shift in zip(minimum, zetas)],
        zeta=zetas,
    )


def prepare_zeta_lambda(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    params: TuningParams,
    *,
    solver: Solver = Solver.LP,
) -> MechanismRun:
    """Prepares M_{ζ,λ}: each trial draws k_i uniformly from {0..K_i} and uses the pivot
    min-welfare_i + ζ_i − 2^{k_i} λ_i.

    Args:
        profile (TypeProfile): the reported profile
        predictors (Sequence[Predictor]): one predictor per agent
        params (TuningParams): ζ and λ, one value or one per agent
        solver (Solver, optional): weakest-type solver. Defaults to Solver.LP.

    Raises:
        MechanismDomainError: λ_i ≤ 0 or Δ_i^VCG + ζ_i ≤ 0 for some agent
        InfeasiblePolytopeError: a predicted polytope is empty

    Returns:
        MechanismRun: the prepared mechanism, ready for `draw`
    """
    zetas, lambdas = params.for_agents(profile.num_agents)
    minimum = weakest_welfares(profile, predictors, solver)
    baselines = _baselines(profile)
    top_draws = [
        top_draw(value - baseline, zeta, lam)
        for value, baseline, zeta, lam in zip(minimum, baselines, zetas, lambdas)
    ]

    return _run(
        MechanismName.ZETA_LAMBDA,
        profile,
        [value + zeta for value, zeta in zip(minimum, zetas)],
        baselines=baselines,
        zeta=zetas,
        lambdas=lambdas,
        top_draws=top_draws,
    )


def prepare_generalized(
    profile: TypeProfile,
    predictors: Sequence[PartitionPredictor],
    params: TuningParams,
    *,
    solver: Solver = Solver.LP,
) -> MechanismRun:
    """Prepares the mechanism for partition predictors.

    Cells without a density have a deterministic weakest welfare, solved here once.
    Cells with a density are sampled at draw time.
    """
    _check_count(profile, predictors)
    zetas, lambdas = params.for_agents(profile.num_agents)
    baselines = _baselines(profile)

    cells = []
    for agent, predictor in enumerate(predictors):
        plans = []
        for cell in predictor.cells:
            if cell.density is not None:
                plans.append(CellPlan(probability=cell.probability, density=cell.density))
                continue
            value = weakest_type(cell.polytope, profile, agent, solver).welfare
            # Fail early rather than at the first trial that picks this cell
            top_draw(value - baselines[agent], zetas[agent], lambdas[agent])
            plans.append(CellPlan(probability=cell.probability, weakest_welfare=value))
        cells.append(plans)

    return _run(
        MechanismName.GENERALIZED,
        profile,
        [0.0] * profile.num_agents,
        baselines=baselines,
        others=_others(profile),
        zeta=zetas,
        lambdas=lambdas,
        cells=cells,
    )


def single_cell_partition(
    predictor: Predictor, profile: TypeProfile, agent: int
) -> PartitionPredictor:
    return PartitionPredictor(
        cells=[
            PartitionCell(
                polytope=predicted_polytope(predictor, profile, agent), probability=1.0
            )
        ]
    )


def ray_endpoint(direction: Sequence[float], value_bound: float) -> np.ndarray:
    """The point on the ray through `direction` with sup-norm `value_bound`."""
    direction = np.asarray(direction, dtype=float)
    peak = float(direction.max())
    if peak <= 0:
        raise MechanismDomainError("A basis direction needs a positive coordinate")

    return direction * value_bound / peak


def halving_points(direction: Sequence[float], value_bound: int) -> list[np.ndarray]:
    """z^ℓ = y / 2^ℓ for ℓ = 1..log2 H, y the ray endpoint."""
    endpoint = ray_endpoint(direction, value_bound)
    levels = value_bound.bit_length() - 1

    return [endpoint / 2**level for level in range(1, levels + 1)]


def level_size(level: int, levels: int, dims: int) -> int:
    """Number of tuples in {1..levels}^dims whose minimum is `level`."""
    if not 1 <= level <= levels:
        raise ValueError(f"Level {level} is outside 1..{levels}")

    return (levels - level + 1) ** dims - (levels - level) ** dims


def key_claim_tuple(
    values: Sequence[float], basis: Sequence[Sequence[float]], value_bound: int
) -> tuple[int, ...]:
    """Per direction, the smallest level whose halving point the type's projection dominates.

    Raises:
        MechanismDomainError: some projection dominates no halving point
    """
    values = np.asarray(values, dtype=float)
    levels = []
    for direction in basis:
        direction = np.asarray(direction, dtype=float)
        projection = float(values @ direction) * direction
        level = next(
            (
                index
                for index, point in enumerate(halving_points(direction, value_bound), start=1)
                if (projection >= point - SUBSPACE_TOLERANCE).all()
            ),
            None,
        )
        if level is None:
            raise MechanismDomainError("Type projection is below every halving point")
        levels.append(level)

    return tuple(levels)


def level_tuples(level: int, levels: int, dims: int) -> list[tuple[int, ...]]:
    return [
        combo
        for combo in product(range(level, levels + 1), repeat=dims)
        if min(combo) == level
    ]


def prepare_subspace(profile: TypeProfile, spec: SubspaceSpec) -> MechanismRun:
    """Prepares the subspace mechanism: halving points per agent and direction.

    Raises:
        MechanismDomainError: a type lies outside [1, H]^Γ or off its agent's subspace
    """
    if len(spec.bases) != profile.num_agents:
        raise MechanismDomainError("Every agent needs a subspace basis")

    size = profile.space.size
    plans = []
    for agent, basis in enumerate(spec.bases):
        directions = np.array(basis, dtype=float)
        if directions.shape[1] != size:
            raise MechanismDomainError(
                f"Basis of agent {agent} has dimension {directions.shape[1]}, expected {size}"
            )

        values = profile.agents[agent].array
        if (values < 1 - SUBSPACE_TOLERANCE).any() or (
            values > spec.value_bound + SUBSPACE_TOLERANCE
        ).any():
            raise MechanismDomainError(f"Type of agent {agent} is outside [1, H]")
        residual = values - directions.T @ (directions @ values)
        if np.abs(residual).max() > SUBSPACE_TOLERANCE:
            raise MechanismDomainError(f"Type of agent {agent} is off its subspace")

        plans.append(
            LevelPlan(
                points=[
                    [point.tolist() for point in halving_points(direction, spec.value_bound)]
                    for direction in basis
                ],
                levels=spec.levels,
            )
        )

    return _run(
        MechanismName.SUBSPACE,
        profile,
        [0.0] * profile.num_agents,
        others=_others(profile),
        levels=plans,
    )


def subspace_expectation(
    profile: TypeProfile, spec: SubspaceSpec
) -> tuple[float, list[float]]:
    """Exact expected welfare and payments of the subspace mechanism.

    Enumerates every level tuple with its probability 1 / (L · |W_ℓ|), ℓ the tuple minimum.
    """
    run = prepare_subspace(profile, spec)
    values = profile.matrix[:, run.allocation]

    expected_welfare = 0.0
    expected_payments = []
    for agent, plan in enumerate(run.levels):
        dims = len(plan.points)
        payment = 0.0
        for level in range(1, plan.levels + 1):
            probability = 1 / (plan.levels * level_size(level, plan.levels, dims))
            for combo in level_tuples(level, plan.levels, dims):
                pivot = _subspace_pivot(run, agent, combo)
                price = pivot - run.offsets[agent]
                if values[agent] - price >= -run.cmp_tolerance:
                    payment += probability * price
                    expected_welfare += probability * values[agent]
        expected_payments.append(payment)

    return expected_welfare, expected_payments


def groves_optimal_pivot(
    prior: PriorModel, profile: TypeProfile, agent: int, *, grid: int = 200
) -> float:
    """The pivot h_i(θ_{-i}) maximizing agent i's expected payment under the prior.

    For a discrete prior the candidates are the welfares w(θ̂, θ_{-i}) of the support
    types, ties going to the smallest. For iid single-item values the pivot is
    max{w(0, θ_{-i}), φ^{-1}(0)}, a second-price auction with Myerson's reserve.

    Args:
        prior (PriorModel): prior over agent i's type
        profile (TypeProfile): the reported profile
        agent (int): index of agent i
        grid (int, optional): grid size for the regularity check. Defaults to 200.

    Raises:
        MechanismDomainError: the single-item prior is not regular or has an empty support

    Returns:
        float: the pivot
    """
    if isinstance(prior, SingleItemPrior):
        baseline = welfare_with_replacement(profile, agent, np.zeros(profile.space.size))
        return max(baseline, myerson_reserve(prior, grid=grid))

    welfares, _, _ = _discrete_prior_table(prior, profile, agent)
    best_pivot, best_revenue = None, -math.inf
    for candidate in np.unique(welfares):
        revenue = groves_expected_payment(prior, profile, agent, float(candidate))
        if revenue > best_revenue:
            best_pivot, best_revenue = float(candidate), revenue

    return best_pivot


def groves_expected_payment(
    prior: DiscretePrior, profile: TypeProfile, agent: int, pivot: float
) -> float:
    """E over θ̂ ~ prior of (θ̂[α*] − w(θ̂, θ_{-i}) + pivot) · 1[pivot ≤ w(θ̂, θ_{-i})]."""
    welfares, values, probabilities = _discrete_prior_table(prior, profile, agent)
    kept = pivot <= welfares + CMP_TOLERANCE

    return float(np.sum(probabilities[kept] * (values[kept] - welfares[kept] + pivot)))


def _discrete_prior_table(
    prior: DiscretePrior, profile: TypeProfile, agent: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    others = others_totals(profile, agent)
    support = np.array(prior.support, dtype=float)
    if support.shape[1] != others.size:
        raise MechanismDomainError("Prior support types must cover every allocation")

    welfares, values = [], []
    for candidate in support:
        value, allocation = best_allocation(others + candidate)
        welfares.append(value)
        values.append(candidate[allocation])

    return np.array(welfares), np.array(values), np.array(prior.probabilities)


def myerson_reserve(prior: SingleItemPrior, *, grid: int = 200, tol: float = 1e-12) -> float:
    """Root of the virtual value φ(w) = w − (1 − F(w)) / f(w), by bisection on the support.

    Raises:
        MechanismDomainError: φ decreases somewhere on a grid over the support, the
            support is empty or scipy.stats has no such distribution
    """
    return _myerson_reserve(
        prior.distribution, tuple(prior.args), prior.loc, prior.scale, grid, tol
    )


@lru_cache(maxsize=None)
def _myerson_reserve(
    name: str, args: tuple[float, ...], loc: float, scale: float, grid: int, tol: float
) -> float:
    family = getattr(scipy.stats, name, None)
    if not isinstance(family, scipy.stats.rv_continuous):
        raise MechanismDomainError(f"Unknown continuous distribution {name!r}")
    distribution = family(*args, loc=loc, scale=scale)
    low, high = (float(bound) for bound in distribution.support())
    if not math.isfinite(low):
        low = float(distribution.ppf(1e-12))
    if not math.isfinite(high):
        high = float(distribution.ppf(1 - 1e-12))
    if not high > low:
        raise MechanismDomainError("Prior has an empty support")

    def virtual_value(w):
        return w - distribution.sf(w) / distribution.pdf(w)

    interior = np.linspace(low, high, grid + 2)[1:-1]
    if (np.diff(virtual_value(interior)) < -1e-9).any():
        raise MechanismDomainError("Prior is not regular: the virtual value decreases")

    if virtual_value(low) >= 0:
        return low

    while high - low > tol:
        middle = 0.5 * (low + high)
        if virtual_value(middle) < 0:
            low = middle
        else:
            high = middle

    return 0.5 * (low + high)


def prepare_groves(profile: TypeProfile, priors: Sequence[PriorModel]) -> MechanismRun:
    priors = _per_agent(priors, profile.num_agents, "prior")

    return _run(
        MechanismName.GROVES,
        profile,
        [
            groves_optimal_pivot(prior, profile, agent)
            for agent, prior in enumerate(priors)
        ],
    )


def prepare_weakest_type_am(
    profile: TypeProfile, predictors: Sequence[Predictor], am: AMParams
) -> MechanismRun:
    """Weakest-type affine maximizer.

    The allocation maximizes Σ ω_i θ_i[α] + τ(α). The pivot of agent i is
    min over θ̃ ∈ T_i of max_α [Σ_{j≠i} ω_j θ_j[α] + ω_i θ̃[α] + τ(α)], and payments are
    divided by ω_i.

    Raises:
        MechanismDomainError: the weights or boosts do not match the profile
    """
    _check_count(profile, predictors)
    weights = np.array(am.weights, dtype=float)
    boosts = np.array(am.boosts, dtype=float)
    if weights.size != profile.num_agents or boosts.size != profile.space.size:
        raise MechanismDomainError("Need one weight per agent and one boost per allocation")

    weighted = weights[:, None] * profile.matrix
    _, allocation = best_allocation(weighted.sum(axis=0) + boosts)

    pivots, offsets = [], []
    for agent, predictor in enumerate(predictors):
        shifted = np.delete(weighted, agent, axis=0).sum(axis=0) + boosts
        polytope = predicted_polytope(predictor, profile, agent)
        pivots.append(
            weakest_for_offsets(polytope, shifted, scale=weights[agent], agent=agent).welfare
        )
        offsets.append(float(shifted[allocation]))

    return MechanismRun(
        mechanism=MechanismName.AFFINE_MAXIMIZER,
        profile=profile,
        allocation=allocation,
        weights=weights.tolist(),
        offsets=offsets,
        pivots=pivots,
    )


def prepare_discard(
    profile: TypeProfile,
    predictors: Sequence[Predictor],
    beta: float,
    *,
    solver: Solver = Solver.LP,
) -> MechanismRun:
    """With probability β run plain VCG, otherwise weakest-type VCG."""
    trusted = prepare_weakest_type_vcg(profile, predictors, solver=solver)

    return trusted.copy(
        update={
            "mechanism": MechanismName.DISCARD,
            "beta": beta,
            "fallback_pivots": prepare_vcg(profile).pivots,
        }
    )


def prepare_mechanism(
    spec: MechanismSpec, instance: Instance, *, solver: Solver = Solver.LP
) -> MechanismRun:
    """Prepares any mechanism by name, filling in defaults for missing predictors.

    Raises:
        MechanismDomainError: the spec lacks parameters the mechanism needs
    """
    profile = instance.profile
    solver = spec.solver or solver
    predictors = padded_predictors(instance.predictors, profile.num_agents)

    if spec.name == MechanismName.VCG:
        return prepare_vcg(profile)
    if spec.name in (MechanismName.WEAKEST_TYPE_VCG, MechanismName.TRUST):
        return prepare_weakest_type_vcg(
            profile, predictors, solver=solver, mechanism=spec.name
        )
    if spec.name == MechanismName.DISCARD:
        return prepare_discard(profile, predictors, spec.beta, solver=solver)
    if spec.name == MechanismName.ZETA_ZERO:
        return prepare_zeta_zero(
            profile, predictors, _require(spec.params, spec.name).zeta, solver=solver
        )
    if spec.name == MechanismName.ZETA_LAMBDA:
        return prepare_zeta_lambda(
            profile, predictors, _require(spec.params, spec.name), solver=solver
        )
    if spec.name == MechanismName.GENERALIZED:
        partitions = [
            partition or single_cell_partition(predictors[agent], profile, agent)
            for agent, partition in enumerate(
                _padded(instance.partitions, profile.num_agents)
            )
        ]
        return prepare_generalized(
            profile, partitions, _require(spec.params, spec.name), solver=solver
        )
    if spec.name == MechanismName.SUBSPACE:
        return prepare_subspace(profile, _require(spec.subspace, spec.name))
    if spec.name == MechanismName.GROVES:
        if not spec.priors:
            raise MechanismDomainError("The Groves mechanism needs priors")
        return prepare_groves(profile, spec.priors)
    if spec.name == MechanismName.AFFINE_MAXIMIZER:
        return prepare_weakest_type_am(profile, predictors, _require(spec.am, spec.name))

    raise MechanismDomainError(f"Unknown mechanism {spec.name!r}")


def draw(run: MechanismRun, rng: Optional[np.random.Generator] = None) -> MechanismOutcome:
    """Draws one outcome of a prepared mechanism.

    Raises:
        ValueError: a randomized mechanism was drawn without a generator
    """
    if run.mechanism in (MechanismName.VCG, MechanismName.WEAKEST_TYPE_VCG,
                         MechanismName.TRUST, MechanismName.ZETA_ZERO,
                         MechanismName.GROVES, MechanismName.AFFINE_MAXIMIZER):
        return _settle(run, run.pivots)

    if rng is None:
        raise ValueError(f"Mechanism {run.mechanism.value} needs a random generator")

    if run.mechanism == MechanismName.ZETA_LAMBDA:
        return _draw_zeta_lambda(run, rng)
    if run.mechanism == MechanismName.GENERALIZED:
        return _draw_generalized(run, rng)
    if run.mechanism == MechanismName.SUBSPACE:
        return _draw_subspace(run, rng)

    discarded = bool(rng.random() < run.beta)
    return _settle(
        run, run.fallback_pivots if discarded else run.pivots, {"discarded": discarded}
    )


def _draw_zeta_lambda(run: MechanismRun, rng: np.random.Generator) -> MechanismOutcome:
    streams = agent_streams(rng, run.profile.num_agents)
    draws = [
        int(stream.integers(0, top + 1)) for stream, top in zip(streams, run.top_draws)
    ]
    pivots = [
        base - math.ldexp(lam, k) for base, lam, k in zip(run.pivots, run.lambdas, draws)
    ]

    return _settle(run, pivots, {"k": draws})


def _draw_generalized(run: MechanismRun, rng: np.random.Generator) -> MechanismOutcome:
    streams = agent_streams(rng, run.profile.num_agents)
    pivots, cells, draws = [], [], []
    for agent, stream in enumerate(streams):
        plans = run.cells[agent]
        index = int(stream.choice(len(plans), p=[plan.probability for plan in plans]))
        plan = plans[index]
        if plan.weakest_welfare is not None:
            minimum = plan.weakest_welfare
        else:
            drawn = draw_from_density(plan.density, stream)
            minimum = float(np.max(np.array(run.others[agent]) + drawn))

        zeta, lam = run.zeta[agent], run.lambdas[agent]
        k = int(stream.integers(0, top_draw(minimum - run.baselines[agent], zeta, lam) + 1))
        pivots.append(minimum + zeta - math.ldexp(lam, k))
        cells.append(index)
        draws.append(k)

    return _settle(run, pivots, {"cell": cells, "k": draws})


def _draw_subspace(run: MechanismRun, rng: np.random.Generator) -> MechanismOutcome:
    streams = agent_streams(rng, run.profile.num_agents)
    pivots, draws = [], []
    for agent, stream in enumerate(streams):
        plan = run.levels[agent]
        combo = _draw_level_tuple(stream, plan.levels, len(plan.points))
        pivots.append(_subspace_pivot(run, agent, combo))
        draws.append(list(combo))

    return _settle(run, pivots, {"levels": draws})


def _draw_level_tuple(rng: np.random.Generator, levels: int, dims: int) -> tuple[int, ...]:
    """ℓ uniform on 1..L, then a tuple uniform among those with minimum ℓ, by rejection."""
    level = int(rng.integers(1, levels + 1))
    while True:
        combo = tuple(int(value) for value in rng.integers(level, levels + 1, size=dims))
        if min(combo) == level:
            return combo


def _subspace_pivot(run: MechanismRun, agent: int, combo: Sequence[int]) -> float:
    points = run.levels[agent].points
    replacement = np.sum(
        [points[direction][level - 1] for direction, level in enumerate(combo)], axis=0
    )

    return float(np.max(np.array(run.others[agent]) + replacement))


def _settle(
    run: MechanismRun, pivots: Sequence[float], draws: Optional[dict] = None
) -> MechanismOutcome:
    """Turns pivots into payments and applies the exclusion rule.

    p_i = (pivot_i − offset_i) / ω_i. An agent with θ_i[α*] − p_i < −ε is excluded: it
    pays 0 and its value does not count towards welfare.
    """
    values = run.profile.matrix[:, run.allocation]
    payments, participants = [], []
    for agent, pivot in enumerate(pivots):
        payment = (pivot - run.offsets[agent]) / run.weights[agent]
        if values[agent] - payment >= -run.cmp_tolerance:
            participants.append(agent)
            payments.append(payment)
        else:
            logger.debug(
                "Agent %d excluded: value %.6g below payment %.6g",
                agent,
                values[agent],
                payment,
            )
            payments.append(0.0)

    return MechanismOutcome(
        mechanism=run.mechanism,
        allocation=run.allocation,
        payments=payments,
        participants=participants,
        welfare=float(values[participants].sum()),
        revenue=float(sum(payments)),
        pivots=list(pivots),
        draws=draws or {},
    )


def weakest_welfares(
    profile: TypeProfile, predictors: Sequence[Predictor], solver: Solver = Solver.LP
) -> list[float]:
    _check_count(profile, predictors)

    return [
        weakest_type(predicted_polytope(predictor, profile, agent), profile, agent, solver).welfare
        for agent, predictor in enumerate(predictors)
    ]


def padded_predictors(predictors: Sequence[Predictor], num_agents: int) -> list[Predictor]:
    """Agents without a predictor get the uninformative whole-orthant prediction."""
    if len(predictors) > num_agents:
        raise ValueError(f"Got {len(predictors)} predictors for {num_agents} agents")

    return list(predictors) + [ZeroPredictor()] * (num_agents - len(predictors))


def _run(
    mechanism: MechanismName, profile: TypeProfile, pivots: Sequence[float], **fields
) -> MechanismRun:
    _, allocation = welfare(profile)
    offsets = [float(row[allocation]) for row in _others(profile)]

    return MechanismRun(
        mechanism=mechanism,
        profile=profile,
        allocation=allocation,
        weights=[1.0] * profile.num_agents,
        offsets=offsets,
        pivots=list(pivots),
        **fields,
    )


def _others(profile: TypeProfile) -> list[list[float]]:
    return [others_totals(profile, agent).tolist() for agent in range(profile.num_agents)]


def _baselines(profile: TypeProfile) -> list[float]:
    zeros = np.zeros(profile.space.size)

    return [
        welfare_with_replacement(profile, agent, zeros)
        for agent in range(profile.num_agents)
    ]


def _check_count(profile: TypeProfile, predictors: Sequence) -> None:
    if len(predictors) != profile.num_agents:
        raise ValueError(
            f"Got {len(predictors)} predictors for {profile.num_agents} agents"
        )


def _per_agent(values: Sequence, num_agents: int, name: str) -> list:
    if len(values) == 1:
        return list(values) * num_agents
    if len(values) != num_agents:
        raise ValueError(f"Expected 1 or {num_agents} values of {name}, got {len(values)}")
    return list(values)


def _padded(values: Sequence, num_agents: int) -> list:
    return list(values) + [None] * (num_agents - len(values))


def _require(value, mechanism: MechanismName):
    if value is None:
        raise MechanismDomainError(f"Mechanism {mechanism.value} is missing its parameters")
    return value

import logging
from itertools import chain, combinations, product
from typing import Optional, Sequence, Union

import numpy as np

from mechlab.constants import (
    CMP_TOLERANCE,
    DEFAULT_ALLOCATION_CAP,
    DEFAULT_VALUE_HIGH,
    UNASSIGNED,
    EnvironmentKind,
    Valuation,
)
from mechlab.types import AllocationSpace, TypeProfile, TypeVector

logger = logging.getLogger(__name__)

TypeLike = Union[TypeVector, np.ndarray, Sequence[float]]


def best_allocation(totals: np.ndarray, tol: float = CMP_TOLERANCE) -> tuple[float, int]:
    """Returns the maximum of `totals` and the lowest index attaining it within `tol`."""
    best = float(np.max(totals))
    index = int(np.flatnonzero(totals >= best - tol)[0])

    return best, index


def welfare(profile: TypeProfile, tol: float = CMP_TOLERANCE) -> tuple[float, int]:
    """Efficient welfare w(θ) and the efficient allocation α*, lowest index on ties."""
    return best_allocation(profile.matrix.sum(axis=0), tol)


def others_totals(profile: TypeProfile, agent: int) -> np.ndarray:
    """Σ_{j≠i} θ_j[α] for every allocation α."""
    _check_agent(profile, agent)

    return np.delete(profile.matrix, agent, axis=0).sum(axis=0)


def welfare_with_replacement(
    profile: TypeProfile, agent: int, replacement: TypeLike
) -> float:
    """w(θ̃_i, θ_{-i}): efficient welfare after replacing agent i's type by `replacement`.

    Args:
        profile (TypeProfile): the reported profile
        agent (int): index of the replaced agent
        replacement (TypeLike): the substitute type vector

    Raises:
        ValueError: the agent index is out of range or the replacement has the wrong length

    Returns:
        float: max over allocations of θ̃_i[α] + Σ_{j≠i} θ_j[α]
    """
    others = others_totals(profile, agent)
    values = _as_array(replacement)
    if values.shape != others.shape:
        raise ValueError(
            f"Replacement type has {values.size} values, expected {others.size}"
        )

    return float(np.max(others + values))


def replace_agent(profile: TypeProfile, agent: int, replacement: TypeLike) -> TypeProfile:
    _check_agent(profile, agent)
    agents = list(profile.agents)
    agents[agent] = TypeVector(values=_as_array(replacement).tolist())

    return profile.copy(update={"agents": agents})


def scale_profile(profile: TypeProfile, factor: float) -> TypeProfile:
    if factor < 0:
        raise ValueError("Profiles can only be scaled by a non-negative factor")

    return profile.copy(
        update={
            "agents": [
                TypeVector(values=[factor * value for value in agent.values])
                for agent in profile.agents
            ]
        }
    )


def explicit_profile(labels: list[str], values: list[list[float]]) -> TypeProfile:
    return TypeProfile(
        space=AllocationSpace(labels=labels),
        agents=[TypeVector(values=row) for row in values],
    )


def make_environment(
    kind: EnvironmentKind,
    *,
    seed: int,
    agents: int = 2,
    items: int = 2,
    outcomes: int = 3,
    value_high: float = DEFAULT_VALUE_HIGH,
    valuation: Valuation = Valuation.GENERAL,
    allocation_cap: int = DEFAULT_ALLOCATION_CAP,
) -> tuple[AllocationSpace, TypeProfile]:
    """Draws a random instance of one of the standard environments.

    Values are drawn uniformly from [0, value_high] with a generator seeded by `seed`.

    Args:
        kind (EnvironmentKind): combinatorial auction, matching or shared outcome
        seed (int): seed of the value generator
        agents (int, optional): number of agents (bidders, buyers or voters). Defaults to 2.
        items (int, optional): number of items (auction) or houses (matching). Defaults to 2.
        outcomes (int, optional): number of shared outcomes. Defaults to 3.
        value_high (float, optional): upper end of the value range. Defaults to DEFAULT_VALUE_HIGH.
        valuation (Valuation, optional): auction bundle valuation. Defaults to Valuation.GENERAL.
        allocation_cap (int, optional): largest auction allocation space accepted.
            Defaults to DEFAULT_ALLOCATION_CAP.

    Raises:
        ValueError: unsupported kind, non-positive dimensions or a too large auction

    Returns:
        tuple[AllocationSpace, TypeProfile]: the allocation space and a sampled profile
    """
    if agents < 1 or items < 1 or outcomes < 1:
        raise ValueError("Environments need at least one agent, item and outcome")

    rng = np.random.default_rng(seed)

    if kind == EnvironmentKind.COMBINATORIAL_AUCTION:
        space = combinatorial_space(agents, items, allocation_cap=allocation_cap)
        profile = _auction_profile_from_bundle_values(
            space,
            [_random_bundle_values(rng, space.items, valuation, value_high) for _ in range(agents)],
        )
    elif kind == EnvironmentKind.MATCHING:
        space = matching_space(items, agents)
        house_values = rng.uniform(0, value_high, size=(agents, items))
        profile = _auction_profile_from_bundle_values(
            space,
            [
                {frozenset([house]): value for house, value in zip(space.items, row)}
                for row in house_values
            ],
        )
    elif kind == EnvironmentKind.SHARED_OUTCOME:
        space = AllocationSpace(labels=[f"outcome_{k}" for k in range(outcomes)])
        profile = TypeProfile(
            space=space,
            agents=[
                TypeVector(values=row.tolist())
                for row in rng.uniform(0, value_high, size=(agents, outcomes))
            ],
        )
    else:
        raise ValueError(f"Cannot sample an environment of kind {kind.value!r}")

    logger.debug("Sampled %s environment with %d allocations", kind.value, space.size)

    return space, profile


def combinatorial_space(
    agents: int,
    items: int,
    *,
    item_names: Optional[list[str]] = None,
    allocation_cap: int = DEFAULT_ALLOCATION_CAP,
) -> AllocationSpace:
    """Every assignment of each item to an agent or to nobody: (agents + 1)^items allocations."""
    names = item_names or _default_item_names(items)
    size = (agents + 1) ** len(names)
    if size > allocation_cap:
        raise ValueError(
            f"Combinatorial auction has {size} allocations, above the cap of {allocation_cap}"
        )

    owners = [
        list(assignment)
        for assignment in product([UNASSIGNED, *range(agents)], repeat=len(names))
    ]

    return AllocationSpace(
        labels=[_assignment_label(names, assignment) for assignment in owners],
        items=names,
        owners=owners,
    )


def matching_space(houses: int, buyers: int) -> AllocationSpace:
    """Every partial matching of houses to buyers, each buyer taking at most one house."""
    names = [f"h{index}" for index in range(houses)]
    owners = [
        list(assignment)
        for assignment in product([UNASSIGNED, *range(buyers)], repeat=houses)
        if _is_injective(assignment)
    ]

    return AllocationSpace(
        labels=[_assignment_label(names, assignment) for assignment in owners],
        items=names,
        owners=owners,
    )


def auction_profile(
    items: list[str],
    bidder_values: list[dict[str, float]],
    valuation: Valuation = Valuation.GENERAL,
    allocation_cap: int = DEFAULT_ALLOCATION_CAP,
) -> tuple[AllocationSpace, TypeProfile]:
    """Builds a combinatorial auction from explicit bids.

    With a general valuation each key is a bundle written as item names joined by "+"
    and missing bundles are worth 0. With additive or unit-demand valuations each key
    is a single item and bundle values are the sum or the maximum of item values.
    """
    space = combinatorial_space(
        len(bidder_values), len(items), item_names=items, allocation_cap=allocation_cap
    )
    bundle_values = []
    for bids in bidder_values:
        unknown = set(chain.from_iterable(key.split("+") for key in bids)) - set(items)
        if unknown:
            raise ValueError(f"Bids reference unknown items {sorted(unknown)}")

        if valuation == Valuation.GENERAL:
            bundle_values.append(
                {frozenset(key.split("+")): value for key, value in bids.items()}
            )
        else:
            item_values = np.array([bids.get(item, 0.0) for item in items])
            bundle_values.append(_bundle_values_from_items(items, item_values, valuation))

    return space, _auction_profile_from_bundle_values(space, bundle_values)


def profile_to_json(profile: TypeProfile) -> dict:
    return {
        "allocations": list(profile.space.labels),
        "agents": [list(agent.values) for agent in profile.agents],
    }


def profile_from_json(document: dict) -> TypeProfile:
    try:
        return explicit_profile(document["allocations"], document["agents"])
    except KeyError as error:
        raise ValueError(f"Profile document is missing {error}") from error


def _random_bundle_values(
    rng: np.random.Generator, items: list[str], valuation: Valuation, value_high: float
) -> dict[frozenset[str], float]:
    if valuation == Valuation.GENERAL:
        return {bundle: float(rng.uniform(0, value_high)) for bundle in _bundles(items)}

    return _bundle_values_from_items(items, rng.uniform(0, value_high, size=len(items)), valuation)


def _bundle_values_from_items(
    items: list[str], item_values: np.ndarray, valuation: Valuation
) -> dict[frozenset[str], float]:
    combine = sum if valuation == Valuation.ADDITIVE else max
    by_item = dict(zip(items, item_values.tolist()))

    return {
        bundle: float(combine(by_item[item] for item in bundle))
        for bundle in _bundles(items)
    }


def _auction_profile_from_bundle_values(
    space: AllocationSpace, bundle_values: list[dict[frozenset[str], float]]
) -> TypeProfile:
    agents = []
    for agent, values in enumerate(bundle_values):
        row = [
            values.get(space.bundle(allocation, agent), 0.0)
            for allocation in range(space.size)
        ]
        agents.append(TypeVector(values=row))

    return TypeProfile(space=space, agents=agents)


def _bundles(items: list[str]) -> list[frozenset[str]]:
    return [
        frozenset(bundle)
        for size in range(1, len(items) + 1)
        for bundle in combinations(items, size)
    ]


def _default_item_names(items: int) -> list[str]:
    return [chr(ord("A") + index) if items <= 26 else f"i{index}" for index in range(items)]


def _assignment_label(names: list[str], assignment: Sequence[int]) -> str:
    return ",".join(
        f"{name}->{'-' if owner == UNASSIGNED else owner}"
        for name, owner in zip(names, assignment)
    )


def _is_injective(assignment: Sequence[int]) -> bool:
    assigned = [owner for owner in assignment if owner != UNASSIGNED]
    return len(assigned) == len(set(assigned))


def _as_array(values: TypeLike) -> np.ndarray:
    if isinstance(values, TypeVector):
        return values.array
    return np.asarray(values, dtype=float)


def _check_agent(profile: TypeProfile, agent: int) -> None:
    if not 0 <= agent < profile.num_agents:
        raise ValueError(
            f"Agent {agent} is out of range for a profile of {profile.num_agents} agents"
        )

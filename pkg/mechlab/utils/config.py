import json
import logging
from pathlib import Path
from typing import Optional, Union

import yaml

from mechlab.constants import DEFAULT_ALLOCATION_CAP, EnvironmentKind
from mechlab.env import auction_profile, explicit_profile, make_environment
from mechlab.errors import ConfigError
from mechlab.types import EnvironmentConfig, ExperimentConfig, TypeProfile

logger = logging.getLogger(__name__)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """Reads an experiment config from YAML, or from JSON when the file ends in .json.

    Args:
        path (Union[str, Path]): the config file

    Raises:
        ConfigError: the file cannot be read or parsed, or is not a mapping
        pydantic.ValidationError: the document does not match the schema

    Returns:
        ExperimentConfig: the validated config
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"Cannot read config {path}: {error}") from error

    try:
        document = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as error:
        raise ConfigError(f"Cannot parse config {path}: {error}") from error

    if not isinstance(document, dict):
        raise ConfigError(f"Config {path} must contain a mapping at the top level")

    logger.debug("Loaded config %s", path)

    return ExperimentConfig.parse_obj(document)


def with_overrides(
    config: ExperimentConfig,
    *,
    seed: Optional[int] = None,
    trials: Optional[int] = None,
    workers: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Applies command-line overrides; unset overrides keep the config value.

    The result is validated again, so an override such as trials=0 is rejected.
    """
    updates = {
        key: value
        for key, value in dict(
            seed=seed, trials=trials, workers=workers, output_dir=output_dir
        ).items()
        if value is not None
    }

    return ExperimentConfig.parse_obj({**config.dict(by_alias=True), **updates})


def build_profile(
    config: EnvironmentConfig, allocation_cap: int = DEFAULT_ALLOCATION_CAP
) -> TypeProfile:
    """The profile an environment config describes.

    Explicit configs list the allocations and one value row per agent; auction configs
    with bids build the auction from them; anything else is sampled from `config.seed`.
    """
    if config.kind == EnvironmentKind.EXPLICIT:
        return explicit_profile(config.allocations, config.values)

    if config.kind == EnvironmentKind.COMBINATORIAL_AUCTION and config.bids:
        _, profile = auction_profile(
            config.item_names, config.bids, config.valuation, allocation_cap
        )
        return profile

    _, profile = make_environment(
        config.kind,
        seed=config.seed,
        agents=config.agents,
        items=config.items,
        outcomes=config.outcomes,
        value_high=config.value_high,
        valuation=config.valuation,
        allocation_cap=allocation_cap,
    )

    return profile

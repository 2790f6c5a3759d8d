import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from mechlab.constants import EnvironmentKind, MechanismName, PredictorKind
from mechlab.errors import ConfigError
from mechlab.types import EnvironmentConfig, ExperimentConfig
from mechlab.utils.config import build_profile, load_experiment_config, with_overrides

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda path: path.stem)
def test_bundled_configs_parse(path: Path):
    config = load_experiment_config(path)

    assert config.mechanism is not None or config.sweep is not None
    if config.environment is not None:
        assert build_profile(config.environment).num_agents >= 1


def test_yaml_config():
    config = load_experiment_config(CONFIGS / "two_allocations.yaml")

    assert config.seed == 0
    assert config.mechanism.name == MechanismName.WEAKEST_TYPE_VCG
    assert [predictor.kind for predictor in config.predictors] == [
        PredictorKind.POLYTOPE,
        PredictorKind.ZERO,
    ]
    assert config.predictors[0].polytope.constraints[0].coefficients == {0: 1.0}


def test_json_config(tmp_path: Path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "seed": 4,
                "environment": {"kind": "shared_outcome", "agents": 2, "outcomes": 3},
                "predictors": [{"kind": "exact", "values": [1, 2, 3]}],
                "mechanism": {"name": "zeta_lambda", "params": {"zeta": 1, "lambda": 0.5}},
            }
        )
    )
    config = load_experiment_config(path)

    assert config.mechanism.params.lambdas == [0.5]
    assert config.predictors[0].kind == PredictorKind.EXACT


def test_unreadable_configs(tmp_path: Path):
    with pytest.raises(ConfigError, match="Cannot read"):
        load_experiment_config(tmp_path / "missing.yaml")

    broken = tmp_path / "broken.yaml"
    broken.write_text("seed: [1, 2\n")
    with pytest.raises(ConfigError, match="Cannot parse"):
        load_experiment_config(broken)

    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_experiment_config(listing)


def test_schema_errors(tmp_path: Path):
    unseeded = tmp_path / "unseeded.yaml"
    unseeded.write_text("mechanism:\n  name: vcg\n")
    with pytest.raises(ValidationError):
        load_experiment_config(unseeded)

    unknown = tmp_path / "unknown.yaml"
    unknown.write_text("seed: 1\nmechanism:\n  name: no_such_mechanism\n")
    with pytest.raises(ValidationError):
        load_experiment_config(unknown)


def test_overrides():
    config = load_experiment_config(CONFIGS / "zeta_lambda.yaml")
    updated = with_overrides(config, seed=9, trials=5, output_dir="elsewhere")

    assert (updated.seed, updated.trials, updated.workers) == (9, 5, config.workers)
    assert updated.output_dir == "elsewhere"
    assert updated.mechanism == config.mechanism
    assert with_overrides(config) == config

    with pytest.raises(ValidationError):
        with_overrides(config, trials=0)


def test_build_profile():
    explicit = build_profile(
        EnvironmentConfig(kind=EnvironmentKind.EXPLICIT, allocations=["a"], values=[[1.0], [2.0]])
    )
    assert explicit.matrix.tolist() == [[1.0], [2.0]]

    sampled = EnvironmentConfig(kind=EnvironmentKind.COMBINATORIAL_AUCTION, agents=2, items=2)
    assert build_profile(sampled) == build_profile(sampled)
    assert build_profile(sampled).space.size == 9

    with pytest.raises(ValueError, match="above the cap"):
        build_profile(sampled, allocation_cap=4)

    with pytest.raises(ValidationError):
        EnvironmentConfig(kind=EnvironmentKind.EXPLICIT)


def test_experiment_requires_positive_trials():
    with pytest.raises(ValidationError):
        ExperimentConfig(seed=0, trials=0)

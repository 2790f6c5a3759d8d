import logging
from typing import Optional

from mechlab.analysis import monte_carlo, sweep
from mechlab.constants import Suite
from mechlab.errors import ConfigError
from mechlab.geometry import classify_measures, error_measures
from mechlab.mechanisms import draw, padded_predictors, prepare_mechanism
from mechlab.types import (
    ExperimentConfig,
    Instance,
    LabConfig,
    MechanismOutcome,
    MechanismRun,
    MechanismSpec,
    PartitionPredictor,
    PredictionReport,
    RunReport,
    SuiteResult,
    SweepRow,
    ZeroPredictor,
)
from mechlab.utils.config import build_profile
from mechlab.utils.rng import trial_rng
from mechlab.verify import run_suite

logger = logging.getLogger(__name__)


class MechanismLab:
    config: LabConfig

    def __init__(self, config: LabConfig = LabConfig()):
        self.config = config

    def build_instance(self, experiment: ExperimentConfig) -> Instance:
        """Builds the profile of an experiment and lines up one predictor per agent.

        Partition predictors go to `Instance.partitions`; their agents get the zero
        predictor in `Instance.predictors`. Agents without any predictor are left to
        the mechanisms, which treat them as uninformed.

        Raises:
            ConfigError: the experiment has no environment or more predictors than agents
        """
        if experiment.environment is None:
            raise ConfigError("The experiment needs an environment")

        profile = build_profile(experiment.environment, self.config.allocation_cap)
        if len(experiment.predictors) > profile.num_agents:
            raise ConfigError(
                f"Got {len(experiment.predictors)} predictors for {profile.num_agents} agents"
            )

        predictors, partitions = [], []
        for predictor in experiment.predictors:
            if isinstance(predictor, PartitionPredictor):
                predictors.append(ZeroPredictor())
                partitions.append(predictor)
            else:
                predictors.append(predictor)
                partitions.append(None)

        return Instance(profile=profile, predictors=predictors, partitions=partitions)

    def prepare(self, spec: MechanismSpec, instance: Instance) -> MechanismRun:
        run = prepare_mechanism(spec, instance, solver=self.config.solver)

        return run.copy(update={"cmp_tolerance": self.config.cmp_tolerance})

    def sample(self, spec: MechanismSpec, instance: Instance, seed: int) -> MechanismOutcome:
        """One outcome of the mechanism, drawn from the first trial stream of `seed`."""
        return draw(self.prepare(spec, instance), trial_rng(seed, 0))

    def measure(self, instance: Instance) -> list[PredictionReport]:
        """Δ^err, Δ^VCG and the classification of every agent's polytope predictor.

        Agents predicted by a partition are skipped: their error is a distribution
        over the cells. Agents without a predictor are measured under the zero
        predictor, as the mechanisms treat them.
        """
        profile = instance.profile
        predictors = padded_predictors(instance.predictors, profile.num_agents)
        if len(predictors) > len(instance.predictors):
            logger.debug(
                "Agents %s have no predictor; measuring the zero predictor",
                list(range(len(instance.predictors), len(predictors))),
            )

        reports = []
        partitions = list(instance.partitions) + [None] * len(predictors)
        for agent, predictor in enumerate(predictors):
            if partitions[agent] is not None:
                continue
            measures = error_measures(predictor, profile, agent, self.config.solver)
            reports.append(
                PredictionReport(
                    agent=agent,
                    classification=classify_measures(measures, self.config.solver_tolerance),
                    measures=measures,
                )
            )

        return reports

    def run(self, experiment: ExperimentConfig) -> tuple[MechanismOutcome, RunReport]:
        """Runs the configured mechanism once and estimates its guarantees.

        Args:
            experiment (ExperimentConfig): environment, predictors, mechanism, trials and seed

        Raises:
            ConfigError: the experiment lacks an environment or a mechanism
            InfeasiblePolytopeError: a predicted polytope is empty
            MechanismDomainError: the mechanism parameters do not fit the instance

        Returns:
            tuple[MechanismOutcome, RunReport]: the outcome of the first trial and the
                report of all trials
        """
        if experiment.mechanism is None:
            raise ConfigError("The experiment needs a mechanism")

        instance = self.build_instance(experiment)
        outcome = self.sample(experiment.mechanism, instance, experiment.seed)
        guarantees = monte_carlo(
            experiment.mechanism,
            instance,
            experiment.trials,
            experiment.seed,
            experiment.workers,
            solver=self.config.solver,
            se_multiplier=self.config.se_multiplier,
            cmp_tolerance=self.config.cmp_tolerance,
        )
        logger.info(
            "Ran %s on %d agents: welfare %.6g, revenue %.6g",
            experiment.mechanism.name.value,
            instance.profile.num_agents,
            outcome.welfare,
            outcome.revenue,
        )

        return outcome, RunReport(
            mechanism=experiment.mechanism.name,
            seed=experiment.seed,
            measures=self.measure(instance),
            guarantees=guarantees,
        )

    def sweep(self, experiment: ExperimentConfig) -> list[SweepRow]:
        if experiment.sweep is None:
            raise ConfigError("The experiment needs a sweep section")

        return sweep(experiment.sweep, seed=experiment.seed, workers=experiment.workers)

    def verify(
        self, suite: Suite, seed: int, trials: Optional[int] = None, workers: int = 1
    ) -> SuiteResult:
        return run_suite(suite, seed=seed, trials=trials, workers=workers)

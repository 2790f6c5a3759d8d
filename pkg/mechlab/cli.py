import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from mechlab.constants import ExitCode, Suite, Verdict
from mechlab.errors import ConfigError, InfeasiblePolytopeError, MechanismDomainError
from mechlab.lab import MechanismLab
from mechlab.types import BoundCheck, ExperimentConfig
from mechlab.utils.config import load_experiment_config, with_overrides
from mechlab.utils.report import write_json, write_sweep_csv, write_sweep_svg

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--trials", type=int, help="Monte Carlo trials, overrides the config")
    common.add_argument("--workers", type=int, help="parallel Monte Carlo workers")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("-v", "--verbose", action="store_true", help="log at debug level")

    parser = argparse.ArgumentParser(
        prog="mechlab",
        description="Weakest-type VCG mechanisms with predictions: runs, sweeps and checks.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", parents=[common], help="run a mechanism and write outcome and report JSON"
    )
    run.add_argument("--config", required=True, help="YAML or JSON experiment config")
    run.set_defaults(handler=run_command)

    verify = commands.add_parser(
        "verify", parents=[common], help="run an acceptance suite"
    )
    verify.add_argument("suite", choices=[suite.value for suite in Suite])
    verify.set_defaults(handler=verify_command)

    sweep = commands.add_parser(
        "sweep", parents=[common], help="tabulate and plot M_{ζ,λ} over a parameter range"
    )
    sweep.add_argument("--config", required=True, help="YAML or JSON experiment config")
    sweep.set_defaults(handler=sweep_command)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.handler(MechanismLab(), args)
    except InfeasiblePolytopeError as error:
        logger.error("Infeasible prediction: %s", error)
        return ExitCode.INFEASIBLE_PREDICTOR
    except (ConfigError, ValidationError, MechanismDomainError, ValueError) as error:
        logger.error("Invalid configuration: %s", error)
        return ExitCode.INVALID_CONFIG


def run_command(lab: MechanismLab, args: argparse.Namespace) -> int:
    experiment = _experiment(args)
    outcome, report = lab.run(experiment)

    out = Path(experiment.output_dir)
    write_json(outcome, out / "outcome.json")
    write_json(report, out / "report.json")

    return ExitCode.OK


def verify_command(lab: MechanismLab, args: argparse.Namespace) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.trials is not None and args.trials < 1:
        raise ConfigError("--trials must be at least 1")

    result = lab.verify(Suite(args.suite), seed, args.trials, args.workers or 1)
    for check in result.checks:
        if check.verdict != Verdict.SATISFIED:
            _log_check(logging.WARNING, check)
    for check in result.informational:
        if check.verdict != Verdict.SATISFIED:
            _log_check(logging.INFO, check, " (informational)")
    if args.out:
        write_json(
            {**result.dict(by_alias=True), "passed": result.passed},
            Path(args.out) / f"verify_{result.suite.value}.json",
        )

    logger.info(
        "%s: %s",
        result.suite.value,
        "passed" if result.passed else "FAILED",
    )

    return ExitCode.OK if result.passed else ExitCode.VERIFY_FAILED


def sweep_command(lab: MechanismLab, args: argparse.Namespace) -> int:
    experiment = _experiment(args)
    if experiment.sweep is None:
        raise ConfigError("The sweep command needs a config with a sweep section")
    if args.trials is not None:
        experiment = experiment.copy(
            update={"sweep": experiment.sweep.copy(update={"trials": args.trials})}
        )

    rows = lab.sweep(experiment)
    out = Path(experiment.output_dir)
    write_sweep_csv(rows, out / "sweep.csv")
    write_sweep_svg(rows, out)

    return ExitCode.OK


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    return with_overrides(
        load_experiment_config(args.config),
        seed=args.seed,
        trials=args.trials,
        workers=args.workers,
        output_dir=args.out,
    )


def _log_check(level: int, check: BoundCheck, suffix: str = "") -> None:
    logger.log(
        level,
        "%s %s: target %.6g, empirical %.6g ± %.3g%s",
        check.verdict.value,
        check.name,
        check.target,
        check.empirical,
        check.se,
        suffix,
    )


if __name__ == "__main__":
    sys.exit(main())

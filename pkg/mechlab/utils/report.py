import csv
import logging
from itertools import groupby
from pathlib import Path
from typing import Any, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from mechlab.constants import SWEEP_CSV_HEADER
from mechlab.types import SweepRow
from mechlab.utils.pydantic import to_json

logger = logging.getLogger(__name__)

# Fixed ids and no timestamp, so the same rows always give the same SVG bytes
plt.rcParams["svg.hashsalt"] = "mechlab"


def write_json(element: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(element) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)

    return path


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, Path]) -> Path:
    """One line per sweep row; Monte Carlo columns are left empty when not estimated."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER)
        for row in rows:
            estimates = (row.empirical_value, row.empirical_payment, row.se)
            writer.writerow(
                [repr(row.param), repr(row.lam), repr(row.expected_value)]
                + [repr(row.expected_payment)]
                + ["" if value is None else repr(value) for value in estimates]
            )
    logger.info("Wrote %d rows to %s", len(rows), path)

    return path


def write_sweep_svg(
    rows: Sequence[SweepRow], directory: Union[str, Path], *, stem: str = "sweep"
) -> list[Path]:
    """One line chart per λ: expected value and payment against the swept parameter.

    Files are named `<stem>_lambda_<n>.svg`, n counting the λ values in sweep order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    paths = []
    for index, (lam, group) in enumerate(groupby(rows, key=lambda row: row.lam)):
        group = list(group)
        params = [row.param for row in group]

        figure, axes = plt.subplots(figsize=(6, 4))
        axes.plot(params, [row.expected_value for row in group], label="expected value")
        axes.plot(params, [row.expected_payment for row in group], label="expected payment")
        estimated = [row for row in group if row.empirical_payment is not None]
        if estimated:
            axes.errorbar(
                [row.param for row in estimated],
                [row.empirical_payment for row in estimated],
                yerr=[3 * (row.se or 0.0) for row in estimated],
                fmt="o",
                markersize=3,
                label="simulated payment",
            )
        axes.set_xlabel("swept parameter")
        axes.set_title(f"λ = {lam:g}")
        axes.legend()

        path = directory / f"{stem}_lambda_{index}.svg"
        figure.savefig(path, format="svg", metadata={"Date": None})
        plt.close(figure)
        paths.append(path)
        logger.info("Wrote %s", path)

    return paths

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel

from mechlab.constants import (
    FEASIBILITY_TOLERANCE,
    MAX_SIMPLEX_ITERATIONS,
    PIVOT_TOLERANCE,
    Relation,
)
from mechlab.errors import InfeasiblePolytopeError, UnboundedProgramError

logger = logging.getLogger(__name__)


class SimplexSolution(BaseModel):
    x: list[float]
    objective: float
    iterations: int


def solve(
    objective: np.ndarray,
    rows: np.ndarray,
    relations: Sequence[Relation],
    bounds: np.ndarray,
    *,
    tol: float = PIVOT_TOLERANCE,
    feasibility_tol: float = FEASIBILITY_TOLERANCE,
    max_iterations: int = MAX_SIMPLEX_ITERATIONS,
) -> SimplexSolution:
    """Minimizes objective·x subject to rows·x (relation) bounds and x ≥ 0.

    Dense two-phase tableau simplex. Bland's rule picks both the entering column and
    the leaving row, so degenerate programs cannot cycle.

    Args:
        objective (np.ndarray): cost vector of length n
        rows (np.ndarray): (m, n) constraint matrix
        relations (Sequence[Relation]): one relation per row
        bounds (np.ndarray): right-hand sides of length m
        tol (float, optional): pivot tolerance. Defaults to PIVOT_TOLERANCE.
        feasibility_tol (float, optional): phase-one objective above which the
            program is declared infeasible. Defaults to FEASIBILITY_TOLERANCE.
        max_iterations (int, optional): pivot cap per phase. Defaults to MAX_SIMPLEX_ITERATIONS.

    Raises:
        InfeasiblePolytopeError: no x satisfies the constraints
        UnboundedProgramError: the objective decreases without bound
        RuntimeError: the pivot cap was reached

    Returns:
        SimplexSolution: an optimal vertex, its objective value and the pivot count
    """
    objective = np.asarray(objective, dtype=float)
    rows = np.array(rows, dtype=float).reshape(-1, objective.size)
    bounds = np.array(bounds, dtype=float).reshape(-1)
    num_rows, num_vars = rows.shape

    # Flip rows so every right-hand side is non-negative
    relations = list(relations)
    for index in np.flatnonzero(bounds < 0):
        rows[index] *= -1
        bounds[index] *= -1
        relations[index] = _flipped(relations[index])

    slack_rows = [i for i, relation in enumerate(relations) if relation != Relation.EQ]
    artificial_rows = [i for i, relation in enumerate(relations) if relation != Relation.LE]
    num_slack, num_artificial = len(slack_rows), len(artificial_rows)
    first_artificial = num_vars + num_slack
    num_columns = first_artificial + num_artificial

    tableau = np.zeros((num_rows + 1, num_columns + 1))
    tableau[:num_rows, :num_vars] = rows
    tableau[:num_rows, -1] = bounds
    basis = np.zeros(num_rows, dtype=int)

    for offset, row in enumerate(slack_rows):
        tableau[row, num_vars + offset] = 1.0 if relations[row] == Relation.LE else -1.0
        if relations[row] == Relation.LE:
            basis[row] = num_vars + offset
    for offset, row in enumerate(artificial_rows):
        tableau[row, first_artificial + offset] = 1.0
        basis[row] = first_artificial + offset

    iterations = 0
    if num_artificial:
        phase_one_costs = np.zeros(num_columns)
        phase_one_costs[first_artificial:] = 1.0
        _price(tableau, basis, phase_one_costs)
        iterations += _iterate(
            tableau, basis, np.arange(num_columns), tol=tol, max_iterations=max_iterations
        )

        infeasibility = -tableau[-1, -1]
        if infeasibility > feasibility_tol * max(1.0, float(np.abs(bounds).max(initial=0))):
            raise InfeasiblePolytopeError(
                f"Linear program is infeasible (phase-one objective {infeasibility:.3g})"
            )

        tableau, basis = _drop_artificials(tableau, basis, first_artificial, tol=tol)

    costs = np.zeros(tableau.shape[1] - 1)
    costs[:num_vars] = objective
    _price(tableau, basis, costs)
    iterations += _iterate(
        tableau,
        basis,
        np.arange(tableau.shape[1] - 1),
        tol=tol,
        max_iterations=max_iterations,
    )

    x = np.zeros(tableau.shape[1] - 1)
    x[basis] = tableau[:-1, -1]
    logger.debug("Simplex finished after %d pivots", iterations)

    return SimplexSolution(
        x=x[:num_vars].tolist(),
        objective=float(objective @ x[:num_vars]),
        iterations=iterations,
    )


def _flipped(relation: Relation) -> Relation:
    return {
        Relation.LE: Relation.GE,
        Relation.GE: Relation.LE,
        Relation.EQ: Relation.EQ,
    }[relation]


def _price(tableau: np.ndarray, basis: np.ndarray, costs: np.ndarray) -> None:
    """Writes the reduced costs of `costs` for the current basis into the last row."""
    tableau[-1, :-1] = costs
    tableau[-1, -1] = 0.0
    for row, column in enumerate(basis):
        if costs[column] != 0:
            tableau[-1] -= costs[column] * tableau[row]


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, column: int) -> None:
    tableau[row] /= tableau[row, column]
    factors = tableau[:, column].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    basis[row] = column


def _iterate(
    tableau: np.ndarray,
    basis: np.ndarray,
    columns: np.ndarray,
    *,
    tol: float,
    max_iterations: int,
) -> int:
    for iteration in range(max_iterations):
        entering = _entering_column(tableau, columns, tol)
        if entering is None:
            return iteration

        column = tableau[:-1, entering]
        candidates = np.flatnonzero(column > tol)
        if not candidates.size:
            raise UnboundedProgramError("Linear program is unbounded")

        ratios = tableau[candidates, -1] / column[candidates]
        ties = candidates[ratios <= ratios.min() + tol]
        leaving = min(ties, key=lambda row: basis[row])
        _pivot(tableau, basis, leaving, entering)

    raise RuntimeError(f"Simplex did not converge within {max_iterations} pivots")


def _entering_column(
    tableau: np.ndarray, columns: np.ndarray, tol: float
) -> Optional[int]:
    negative = columns[tableau[-1, columns] < -tol]
    return int(negative[0]) if negative.size else None


def _drop_artificials(
    tableau: np.ndarray, basis: np.ndarray, first_artificial: int, *, tol: float
) -> tuple[np.ndarray, np.ndarray]:
    """Pivots artificial variables out of the basis, then removes their columns.

    A row whose artificial cannot leave has no non-zero structural entry: it is a
    redundant equality and is dropped.
    """
    redundant = []
    for row in range(len(basis)):
        if basis[row] < first_artificial:
            continue
        structural = np.flatnonzero(np.abs(tableau[row, :first_artificial]) > tol)
        if structural.size:
            _pivot(tableau, basis, row, int(structural[0]))
        else:
            redundant.append(row)

    keep_rows = [row for row in range(len(basis)) if row not in redundant]
    keep_columns = list(range(first_artificial)) + [tableau.shape[1] - 1]
    reduced = tableau[np.ix_(keep_rows + [tableau.shape[0] - 1], keep_columns)]

    return reduced, basis[keep_rows]

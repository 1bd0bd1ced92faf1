"""Restricted cubic spline bases (linear beyond the boundary knots)."""

from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

DEFAULT_KNOT_QUANTILES = (0.05, 0.35, 0.65, 0.95)


def _check_knots(knots: Sequence[float]) -> np.ndarray:
    t = np.asarray(knots, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValidationError("a restricted cubic spline needs at least 3 knots")
    if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
        raise ValidationError("spline knots must be finite and strictly ascending")
    return t


def default_knots(
    values: np.ndarray, quantiles: Sequence[float] = DEFAULT_KNOT_QUANTILES
) -> Tuple[float, ...]:
    """
    Place knots at quantiles of the observed values.

    Raises:
        ValidationError: If the quantiles do not give distinct knots
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("cannot place spline knots without data")
    knots = np.quantile(values, quantiles)
    if np.any(np.diff(knots) <= 0):
        raise ValidationError(
            "spline knots at the default quantiles are not distinct; supply knots explicitly"
        )
    return tuple(float(k) for k in knots)


def spline_basis(x: np.ndarray, knots: Sequence[float]) -> np.ndarray:
    """
    Evaluate the restricted cubic spline basis.

    With k knots the basis has k - 1 columns: ``x`` itself followed by
    k - 2 truncated-power terms

        (x - t_j)^3_+ - (x - t_{k-1})^3_+ (t_k - t_j) / (t_k - t_{k-1})
                      + (x - t_k)^3_+ (t_{k-1} - t_j) / (t_k - t_{k-1})

    each divided by (t_k - t_1)^2, so every column is linear in x beyond the
    boundary knots.

    Args:
        x: Covariate values
        knots: At least three strictly ascending knots

    Returns:
        Array of shape (len(x), k - 1)
    """
    t = _check_knots(knots)
    x = np.asarray(x, dtype=float).reshape(-1)
    k = t.size
    scale = (t[-1] - t[0]) ** 2
    gap = t[-1] - t[-2]

    def cube(u: np.ndarray) -> np.ndarray:
        return np.maximum(u, 0.0) ** 3

    columns = [x]
    for j in range(k - 2):
        term = (
            cube(x - t[j])
            - cube(x - t[-2]) * (t[-1] - t[j]) / gap
            + cube(x - t[-1]) * (t[-2] - t[j]) / gap
        )
        columns.append(term / scale)
    return np.column_stack(columns)


def spline_names(name: str, n_knots: int) -> List[str]:
    """Column names for a spline basis of ``name``."""
    return [name] + [f"{name}_rcs{j}" for j in range(1, n_knots - 1)]

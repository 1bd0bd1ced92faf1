"""
Person-time tables and piecewise-exponential (Poisson) rate models.

Episodes are split along every time axis at once (Lexis splitting) and
aggregated into cells of events and person-time; the log-linear rate model
is then fitted to the cells.
"""

import logging
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.stats as st
import statsmodels.api as sm

from . import settings
from .cohort import CohortTable, _cut_intervals, _per_subject
from .exceptions import (
    ConvergenceError,
    MonotoneLikelihoodError,
    NumericalError,
    RankDeficiencyError,
    ValidationError,
)

logger = logging.getLogger(__name__)

INTERCEPT = "(intercept)"
IRLS_TOLERANCE = 1e-10
IRLS_MAX_ITERATIONS = 50

_LABEL = re.compile(r"^\[\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)$")


def interval_label(lo: float, hi: float) -> str:
    """Label of the half-open band [lo, hi)."""
    return f"[{lo:g},{hi:g})"


def _parse_label(label: str) -> Tuple[float, float]:
    match = _LABEL.match(str(label))
    if match is None:
        raise ValidationError(f"malformed interval label '{label}' (expected '[lo,hi)')")
    return float(match.group(1)), float(match.group(2))


@dataclass(frozen=True)
class TimeAxis:
    """
    A time axis with its cut points.

    Args:
        name: Axis name, also the cell column holding the band index
        cutpoints: Ascending band boundaries; end with ``inf`` to leave the
            last band open
        offset: Covariate holding each subject's value of this axis at
            time 0 of the cohort's own axis (None for the cohort's own axis)

    Example:
        >>> TimeAxis("age", (40, 50, 60, 70, float("inf")), offset="age_at_entry")
    """

    name: str
    cutpoints: Tuple[float, ...]
    offset: Optional[str] = None

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cutpoints)
        if len(cuts) < 2:
            raise ValidationError(f"axis '{self.name}' needs at least two cut points")
        if np.isnan(cuts).any() or np.any(np.diff(cuts) <= 0) or not np.isfinite(cuts[0]):
            raise ValidationError(
                f"cut points of axis '{self.name}' must ascend from a finite value"
            )
        object.__setattr__(self, "cutpoints", cuts)

    @property
    def n_bands(self) -> int:
        return len(self.cutpoints) - 1

    def labels(self) -> List[str]:
        return [interval_label(lo, hi) for lo, hi in zip(self.cutpoints, self.cutpoints[1:])]

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "cutpoints": list(self.cutpoints), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class RateTable:
    """
    Events and person-time per cell.

    ``cells`` has one integer band-index column per axis, one column per
    covariate pattern, then ``events`` and ``person_time``.
    """

    cells: pd.DataFrame
    axes: Tuple[TimeAxis, ...]
    patterns: Tuple[str, ...] = ()

    def __post_init__(self):
        cells = self.cells
        for column in [a.name for a in self.axes] + list(self.patterns) + ["events", "person_time"]:
            if column not in cells.columns:
                raise ValidationError(f"rate table is missing column '{column}'")
        if (cells["person_time"] < 0).any() or (cells["events"] < 0).any():
            raise ValidationError("events and person-time must be >= 0")
        if ((cells["events"] > 0) & (cells["person_time"] == 0)).any():
            raise ValidationError("cell with events but no person-time")

    @property
    def total_events(self) -> float:
        return float(self.cells["events"].sum())

    @property
    def total_person_time(self) -> float:
        return float(self.cells["person_time"].sum())

    def labelled(self) -> pd.DataFrame:
        """Cells with band indices replaced by interval labels."""
        frame = self.cells.copy()
        for axis in self.axes:
            labels = np.array(axis.labels())
            frame[axis.name] = labels[frame[axis.name].to_numpy(dtype=int)]
        return frame

    def to_csv(self, path: Union[str, Path], *, sep: str = ",") -> Path:
        path = Path(path)
        self.labelled().to_csv(path, sep=sep, index=False, float_format="%.17g")
        return path


def read_rate_table(
    path: Union[str, Path],
    axes: Sequence[str],
    *,
    sep: str = ",",
) -> RateTable:
    """
    Read a cell table with one row per cell.

    Axis columns hold interval labels ``[lo,hi)``; every other column except
    ``events`` and ``person_time`` is a covariate pattern.
    """
    frame = pd.read_csv(path, sep=sep)
    missing = [c for c in list(axes) + ["events", "person_time"] if c not in frame.columns]
    if missing:
        raise ValidationError(f"rate table is missing column '{missing[0]}'")
    built = []
    for name in axes:
        bounds = [_parse_label(v) for v in frame[name]]
        cuts = sorted({b for pair in bounds for b in pair})
        built.append(TimeAxis(name, tuple(cuts)))
        frame[name] = np.searchsorted(np.asarray(cuts), [lo for lo, _ in bounds])
    patterns = tuple(c for c in frame.columns if c not in set(axes) | {"events", "person_time"})
    return RateTable(frame, tuple(built), patterns)


def _pattern_values(cohort: CohortTable, column: str, rows: np.ndarray) -> np.ndarray:
    if column == "stratum":
        return cohort.labels("stratum")[rows]
    return cohort.column(column)[rows]


def tabulate_person_time(
    cohort: CohortTable,
    axes: Sequence[TimeAxis],
    patterns: Sequence[str] = (),
    *,
    cause: Optional[int] = None,
) -> RateTable:
    """
    Split episodes along all axes and aggregate events and person-time.

    Bands are half-open [s_{j-1}, s_j); an episode fragment is assigned to
    the band containing its start.

    Args:
        cohort: Episodes
        axes: Time axes with cut points
        patterns: Covariate columns (or ``stratum``) defining cell patterns
        cause: Cause code counted as the event (any nonzero status if None);
            other causes end follow-up as censorings

    Returns:
        RateTable with cells in sorted order

    Raises:
        ValidationError: If follow-up lies below the first cut point or past
            a finite last cut point of any axis, or the cause is unknown
    """
    if not axes:
        raise ValidationError("at least one time axis is needed")
    names = [a.name for a in axes]
    if len(set(names)) != len(names) or set(names) & set(patterns):
        raise ValidationError("axis and pattern names must be distinct")
    if cause is not None and cause not in cohort.cause_labels:
        raise ValidationError(f"unknown cause code {cause}")

    rows = np.arange(cohort.n_episodes)
    a = np.asarray(cohort.tstart, dtype=float)
    b = np.asarray(cohort.tstop, dtype=float)
    status = np.asarray(cohort.status)
    bands: Dict[str, np.ndarray] = {}

    for axis in axes:
        if axis.offset is None:
            shift = np.zeros(rows.size)
        else:
            shift = _per_subject(cohort, axis.offset, "offset")[cohort.subject_codes][rows]
        cuts = np.asarray(axis.cutpoints)
        lo, hi = a + shift, b + shift
        below = np.flatnonzero(lo < cuts[0])
        if below.size:
            sid = cohort.subject_id[rows[below[0]]]
            raise ValidationError(
                f"subject '{sid}': follow-up starts at {lo[below[0]]:g} on axis '{axis.name}', "
                f"below its first cut point {cuts[0]:g}"
            )
        beyond = np.flatnonzero(hi > cuts[-1])
        if beyond.size:
            sid = cohort.subject_id[rows[beyond[0]]]
            raise ValidationError(
                f"subject '{sid}': follow-up reaches {hi[beyond[0]]:g} on axis '{axis.name}', "
                f"beyond its final cut point {cuts[-1]:g} (end with inf to allow)"
            )
        finite = cuts[np.isfinite(cuts)]
        piece, starts, stops, first, last, _ = _cut_intervals(lo, hi, finite)
        a = np.where(first, a[piece], starts - shift[piece])
        b = np.where(last, b[piece], stops - shift[piece])
        status = np.where(last, status[piece], 0)
        for name in bands:
            bands[name] = bands[name][piece]
        bands[axis.name] = np.searchsorted(cuts, starts, side="right") - 1
        rows = rows[piece]

    frame = pd.DataFrame(bands)
    for column in patterns:
        frame[column] = _pattern_values(cohort, column, rows)
    events = status > 0 if cause is None else status == cause
    frame["events"] = events.astype(float)
    frame["person_time"] = b - a
    keys = names + list(patterns)
    cells = frame.groupby(keys, sort=True, as_index=False)[["events", "person_time"]].sum()
    logger.info("tabulated %d fragments into %d cells", len(frame), len(cells))
    return RateTable(cells.reset_index(drop=True), tuple(axes), tuple(patterns))


@dataclass(frozen=True, eq=False)
class PoissonFit:
    """A fitted log-linear rate model."""

    names: Tuple[str, ...]
    params: np.ndarray
    covariance: np.ndarray
    deviance: float
    df_resid: int
    iterations: int
    factors: Tuple[str, ...]
    linear: Tuple[str, ...]
    fitted_events: np.ndarray
    cells: pd.DataFrame

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def rate_ratios(self) -> Dict[str, float]:
        """exp(coefficient) for every term except the intercept."""
        return {n: float(np.exp(v)) for n, v in zip(self.names, self.params) if n != INTERCEPT}

    def coefficient(self, name: str) -> float:
        try:
            return float(self.params[self.names.index(name)])
        except ValueError:
            raise ValidationError(f"no coefficient named '{name}'") from None

    def summary_frame(self, conf_level: Optional[float] = None) -> pd.DataFrame:
        level = settings.CONFIDENCE_LEVEL if conf_level is None else conf_level
        z = st.norm.ppf(0.5 + level / 2)
        se = self.se
        return pd.DataFrame(
            {
                "term": list(self.names),
                "coef": self.params,
                "exp_coef": np.exp(self.params),
                "se": se,
                "lower": np.exp(self.params - z * se),
                "upper": np.exp(self.params + z * se),
                "p": 2 * st.norm.sf(np.abs(self.params / se)),
            }
        )

    def to_dict(self, conf_level: Optional[float] = None) -> Dict[str, Any]:
        frame = self.summary_frame(conf_level)
        return {
            "model": {
                "factors": list(self.factors),
                "linear": list(self.linear),
                "deviance": self.deviance,
                "df_resid": self.df_resid,
                "iterations": self.iterations,
                "cells": int(len(self.cells)),
            },
            "coefficients": [
                {key: (row[key] if key == "term" else float(row[key])) for key in frame.columns}
                for _, row in frame.iterrows()
            ],
        }


def _rate_design(
    cells: pd.DataFrame,
    axes: Sequence[TimeAxis],
    factors: Sequence[str],
    linear: Sequence[str],
) -> pd.DataFrame:
    parts = [pd.DataFrame({INTERCEPT: np.ones(len(cells))}, index=cells.index)]
    by_name = {axis.name: axis for axis in axes}
    if factors:
        levels = pd.DataFrame(index=cells.index)
        for column in factors:
            if column in by_name:
                labels = by_name[column].labels()
                used = np.unique(cells[column].to_numpy(dtype=int))
                levels[column] = pd.Categorical(
                    [labels[i] for i in cells[column]], categories=[labels[i] for i in used]
                )
            else:
                levels[column] = pd.Categorical(cells[column])
        parts.append(pd.get_dummies(levels, prefix_sep="=", drop_first=True, dtype=float))
    if linear:
        parts.append(cells[list(linear)].astype(float))
    return pd.concat(parts, axis=1)


def fit_rate_model(
    table: RateTable,
    factors: Sequence[str] = (),
    linear: Sequence[str] = (),
) -> PoissonFit:
    """
    Fit events ~ Poisson(person_time * exp(X theta)) by iteratively
    reweighted least squares.

    Args:
        table: Cell table
        factors: Axis or pattern columns entered as categorical effects
            (first level is the reference)
        linear: Pattern columns entered as numeric terms

    Raises:
        ValidationError: On unknown columns or without events
        RankDeficiencyError: If the design is not of full rank
        MonotoneLikelihoodError: If a rate ratio diverges
        ConvergenceError: If IRLS does not converge
    """
    cells = table.cells
    for column in list(factors) + list(linear):
        if column not in cells.columns or column in ("events", "person_time"):
            raise ValidationError(f"unknown rate-table column '{column}'")
    cells = cells.loc[cells["person_time"] > 0].reset_index(drop=True)
    if cells["events"].sum() <= 0:
        raise ValidationError("no events in the rate table")

    design = _rate_design(cells, table.axes, factors, linear)
    x = design.to_numpy(dtype=float)
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise RankDeficiencyError(list(design.columns), "rate model design is not of full rank")

    model = sm.GLM(
        cells["events"].to_numpy(dtype=float),
        x,
        family=sm.families.Poisson(),
        offset=np.log(cells["person_time"].to_numpy(dtype=float)),
    )
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = model.fit(method="IRLS", tol=IRLS_TOLERANCE, maxiter=IRLS_MAX_ITERATIONS)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise NumericalError(f"rate model failed: {e}") from e

    names = tuple(str(c) for c in design.columns)
    params = np.asarray(result.params, dtype=float)
    for name, value in zip(names, params):
        if name != INTERCEPT and abs(value) > 15:
            raise MonotoneLikelihoodError(name, "+" if value > 0 else "-")
    if not getattr(result, "converged", True):
        raise ConvergenceError(f"IRLS did not converge in {IRLS_MAX_ITERATIONS} iterations")

    iterations = int(result.fit_history.get("iteration", 0))
    logger.info(
        "rate model: %d cells, deviance %.6g, %d iterations",
        len(cells),
        result.deviance,
        iterations,
    )
    return PoissonFit(
        names=names,
        params=params,
        covariance=np.asarray(result.cov_params(), dtype=float),
        deviance=float(result.deviance),
        df_resid=int(result.df_resid),
        iterations=iterations,
        factors=tuple(factors),
        linear=tuple(linear),
        fitted_events=np.asarray(result.fittedvalues, dtype=float),
        cells=cells,
    )


def rate_summary(
    table: RateTable,
    by: Sequence[str],
    *,
    per: float = settings.RATE_SCALE,
) -> pd.DataFrame:
    """
    Crude rates per ``per`` units of person-time, grouped by axis bands
    and/or pattern columns.
    """
    frame = table.labelled()
    for column in by:
        if column not in frame.columns:
            raise ValidationError(f"unknown rate-table column '{column}'")
    grouped = frame.groupby(list(by), sort=True, as_index=False)[["events", "person_time"]].sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        grouped["rate"] = np.where(
            grouped["person_time"] > 0, grouped["events"] / grouped["person_time"] * per, np.nan
        )
    return grouped

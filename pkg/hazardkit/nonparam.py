"""Nonparametric estimators on counting-process cohorts."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.stats as st

from . import settings
from .cohort import CohortTable
from .exceptions import ValidationError
from .stepfunction import StepFunction


def _z(conf_level: Optional[float]) -> float:
    level = settings.CONFIDENCE_LEVEL if conf_level is None else conf_level
    if not 0 < level < 1:
        raise ValidationError("conf_level must be in (0, 1)")
    return float(st.norm.ppf(0.5 + level / 2))


def at_risk(cohort: CohortTable, times: np.ndarray) -> np.ndarray:
    """Number of episodes with tstart < t <= tstop at each time."""
    times = np.asarray(times, dtype=float)
    starts = np.sort(cohort.tstart)
    stops = np.sort(cohort.tstop)
    return np.searchsorted(starts, times, side="left") - np.searchsorted(
        stops, times, side="left"
    )


def _event_counts(
    cohort: CohortTable, mask: np.ndarray, after: float = -np.inf
) -> Tuple[np.ndarray, np.ndarray]:
    times, counts = np.unique(cohort.tstop[mask], return_counts=True)
    keep = times > after
    return times[keep], counts[keep].astype(float)


def nelson_aalen(
    cohort: CohortTable,
    cause: Optional[int] = None,
    *,
    conf_level: Optional[float] = None,
) -> StepFunction:
    """
    Nelson-Aalen estimate of the cumulative hazard.

    Jumps d/Y at each distinct event time, with variance sum d/Y^2 and
    log-transformed confidence bands.

    Args:
        cohort: Episodes
        cause: Cause code to count (all causes if None)
        conf_level: Confidence level (default: HAZARDKIT_CONFIDENCE_LEVEL)

    Returns:
        StepFunction of kind ``cumhaz``
    """
    z = _z(conf_level)
    times, d = _event_counts(cohort, cohort.event_mask(cause))
    y = at_risk(cohort, times).astype(float)
    assert np.all(y > 0), "event time with an empty risk set"

    estimate = np.cumsum(d / y)
    variance = np.cumsum(d / y**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = np.exp(z * np.sqrt(variance) / estimate)
    return StepFunction(
        times,
        estimate,
        variance=variance,
        lower=estimate / spread,
        upper=estimate * spread,
        at_risk=y,
        events=d,
        kind="cumhaz",
        label="Nelson-Aalen" if cause is None else f"Nelson-Aalen (cause {cause})",
    )


def _product_limit(
    times: np.ndarray,
    d: np.ndarray,
    y: np.ndarray,
    z: float,
    origin: float,
    label: str,
) -> StepFunction:
    estimate = np.cumprod(1.0 - d / y)
    with np.errstate(divide="ignore", invalid="ignore"):
        greenwood = np.cumsum(d / (y * (y - d)))
        log_s = np.log(estimate)
        se = np.sqrt(greenwood) / np.abs(log_s)
        lower = estimate ** np.exp(z * se)
        upper = estimate ** np.exp(-z * se)
    degenerate = (estimate <= 0) | (estimate >= 1) | ~np.isfinite(se)
    lower = np.clip(np.where(degenerate, estimate, lower), 0.0, 1.0)
    upper = np.clip(np.where(degenerate, estimate, upper), 0.0, 1.0)
    return StepFunction(
        times,
        estimate,
        initial_value=1.0,
        origin=origin,
        variance=estimate**2 * greenwood,
        lower=lower,
        upper=upper,
        at_risk=y,
        events=d,
        kind="survival",
        label=label,
    )


def kaplan_meier(
    cohort: CohortTable,
    condition_time: Optional[float] = None,
    *,
    cause: Optional[int] = None,
    conf_level: Optional[float] = None,
) -> StepFunction:
    """
    Kaplan-Meier survival estimate with log(-log) confidence bands.

    With ``condition_time`` t0 the estimate is S(t | T > t0): only event
    times after t0 contribute and the curve starts at 1 at t0.

    Raises:
        ValidationError: If nobody is at risk after the conditioning time
    """
    z = _z(conf_level)
    origin = min(0.0, float(np.min(cohort.tstart))) if cohort.n_episodes else 0.0
    after = -np.inf
    if condition_time is not None:
        origin = after = float(condition_time)
        if not np.any(cohort.tstop > after):
            raise ValidationError(f"empty risk set at t0={after:g}")

    times, d = _event_counts(cohort, cohort.event_mask(cause), after=after)
    y = at_risk(cohort, times).astype(float)
    assert np.all(y > 0), "event time with an empty risk set"
    return _product_limit(times, d, y, z, origin, "Kaplan-Meier")


@dataclass(frozen=True, eq=False)
class CompetingRisks:
    """Cumulative incidence per cause together with the overall survival."""

    incidence: Dict[int, StepFunction]
    survival: StepFunction

    def total(self, t: float) -> float:
        """Sum of the cause-specific cumulative incidences at t."""
        return float(sum(curve(t) for curve in self.incidence.values()))


def aalen_johansen(
    cohort: CohortTable,
    *,
    causes: Optional[Tuple[int, ...]] = None,
) -> CompetingRisks:
    """
    Aalen-Johansen cumulative incidence for every cause.

    F_k jumps by S(t-) d_k / Y at each pooled event time, where S is the
    all-cause product-limit survival, so the curves and S sum to one.
    """
    causes = tuple(causes) if causes is not None else cohort.causes
    any_event = cohort.event_mask()
    times = np.unique(cohort.tstop[any_event])
    y = at_risk(cohort, times).astype(float)
    assert np.all(y > 0), "event time with an empty risk set"

    index = np.searchsorted(times, cohort.tstop[any_event])
    codes = cohort.status[any_event]
    d = np.bincount(index, minlength=times.size).astype(float)
    survival = np.cumprod(1.0 - d / y)
    before = np.concatenate([[1.0], survival[:-1]])

    incidence: Dict[int, StepFunction] = {}
    for cause in causes:
        d_k = np.bincount(index[codes == cause], minlength=times.size).astype(float)
        incidence[cause] = StepFunction(
            times,
            np.cumsum(before * d_k / y),
            at_risk=y,
            events=d_k,
            kind="incidence",
            label=cohort.cause_labels.get(cause, f"cause {cause}"),
        )
    overall = StepFunction(
        times, survival, initial_value=1.0, at_risk=y, events=d, kind="survival", label="overall"
    )
    return CompetingRisks(incidence, overall)


def censoring_curve(
    cohort: CohortTable,
    *,
    conf_level: Optional[float] = None,
) -> StepFunction:
    """
    Reverse Kaplan-Meier estimate of the censoring distribution.

    Terminal censorings are the events; at tied times true events leave the
    risk set before the censorings.
    """
    z = _z(conf_level)
    censored = cohort.terminal & (cohort.status == 0)
    times, d = _event_counts(cohort, censored)
    y = at_risk(cohort, times).astype(float)
    events_here = np.zeros(times.size)
    ev_times, ev_counts = _event_counts(cohort, cohort.event_mask())
    if times.size and ev_times.size:
        pos = np.clip(np.searchsorted(ev_times, times), 0, ev_times.size - 1)
        hit = ev_times[pos] == times
        events_here[hit] = ev_counts[pos[hit]]
    y = y - events_here
    assert np.all(y > 0), "censoring time with an empty risk set"
    origin = min(0.0, float(np.min(cohort.tstart))) if cohort.n_episodes else 0.0
    return _product_limit(times, d, y, z, origin, "censoring")

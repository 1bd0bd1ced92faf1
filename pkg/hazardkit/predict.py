"""
Absolute-risk prediction from fitted hazard models.

Covers survival and competing-risk cumulative incidence for a covariate
profile, landmark models for dynamic prediction, g-formula standardisation
and attributable event counts.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import settings
from .cohort import CohortTable, Timeline, resample_subjects
from .cox import CoxFit, ModelSpec, fit_cox
from .exceptions import NumericalError, ValidationError
from .models import CumulativeIncidenceMethod
from .stepfunction import StepFunction

logger = logging.getLogger(__name__)

CauseFits = Mapping[int, CoxFit]


@dataclass(frozen=True)
class CovariateProfile:
    """
    Covariate values (and stratum) for which to predict.

    Example:
        >>> profile = CovariateProfile({"age": 60, "sex": 1})
    """

    values: Mapping[str, float] = field(default_factory=dict)
    stratum: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "values", {str(k): float(v) for k, v in self.values.items()})
        if self.stratum is not None:
            object.__setattr__(self, "stratum", str(self.stratum))

    def with_value(self, name: str, value: float) -> "CovariateProfile":
        return CovariateProfile({**self.values, name: value}, self.stratum)

    def to_dict(self) -> Dict[str, Any]:
        return {"values": dict(self.values), "stratum": self.stratum}


def _check_profile(fit: CoxFit, profile: CovariateProfile) -> None:
    if fit.internal_covariates:
        raise ValidationError(
            "model uses internal time-dependent covariate(s) "
            f"{', '.join(sorted(fit.internal_covariates))}; absolute risks are not defined"
        )
    missing = [c for c in fit.spec.covariates if c not in profile.values]
    if missing:
        raise ValidationError(f"profile is missing covariate '{missing[0]}'")


@dataclass(frozen=True, eq=False)
class RiskCurve:
    """
    Predicted absolute risk F(t) for t >= t_pred.

    ``horizon`` is the last time the baseline carries information; the
    curve is flat beyond it.
    """

    curve: StepFunction
    t_pred: float
    horizon: float
    cause: Optional[int] = None

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.curve(t)

    def beyond_support(self, t: float) -> bool:
        """True when ``t`` lies past the last baseline event time."""
        return t > self.horizon

    @property
    def times(self) -> np.ndarray:
        return self.curve.jump_times

    @property
    def values(self) -> np.ndarray:
        return self.curve.values

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "time": np.concatenate([[self.t_pred], self.curve.jump_times]),
                "risk": np.concatenate([[0.0], self.curve.values]),
            }
        )
        frame["cause"] = self.cause if self.cause is not None else 0
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t_pred": self.t_pred,
            "horizon": self.horizon,
            "cause": self.cause,
            "times": self.curve.jump_times.tolist(),
            "risk": self.curve.values.tolist(),
        }


def _hazard_increments(
    fit: CoxFit, profile: CovariateProfile, t_pred: float
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Profile-adjusted cumulative-hazard jumps after ``t_pred`` and the horizon."""
    base = fit.baseline[fit.stratum_key(profile.stratum)]
    times = base.jump_times
    keep = times > t_pred
    u = times[keep]
    increments = base.increments[keep] * np.exp(fit.linear_predictor(profile.values, u))
    horizon = float(times[-1]) if times.size else float(t_pred)
    return u, increments, horizon


def predict_survival(
    fit: CoxFit,
    profile: CovariateProfile,
    t_pred: float = 0.0,
) -> RiskCurve:
    """
    Absolute risk F(t | Z, T > t_pred) = 1 - exp(-(Lambda(t) - Lambda(t_pred))).

    Uses the Breslow baseline of the profile's stratum. After the last
    baseline event time the curve is flat; ``RiskCurve.beyond_support``
    flags such times.

    Raises:
        ValidationError: If the model has internal time-dependent covariates
            or the profile is incomplete
    """
    _check_profile(fit, profile)
    u, increments, horizon = _hazard_increments(fit, profile, t_pred)
    if t_pred >= horizon:
        logger.warning(
            "t_pred=%g is at or past the last event time %g; risk is flat", t_pred, horizon
        )
    risk = 1.0 - np.exp(-np.cumsum(increments))
    curve = StepFunction(u, risk, origin=t_pred, kind="risk", label="predicted risk")
    return RiskCurve(curve, float(t_pred), horizon, fit.spec.cause)


@dataclass(frozen=True, eq=False)
class CompetingRiskPrediction:
    """Predicted cumulative incidence per cause and the overall survival."""

    curves: Dict[int, RiskCurve]
    survival: StepFunction
    method: CumulativeIncidenceMethod

    def __getitem__(self, cause: int) -> RiskCurve:
        return self.curves[cause]

    def __iter__(self):
        return iter(self.curves)

    def total(self, t: float) -> float:
        return float(sum(curve(t) for curve in self.curves.values()))

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([c.to_frame() for c in self.curves.values()], ignore_index=True)


def _check_cause_fits(cause_fits: CauseFits) -> None:
    if not cause_fits:
        raise ValidationError("no cause-specific fits given")
    fits = list(cause_fits.values())
    first = fits[0]
    for fit in fits[1:]:
        if fit.fingerprint != first.fingerprint or fit.time_axis != first.time_axis:
            raise ValidationError("cause-specific fits must come from the same cohort and axis")
    if len(fits) > 1:
        declared = [fit.spec.cause for fit in fits]
        if any(c is None for c in declared) or len(set(declared)) != len(declared):
            raise ValidationError("overlapping cause definitions in cause-specific fits")
    for cause, fit in cause_fits.items():
        if fit.spec.cause is not None and fit.spec.cause != cause:
            raise ValidationError(f"fit for cause {cause} counts cause {fit.spec.cause}")
    codes = set(first.status_codes)
    if len(fits) > 1 and set(cause_fits) != codes:
        raise ValidationError(
            f"causes {sorted(cause_fits)} do not exhaust the status codes {sorted(codes)}"
        )


def predict_cuminc(
    cause_fits: CauseFits,
    profile: CovariateProfile,
    t_pred: float = 0.0,
    *,
    method: Union[CumulativeIncidenceMethod, str] = CumulativeIncidenceMethod.EXPONENTIAL,
) -> CompetingRiskPrediction:
    """
    Cumulative incidence of each cause from cause-specific Cox models.

    Over the pooled event times u > t_pred, cause k gains
    S(u-) * (1 - exp(-dA(u))) * dA_k(u) / dA(u) with the default
    ``exponential`` method, where A is the summed cause-specific cumulative
    hazard and S = exp(-A). The ``product_limit`` method uses the
    product-integral S(u-) * dA_k(u) instead, scaling steps with dA(u) > 1
    down to 1, and reproduces Aalen-Johansen for covariate-free models.

    Args:
        cause_fits: One fitted model per cause code
        profile: Covariate values and stratum
        t_pred: Time from which risk is predicted
        method: exponential or product_limit

    Raises:
        ValidationError: On fits from different cohorts, overlapping causes
            or causes that do not cover every status code
    """
    method = CumulativeIncidenceMethod(method)
    _check_cause_fits(cause_fits)
    for fit in cause_fits.values():
        _check_profile(fit, profile)

    parts = {k: _hazard_increments(fit, profile, t_pred) for k, fit in cause_fits.items()}
    pooled = np.unique(np.concatenate([u for u, _, _ in parts.values()]))
    horizon = max(h for _, _, h in parts.values())
    increments = {}
    for k, (u, dh, _) in parts.items():
        full = np.zeros(pooled.size)
        full[np.searchsorted(pooled, u)] = dh
        increments[k] = full
    total = np.sum(list(increments.values()), axis=0) if increments else np.zeros(0)

    with np.errstate(divide="ignore", invalid="ignore"):
        if method == CumulativeIncidenceMethod.EXPONENTIAL:
            survival = np.exp(-np.cumsum(total))
            left = np.concatenate([[1.0], survival[:-1]])
            share = np.where(total > 0, (1.0 - np.exp(-total)) / total, 0.0)
        else:
            scale = np.where(total > 1.0, 1.0 / total, 1.0)
            survival = np.cumprod(1.0 - total * scale)
            left = np.concatenate([[1.0], survival[:-1]])
            share = scale

    curves = {}
    for k, dh in increments.items():
        risk = np.cumsum(left * share * dh)
        curve = StepFunction(pooled, risk, origin=t_pred, kind="incidence", label=f"cause {k}")
        curves[k] = RiskCurve(curve, float(t_pred), horizon, k)
    overall = StepFunction(
        pooled, survival, initial_value=1.0, origin=t_pred, kind="survival", label="overall"
    )
    return CompetingRiskPrediction(curves, overall, method)


# --------------------------------------------------------------- landmarks


def _last_recorded(
    timeline: Timeline, variable: str, t: float
) -> Dict[str, float]:
    out = {}
    for sid, (times, values) in timeline.records(variable).items():
        k = int(np.searchsorted(times, t, side="right")) - 1
        if k >= 0:
            out[sid] = float(values[k])
    return out


def landmark_cohort(
    cohort: CohortTable,
    t_lm: float,
    window: float,
    *,
    timeline: Optional[Timeline] = None,
    covariates: Sequence[str] = (),
) -> CohortTable:
    """
    Landmark data set: subjects at risk at ``t_lm`` with covariates frozen at
    their value at ``t_lm``, administratively censored at ``t_lm + window``.

    With a timeline, each listed covariate it records is frozen at its last
    record at or before ``t_lm``; subjects without such a record are dropped.
    """
    if window <= 0:
        raise ValidationError("landmark window must be > 0")
    current = np.flatnonzero((cohort.tstart <= t_lm) & (t_lm < cohort.tstop))
    if current.size == 0:
        raise ValidationError(f"nobody at risk at landmark t={t_lm:g}")
    at_risk = set(cohort.subject_id[current].tolist())

    frozen = np.array(cohort.covariates[current], dtype=float)
    names = list(cohort.covariate_names)
    drop: set = set()
    if timeline is not None:
        for name in set(covariates) & set(timeline.variables):
            if name not in names:
                continue
            last = _last_recorded(timeline, name, t_lm)
            j = names.index(name)
            for row, sid in enumerate(cohort.subject_id[current].tolist()):
                if sid in last:
                    frozen[row, j] = last[sid]
                else:
                    drop.add(sid)
    if drop:
        logger.warning(
            "%d subject(s) without a recorded covariate value by t=%g dropped", len(drop), t_lm
        )
        at_risk -= drop
    if not at_risk:
        raise ValidationError(f"nobody with recorded covariates at landmark t={t_lm:g}")

    by_subject = dict(zip(cohort.subject_id[current].tolist(), frozen))
    rows = np.flatnonzero(
        np.isin(cohort.subject_id, sorted(at_risk)) & (cohort.tstop > t_lm)
    )
    horizon = t_lm + window
    rows = rows[cohort.tstart[rows] < horizon]
    tstart = np.maximum(cohort.tstart[rows], t_lm)
    tstop = np.minimum(cohort.tstop[rows], horizon)
    status = np.where(cohort.tstop[rows] > horizon, 0, cohort.status[rows])
    covariates_out = np.array([by_subject[s] for s in cohort.subject_id[rows].tolist()])
    out = cohort.take(rows, tstart=tstart, tstop=tstop, status=status)
    return out.replace(
        covariates=covariates_out.reshape(rows.size, len(names)),
        time_dependent=frozenset(),
        external=frozenset(),
    )


def landmark_fit(
    cohort: CohortTable,
    t_lm: float,
    window: float,
    spec: ModelSpec,
    *,
    timeline: Optional[Timeline] = None,
) -> CoxFit:
    """
    Fit a Cox model on the landmark data set at ``t_lm``.

    The time origin is kept; only events in (t_lm, t_lm + window] count.

    Raises:
        ValidationError: If nobody is at risk or no event falls in the window
    """
    data = landmark_cohort(cohort, t_lm, window, timeline=timeline, covariates=spec.covariates)
    if data.n_events(spec.cause) == 0:
        raise ValidationError(f"no events in landmark window ({t_lm:g}, {t_lm + window:g}]")
    logger.info("landmark t=%g: %d subjects, %d events", t_lm, data.n_subjects, data.n_events())
    return fit_cox(data, spec)


def landmark_series(
    cohort: CohortTable,
    landmarks: Sequence[float],
    window: float,
    spec: ModelSpec,
    *,
    timeline: Optional[Timeline] = None,
) -> Dict[float, CoxFit]:
    """Landmark fits at each landmark time, in ascending order."""
    return {
        float(t): landmark_fit(cohort, float(t), window, spec, timeline=timeline)
        for t in sorted(landmarks)
    }


# ------------------------------------------------------------ g-formula


@dataclass(frozen=True, eq=False)
class CausalContrast:
    """
    Standardised risks under treatment (a=1) and no treatment (a=0).

    ``difference`` is risk(a=0) - risk(a=1).
    """

    treatment: str
    times: np.ndarray
    risk_treated: np.ndarray
    risk_untreated: np.ndarray
    difference: np.ndarray
    lower: Optional[Dict[str, np.ndarray]] = None
    upper: Optional[Dict[str, np.ndarray]] = None
    replicates: int = 0
    conf_level: Optional[float] = None

    label = "risk(a=0) - risk(a=1)"

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "time": self.times,
                "risk_a1": self.risk_treated,
                "risk_a0": self.risk_untreated,
                "difference": self.difference,
            }
        )
        if self.lower is not None and self.upper is not None:
            for key in ("risk_a1", "risk_a0", "difference"):
                frame[f"{key}_lower"] = self.lower[key]
                frame[f"{key}_upper"] = self.upper[key]
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "treatment": self.treatment,
            "difference_definition": self.label,
            "replicates": self.replicates,
            "conf_level": self.conf_level,
            "rows": self.to_frame().to_dict(orient="records"),
        }


def _as_cause_fits(model: Union[CoxFit, CauseFits]) -> Tuple[CauseFits, bool]:
    if isinstance(model, CoxFit):
        return {model.spec.cause or 1: model}, False
    return dict(model), True


def _subject_profiles(
    fits: CauseFits, cohort: CohortTable, treatment: str
) -> List[CovariateProfile]:
    first = next(iter(fits.values()))
    covariates = sorted({c for fit in fits.values() for c in fit.spec.covariates})
    if treatment not in covariates:
        raise ValidationError(f"treatment '{treatment}' is not in the model")
    for name in covariates:
        if name in cohort.time_dependent or not cohort.is_time_fixed(name):
            raise ValidationError(
                f"'{name}' is time-dependent; the g-formula here needs time-fixed covariates"
            )
    values = set(np.unique(cohort.column(treatment)).tolist())
    if not values <= {0.0, 1.0}:
        raise ValidationError(f"treatment '{treatment}' must be coded 0/1")

    rows = cohort.first_rows
    if first.spec.strata is not None:
        strata = list(cohort.labels(first.spec.strata)[rows])
    else:
        strata = [None] * rows.size
    columns = {name: cohort.column(name)[rows] for name in covariates}
    return [
        CovariateProfile({name: columns[name][i] for name in covariates}, strata[i])
        for i in range(rows.size)
    ]


def _risks(
    fits: CauseFits,
    competing: bool,
    cause: int,
    profiles: Sequence[CovariateProfile],
    times: np.ndarray,
    t_pred: float,
) -> np.ndarray:
    """Predicted risk at ``times`` for every profile; identical profiles are computed once."""
    cache: Dict[Tuple[Any, ...], np.ndarray] = {}
    out = np.empty((len(profiles), times.size))
    for i, profile in enumerate(profiles):
        key = (profile.stratum,) + tuple(sorted(profile.values.items()))
        if key not in cache:
            if competing:
                curve = predict_cuminc(fits, profile, t_pred)[cause]
            else:
                curve = predict_survival(next(iter(fits.values())), profile, t_pred)
            cache[key] = np.asarray(curve(times), dtype=float)
        out[i] = cache[key]
    return out


def _standardise(
    fits: CauseFits,
    competing: bool,
    cause: int,
    cohort: CohortTable,
    treatment: str,
    times: np.ndarray,
    t_pred: float,
) -> Tuple[np.ndarray, np.ndarray]:
    profiles = _subject_profiles(fits, cohort, treatment)
    treated = [p.with_value(treatment, 1.0) for p in profiles]
    untreated = [p.with_value(treatment, 0.0) for p in profiles]
    r1 = _risks(fits, competing, cause, treated, times, t_pred).mean(axis=0)
    r0 = _risks(fits, competing, cause, untreated, times, t_pred).mean(axis=0)
    return r1, r0


def g_formula(
    model: Union[CoxFit, CauseFits],
    cohort: CohortTable,
    treatment: str,
    times: Sequence[float],
    *,
    cause: Optional[int] = None,
    t_pred: float = 0.0,
    replicates: Optional[int] = None,
    seed: Optional[int] = None,
    conf_level: Optional[float] = None,
    workers: int = 1,
) -> CausalContrast:
    """
    Standardised risk under a = 1 and a = 0 by averaging predicted risks over
    the observed covariate distribution.

    Bootstrap intervals resample subjects and refit every model; replicate b
    draws from ``default_rng([seed, b])`` so results do not depend on
    ``workers``.

    Args:
        model: A Cox fit, or cause-specific fits for a competing-risk contrast
        cohort: Cohort the model was fitted on
        treatment: Binary model covariate
        times: Times at which to contrast risks
        cause: Cause of interest with cause-specific fits (lowest code if None)
        t_pred: Prediction origin
        replicates: Bootstrap replicates (default: HAZARDKIT_BOOTSTRAP_REPLICATES; 0 for none)
        seed: Bootstrap seed (default: HAZARDKIT_SEED)
        conf_level: Interval level (default: HAZARDKIT_CONFIDENCE_LEVEL)
        workers: Threads running replicates

    Raises:
        ValidationError: If the treatment is not a binary model covariate or
            any model covariate is time-dependent
    """
    fits, competing = _as_cause_fits(model)
    if competing:
        _check_cause_fits(fits)
    cause = min(fits) if cause is None else cause
    if cause not in fits:
        raise ValidationError(f"no fit for cause {cause}")
    grid = np.asarray(sorted(float(t) for t in times))
    if grid.size == 0:
        raise ValidationError("no contrast times given")

    r1, r0 = _standardise(fits, competing, cause, cohort, treatment, grid, t_pred)
    replicates = settings.BOOTSTRAP_REPLICATES if replicates is None else int(replicates)
    if replicates <= 0:
        return CausalContrast(treatment, grid, r1, r0, r0 - r1)

    seed = settings.DEFAULT_SEED if seed is None else int(seed)
    level = settings.CONFIDENCE_LEVEL if conf_level is None else conf_level
    n = cohort.n_subjects

    def replicate(b: int) -> Optional[np.ndarray]:
        rng = np.random.default_rng([seed, b])
        sample = resample_subjects(cohort, rng.integers(0, n, size=n))
        try:
            refit = {k: fit_cox(sample, fit.spec) for k, fit in fits.items()}
            b1, b0 = _standardise(refit, competing, cause, sample, treatment, grid, t_pred)
        except (NumericalError, ValidationError) as e:
            logger.debug("bootstrap replicate %d failed: %s", b, e)
            return None
        return np.vstack([b1, b0, b0 - b1])

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        draws = [d for d in pool.map(replicate, range(replicates)) if d is not None]
    failed = replicates - len(draws)
    if failed:
        logger.warning("%d of %d bootstrap replicates failed and were skipped", failed, replicates)
    if not draws:
        raise NumericalError("every bootstrap replicate failed")

    stack = np.stack(draws)
    alpha = (1.0 - level) / 2
    lo = np.quantile(stack, alpha, axis=0)
    hi = np.quantile(stack, 1.0 - alpha, axis=0)
    keys = ("risk_a1", "risk_a0", "difference")
    return CausalContrast(
        treatment,
        grid,
        r1,
        r0,
        r0 - r1,
        lower=dict(zip(keys, lo)),
        upper=dict(zip(keys, hi)),
        replicates=len(draws),
        conf_level=level,
    )


@dataclass(frozen=True)
class AttributableEvents:
    """Expected events with the observed exposure minus those with nobody exposed."""

    factor: str
    t: float
    observed: float
    unexposed: float

    @property
    def count(self) -> float:
        return self.observed - self.unexposed

    @property
    def label(self) -> str:
        return "excess events" if self.count >= 0 else "prevented events"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "factor": self.factor,
            "time": self.t,
            "expected_observed": self.observed,
            "expected_unexposed": self.unexposed,
            "attributable": self.count,
            "label": self.label,
        }


def attributable_events(
    model: Union[CoxFit, CauseFits],
    cohort: CohortTable,
    factor: str,
    t: float,
    *,
    cause: Optional[int] = None,
    t_pred: float = 0.0,
) -> AttributableEvents:
    """
    Events by time ``t`` attributable to ``factor``: the sum of predicted
    risks under the observed exposure minus the sum with the factor set to 0.
    A negative count means the factor prevents events.
    """
    fits, competing = _as_cause_fits(model)
    if competing:
        _check_cause_fits(fits)
    cause = min(fits) if cause is None else cause
    grid = np.array([float(t)])
    profiles = _subject_profiles(fits, cohort, factor)
    observed = _risks(fits, competing, cause, profiles, grid, t_pred)[:, 0].sum()
    unexposed = _risks(
        fits, competing, cause, [p.with_value(factor, 0.0) for p in profiles], grid, t_pred
    )[:, 0].sum()
    return AttributableEvents(factor, float(t), float(observed), float(unexposed))

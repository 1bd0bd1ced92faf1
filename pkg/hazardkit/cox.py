"""
Cox proportional hazards models for counting-process data.

The partial likelihood is evaluated stratum by stratum from reverse
cumulative sums: the risk-set sum at time t is the sum over episodes with
tstop >= t minus the sum over episodes with tstart >= t.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.stats as st

from . import settings
from .cohort import CohortTable, split_episodes
from .exceptions import (
    ConvergenceError,
    MonotoneLikelihoodError,
    RankDeficiencyError,
    ValidationError,
)
from .models import TieMethod, TimeTransform, Transform
from .solver import NewtonConfig, maximize
from .splines import default_knots, spline_basis, spline_names
from .stepfunction import StepFunction

logger = logging.getLogger(__name__)

UNSTRATIFIED = "all"


# ------------------------------------------------------------------- specs


@dataclass(frozen=True)
class Term:
    """
    One covariate in a model and the way it enters.

    Args:
        covariate: Cohort column
        transform: linear, spline (restricted cubic) or time_interaction
        knots: Spline knots (quantile defaults are placed at fit time if None)
        breaks: Time breakpoints for a piecewise-constant effect over time
    """

    covariate: str
    transform: Transform = Transform.LINEAR
    knots: Optional[Tuple[float, ...]] = None
    breaks: Tuple[float, ...] = ()

    def __post_init__(self):
        transform = Transform(self.transform)
        object.__setattr__(self, "transform", transform)
        if self.knots is not None:
            if transform != Transform.SPLINE:
                raise ValidationError(f"knots given for non-spline term '{self.covariate}'")
            knots = tuple(float(k) for k in self.knots)
            if len(knots) < 3 or any(b <= a for a, b in zip(knots, knots[1:])):
                raise ValidationError(
                    f"spline '{self.covariate}' needs at least 3 strictly ascending knots"
                )
            object.__setattr__(self, "knots", knots)
        breaks = tuple(float(b) for b in self.breaks)
        if transform == Transform.TIME_INTERACTION:
            if not breaks:
                raise ValidationError(f"time interaction '{self.covariate}' needs breakpoints")
            if any(b <= a for a, b in zip(breaks, breaks[1:])) or not np.all(np.isfinite(breaks)):
                raise ValidationError(
                    f"breakpoints of '{self.covariate}' must be finite and strictly ascending"
                )
        elif breaks:
            raise ValidationError(f"breakpoints given for non-interaction term '{self.covariate}'")
        object.__setattr__(self, "breaks", breaks)

    def column_names(self) -> List[str]:
        if self.transform == Transform.SPLINE:
            if self.knots is None:
                raise ValidationError(f"spline '{self.covariate}' has no knots yet")
            return spline_names(self.covariate, len(self.knots))
        if self.transform == Transform.TIME_INTERACTION:
            b = self.breaks
            names = [f"{self.covariate}:t<={b[0]:g}"]
            names += [f"{self.covariate}:{lo:g}<t<={hi:g}" for lo, hi in zip(b, b[1:])]
            names.append(f"{self.covariate}:t>{b[-1]:g}")
            return names
        return [self.covariate]

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"covariate": self.covariate, "transform": self.transform.value}
        if self.knots is not None:
            out["knots"] = list(self.knots)
        if self.breaks:
            out["breaks"] = list(self.breaks)
        return out


@dataclass(frozen=True)
class ModelSpec:
    """
    Declarative description of a Cox model.

    Args:
        terms: Covariate terms (plain strings are linear terms)
        strata: Grouping column with its own baseline hazard (``stratum`` or a covariate)
        ties: breslow or efron
        cause: Cause code counted as the event (any nonzero status if None)
        null: Allow a model without covariates

    Example:
        >>> spec = ModelSpec.of("nafld", "diabetes", strata="stratum")
    """

    terms: Tuple[Term, ...] = ()
    strata: Optional[str] = None
    ties: TieMethod = TieMethod.BRESLOW
    cause: Optional[int] = None
    null: bool = False

    def __post_init__(self):
        terms = tuple(Term(t) if isinstance(t, str) else t for t in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "ties", TieMethod(self.ties))
        if not terms and not self.null:
            raise ValidationError("a model needs at least one term (use ModelSpec.null_model())")
        if terms and self.null:
            raise ValidationError("a null model has no terms")
        names = [t.covariate for t in terms]
        if len(set(names)) != len(names):
            raise ValidationError("a covariate may appear in only one term")
        if self.strata is not None and self.strata in names:
            raise ValidationError(f"'{self.strata}' cannot be both a stratum and a term")

    @classmethod
    def of(cls, *covariates: str, **kwargs: Any) -> "ModelSpec":
        """Model with linear terms for the given covariates."""
        return cls(terms=tuple(Term(c) for c in covariates), **kwargs)

    @classmethod
    def null_model(cls, **kwargs: Any) -> "ModelSpec":
        return cls(terms=(), null=True, **kwargs)

    @property
    def covariates(self) -> Tuple[str, ...]:
        return tuple(t.covariate for t in self.terms)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "terms": [t.to_dict() for t in self.terms],
            "strata": self.strata,
            "ties": self.ties.value,
            "cause": self.cause,
        }


# ------------------------------------------------------------------ design


@dataclass(frozen=True, eq=False)
class Design:
    """Numeric design of a model: covariate matrix, intervals, events, strata."""

    x: np.ndarray
    names: Tuple[str, ...]
    tstart: np.ndarray
    tstop: np.ndarray
    event: np.ndarray
    strata: np.ndarray
    levels: Tuple[str, ...]
    subject_id: np.ndarray
    spec: ModelSpec


def _interval_index(breaks: Sequence[float], times: np.ndarray, side: str) -> np.ndarray:
    return np.searchsorted(np.asarray(breaks, dtype=float), times, side=side)


def build_design(cohort: CohortTable, spec: ModelSpec) -> Design:
    """
    Expand a cohort into the numeric design of ``spec``.

    Spline terms without knots get knots at the default quantiles of the
    covariate; time-interaction terms split the episodes at their breakpoints.
    """
    for term in spec.terms:
        cohort.column(term.covariate)

    resolved = []
    for term in spec.terms:
        if term.transform == Transform.SPLINE and term.knots is None:
            knots = default_knots(cohort.column(term.covariate))
            term = Term(term.covariate, Transform.SPLINE, knots=knots)
        resolved.append(term)
    spec = ModelSpec(
        terms=tuple(resolved), strata=spec.strata, ties=spec.ties, cause=spec.cause, null=spec.null
    )

    all_breaks = sorted({b for t in spec.terms for b in t.breaks})
    if all_breaks:
        cohort = split_episodes(cohort, all_breaks, interval_column=None)

    columns: List[np.ndarray] = []
    names: List[str] = []
    for term in spec.terms:
        x = cohort.column(term.covariate)
        if term.transform == Transform.LINEAR:
            columns.append(x[:, None])
        elif term.transform == Transform.SPLINE:
            columns.append(spline_basis(x, term.knots))
        else:
            index = _interval_index(term.breaks, cohort.tstart, side="right")
            columns.append(
                np.column_stack([x * (index == j) for j in range(len(term.breaks) + 1)])
            )
        names.extend(term.column_names())

    n = cohort.n_episodes
    x = np.column_stack(columns) if columns else np.zeros((n, 0))
    if spec.strata is None:
        strata = np.full(n, UNSTRATIFIED)
    else:
        strata = cohort.labels(spec.strata)
    return Design(
        x=x,
        names=tuple(names),
        tstart=np.asarray(cohort.tstart),
        tstop=np.asarray(cohort.tstop),
        event=cohort.event_mask(spec.cause),
        strata=strata,
        levels=tuple(sorted(set(strata.tolist()))),
        subject_id=np.asarray(cohort.subject_id),
        spec=spec,
    )


# -------------------------------------------------------------- likelihood


@dataclass(frozen=True, eq=False)
class _Stratum:
    """Sort orders and tie groups of one stratum, fixed across iterations."""

    rows: np.ndarray
    x: np.ndarray
    order_stop: np.ndarray
    order_start: np.ndarray
    i_stop: np.ndarray
    i_start: np.ndarray
    times: np.ndarray
    event_idx: np.ndarray
    group: np.ndarray
    counts: np.ndarray
    rank: np.ndarray


def _prepare(design: Design) -> List[_Stratum]:
    prepared = []
    for level in design.levels:
        rows = np.flatnonzero(design.strata == level)
        tstart = design.tstart[rows]
        tstop = design.tstop[rows]
        event_local = np.flatnonzero(design.event[rows])
        times = np.unique(tstop[event_local])
        order_stop = np.argsort(tstop, kind="stable")
        order_start = np.argsort(tstart, kind="stable")
        group = np.searchsorted(times, tstop[event_local])
        by_group = np.argsort(group, kind="stable")
        event_idx = event_local[by_group]
        group = group[by_group]
        counts = np.bincount(group, minlength=times.size)
        firsts = np.cumsum(counts) - counts
        rank = np.arange(group.size) - np.repeat(firsts, counts)
        prepared.append(
            _Stratum(
                rows=rows,
                x=design.x[rows],
                order_stop=order_stop,
                order_start=order_start,
                i_stop=np.searchsorted(tstop[order_stop], times, side="left"),
                i_start=np.searchsorted(tstart[order_start], times, side="left"),
                times=times,
                event_idx=event_idx,
                group=group,
                counts=counts,
                rank=rank,
            )
        )
    return prepared


def _reverse_cumsum(a: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + 1,) + a.shape[1:])
    out[:-1] = np.cumsum(a[::-1], axis=0)[::-1]
    return out


def _risk_sum(s: _Stratum, values: np.ndarray) -> np.ndarray:
    """Sum of ``values`` over the risk set at each event time of a stratum."""
    return (
        _reverse_cumsum(values[s.order_stop])[s.i_stop]
        - _reverse_cumsum(values[s.order_start])[s.i_start]
    )


def _outer(x: np.ndarray) -> np.ndarray:
    return x[:, :, None] * x[:, None, :]


def _evaluate(
    strata: List[_Stratum], beta: np.ndarray, ties: TieMethod
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Log partial likelihood, score and information at ``beta``."""
    p = beta.size
    loglik = 0.0
    score = np.zeros(p)
    info = np.zeros((p, p))
    for s in strata:
        if s.times.size == 0:
            continue
        eta = s.x @ beta
        shift = float(np.max(eta))
        w = np.exp(eta - shift)
        s0 = _risk_sum(s, w)
        s1 = _risk_sum(s, w[:, None] * s.x)
        s2 = _risk_sum(s, w[:, None, None] * _outer(s.x))

        xe = s.x[s.event_idx]
        loglik += float(np.sum(eta[s.event_idx]))
        score += xe.sum(axis=0)

        if ties == TieMethod.BRESLOW or np.all(s.counts == 1):
            d = s.counts.astype(float)
            loglik -= float(np.sum(d * (np.log(s0) + shift)))
            mean = s1 / s0[:, None]
            score -= (d[:, None] * mean).sum(axis=0)
            info += np.einsum("t,tij->ij", d, s2 / s0[:, None, None] - _outer(mean))
        else:
            g = s.group
            we = w[s.event_idx]
            d0 = np.bincount(g, weights=we, minlength=s.times.size)
            d1 = np.zeros((s.times.size, p))
            np.add.at(d1, g, we[:, None] * xe)
            d2 = np.zeros((s.times.size, p, p))
            np.add.at(d2, g, we[:, None, None] * _outer(xe))
            frac = s.rank / s.counts[g]
            denom = s0[g] - frac * d0[g]
            mean = (s1[g] - frac[:, None] * d1[g]) / denom[:, None]
            second = (s2[g] - frac[:, None, None] * d2[g]) / denom[:, None, None]
            loglik -= float(np.sum(np.log(denom) + shift))
            score -= mean.sum(axis=0)
            info += np.sum(second - _outer(mean), axis=0)
    return loglik, score, info


def _check_rank(information: np.ndarray, names: Sequence[str]) -> None:
    p = len(names)
    if p == 0:
        return
    diag = np.diag(information)
    scale = max(1.0, float(np.max(np.abs(diag))))
    flat = [names[j] for j in range(p) if diag[j] <= 1e-10 * scale]
    if flat:
        raise RankDeficiencyError(
            flat, f"no variation within risk sets for: {', '.join(flat)} (rank-deficient design)"
        )
    eig = np.linalg.eigvalsh(information)
    if eig[0] <= 1e-10 * eig[-1]:
        raise RankDeficiencyError(names, "design matrix columns are linearly dependent")


def _baseline(
    strata: List[_Stratum], levels: Sequence[str], beta: np.ndarray
) -> Dict[str, StepFunction]:
    out = {}
    for level, s in zip(levels, strata):
        w = np.exp(s.x @ beta)
        s0 = _risk_sum(s, w)
        out[level] = StepFunction.from_increments(
            s.times,
            s.counts / s0,
            at_risk=s0,
            events=s.counts,
            kind="cumhaz",
            label=level,
        )
    return out


def _fingerprint(cohort: CohortTable) -> str:
    digest = hashlib.sha1()
    for arr in (cohort.tstart, cohort.tstop, cohort.status):
        digest.update(np.ascontiguousarray(arr).tobytes())
    digest.update("\x1f".join(cohort.subject_id.tolist()).encode("utf-8"))
    return digest.hexdigest()


# --------------------------------------------------------------------- fit


@dataclass(frozen=True, eq=False)
class CoxFit:
    """
    A fitted Cox model.

    Coefficients, covariance and the Breslow baseline cumulative hazard per
    stratum, plus what is needed for residuals, tests and prediction.
    """

    spec: ModelSpec
    names: Tuple[str, ...]
    beta: np.ndarray
    covariance: np.ndarray
    log_pl: float
    log_pl_null: float
    score_statistic: float
    iterations: int
    converged: bool
    history: Tuple[float, ...]
    baseline: Dict[str, StepFunction]
    n_subjects: int
    n_episodes: int
    n_events: int
    time_axis: str
    status_codes: Tuple[int, ...]
    internal_covariates: FrozenSet[str]
    fingerprint: str
    design: Design = field(repr=False)
    prepared: List[_Stratum] = field(repr=False)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def hazard_ratios(self) -> np.ndarray:
        return np.exp(self.beta)

    @property
    def z(self) -> np.ndarray:
        return self.beta / self.se

    @property
    def p_values(self) -> np.ndarray:
        return 2 * st.norm.sf(np.abs(self.z))

    def coefficient(self, name: str) -> float:
        try:
            return float(self.beta[self.names.index(name)])
        except ValueError:
            raise ValidationError(f"no coefficient named '{name}'") from None

    def confidence_intervals(
        self, conf_level: Optional[float] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Hazard-ratio confidence limits."""
        level = settings.CONFIDENCE_LEVEL if conf_level is None else conf_level
        z = st.norm.ppf(0.5 + level / 2)
        return np.exp(self.beta - z * self.se), np.exp(self.beta + z * self.se)

    def summary_frame(self, conf_level: Optional[float] = None) -> pd.DataFrame:
        lower, upper = self.confidence_intervals(conf_level)
        return pd.DataFrame(
            {
                "term": list(self.names),
                "coef": self.beta,
                "hr": self.hazard_ratios,
                "se": self.se,
                "lower": lower,
                "upper": upper,
                "z": self.z,
                "p": self.p_values,
            }
        )

    def to_dict(self, conf_level: Optional[float] = None) -> Dict[str, Any]:
        """Fit summary with stable field names."""
        frame = self.summary_frame(conf_level)
        return {
            "model": {
                "spec": self.spec.to_dict(),
                "time_axis": self.time_axis,
                "subjects": self.n_subjects,
                "episodes": self.n_episodes,
                "events": self.n_events,
                "log_pl": self.log_pl,
                "log_pl_null": self.log_pl_null,
                "iterations": self.iterations,
                "converged": self.converged,
                "strata": list(self.baseline),
            },
            "coefficients": [
                {key: (row[key] if key == "term" else float(row[key])) for key in frame.columns}
                for _, row in frame.iterrows()
            ],
        }

    def stratum_key(self, stratum: Optional[str]) -> str:
        """Resolve a profile's stratum label to a baseline key."""
        if self.spec.strata is None:
            return UNSTRATIFIED
        if stratum is None:
            raise ValidationError(f"model is stratified by '{self.spec.strata}'; give a stratum")
        key = str(stratum)
        if key not in self.baseline:
            raise ValidationError(f"unknown stratum '{key}'")
        return key

    def linear_predictor(self, values: Mapping[str, float], times: np.ndarray) -> np.ndarray:
        """
        Linear predictor for fixed covariate values at the given times.

        Time-interaction terms use the interval containing each time under
        the (tstart, tstop] convention.
        """
        times = np.asarray(times, dtype=float)
        eta = np.zeros(times.shape)
        col = 0
        for term in self.spec.terms:
            try:
                x = float(values[term.covariate])
            except KeyError:
                raise ValidationError(f"profile is missing covariate '{term.covariate}'") from None
            if term.transform == Transform.LINEAR:
                eta = eta + self.beta[col] * x
                col += 1
            elif term.transform == Transform.SPLINE:
                basis = spline_basis(np.array([x]), term.knots)[0]
                eta = eta + float(basis @ self.beta[col : col + basis.size])
                col += basis.size
            else:
                index = _interval_index(term.breaks, times, side="left")
                eta = eta + self.beta[col + index] * x
                col += len(term.breaks) + 1
        return eta


def fit_cox(
    cohort: CohortTable,
    spec: Union[ModelSpec, Sequence[str]],
    *,
    config: Optional[NewtonConfig] = None,
    init: Optional[np.ndarray] = None,
) -> CoxFit:
    """
    Fit a Cox model by maximising the partial likelihood.

    Args:
        cohort: Episodes (time-dependent covariates enter through splits)
        spec: ModelSpec, or covariate names for a linear model
        config: Newton iteration policy (uses default if None)
        init: Starting coefficients (zeros if None)

    Returns:
        CoxFit

    Raises:
        ValidationError: On unknown columns or when there are no events
        RankDeficiencyError: When a column has no variation within risk sets
        MonotoneLikelihoodError: When a coefficient diverges
        ConvergenceError: When the iteration limit is reached

    Example:
        >>> fit = fit_cox(cohort, ModelSpec.of("x"))
        >>> fit.hazard_ratios
    """
    if not isinstance(spec, ModelSpec):
        spec = ModelSpec.of(*spec)
    config = config or NewtonConfig()
    if cohort.tainted:
        logger.warning("fitting a cohort marked as tainted by immortal-time miscoding")

    design = build_design(cohort, spec)
    spec = design.spec
    n_events = int(design.event.sum())
    if n_events == 0:
        what = "any cause" if spec.cause is None else f"cause {spec.cause}"
        raise ValidationError(f"no events of {what}")

    prepared = _prepare(design)
    p = len(design.names)
    zero = np.zeros(p)
    log_pl_null, u0, i0 = _evaluate(prepared, zero, spec.ties)
    _check_rank(i0, design.names)
    score_statistic = float(u0 @ np.linalg.solve(i0, u0)) if p else 0.0

    start = zero if init is None else np.asarray(init, dtype=float)
    result = maximize(lambda b: _evaluate(prepared, b, spec.ties), start, config)
    beta = result.x

    if p:
        j = int(np.argmax(np.abs(beta)))
        if abs(beta[j]) > config.divergence_bound and (
            not result.converged or result.gradient[j] * beta[j] >= 0
        ):
            direction = "+" if beta[j] > 0 else "-"
            raise MonotoneLikelihoodError(design.names[j], direction)
    if not result.converged:
        raise ConvergenceError(
            f"Cox fit did not converge in {result.iterations} iterations "
            f"(max |score| = {np.max(np.abs(result.gradient)):.3g})"
        )

    covariance = np.linalg.inv(result.information) if p else np.zeros((0, 0))
    covariance = (covariance + covariance.T) / 2
    logger.info(
        "Cox fit: %d events, %d iterations, log PL %.6f", n_events, result.iterations, result.value
    )

    internal = (set(cohort.time_dependent) - set(cohort.external)) & set(spec.covariates)
    return CoxFit(
        spec=spec,
        names=design.names,
        beta=beta,
        covariance=covariance,
        log_pl=result.value,
        log_pl_null=log_pl_null,
        score_statistic=score_statistic,
        iterations=result.iterations,
        converged=result.converged,
        history=result.history,
        baseline=_baseline(prepared, design.levels, beta),
        n_subjects=cohort.n_subjects,
        n_episodes=cohort.n_episodes,
        n_events=n_events,
        time_axis=cohort.time_axis,
        status_codes=tuple(int(k) for k in np.unique(cohort.status) if k > 0),
        internal_covariates=frozenset(internal),
        fingerprint=_fingerprint(cohort),
        design=design,
        prepared=prepared,
    )


def breslow_baseline(fit: CoxFit, beta: Optional[np.ndarray] = None) -> Dict[str, StepFunction]:
    """
    Breslow baseline cumulative hazard per stratum.

    Jumps d / sum exp(Z'beta) over the risk set at each event time, at
    covariate value zero. ``beta`` overrides the fitted coefficients.
    """
    if beta is None:
        return dict(fit.baseline)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != fit.beta.shape:
        raise ValidationError(f"beta must have {fit.beta.size} entries")
    return _baseline(fit.prepared, fit.design.levels, beta)


# ------------------------------------------------------------- residuals


@dataclass(frozen=True, eq=False)
class SchoenfeldResiduals:
    """Schoenfeld residuals, one row per event."""

    times: np.ndarray
    strata: np.ndarray
    residuals: np.ndarray
    scaled: np.ndarray
    names: Tuple[str, ...]
    beta: np.ndarray

    def beta_path(self) -> np.ndarray:
        """Scaled residuals plus the coefficients: pointwise estimates of beta(t)."""
        return self.scaled + self.beta

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self.times, "stratum": self.strata})
        for j, name in enumerate(self.names):
            frame[name] = self.residuals[:, j]
        for j, name in enumerate(self.names):
            frame[f"{name}_scaled"] = self.scaled[:, j]
        return frame


def schoenfeld_residuals(fit: CoxFit, beta: Optional[np.ndarray] = None) -> SchoenfeldResiduals:
    """
    Schoenfeld residuals: covariate of each failing episode minus the
    risk-set weighted mean at its event time.

    The scaled version multiplies by the number of events and the
    covariance matrix.
    """
    if not fit.names:
        raise ValidationError("a null model has no residuals")
    beta = fit.beta if beta is None else np.asarray(beta, dtype=float)
    times, strata, residuals = [], [], []
    for level, s in zip(fit.design.levels, fit.prepared):
        if s.times.size == 0:
            continue
        eta = s.x @ beta
        w = np.exp(eta - np.max(eta))
        mean = _risk_sum(s, w[:, None] * s.x) / _risk_sum(s, w)[:, None]
        residuals.append(s.x[s.event_idx] - mean[s.group])
        times.append(s.times[s.group])
        strata.append(np.full(s.group.size, level))
    all_times = np.concatenate(times)
    order = np.argsort(all_times, kind="stable")
    r = np.vstack(residuals)[order]
    return SchoenfeldResiduals(
        times=all_times[order],
        strata=np.concatenate(strata)[order],
        residuals=r,
        scaled=fit.n_events * r @ fit.covariance,
        names=fit.names,
        beta=beta,
    )


def martingale_residuals(fit: CoxFit) -> pd.Series:
    """
    Martingale residuals per subject: observed events minus the cumulative
    hazard accrued over the subject's episodes.
    """
    design = fit.design
    expected = np.zeros(design.tstart.size)
    risk = np.exp(design.x @ fit.beta)
    for level in design.levels:
        rows = design.strata == level
        curve = fit.baseline[level]
        expected[rows] = risk[rows] * (curve(design.tstop[rows]) - curve(design.tstart[rows]))
    per_episode = design.event.astype(float) - expected
    series = pd.Series(per_episode, index=design.subject_id).groupby(level=0).sum()
    series.index.name = "id"
    series.name = "martingale"
    return series


# ------------------------------------------------------------------ tests


@dataclass(frozen=True)
class PHTest:
    """Per-covariate and global tests of proportional hazards."""

    transform: TimeTransform
    table: pd.DataFrame

    @property
    def global_p(self) -> float:
        return float(self.table.loc[self.table["term"] == "GLOBAL", "p"].iloc[0])

    def p_value(self, term: str) -> float:
        return float(self.table.loc[self.table["term"] == term, "p"].iloc[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "transform": self.transform.value,
            "tests": [
                {"term": r.term, "chisq": float(r.chisq), "df": int(r.df), "p": float(r.p)}
                for r in self.table.itertuples()
            ],
        }


def _km_left(design: Design, times: np.ndarray) -> np.ndarray:
    event_times, d = np.unique(design.tstop[design.event], return_counts=True)
    starts = np.sort(design.tstart)
    stops = np.sort(design.tstop)
    y = np.searchsorted(starts, event_times, side="left") - np.searchsorted(
        stops, event_times, side="left"
    )
    surv = np.cumprod(1.0 - d / y)
    idx = np.searchsorted(event_times, times, side="left") - 1
    return np.where(idx >= 0, surv[np.clip(idx, 0, None)], 1.0)


def ph_test(fit: CoxFit, transform: Union[TimeTransform, str] = TimeTransform.KM) -> PHTest:
    """
    Score-type test of proportional hazards from scaled Schoenfeld residuals.

    Each covariate's residuals are tested for correlation with a transform
    of time (identity, rank or the Kaplan-Meier scale), giving a 1-df
    chi-square per covariate and a global test.

    Raises:
        ValidationError: With fewer than three events
    """
    transform = TimeTransform(transform)
    if fit.n_events < 3:
        raise ValidationError("the proportional-hazards test needs at least 3 events")
    res = schoenfeld_residuals(fit)
    if transform == TimeTransform.IDENTITY:
        g = res.times.astype(float)
    elif transform == TimeTransform.RANK:
        g = st.rankdata(res.times)
    else:
        g = 1.0 - _km_left(fit.design, res.times)
    gc = g - g.mean()
    denom = float(gc @ gc)
    if denom <= 0:
        raise ValidationError("all events occur at one time; time trend is not testable")

    d = res.times.size
    v = fit.covariance
    u = gc @ res.residuals
    vu = v @ u
    per_term = d * vu**2 / (np.diag(v) * denom)
    global_stat = float(d * u @ v @ u / denom)
    p = len(fit.names)
    table = pd.DataFrame(
        {
            "term": list(fit.names) + ["GLOBAL"],
            "chisq": np.append(per_term, global_stat),
            "df": [1] * p + [p],
            "p": np.append(st.chi2.sf(per_term, 1), st.chi2.sf(global_stat, p)),
        }
    )
    return PHTest(transform, table)


@dataclass(frozen=True)
class ModelTests:
    """Wald, likelihood-ratio and score tests of a fit."""

    wald: pd.DataFrame
    wald_global: Tuple[float, int, float]
    likelihood_ratio: Tuple[float, int, float]
    score: Tuple[float, int, float]
    against: str

    def to_dict(self) -> Dict[str, Any]:
        def triple(t: Tuple[float, int, float]) -> Dict[str, Any]:
            return {"statistic": float(t[0]), "df": int(t[1]), "p": float(t[2])}

        return {
            "wald": [
                {"term": r.term, "chisq": float(r.chisq), "p": float(r.p)}
                for r in self.wald.itertuples()
            ],
            "wald_global": triple(self.wald_global),
            "likelihood_ratio": triple(self.likelihood_ratio),
            "likelihood_ratio_against": self.against,
            "score": triple(self.score),
        }


def model_tests(fit: CoxFit, nested: Optional[CoxFit] = None) -> ModelTests:
    """
    Wald tests per coefficient and overall, the score test against the null
    model, and the likelihood-ratio test against ``nested`` (or the null model).

    Raises:
        ValidationError: If ``nested`` is not nested in ``fit``
    """
    p = len(fit.names)
    chisq = fit.z**2 if p else np.zeros(0)
    wald = pd.DataFrame({"term": list(fit.names), "chisq": chisq, "p": st.chi2.sf(chisq, 1)})
    if p:
        stat = float(fit.beta @ np.linalg.solve(fit.covariance, fit.beta))
        wald_global = (stat, p, float(st.chi2.sf(stat, p)))
    else:
        wald_global = (0.0, 0, 1.0)

    if nested is None:
        reference, df, against = fit.log_pl_null, p, "null"
    else:
        comparable = (
            nested.fingerprint == fit.fingerprint
            and nested.spec.cause == fit.spec.cause
            and nested.spec.strata == fit.spec.strata
            and nested.spec.ties == fit.spec.ties
        )
        if not comparable or not set(nested.names) < set(fit.names):
            raise ValidationError(
                "models are not nested (same data, strata, cause and a subset of terms)"
            )
        reference, df, against = nested.log_pl, p - len(nested.names), "nested"
    lr = max(0.0, 2.0 * (fit.log_pl - reference))
    score = (fit.score_statistic, p, float(st.chi2.sf(fit.score_statistic, p)) if p else 1.0)
    return ModelTests(
        wald=wald,
        wald_global=wald_global,
        likelihood_ratio=(lr, df, float(st.chi2.sf(lr, df)) if df else 1.0),
        score=score,
        against=against,
    )

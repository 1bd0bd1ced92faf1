"""
Synthetic cohorts from fully specified intensity scenarios.

Every subject draws its row of uniforms from its own Philox stream, seeded
with (scenario seed, subject index): six fixed columns then one per
covariate. A subject's draws do not depend on the cohort size or on
covariates listed after its own. Event times come from inverting the
all-cause cumulative hazard in closed form.
"""

import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import scipy.stats as st
import yaml
from pydantic import BaseModel, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .cohort import CohortTable, Timeline, merge_timeline
from .exceptions import ConfigError, ValidationError
from .models import HazardShape, InjectionMode

logger = logging.getLogger(__name__)

# column layout of the per-subject uniform row (covariates follow)
_ENTRY, _EVENT, _CAUSE, _SWITCH, _CENSOR, _ACCRUAL = range(6)
_FIXED_COLUMNS = 6


class BaselineHazard(BaseModel):
    """
    Baseline hazard of one cause.

    ``constant``: rate; ``weibull``: alpha(t) = rate * gamma * (rate * t)^(gamma - 1);
    ``piecewise``: ``rates[j]`` on [cutpoints[j], cutpoints[j + 1]), the
    first cut point 0 and the last rate open-ended.
    """

    shape: HazardShape = HazardShape.CONSTANT
    rate: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=1.0, gt=0)
    cutpoints: List[float] = Field(default_factory=list)
    rates: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_pieces(self) -> "BaselineHazard":
        if self.shape == HazardShape.PIECEWISE:
            cuts = np.asarray(self.cutpoints, dtype=float)
            if cuts.size == 0 or cuts[0] != 0 or np.any(np.diff(cuts) <= 0):
                raise ValueError("piecewise cut points must start at 0 and ascend")
            if len(self.rates) != cuts.size or min(self.rates) < 0:
                raise ValueError("piecewise hazards need one non-negative rate per cut point")
        return self

    def pieces(self) -> Tuple[np.ndarray, np.ndarray]:
        """Breakpoints and rates of a piecewise-constant form."""
        if self.shape == HazardShape.PIECEWISE:
            return np.asarray(self.cutpoints, dtype=float), np.asarray(self.rates, dtype=float)
        if self.shape == HazardShape.CONSTANT:
            return np.array([0.0]), np.array([self.rate])
        raise ValidationError("a Weibull hazard has no piecewise-constant form")

    def hazard(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape == HazardShape.WEIBULL:
            with np.errstate(divide="ignore"):
                return self.rate * self.gamma * (self.rate * t) ** (self.gamma - 1)
        cuts, rates = self.pieces()
        return rates[np.searchsorted(cuts, t, side="right") - 1]

    def cumulative(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.shape == HazardShape.WEIBULL:
            return (self.rate * t) ** self.gamma
        cuts, rates = self.pieces()
        steps = np.concatenate([[0.0], np.cumsum(np.diff(cuts) * rates[:-1])])
        j = np.searchsorted(cuts, t, side="right") - 1
        return steps[j] + (t - cuts[j]) * rates[j]


class CauseSpec(BaseModel):
    """One cause: code, label, baseline hazard and log hazard ratios."""

    code: int = Field(ge=1)
    label: Optional[str] = None
    baseline: BaselineHazard = Field(default_factory=BaselineHazard)
    log_hr: Dict[str, float] = Field(default_factory=dict)


class CovariateSpec(BaseModel):
    """A baseline covariate drawn through the quantile function of its distribution."""

    name: str
    distribution: str = Field(pattern="^(bernoulli|normal|uniform|exponential)$")
    p: float = Field(default=0.5, ge=0, le=1)
    mean: float = 0.0
    sd: float = Field(default=1.0, gt=0)
    low: float = 0.0
    high: float = 1.0
    rate: float = Field(default=1.0, gt=0)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        if self.distribution == "bernoulli":
            return st.bernoulli(self.p).ppf(u)
        if self.distribution == "normal":
            return st.norm(self.mean, self.sd).ppf(u)
        if self.distribution == "uniform":
            return st.uniform(self.low, self.high - self.low).ppf(u)
        return st.expon(scale=1.0 / self.rate).ppf(u)


class ExposureSpec(BaseModel):
    """A 0 -> 1 exposure switching at an exponential time after origin."""

    name: str = "exposure"
    switch_rate: float = Field(gt=0)


class EntrySpec(BaseModel):
    """Delayed entry, uniform on [low, high]."""

    low: float = Field(default=0.0, ge=0)
    high: float = Field(ge=0)


class CensoringSpec(BaseModel):
    """
    Censoring: administrative end of study, exponential drop-out, and
    uniform staggered accrual over ``accrual`` time units (which moves each
    subject's administrative censoring earlier by its accrual time).
    """

    administrative: Optional[float] = Field(default=None, gt=0)
    rate: Optional[float] = Field(default=None, gt=0)
    accrual: Optional[float] = Field(default=None, ge=0)


class Scenario(BaseModel):
    """
    A complete data-generating scenario.

    Example:
        >>> Scenario(n=100, seed=1, causes=[CauseSpec(code=1)])
    """

    n: int = Field(gt=0)
    seed: int = Field(default=20240101, ge=0)
    causes: List[CauseSpec] = Field(min_length=1)
    covariates: List[CovariateSpec] = Field(default_factory=list)
    exposure: Optional[ExposureSpec] = None
    entry: Optional[EntrySpec] = None
    censoring: CensoringSpec = Field(default_factory=CensoringSpec)
    time_axis: str = "time"

    @model_validator(mode="after")
    def _check(self) -> "Scenario":
        codes = [c.code for c in self.causes]
        if len(set(codes)) != len(codes):
            raise ValueError("cause codes must be distinct")
        names = [c.name for c in self.covariates]
        if self.exposure is not None:
            names.append(self.exposure.name)
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be distinct")
        for cause in self.causes:
            unknown = set(cause.log_hr) - set(names)
            if unknown:
                raise ValueError(
                    f"log_hr of cause {cause.code} names unknown covariate(s) {sorted(unknown)}"
                )
        shapes = {c.baseline.shape for c in self.causes}
        if HazardShape.WEIBULL in shapes:
            gammas = {c.baseline.gamma for c in self.causes}
            if shapes != {HazardShape.WEIBULL} or len(gammas) != 1:
                raise ValueError(
                    "Weibull causes need a common gamma and cannot mix with other shapes"
                )
        if self.entry is not None and self.entry.high < self.entry.low:
            raise ValueError("entry.high must be >= entry.low")
        return self

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "Scenario":
        """Load a scenario document."""
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read scenario {path}: {e}") from e
        try:
            return cls.model_validate(raw or {})
        except PydanticValidationError as e:
            raise ConfigError(f"invalid scenario {path}:\n{e}") from e

    @property
    def covariate_names(self) -> List[str]:
        return [c.name for c in self.covariates]


class SimulationTruth(BaseModel):
    """The generating parameters plus per-subject latent quantities."""

    scenario: Scenario
    event_times: Dict[str, float]
    switch_times: Dict[str, float]
    excluded: List[str]

    def cause(self, code: int) -> CauseSpec:
        for cause in self.scenario.causes:
            if cause.code == code:
                return cause
        raise ValidationError(f"unknown cause code {code}")

    def cumulative_hazard(
        self, code: int, t: Union[float, np.ndarray], covariates: Optional[Dict[str, float]] = None
    ) -> np.ndarray:
        """True cumulative hazard of a cause at fixed covariate values (0 if omitted)."""
        cause = self.cause(code)
        eta = sum(cause.log_hr.get(k, 0.0) * v for k, v in (covariates or {}).items())
        return cause.baseline.cumulative(t) * np.exp(eta)

    def to_yaml(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        document = yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)
        path.write_text(document, encoding="utf-8")
        return path


class Simulation(NamedTuple):
    cohort: CohortTable
    timeline: Timeline
    truth: SimulationTruth


def _invert_piecewise(target: float, cuts: np.ndarray, rates: np.ndarray) -> float:
    """Smallest t with H(t) = target for a piecewise-linear cumulative hazard H."""
    steps = np.concatenate([[0.0], np.cumsum(np.diff(cuts) * rates[:-1])])
    j = int(np.searchsorted(steps, target, side="right")) - 1
    while j > 0 and rates[j] == 0 and steps[j] == target:
        j -= 1
    if rates[j] == 0:
        return float("inf")
    return float(cuts[j] + (target - steps[j]) / rates[j])


def _subject_pieces(
    scenario: Scenario, eta: np.ndarray, eta_exposed: np.ndarray, switch: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Breakpoints, all-cause rates and per-cause rates for one subject (piecewise family)."""
    cuts = np.unique(
        np.concatenate(
            [c.baseline.pieces()[0] for c in scenario.causes]
            + ([np.array([switch])] if np.isfinite(switch) else [])
        )
    )
    per_cause = np.empty((len(scenario.causes), cuts.size))
    for k, cause in enumerate(scenario.causes):
        base = cause.baseline.hazard(cuts)
        mult = np.where(cuts >= switch, np.exp(eta_exposed[k]), np.exp(eta[k]))
        per_cause[k] = base * mult
    return cuts, per_cause.sum(axis=0), per_cause


def _subject_uniforms(seed: int, index: int, size: int) -> np.ndarray:
    stream = np.random.Philox(np.random.SeedSequence([seed, index]))
    return np.random.Generator(stream).random(size)


def simulate_cohort(scenario: Scenario) -> Simulation:
    """
    Draw a cohort from ``scenario``.

    Subjects enter at their entry time V (0 without delayed entry); the event
    time solves Lambda(T) = Lambda(V) + E with E standard exponential, and the
    cause is drawn in proportion to the cause-specific hazards at T. Exposure
    switches before exit go to the timeline and split the episodes.

    Returns:
        Simulation(cohort, timeline, truth)
    """
    n = scenario.n
    p = len(scenario.covariates)
    u = np.vstack([_subject_uniforms(scenario.seed, i, _FIXED_COLUMNS + p) for i in range(n)])

    x = np.zeros((n, p))
    for j, spec in enumerate(scenario.covariates):
        x[:, j] = spec.quantile(u[:, _FIXED_COLUMNS + j])
    names = scenario.covariate_names
    exposure = scenario.exposure.name if scenario.exposure is not None else None

    beta = np.array([[c.log_hr.get(name, 0.0) for name in names] for c in scenario.causes])
    beta = beta.reshape(len(scenario.causes), p)
    beta_exp = np.array([c.log_hr.get(exposure, 0.0) if exposure else 0.0 for c in scenario.causes])
    eta = x @ beta.T
    eta_exposed = eta + beta_exp

    if scenario.exposure is not None:
        switch = st.expon(scale=1.0 / scenario.exposure.switch_rate).ppf(u[:, _SWITCH])
    else:
        switch = np.full(n, np.inf)
    if scenario.entry is not None:
        entry = scenario.entry.low + (scenario.entry.high - scenario.entry.low) * u[:, _ENTRY]
    else:
        entry = np.zeros(n)
    draw = -np.log1p(-u[:, _EVENT])

    weibull = scenario.causes[0].baseline.shape == HazardShape.WEIBULL
    event_time = np.empty(n)
    for i in range(n):
        if weibull:
            gamma = scenario.causes[0].baseline.gamma
            lam = np.array([c.baseline.rate for c in scenario.causes]) ** gamma
            c0 = float(lam @ np.exp(eta[i]))
            c1 = float(lam @ np.exp(eta_exposed[i]))
            boundary = c0 * switch[i] ** gamma
            if entry[i] <= switch[i]:
                target = c0 * entry[i] ** gamma + draw[i]
            else:
                target = boundary + c1 * (entry[i] ** gamma - switch[i] ** gamma) + draw[i]
            if target <= boundary:
                event_time[i] = (target / c0) ** (1.0 / gamma)
            else:
                event_time[i] = (switch[i] ** gamma + (target - boundary) / c1) ** (1.0 / gamma)
        else:
            cuts, total, _ = _subject_pieces(scenario, eta[i], eta_exposed[i], switch[i])
            steps = np.concatenate([[0.0], np.cumsum(np.diff(cuts) * total[:-1])])
            j = int(np.searchsorted(cuts, entry[i], side="right")) - 1
            target = steps[j] + (entry[i] - cuts[j]) * total[j] + draw[i]
            event_time[i] = _invert_piecewise(target, cuts, total)

    censor = np.full(n, np.inf)
    cens = scenario.censoring
    if cens.administrative is not None:
        accrual = cens.accrual * u[:, _ACCRUAL] if cens.accrual else np.zeros(n)
        censor = np.minimum(censor, cens.administrative - accrual)
    if cens.rate is not None:
        censor = np.minimum(censor, entry + st.expon(scale=1.0 / cens.rate).ppf(u[:, _CENSOR]))
    if not np.all(np.isfinite(np.minimum(event_time, censor))):
        raise ValidationError("scenario produces infinite follow-up; add censoring")

    exit_time = np.minimum(event_time, censor)
    observed = event_time <= censor
    codes = np.array([c.code for c in scenario.causes])
    status = np.zeros(n, dtype=int)
    for i in np.flatnonzero(observed):
        t = event_time[i]
        exposed = t > switch[i]
        lin = eta_exposed[i] if exposed else eta[i]
        rates = np.array([c.baseline.hazard(t) for c in scenario.causes]) * np.exp(lin)
        if rates.sum() <= 0:
            rates = np.ones_like(rates)
        cum = np.cumsum(rates / rates.sum())
        k = min(int(np.searchsorted(cum, u[i, _CAUSE], side="right")), codes.size - 1)
        status[i] = codes[k]

    ids = np.array([f"s{i + 1}" for i in range(n)])
    keep = exit_time > entry
    excluded = ids[~keep].tolist()
    if excluded:
        logger.info("%d subject(s) censored before entry were not enrolled", len(excluded))

    labels = {c.code: c.label or f"cause {c.code}" for c in scenario.causes}
    columns = list(names)
    values = x
    if exposure is not None:
        columns.append(exposure)
        values = np.column_stack([x, np.zeros(n)])
    cohort = CohortTable(
        subject_id=ids[keep],
        tstart=entry[keep],
        tstop=exit_time[keep],
        status=status[keep],
        covariates=values[keep].reshape(int(keep.sum()), len(columns)),
        covariate_names=tuple(columns),
        cause_labels=labels,
        time_axis=scenario.time_axis,
    )

    switched = keep & (switch < exit_time)
    timeline = Timeline(
        subject_id=ids[switched],
        time=switch[switched],
        variable=np.full(int(switched.sum()), exposure or "exposure"),
        value=np.ones(int(switched.sum())),
    )
    if exposure is not None:
        cohort = merge_timeline(cohort, timeline, baseline={exposure: 0.0})

    truth = SimulationTruth(
        scenario=scenario,
        event_times=dict(zip(ids.tolist(), event_time.tolist())),
        switch_times={s: float(t) for s, t in zip(ids[switched].tolist(), switch[switched])},
        excluded=excluded,
    )
    logger.info(
        "simulated %d subjects, %d events, %d exposure switches",
        cohort.n_subjects,
        cohort.n_events(),
        len(timeline),
    )
    return Simulation(cohort, timeline, truth)


def inject_immortal_time_bias(
    cohort: CohortTable,
    timeline: Timeline,
    mode: Union[InjectionMode, str] = InjectionMode.EVER_TREATED,
    *,
    variable: str = "exposure",
) -> CohortTable:
    """
    Miscode a time-dependent exposure as a baseline covariate.

    ``ever_treated`` codes 1 from entry for every subject whose exposure
    switches during follow-up; ``total_dose`` codes the total exposed time
    over follow-up. Each subject collapses to one episode from entry to exit.
    The result is marked tainted.
    """
    mode = InjectionMode(mode)
    records = timeline.records(variable)
    first, last = cohort.first_rows, cohort.last_rows
    entry = cohort.tstart[first]
    exit_ = cohort.tstop[last]
    value = np.zeros(cohort.n_subjects)
    for k, sid in enumerate(cohort.subjects.tolist()):
        times, values = records.get(sid, (np.zeros(0), np.zeros(0)))
        started = times[(values != 0) & (times < exit_[k])]
        if started.size == 0:
            continue
        onset = float(started[0])
        if mode == InjectionMode.EVER_TREATED:
            value[k] = 1.0
        else:
            value[k] = exit_[k] - max(onset, entry[k])

    out = cohort.take(first, tstop=exit_, status=cohort.status[last])
    out = out.with_column(variable, value)
    logger.warning("immortal-time miscoding injected (%s); cohort marked tainted", mode.value)
    return out.replace(tainted=True)

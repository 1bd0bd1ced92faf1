"""
Config-driven analysis runs.

Inputs are read and every block's references are resolved before anything
is written. Blocks then run in order, each writing its artifacts to the
output directory, and a manifest records what went in.
"""

import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd
import scipy
import statsmodels
from rich.table import Table

from .cohort import (
    CohortTable,
    Timeline,
    censoring_as_event,
    emit_episodes,
    emit_timeline,
    ingest_episodes,
    merge_timeline,
    read_timeline,
    subset,
    switch_time_axis,
)
from .config import (
    AJBlock,
    AnalysisConfig,
    CensoringBlock,
    CoxBlock,
    GFormulaBlock,
    KMBlock,
    LandmarkBlock,
    LintBlock,
    NABlock,
    PoissonBlock,
    PredictBlock,
    SimulateBlock,
    TableBlock,
    TermLike,
    block_references,
)
from .cox import ModelSpec, Term, fit_cox, martingale_residuals, model_tests, ph_test
from .cox import schoenfeld_residuals
from .exceptions import (
    BlockError,
    ConfigError,
    DownloadError,
    LintFailure,
    NumericalError,
    ValidationError,
)
from .lint import lint
from .nonparam import aalen_johansen, censoring_curve, kaplan_meier, nelson_aalen
from .predict import (
    CovariateProfile,
    attributable_events,
    g_formula,
    landmark_series,
    predict_cuminc,
    predict_survival,
)
from .rates import TimeAxis, fit_rate_model, rate_summary, tabulate_person_time
from .report import (
    fit_table,
    frame_table,
    hr_frame,
    hr_table,
    ph_table,
    rate_fit_table,
    render,
    tests_table,
)
from .simulate import Scenario, simulate_cohort

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class ExitCode(IntEnum):
    """Process exit status of a run."""

    OK = 0
    FAILURE = 1
    CONFIG = 2
    DATA = 3
    LINT = 4
    NUMERICAL = 5


def exit_code_for(error: BaseException) -> ExitCode:
    """Map an error (or a block error's cause) to an exit code."""
    if isinstance(error, BlockError):
        return exit_code_for(error.cause)
    if isinstance(error, ConfigError):
        return ExitCode.CONFIG
    if isinstance(error, LintFailure):
        return ExitCode.LINT
    if isinstance(error, NumericalError):
        return ExitCode.NUMERICAL
    if isinstance(error, (ValidationError, DownloadError)):
        return ExitCode.DATA
    return ExitCode.FAILURE


@dataclass
class BlockResult:
    """Artifacts written by one block, and its error if it failed."""

    name: str
    kind: str
    artifacts: List[Path] = field(default_factory=list)
    error: Optional[BlockError] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self, root: Path) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "status": "ok" if self.ok else "failed",
            "artifacts": [str(p.relative_to(root)) for p in self.artifacts],
            "error": None if self.error is None else str(self.error.cause),
        }


@dataclass
class PipelineResult:
    output_dir: Path
    blocks: List[BlockResult] = field(default_factory=list)
    manifest: Optional[Path] = None

    @property
    def failures(self) -> List[BlockError]:
        return [b.error for b in self.blocks if b.error is not None]

    @property
    def exit_code(self) -> ExitCode:
        """Code of the first failing block (a lint block with errors counts as failing)."""
        failures = self.failures
        return exit_code_for(failures[0]) if failures else ExitCode.OK


@dataclass
class _Data:
    """The working cohort plus the unchecked file contents the linter sees."""

    cohort: CohortTable
    raw: CohortTable
    timeline: Optional[Timeline] = None
    raw_timeline: Optional[Timeline] = None
    baseline: Dict[str, float] = field(default_factory=dict)

    @property
    def columns(self) -> Set[str]:
        columns = set(self.cohort.covariate_names)
        if self.cohort.stratum is not None:
            columns.add("stratum")
        return columns


def _term(term: TermLike) -> Term:
    if isinstance(term, str):
        return Term(term)
    return Term(
        term.covariate,
        term.transform,
        tuple(term.knots) if term.knots is not None else None,
        tuple(term.breaks),
    )


def _model_spec(block: Any) -> ModelSpec:
    return ModelSpec(
        terms=tuple(_term(t) for t in block.terms),
        strata=block.strata,
        ties=block.ties,
        cause=block.cause,
    )


def _block_columns(block: Any) -> List[str]:
    """Cohort columns a block reads."""
    columns = list(block.where)
    if isinstance(block, (CoxBlock, LandmarkBlock, CensoringBlock)):
        columns += [_term(t).covariate for t in block.terms]
    if isinstance(block, (CoxBlock, LandmarkBlock)) and block.strata:
        columns.append(block.strata)
    if isinstance(block, (KMBlock, NABlock)) and block.by:
        columns.append(block.by)
    if isinstance(block, PoissonBlock):
        columns += list(block.patterns) + [a.offset for a in block.axes if a.offset]
    if isinstance(block, GFormulaBlock):
        columns.append(block.treatment)
    return columns


def _stratum_label(value: Any) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def _where_unchecked(cohort: CohortTable, where: Dict[str, Any]) -> CohortTable:
    """Row filter for cohorts that may violate episode invariants."""
    mask = np.ones(cohort.n_episodes, dtype=bool)
    for column, value in where.items():
        if column == "stratum":
            mask &= cohort.labels("stratum") == _stratum_label(value)
        else:
            mask &= cohort.column(column) == float(value)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValidationError(f"no episodes match {where}")
    return cohort.replace(
        subject_id=cohort.subject_id[rows],
        tstart=cohort.tstart[rows],
        tstop=cohort.tstop[rows],
        status=cohort.status[rows],
        covariates=cohort.covariates[rows],
        stratum=None if cohort.stratum is None else cohort.stratum[rows],
        check=False,
    )


def _shift_timeline(timeline: Timeline, cohort: CohortTable, column: str) -> Timeline:
    """Move change times onto the axis reached by adding ``column``."""
    offsets = dict(zip(cohort.subjects.tolist(), cohort.column(column)[cohort.first_rows]))
    known = np.array([s in offsets for s in timeline.subject_id.tolist()], dtype=bool)
    ids = timeline.subject_id[known]
    shift = np.array([offsets[s] for s in ids.tolist()], dtype=float)
    return Timeline(
        ids, timeline.time[known] + shift, timeline.variable[known], timeline.value[known]
    )


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def config_hash(config: AnalysisConfig) -> str:
    """SHA-256 of the validated config in canonical JSON form."""
    document = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(document.encode("utf-8")).hexdigest()


class Pipeline:
    """
    Resolves and runs an analysis config.

    Args:
        config: Validated analysis config
        output_dir: Override of ``config.output_dir``
        seed: Override of ``config.seed``

    Example:
        >>> pipeline = Pipeline(load_config("analysis.yaml"))
        >>> result = pipeline.run()
        >>> result.exit_code
    """

    def __init__(
        self,
        config: AnalysisConfig,
        *,
        output_dir: Optional[Path] = None,
        seed: Optional[int] = None,
    ):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.seed = config.seed if seed is None else seed
        self.conf_level = config.conf_level
        self.data: Optional[_Data] = None
        self.fits: Dict[str, Any] = {}
        self.specs: Dict[str, ModelSpec] = {}
        self.axes: Dict[str, List[TimeAxis]] = {}
        self.scenarios: Dict[str, Scenario] = {}
        self.inputs: List[Path] = []
        self._handlers: Dict[str, Callable[[Any], List[Path]]] = {
            "lint": self._lint,
            "km": self._km,
            "na": self._na,
            "aj": self._aj,
            "censoring": self._censoring,
            "cox": self._cox,
            "poisson": self._poisson,
            "landmark": self._landmark,
            "predict": self._predict,
            "gformula": self._gformula,
            "simulate": self._simulate,
            "table": self._table,
        }

    # ------------------------------------------------------------- resolve

    def _load_inputs(self) -> Optional[_Data]:
        inputs = self.config.inputs
        if inputs is None:
            return None
        axis = self.config.time_axis
        raw = ingest_episodes(
            inputs.episodes,
            sep=inputs.sep,
            categorical=inputs.categorical,
            cause_labels=inputs.cause_labels or None,
            time_axis=axis.primary,
            check=False,
        )
        self.inputs.append(inputs.episodes)
        raw_timeline = None
        if inputs.timeline is not None:
            raw_timeline = read_timeline(inputs.timeline, sep=inputs.sep)
            self.inputs.append(inputs.timeline)

        try:
            cohort = raw.replace()
        except ValidationError as e:
            raise ValidationError(f"{e} (run 'hazardkit lint' for a full report)") from e

        timeline = raw_timeline
        if raw_timeline is not None and inputs.merge_timeline:
            cohort = merge_timeline(
                cohort,
                raw_timeline,
                inputs.baseline or None,
                lag=inputs.lag,
                external=inputs.external,
            )
            timeline = raw_timeline.shifted(inputs.lag) if inputs.lag else raw_timeline
        if axis.offset is not None:
            if not cohort.has_column(axis.offset):
                raise ConfigError(f"time_axis: unknown offset column '{axis.offset}'")
            if timeline is not None:
                timeline = _shift_timeline(timeline, cohort, axis.offset)
            cohort = switch_time_axis(cohort, axis.offset, axis=axis.alternate)
        return _Data(cohort, raw, timeline, raw_timeline, dict(inputs.baseline))

    def resolve(self) -> None:
        """
        Read inputs and check every block against them.

        Raises:
            ConfigError: On an unknown column or an invalid block parameter
            ValidationError: On unreadable or invalid input data
        """
        self.data = self._load_inputs()
        columns = self.data.columns if self.data is not None else set()
        for block in self.config.blocks:
            name = block.name
            try:
                if isinstance(block, (CoxBlock, LandmarkBlock)):
                    self.specs[name] = _model_spec(block)
                elif isinstance(block, CensoringBlock) and block.terms:
                    self.specs[name] = ModelSpec(terms=tuple(_term(t) for t in block.terms))
                elif isinstance(block, PoissonBlock):
                    self.axes[name] = [
                        TimeAxis(a.name, tuple(float(c) for c in a.cutpoints), a.offset)
                        for a in block.axes
                    ]
            except ValidationError as e:
                raise ConfigError(f"block '{name}': {e}") from e

            if isinstance(block, PoissonBlock):
                known = {a.name for a in block.axes} | set(block.patterns)
                for column in list(block.factors) + list(block.linear) + list(block.rates_by):
                    if column not in known:
                        raise ConfigError(
                            f"block '{name}': '{column}' is neither an axis nor a pattern"
                        )

            if isinstance(block, SimulateBlock):
                scenario = block.scenario or Scenario.from_yaml(block.scenario_file)
                self.scenarios[name] = scenario
                if block.scenario_file is not None:
                    self.inputs.append(block.scenario_file)
                if block.use_as_input:
                    columns = set(scenario.covariate_names)
                    if scenario.exposure is not None:
                        columns.add(scenario.exposure.name)
                continue

            for column in _block_columns(block):
                if column not in columns:
                    raise ConfigError(f"block '{name}': unknown column '{column}'")
            if isinstance(block, (PredictBlock, GFormulaBlock)):
                self._check_fit_inputs(block)
        logger.info("config resolved: %d block(s)", len(self.config.blocks))

    def _check_fit_inputs(self, block: Any) -> None:
        """Match a predict or g-formula block against the Cox blocks it uses."""
        refs = [block.fit] if block.fit is not None else list(block.fits.values())
        for ref in refs:
            spec = self.specs[ref]
            if isinstance(block, GFormulaBlock):
                if block.treatment not in spec.covariates:
                    raise ConfigError(
                        f"block '{block.name}': treatment '{block.treatment}' "
                        f"is not a term of '{ref}'"
                    )
                continue
            missing = [c for c in spec.covariates if c not in block.profile]
            if missing:
                raise ConfigError(
                    f"block '{block.name}': profile is missing covariate '{missing[0]}' "
                    f"of '{ref}'"
                )
            extra = sorted(set(block.profile) - set(spec.covariates))
            if extra:
                raise ConfigError(
                    f"block '{block.name}': profile sets '{extra[0]}', "
                    f"which is not a term of '{ref}'"
                )
            if spec.strata is None:
                if block.stratum is not None:
                    raise ConfigError(
                        f"block '{block.name}': '{ref}' is not stratified; drop stratum"
                    )
                continue
            if block.stratum is None:
                raise ConfigError(
                    f"block '{block.name}': '{ref}' is stratified by "
                    f"'{spec.strata}'; give a stratum"
                )
            if self.data is not None:
                levels = set(self.data.cohort.labels(spec.strata).tolist())
                if _stratum_label(block.stratum) not in levels:
                    raise ConfigError(
                        f"block '{block.name}': unknown stratum '{block.stratum}' "
                        f"of '{spec.strata}'"
                    )

    # ----------------------------------------------------------------- run

    def run(self) -> PipelineResult:
        """Resolve, then run every block in order and write the manifest."""
        self.resolve()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        result = PipelineResult(self.output_dir)
        failed: Set[str] = set()
        for block in self.config.blocks:
            outcome = BlockResult(block.name, block.kind)
            result.blocks.append(outcome)
            logger.info("running block '%s' (%s)", block.name, block.kind)
            broken = [ref for ref in block_references(block) if ref in failed]
            try:
                if broken:
                    raise ValidationError(f"depends on failed block '{broken[0]}'")
                outcome.artifacts = self._handlers[block.kind](block)
            except LintFailure as e:
                outcome.artifacts = list(getattr(e, "paths", []))
                outcome.error = BlockError(block.name, e)
            except Exception as e:
                logger.debug("block '%s' raised", block.name, exc_info=True)
                outcome.error = BlockError(block.name, e)
            if outcome.error is not None:
                failed.add(block.name)
                logger.error("%s", outcome.error)

        result.manifest = self._write_json(MANIFEST, self._manifest(result))
        return result

    def _manifest(self, result: PipelineResult) -> Dict[str, Any]:
        from . import __version__

        return {
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "config_sha256": config_hash(self.config),
            "seed": self.seed,
            "conf_level": self.conf_level,
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "versions": {
                "hazardkit": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "pandas": pd.__version__,
                "scipy": scipy.__version__,
                "statsmodels": statsmodels.__version__,
            },
            "blocks": [b.to_dict(self.output_dir) for b in result.blocks],
            "exit_code": int(result.exit_code),
        }

    # ------------------------------------------------------------- writers

    def _path(self, name: str) -> Path:
        return self.output_dir / name

    def _write_json(self, name: str, payload: Any) -> Path:
        path = self._path(name)
        text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
        path.write_text(text + "\n", encoding="utf-8")
        return path

    def _write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._path(name)
        frame.to_csv(path, index=False)
        return path

    def _write_text(self, name: str, *tables: Table) -> Path:
        path = self._path(name)
        path.write_text("\n".join(render(t) for t in tables), encoding="utf-8")
        return path

    # -------------------------------------------------------------- blocks

    def _cohort(self, block: Any) -> CohortTable:
        if self.data is None:
            raise ValidationError("no cohort loaded")
        cohort = self.data.cohort
        for column, value in block.where.items():
            if column == "stratum":
                value = _stratum_label(value)
            cohort = subset(cohort, column, value)
        return cohort

    def _groups(self, cohort: CohortTable, by: Optional[str]) -> List[Tuple[str, CohortTable]]:
        if by is None:
            return [("", cohort)]
        labels = cohort.labels(by)
        return [
            (f"_{by}={level}", cohort.take(np.flatnonzero(labels == level)))
            for level in np.unique(labels)
        ]

    def _lint(self, block: LintBlock) -> List[Path]:
        raw = self.data.raw if self.data is not None else None
        if raw is None:
            raise ValidationError("no cohort loaded")
        if block.where:
            raw = _where_unchecked(raw, block.where)
        report = lint(
            raw,
            self.data.raw_timeline,
            baseline=self.data.baseline or None,
            admin_cutoff=block.admin_cutoff,
            dropout_threshold=block.dropout_threshold,
        )
        paths = list(report.write(self._path(block.name)))
        logger.info("block '%s': %d finding(s)", block.name, len(report.findings))
        if report.has_errors:
            failure = LintFailure(report, f"lint found {len(report.findings)} finding(s)")
            failure.paths = paths
            raise failure
        return paths

    def _km(self, block: KMBlock) -> List[Path]:
        paths = []
        for suffix, part in self._groups(self._cohort(block), block.by):
            curve = kaplan_meier(
                part, block.condition_time, cause=block.cause, conf_level=self.conf_level
            )
            paths.append(curve.to_csv(self._path(f"{block.name}{suffix}.csv")))
        return paths

    def _na(self, block: NABlock) -> List[Path]:
        paths = []
        for suffix, part in self._groups(self._cohort(block), block.by):
            curve = nelson_aalen(part, block.cause, conf_level=self.conf_level)
            paths.append(curve.to_csv(self._path(f"{block.name}{suffix}.csv")))
        return paths

    def _aj(self, block: AJBlock) -> List[Path]:
        cohort = self._cohort(block)
        result = aalen_johansen(cohort, causes=tuple(block.causes) if block.causes else None)
        frames = []
        for cause, curve in result.incidence.items():
            frame = curve.to_frame()
            frame.insert(0, "curve", f"incidence {cause}")
            frames.append(frame)
        overall = result.survival.to_frame()
        overall.insert(0, "curve", "survival")
        frames.append(overall)
        return [self._write_csv(f"{block.name}.csv", pd.concat(frames, ignore_index=True))]

    def _censoring(self, block: CensoringBlock) -> List[Path]:
        cohort = self._cohort(block)
        curve = censoring_curve(cohort, conf_level=self.conf_level)
        paths = [curve.to_csv(self._path(f"{block.name}.csv"))]
        if block.name in self.specs:
            fit = fit_cox(censoring_as_event(cohort), self.specs[block.name])
            paths.append(self._write_json(f"{block.name}_model.json", fit.to_dict(self.conf_level)))
            paths.append(
                self._write_text(
                    f"{block.name}_model.txt",
                    fit_table(fit, f"{block.name}: censoring model", self.conf_level),
                )
            )
        return paths

    def _cox(self, block: CoxBlock) -> List[Path]:
        fit = fit_cox(self._cohort(block), self.specs[block.name])
        self.fits[block.name] = fit
        tests = model_tests(fit, self.fits[block.nested] if block.nested else None)

        payload = fit.to_dict(self.conf_level)
        payload["tests"] = tests.to_dict()
        tables = [
            fit_table(fit, block.name, self.conf_level),
            frame_table(tests.wald, "Wald tests per term"),
            tests_table(tests),
        ]
        payload["ph_test"] = None
        if block.ph_test is not None:
            try:
                test = ph_test(fit, block.ph_test)
            except ValidationError as e:
                logger.warning("block '%s': proportional-hazards test skipped: %s", block.name, e)
            else:
                payload["ph_test"] = test.to_dict()
                tables.append(ph_table(test, "Proportional hazards"))

        baseline = []
        for stratum, curve in fit.baseline.items():
            frame = curve.to_frame()
            frame.insert(0, "stratum", stratum)
            baseline.append(frame)
        paths = [
            self._write_json(f"{block.name}.json", payload),
            self._write_text(f"{block.name}.txt", *tables),
            self._write_csv(f"{block.name}_baseline.csv", pd.concat(baseline, ignore_index=True)),
        ]
        if block.residuals:
            paths.append(
                self._write_csv(
                    f"{block.name}_schoenfeld.csv", schoenfeld_residuals(fit).to_frame()
                )
            )
            martingale = martingale_residuals(fit).rename("martingale")
            paths.append(
                self._write_csv(
                    f"{block.name}_martingale.csv", martingale.rename_axis("id").reset_index()
                )
            )
        return paths

    def _poisson(self, block: PoissonBlock) -> List[Path]:
        table = tabulate_person_time(
            self._cohort(block), self.axes[block.name], block.patterns, cause=block.cause
        )
        paths = [table.to_csv(self._path(f"{block.name}_cells.csv"))]
        tables = []
        if block.factors or block.linear:
            fit = fit_rate_model(table, block.factors, block.linear)
            paths.append(self._write_json(f"{block.name}.json", fit.to_dict(self.conf_level)))
            tables.append(rate_fit_table(fit, block.name, self.conf_level))
        if block.rates_by:
            rates = rate_summary(table, block.rates_by, per=block.per)
            paths.append(self._write_csv(f"{block.name}_rates.csv", rates))
            tables.append(frame_table(rates, f"Rates per {block.per:g} person-time"))
        if tables:
            paths.append(self._write_text(f"{block.name}.txt", *tables))
        return paths

    def _landmark(self, block: LandmarkBlock) -> List[Path]:
        fits = landmark_series(
            self._cohort(block), block.landmarks, block.window, self.specs[block.name]
        )
        frames = []
        for t_lm, fit in fits.items():
            frame = fit.summary_frame(self.conf_level)
            frame.insert(0, "landmark", t_lm)
            frames.append(frame)
        payload = {
            "window": block.window,
            "landmarks": {f"{t:g}": fit.to_dict(self.conf_level) for t, fit in fits.items()},
        }
        tables = [
            fit_table(fit, f"{block.name}: landmark {t:g}", self.conf_level)
            for t, fit in fits.items()
        ]
        return [
            self._write_json(f"{block.name}.json", payload),
            self._write_csv(f"{block.name}.csv", pd.concat(frames, ignore_index=True)),
            self._write_text(f"{block.name}.txt", *tables),
        ]

    def _cause_fits(self, block: Any) -> Any:
        if block.fit is not None:
            return self.fits[block.fit]
        return {cause: self.fits[name] for cause, name in block.fits.items()}

    def _predict(self, block: PredictBlock) -> List[Path]:
        profile = CovariateProfile(block.profile, block.stratum)
        payload: Dict[str, Any] = {"profile": profile.to_dict(), "t_pred": block.t_pred}
        if block.fit is not None:
            curve = predict_survival(self.fits[block.fit], profile, block.t_pred)
            payload["risk"] = curve.to_dict()
            frame = curve.to_frame()
        else:
            prediction = predict_cuminc(
                self._cause_fits(block), profile, block.t_pred, method=block.method
            )
            payload["method"] = prediction.method.value
            payload["incidence"] = {str(k): c.to_dict() for k, c in prediction.curves.items()}
            frame = prediction.to_frame()
        return [
            self._write_csv(f"{block.name}.csv", frame),
            self._write_json(f"{block.name}.json", payload),
        ]

    def _gformula(self, block: GFormulaBlock) -> List[Path]:
        cohort = self._cohort(block)
        model = self._cause_fits(block)
        contrast = g_formula(
            model,
            cohort,
            block.treatment,
            block.times,
            cause=block.cause,
            t_pred=block.t_pred,
            replicates=block.replicates,
            seed=self.seed,
            conf_level=self.conf_level,
            workers=block.workers,
        )
        payload = contrast.to_dict()
        if block.attributable_at is not None:
            excess = attributable_events(
                model,
                cohort,
                block.treatment,
                block.attributable_at,
                cause=block.cause,
                t_pred=block.t_pred,
            )
            payload["attributable"] = excess.to_dict()
        return [
            contrast.to_csv(self._path(f"{block.name}.csv")),
            self._write_json(f"{block.name}.json", payload),
            self._write_text(
                f"{block.name}.txt",
                frame_table(contrast.to_frame(), f"{block.name}: {contrast.label}"),
            ),
        ]

    def _simulate(self, block: SimulateBlock) -> List[Path]:
        simulation = simulate_cohort(self.scenarios[block.name])
        paths = [
            emit_episodes(simulation.cohort, self._path(f"{block.name}_episodes.csv")),
            emit_timeline(simulation.timeline, self._path(f"{block.name}_timeline.csv")),
            simulation.truth.to_yaml(self._path(f"{block.name}_truth.yaml")),
        ]
        if block.use_as_input:
            exposure = simulation.truth.scenario.exposure
            self.data = _Data(
                simulation.cohort,
                simulation.cohort,
                simulation.timeline,
                simulation.timeline,
                {exposure.name: 0.0} if exposure is not None else {},
            )
        return paths

    def _table(self, block: TableBlock) -> List[Path]:
        fits = [self.fits[name] for name in block.fits]
        labels = list(block.labels) or list(block.fits)
        return [
            self._write_csv(
                f"{block.name}.csv", hr_frame(fits, labels, block.terms, self.conf_level)
            ),
            self._write_text(
                f"{block.name}.txt", hr_table(fits, labels, block.terms, self.conf_level)
            ),
        ]


def run_pipeline(
    config: AnalysisConfig,
    *,
    output_dir: Optional[Path] = None,
    seed: Optional[int] = None,
    check_only: bool = False,
) -> PipelineResult:
    """
    Run an analysis config.

    Every input is read and every block reference checked before any output
    is written; with ``check_only`` the run stops there.

    Args:
        config: Validated analysis config
        output_dir: Override of the config's output directory
        seed: Override of the config's seed
        check_only: Validate only

    Returns:
        PipelineResult with per-block artifacts and the exit code

    Raises:
        ConfigError: On unresolved references or invalid block parameters
        ValidationError: On unreadable or invalid inputs
    """
    pipeline = Pipeline(config, output_dir=output_dir, seed=seed)
    if check_only:
        pipeline.resolve()
        return PipelineResult(pipeline.output_dir)
    return pipeline.run()


"""hazardkit - intensity-based survival analysis for cohort studies."""

__version__ = "0.1.0"

from .cohort import (
    CohortTable,
    Episode,
    Timeline,
    cohort_from_frame,
    emit_episodes,
    ingest_episodes,
    merge_timeline,
    split_episodes,
    switch_time_axis,
)
from .config import AnalysisConfig, load_config
from .cox import CoxFit, ModelSpec, Term, fit_cox, model_tests, ph_test, schoenfeld_residuals
from .exceptions import (
    BlockError,
    ConfigError,
    ConvergenceError,
    HazardKitError,
    LintFailure,
    MonotoneLikelihoodError,
    NumericalError,
    RankDeficiencyError,
    ValidationError,
)
from .lint import LintReport, lint
from .models import CumulativeIncidenceMethod, Severity, TieMethod, TimeTransform, Transform
from .nonparam import aalen_johansen, censoring_curve, kaplan_meier, nelson_aalen
from .pipeline import ExitCode, run_pipeline
from .predict import (
    CovariateProfile,
    g_formula,
    landmark_fit,
    predict_cuminc,
    predict_survival,
)
from .rates import TimeAxis, fit_rate_model, rate_summary, tabulate_person_time
from .simulate import Scenario, inject_immortal_time_bias, simulate_cohort
from .stepfunction import StepFunction

__all__ = [
    "CohortTable",
    "Episode",
    "Timeline",
    "cohort_from_frame",
    "emit_episodes",
    "ingest_episodes",
    "merge_timeline",
    "split_episodes",
    "switch_time_axis",
    "AnalysisConfig",
    "load_config",
    "CoxFit",
    "ModelSpec",
    "Term",
    "fit_cox",
    "model_tests",
    "ph_test",
    "schoenfeld_residuals",
    "BlockError",
    "ConfigError",
    "ConvergenceError",
    "HazardKitError",
    "LintFailure",
    "MonotoneLikelihoodError",
    "NumericalError",
    "RankDeficiencyError",
    "ValidationError",
    "LintReport",
    "lint",
    "CumulativeIncidenceMethod",
    "Severity",
    "TieMethod",
    "TimeTransform",
    "Transform",
    "aalen_johansen",
    "censoring_curve",
    "kaplan_meier",
    "nelson_aalen",
    "ExitCode",
    "run_pipeline",
    "CovariateProfile",
    "g_formula",
    "landmark_fit",
    "predict_cuminc",
    "predict_survival",
    "TimeAxis",
    "fit_rate_model",
    "rate_summary",
    "tabulate_person_time",
    "Scenario",
    "inject_immortal_time_bias",
    "simulate_cohort",
    "StepFunction",
]

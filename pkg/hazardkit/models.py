"""Enumerations shared across hazardkit."""

from enum import Enum


class Severity(str, Enum):
    """Severity of a lint finding."""

    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class TieMethod(str, Enum):
    """Handling of tied event times in the Cox partial likelihood."""

    BRESLOW = "breslow"
    EFRON = "efron"


class Transform(str, Enum):
    """How a covariate enters a regression model."""

    LINEAR = "linear"
    SPLINE = "spline"  # restricted cubic spline
    TIME_INTERACTION = "time_interaction"  # piecewise-constant effect over time


class TimeTransform(str, Enum):
    """Time scale used by the proportional-hazards test."""

    IDENTITY = "identity"
    RANK = "rank"
    KM = "km"


class HazardShape(str, Enum):
    """Baseline hazard family for simulated cohorts."""

    CONSTANT = "constant"
    WEIBULL = "weibull"
    PIECEWISE = "piecewise"


class InjectionMode(str, Enum):
    """Miscoding applied by immortal-time bias injection."""

    EVER_TREATED = "ever_treated"
    TOTAL_DOSE = "total_dose"


class CumulativeIncidenceMethod(str, Enum):
    """Discretisation of the cumulative incidence sum."""

    EXPONENTIAL = "exponential"
    PRODUCT_LIMIT = "product_limit"


class BlockKind(str, Enum):
    """Analysis block types understood by the pipeline."""

    LINT = "lint"
    KM = "km"
    NA = "na"
    AJ = "aj"
    CENSORING = "censoring"
    COX = "cox"
    POISSON = "poisson"
    LANDMARK = "landmark"
    PREDICT = "predict"
    GFORMULA = "gformula"
    SIMULATE = "simulate"
    TABLE = "table"

    @property
    def description(self) -> str:
        """Get the block description."""
        descriptions = {
            BlockKind.LINT: "Check episodes for miscoding and immortal time",
            BlockKind.KM: "Kaplan-Meier survival curve",
            BlockKind.NA: "Nelson-Aalen cumulative hazard",
            BlockKind.AJ: "Aalen-Johansen cumulative incidence per cause",
            BlockKind.CENSORING: "Reverse Kaplan-Meier censoring distribution",
            BlockKind.COX: "Cox model with diagnostics and tests",
            BlockKind.POISSON: "Piecewise-exponential Poisson rate model",
            BlockKind.LANDMARK: "Landmark Cox models for dynamic prediction",
            BlockKind.PREDICT: "Absolute risk curves for a covariate profile",
            BlockKind.GFORMULA: "Standardised risk contrast with bootstrap intervals",
            BlockKind.SIMULATE: "Simulate a cohort from a scenario",
            BlockKind.TABLE: "Hazard-ratio table across several Cox blocks",
        }
        return descriptions.get(self, "")

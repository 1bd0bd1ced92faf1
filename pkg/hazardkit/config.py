"""
Declarative analysis configuration.

A YAML document names the input files, the time axis and an ordered list of
analysis blocks. Everything is validated before any block runs.
"""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from . import settings
from .exceptions import ConfigError
from .models import CumulativeIncidenceMethod, TieMethod, TimeTransform, Transform
from .simulate import Scenario


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InputConfig(_Strict):
    """Episode file, optional covariate timeline, and how to read them."""

    episodes: Path
    timeline: Optional[Path] = None
    sep: str = ","
    categorical: Dict[str, Optional[str]] = Field(default_factory=dict)
    cause_labels: Dict[int, str] = Field(default_factory=dict)
    merge_timeline: bool = True
    baseline: Dict[str, float] = Field(default_factory=dict)
    lag: float = 0.0
    external: bool = False


class TimeAxisConfig(_Strict):
    """The file's own axis and, optionally, an alternate axis reached by a per-subject offset."""

    primary: str = "time"
    offset: Optional[str] = None
    alternate: str = "age"


class TermConfig(_Strict):
    covariate: str
    transform: Transform = Transform.LINEAR
    knots: Optional[List[float]] = None
    breaks: List[float] = Field(default_factory=list)


TermLike = Union[str, TermConfig]


class _Block(_Strict):
    name: Optional[str] = None
    where: Dict[str, Union[float, str]] = Field(default_factory=dict)


class LintBlock(_Block):
    kind: Literal["lint"]
    admin_cutoff: Optional[float] = None
    dropout_threshold: Optional[float] = Field(default=None, gt=0, lt=1)


class KMBlock(_Block):
    kind: Literal["km"]
    condition_time: Optional[float] = None
    cause: Optional[int] = None
    by: Optional[str] = None


class NABlock(_Block):
    kind: Literal["na"]
    cause: Optional[int] = None
    by: Optional[str] = None


class AJBlock(_Block):
    kind: Literal["aj"]
    causes: Optional[List[int]] = None


class CensoringBlock(_Block):
    """Reverse Kaplan-Meier, plus a Cox model for censoring when terms are given."""

    kind: Literal["censoring"]
    terms: List[TermLike] = Field(default_factory=list)


class _ModelFields(_Block):
    terms: List[TermLike] = Field(default_factory=list)
    strata: Optional[str] = None
    ties: TieMethod = TieMethod.BRESLOW
    cause: Optional[int] = None


class CoxBlock(_ModelFields):
    kind: Literal["cox"]
    ph_test: Optional[TimeTransform] = TimeTransform.KM
    residuals: bool = False
    nested: Optional[str] = None


class AxisConfig(_Strict):
    name: str
    cutpoints: List[Union[float, Literal["inf"]]]
    offset: Optional[str] = None


class PoissonBlock(_Block):
    kind: Literal["poisson"]
    axes: List[AxisConfig] = Field(min_length=1)
    cause: Optional[int] = None
    patterns: List[str] = Field(default_factory=list)
    factors: List[str] = Field(default_factory=list)
    linear: List[str] = Field(default_factory=list)
    rates_by: List[str] = Field(default_factory=list)
    per: float = Field(default=settings.RATE_SCALE, gt=0)


class LandmarkBlock(_ModelFields):
    kind: Literal["landmark"]
    landmarks: List[float] = Field(min_length=1)
    window: float = Field(gt=0)


class PredictBlock(_Block):
    """Risk prediction from one Cox block, or cumulative incidence from one per cause."""

    kind: Literal["predict"]
    fit: Optional[str] = None
    fits: Dict[int, str] = Field(default_factory=dict)
    profile: Dict[str, float] = Field(default_factory=dict)
    stratum: Optional[str] = None
    t_pred: float = 0.0
    method: CumulativeIncidenceMethod = CumulativeIncidenceMethod.EXPONENTIAL


class GFormulaBlock(_Block):
    kind: Literal["gformula"]
    fit: Optional[str] = None
    fits: Dict[int, str] = Field(default_factory=dict)
    treatment: str
    times: List[float] = Field(min_length=1)
    cause: Optional[int] = None
    t_pred: float = 0.0
    replicates: Optional[int] = Field(default=None, ge=0)
    workers: int = Field(default=1, ge=1)
    attributable_at: Optional[float] = None


class SimulateBlock(_Block):
    kind: Literal["simulate"]
    scenario: Optional[Scenario] = None
    scenario_file: Optional[Path] = None
    use_as_input: bool = False


class TableBlock(_Block):
    """Hazard ratios of several Cox blocks side by side."""

    kind: Literal["table"]
    fits: List[str] = Field(min_length=1)
    labels: List[str] = Field(default_factory=list)
    terms: List[str] = Field(default_factory=list)


Block = Annotated[
    Union[
        LintBlock,
        KMBlock,
        NABlock,
        AJBlock,
        CensoringBlock,
        CoxBlock,
        PoissonBlock,
        LandmarkBlock,
        PredictBlock,
        GFormulaBlock,
        SimulateBlock,
        TableBlock,
    ],
    Field(discriminator="kind"),
]

_FIT_KINDS = {"cox"}


class AnalysisConfig(_Strict):
    """
    A complete analysis run.

    Example:
        >>> config = load_config("analysis.yaml")
        >>> [block.name for block in config.blocks]
    """

    inputs: Optional[InputConfig] = None
    time_axis: TimeAxisConfig = Field(default_factory=TimeAxisConfig)
    blocks: List[Block] = Field(min_length=1)
    output_dir: Path = Path("hazardkit-output")
    seed: int = settings.DEFAULT_SEED
    conf_level: float = Field(default=settings.CONFIDENCE_LEVEL, gt=0, lt=1)

    @model_validator(mode="after")
    def _resolve_references(self) -> "AnalysisConfig":
        seen: Dict[str, str] = {}
        counts: Dict[str, int] = {}
        has_data = self.inputs is not None
        for block in self.blocks:
            counts[block.kind] = counts.get(block.kind, 0) + 1
            if block.name is None:
                block.name = f"{block.kind}{counts[block.kind]}"
            if block.name in seen:
                raise ValueError(f"duplicate block name '{block.name}'")

            if isinstance(block, SimulateBlock):
                if (block.scenario is None) == (block.scenario_file is None):
                    raise ValueError(
                        f"block '{block.name}': give exactly one of scenario and scenario_file"
                    )
                has_data = has_data or block.use_as_input
            elif not has_data:
                raise ValueError(
                    f"block '{block.name}' needs data: add inputs or a simulate block "
                    "with use_as_input"
                )

            for ref in block_references(block):
                if seen.get(ref) not in _FIT_KINDS:
                    raise ValueError(
                        f"block '{block.name}' refers to '{ref}', "
                        "which is not an earlier cox block"
                    )
            if isinstance(block, (PredictBlock, GFormulaBlock)):
                if (block.fit is None) == (not block.fits):
                    raise ValueError(f"block '{block.name}': give exactly one of fit and fits")
            if isinstance(block, (CoxBlock, LandmarkBlock)) and not block.terms:
                raise ValueError(f"block '{block.name}' needs at least one term")
            if isinstance(block, TableBlock) and block.labels:
                if len(block.labels) != len(block.fits):
                    raise ValueError(f"block '{block.name}': one label per fit")
            seen[block.name] = block.kind
        return self

    def resolve_paths(self, base: Path) -> "AnalysisConfig":
        """Make relative file paths relative to ``base``."""

        def fix(path: Optional[Path]) -> Optional[Path]:
            if path is None or path.is_absolute():
                return path
            return base / path

        if self.inputs is not None:
            self.inputs.episodes = fix(self.inputs.episodes)
            self.inputs.timeline = fix(self.inputs.timeline)
        for block in self.blocks:
            if isinstance(block, SimulateBlock):
                block.scenario_file = fix(block.scenario_file)
        return self


def block_references(block: Any) -> List[str]:
    """Names of the earlier blocks a block reads fits from."""
    if isinstance(block, CoxBlock):
        return [block.nested] if block.nested else []
    if isinstance(block, (PredictBlock, GFormulaBlock)):
        return ([block.fit] if block.fit else []) + list(block.fits.values())
    if isinstance(block, TableBlock):
        return list(block.fits)
    return []


def load_config(path: Union[str, Path]) -> AnalysisConfig:
    """
    Read and validate an analysis config.

    Raises:
        ConfigError: On unreadable YAML or an invalid document
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    try:
        config = AnalysisConfig.model_validate(raw)
    except PydanticValidationError as e:
        raise ConfigError(f"invalid config {path}:\n{e}") from e
    return config.resolve_paths(path.parent)


def config_schema() -> Dict[str, Any]:
    """JSON schema of the config document."""
    return AnalysisConfig.model_json_schema()

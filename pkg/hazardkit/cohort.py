"""
Counting-process cohorts: episode tables, covariate timelines and the
operations that reshape them (timeline merge, time-axis switch, splitting).

An episode (tstart, tstop] contributes to the risk set at time t when
tstart < t <= tstop; its status is the event observed at tstop.
"""

import logging
from dataclasses import InitVar, dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("id", "tstart", "tstop", "status")
TIMELINE_COLUMNS = ("id", "time", "variable", "value")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Episode:
    """One row of a cohort: subject, interval, status and covariate values."""

    subject_id: str
    tstart: float
    tstop: float
    status: int
    covariates: Tuple[float, ...] = ()
    stratum: Optional[str] = None


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _cut_intervals(
    tstart: np.ndarray, tstop: np.ndarray, cuts: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Split each interval (tstart, tstop] at the cut points strictly inside it.

    Returns:
        rows, starts, stops, first, last, interval where ``rows`` indexes the
        source interval of every fragment and ``interval`` counts the cut
        points at or below the fragment start
    """
    n = tstart.size
    cuts = np.asarray(cuts, dtype=float)
    if cuts.size == 0 or n == 0:
        rows = np.arange(n)
        ones = np.ones(n, dtype=bool)
        return rows, tstart.copy(), tstop.copy(), ones, ones.copy(), np.zeros(n, dtype=int)

    lo = np.searchsorted(cuts, tstart, side="right")
    hi = np.searchsorted(cuts, tstop, side="left")
    k = np.maximum(hi - lo, 0)
    reps = k + 1
    rows = np.repeat(np.arange(n), reps)
    offsets = np.cumsum(reps) - reps
    j = np.arange(rows.size) - np.repeat(offsets, reps)
    lo_r = lo[rows]
    k_r = k[rows]
    top = cuts.size - 1
    starts = np.where(j == 0, tstart[rows], cuts[np.clip(lo_r + j - 1, 0, top)])
    stops = np.where(j == k_r, tstop[rows], cuts[np.clip(lo_r + j, 0, top)])
    return rows, starts, stops, j == 0, j == k_r, lo_r + j


def episode_problems(
    subject_id: np.ndarray,
    tstart: np.ndarray,
    tstop: np.ndarray,
    status: np.ndarray,
) -> List[Tuple[str, str, str]]:
    """
    Check per-subject episode invariants.

    Episodes must be sorted by subject then tstart. Returns (rule, subject,
    message) triples: R1 for ordering and overlap problems, R2 for an event
    recorded before the end of a contiguous run of episodes.
    """
    problems: List[Tuple[str, str, str]] = []

    for i in np.flatnonzero(tstart < 0):
        problems.append(
            ("R1", str(subject_id[i]), f"negative time in episode ({tstart[i]:g}, {tstop[i]:g}]")
        )

    for i in np.flatnonzero(tstart >= tstop):
        problems.append(
            ("R1", str(subject_id[i]), f"empty interval ({tstart[i]:g}, {tstop[i]:g}]")
        )

    if subject_id.size > 1:
        same = subject_id[1:] == subject_id[:-1]
        overlap = same & (tstart[1:] < tstop[:-1])
        for i in np.flatnonzero(overlap):
            problems.append(
                (
                    "R1",
                    str(subject_id[i]),
                    f"overlapping episodes ({tstart[i]:g}, {tstop[i]:g}] and "
                    f"({tstart[i + 1]:g}, {tstop[i + 1]:g}]",
                )
            )
        early = same & (status[:-1] != 0) & (tstart[1:] == tstop[:-1])
        for i in np.flatnonzero(early):
            problems.append(
                (
                    "R2",
                    str(subject_id[i]),
                    f"event (status {status[i]}) at t={tstop[i]:g} is followed by a "
                    "contiguous episode",
                )
            )
    return problems


@dataclass(frozen=True, eq=False)
class CohortTable:
    """
    An immutable table of counting-process episodes.

    Columns are held as read-only numpy arrays, sorted by subject and tstart.
    ``time_dependent`` names covariate columns that change within subjects;
    the subset listed in ``external`` are deterministic functions of time
    and may be used for prediction.

    Args:
        subject_id: Subject identifier per episode
        tstart: Episode start times
        tstop: Episode stop times
        status: 0 for censored, k >= 1 for an event of cause k
        covariates: Array of shape (episodes, columns)
        covariate_names: One name per covariate column
        stratum: Optional stratum label per episode
        cause_labels: Label per cause code
        time_axis: Name of the active time axis
        check: Validate episode invariants (disable only to lint raw data)

    Example:
        >>> cohort = CohortTable(["s1"], [0.0], [5.0], [1])
        >>> cohort.n_events()
        1
    """

    subject_id: np.ndarray
    tstart: np.ndarray
    tstop: np.ndarray
    status: np.ndarray
    covariates: Optional[np.ndarray] = None
    covariate_names: Tuple[str, ...] = ()
    stratum: Optional[np.ndarray] = None
    cause_labels: Mapping[int, str] = field(default_factory=dict)
    time_axis: str = "time"
    time_dependent: FrozenSet[str] = frozenset()
    external: FrozenSet[str] = frozenset()
    tainted: bool = False
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        ids = np.asarray(self.subject_id).astype(str).reshape(-1)
        n = ids.size
        tstart = np.asarray(self.tstart, dtype=float).reshape(-1)
        tstop = np.asarray(self.tstop, dtype=float).reshape(-1)
        raw_status = np.asarray(self.status, dtype=float).reshape(-1)
        if not (tstart.size == tstop.size == raw_status.size == n):
            raise ValidationError("episode columns must have the same length")
        if n == 0:
            raise ValidationError("cohort has no episodes")
        if np.isnan(tstart).any() or np.isnan(tstop).any():
            raise ValidationError("missing value in tstart/tstop")
        if np.isnan(raw_status).any() or np.any(raw_status != np.round(raw_status)):
            raise ValidationError("status must be an integer code")
        status = raw_status.astype(np.int64)
        if np.any(status < 0):
            raise ValidationError("status must be >= 0")

        names = tuple(str(name) for name in self.covariate_names)
        if len(set(names)) != len(names):
            raise ValidationError("duplicate covariate column names")
        if self.covariates is None:
            cov = np.zeros((n, 0), dtype=float)
        else:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov.reshape(n, -1)
        if cov.shape != (n, len(names)):
            raise ValidationError(
                f"covariates must have shape ({n}, {len(names)}), got {cov.shape}"
            )
        if np.isnan(cov).any():
            column = names[int(np.flatnonzero(np.isnan(cov).any(axis=0))[0])]
            raise ValidationError(f"missing value in covariate column '{column}'")

        stratum = None
        if self.stratum is not None:
            stratum = np.asarray(self.stratum).astype(str).reshape(-1)
            if stratum.size != n:
                raise ValidationError("stratum must have one label per episode")

        codes = np.unique(ids, return_inverse=True)[1].reshape(-1)
        order = np.lexsort((tstart, codes))
        if np.any(order != np.arange(n)):
            ids, tstart, tstop = ids[order], tstart[order], tstop[order]
            status, cov = status[order], cov[order]
            if stratum is not None:
                stratum = stratum[order]

        codes_present = sorted({int(k) for k in np.unique(status) if k > 0})
        if self.cause_labels:
            labels = {int(k): str(v) for k, v in self.cause_labels.items()}
            unknown = [k for k in codes_present if k not in labels]
            if unknown:
                raise ValidationError(f"unknown cause code {unknown[0]}")
        elif codes_present == [1]:
            labels = {1: "event"}
        else:
            labels = {k: f"cause {k}" for k in codes_present}

        if check:
            problems = episode_problems(ids, tstart, tstop, status)
            if problems:
                rule, subject, message = problems[0]
                raise ValidationError(f"subject '{subject}': {message}")

        object.__setattr__(self, "subject_id", _readonly(ids))
        object.__setattr__(self, "tstart", _readonly(tstart))
        object.__setattr__(self, "tstop", _readonly(tstop))
        object.__setattr__(self, "status", _readonly(status))
        object.__setattr__(self, "covariates", _readonly(cov))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "stratum", None if stratum is None else _readonly(stratum))
        object.__setattr__(self, "cause_labels", dict(sorted(labels.items())))
        object.__setattr__(self, "time_dependent", frozenset(self.time_dependent) & set(names))
        object.__setattr__(self, "external", frozenset(self.external) & set(names))

    # ------------------------------------------------------------------ shape

    @property
    def n_episodes(self) -> int:
        return int(self.subject_id.size)

    def __len__(self) -> int:
        return self.n_episodes

    @cached_property
    def subjects(self) -> np.ndarray:
        """Sorted unique subject identifiers."""
        return _readonly(np.unique(self.subject_id))

    @property
    def n_subjects(self) -> int:
        return int(self.subjects.size)

    @cached_property
    def subject_codes(self) -> np.ndarray:
        """Index into ``subjects`` for every episode."""
        return _readonly(np.searchsorted(self.subjects, self.subject_id))

    @cached_property
    def first_rows(self) -> np.ndarray:
        """Row index of each subject's first episode, in ``subjects`` order."""
        if self.n_episodes == 0:
            return np.zeros(0, dtype=int)
        start = np.r_[True, self.subject_id[1:] != self.subject_id[:-1]]
        return _readonly(np.flatnonzero(start))

    @cached_property
    def last_rows(self) -> np.ndarray:
        """Row index of each subject's last episode, in ``subjects`` order."""
        if self.n_episodes == 0:
            return np.zeros(0, dtype=int)
        end = np.r_[self.subject_id[1:] != self.subject_id[:-1], True]
        return _readonly(np.flatnonzero(end))

    @cached_property
    def terminal(self) -> np.ndarray:
        """True where an episode is not continued by a contiguous episode of the same subject."""
        n = self.n_episodes
        out = np.ones(n, dtype=bool)
        if n > 1:
            same = self.subject_id[1:] == self.subject_id[:-1]
            out[:-1] = ~(same & (self.tstart[1:] == self.tstop[:-1]))
        return _readonly(out)

    @property
    def causes(self) -> Tuple[int, ...]:
        return tuple(self.cause_labels)

    # ---------------------------------------------------------------- columns

    def has_column(self, name: str) -> bool:
        return name in self.covariate_names

    def column(self, name: str) -> np.ndarray:
        """Return a covariate column by name."""
        try:
            return self.covariates[:, self.covariate_names.index(name)]
        except ValueError:
            raise ValidationError(f"unknown covariate column '{name}'") from None

    def labels(self, name: str) -> np.ndarray:
        """Return string labels for a grouping column (a covariate or ``stratum``)."""
        if name == "stratum":
            if self.stratum is None:
                raise ValidationError("cohort has no stratum column")
            return self.stratum
        values = self.column(name)
        return np.array([f"{v:g}" for v in values])

    def event_mask(self, cause: Optional[int] = None) -> np.ndarray:
        """Episodes ending in an event (of ``cause``, or any cause if None)."""
        if cause is None:
            return self.status > 0
        return self.status == cause

    def n_events(self, cause: Optional[int] = None) -> int:
        return int(self.event_mask(cause).sum())

    def person_time(self) -> float:
        return float(np.sum(self.tstop - self.tstart))

    def is_time_fixed(self, name: str) -> bool:
        """True when a column is constant within every subject."""
        values = self.column(name)
        if self.n_episodes < 2:
            return True
        same = self.subject_id[1:] == self.subject_id[:-1]
        return bool(np.all(values[1:][same] == values[:-1][same]))

    # ------------------------------------------------------------ construction

    def replace(self, **changes: Any) -> "CohortTable":
        """Return a copy with some fields replaced (validated again)."""
        return replace(self, **changes)

    def take(
        self,
        rows: np.ndarray,
        tstart: Optional[np.ndarray] = None,
        tstop: Optional[np.ndarray] = None,
        status: Optional[np.ndarray] = None,
        subject_id: Optional[np.ndarray] = None,
    ) -> "CohortTable":
        """Build a cohort from selected rows, optionally with new intervals."""
        rows = np.asarray(rows, dtype=int)
        return self.replace(
            subject_id=self.subject_id[rows] if subject_id is None else subject_id,
            tstart=self.tstart[rows] if tstart is None else tstart,
            tstop=self.tstop[rows] if tstop is None else tstop,
            status=self.status[rows] if status is None else status,
            covariates=self.covariates[rows],
            stratum=None if self.stratum is None else self.stratum[rows],
        )

    def with_column(
        self,
        name: str,
        values: np.ndarray,
        *,
        time_dependent: bool = False,
        external: bool = False,
    ) -> "CohortTable":
        """Add or replace a covariate column."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.n_episodes:
            raise ValidationError(f"column '{name}' must have one value per episode")
        names = list(self.covariate_names)
        cov = np.array(self.covariates, dtype=float)
        if name in names:
            cov[:, names.index(name)] = values
        else:
            names.append(name)
            cov = np.column_stack([cov, values])
        td = set(self.time_dependent) - {name}
        ext = set(self.external) - {name}
        if time_dependent:
            td.add(name)
            if external:
                ext.add(name)
        return self.replace(
            covariates=cov,
            covariate_names=tuple(names),
            time_dependent=frozenset(td),
            external=frozenset(ext),
        )

    @property
    def episodes(self) -> List[Episode]:
        """Materialise the rows as Episode records."""
        return [
            Episode(
                subject_id=str(self.subject_id[i]),
                tstart=float(self.tstart[i]),
                tstop=float(self.tstop[i]),
                status=int(self.status[i]),
                covariates=tuple(float(v) for v in self.covariates[i]),
                stratum=None if self.stratum is None else str(self.stratum[i]),
            )
            for i in range(self.n_episodes)
        ]

    @classmethod
    def from_episodes(
        cls,
        episodes: Sequence[Episode],
        covariate_names: Sequence[str] = (),
        **kwargs: Any,
    ) -> "CohortTable":
        """Build a cohort from Episode records."""
        p = len(covariate_names)
        strata = [e.stratum for e in episodes]
        return cls(
            subject_id=np.array([e.subject_id for e in episodes], dtype=str),
            tstart=np.array([e.tstart for e in episodes], dtype=float),
            tstop=np.array([e.tstop for e in episodes], dtype=float),
            status=np.array([e.status for e in episodes], dtype=int),
            covariates=np.array([e.covariates for e in episodes], dtype=float).reshape(-1, p),
            covariate_names=tuple(covariate_names),
            stratum=None if all(s is None for s in strata) else np.array(strata, dtype=str),
            **kwargs,
        )

    def to_frame(self) -> pd.DataFrame:
        """Tabulate the cohort with the canonical column order."""
        frame = pd.DataFrame(
            {
                "id": self.subject_id,
                "tstart": self.tstart,
                "tstop": self.tstop,
                "status": self.status,
            }
        )
        if self.stratum is not None:
            frame["stratum"] = self.stratum
        for j, name in enumerate(self.covariate_names):
            frame[name] = self.covariates[:, j]
        return frame


# ------------------------------------------------------------------- ingest


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna()
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        if raw.isna().to_numpy()[line - 2]:
            raise ValidationError(f"missing value in column '{column}' (line {line})")
        raise ValidationError(
            f"malformed row at line {line}: column '{column}' is not numeric "
            f"({raw.iloc[line - 2]!r})"
        )
    return values.to_numpy(dtype=float)


def cohort_from_frame(
    frame: pd.DataFrame,
    *,
    categorical: Optional[Mapping[str, Optional[str]]] = None,
    cause_labels: Optional[Mapping[int, str]] = None,
    time_axis: str = "time",
    check: bool = True,
) -> CohortTable:
    """
    Build a cohort from a data frame with columns id, tstart, tstop, status,
    an optional stratum and covariates.

    Categorical covariates (declared in ``categorical`` or of string dtype)
    are expanded into 0/1 indicator columns named ``column=level`` against a
    reference level. A categorical column without a declared reference uses
    its first level in sorted order and logs a warning.
    """
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"missing required column(s): {', '.join(missing)}")
    if frame.empty:
        raise ValidationError("cohort has no episodes")
    if frame["id"].isna().any():
        line = int(np.flatnonzero(frame["id"].isna().to_numpy())[0]) + 2
        raise ValidationError(f"missing value in column 'id' (line {line})")

    tstart = _numeric_column(frame, "tstart")
    tstop = _numeric_column(frame, "tstop")
    status = _numeric_column(frame, "status")
    if np.any(status != np.round(status)):
        line = int(np.flatnonzero(status != np.round(status))[0]) + 2
        raise ValidationError(f"malformed row at line {line}: status must be an integer code")

    stratum = None
    if "stratum" in frame.columns:
        if frame["stratum"].isna().any():
            raise ValidationError("missing value in column 'stratum'")
        stratum = frame["stratum"].astype(str).to_numpy()

    declared = dict(categorical or {})
    unknown = [c for c in declared if c not in frame.columns]
    if unknown:
        raise ValidationError(f"categorical column '{unknown[0]}' not found")

    names: List[str] = []
    columns: List[np.ndarray] = []
    for column in frame.columns:
        if column in REQUIRED_COLUMNS or column == "stratum":
            continue
        raw = frame[column]
        if column in declared or raw.dtype == object:
            if raw.isna().any():
                line = int(np.flatnonzero(raw.isna().to_numpy())[0]) + 2
                raise ValidationError(f"missing value in column '{column}' (line {line})")
            labels = raw.astype(str)
            levels = sorted(labels.unique())
            reference = declared.get(column)
            if reference is None:
                reference = levels[0]
                logger.warning(
                    "no reference level declared for '%s'; using '%s'", column, reference
                )
            elif reference not in levels:
                raise ValidationError(
                    f"reference level '{reference}' not observed in column '{column}'"
                )
            for level in levels:
                if level == reference:
                    continue
                names.append(f"{column}={level}")
                columns.append((labels == level).to_numpy(dtype=float))
        else:
            names.append(str(column))
            columns.append(_numeric_column(frame, column))

    n = len(frame)
    covariates = np.column_stack(columns) if columns else np.zeros((n, 0))
    return CohortTable(
        subject_id=frame["id"].astype(str).to_numpy(),
        tstart=tstart,
        tstop=tstop,
        status=status,
        covariates=covariates,
        covariate_names=tuple(names),
        stratum=stratum,
        cause_labels=dict(cause_labels or {}),
        time_axis=time_axis,
        check=check,
    )


def ingest_episodes(
    path: PathLike,
    *,
    sep: str = ",",
    categorical: Optional[Mapping[str, Optional[str]]] = None,
    cause_labels: Optional[Mapping[int, str]] = None,
    time_axis: str = "time",
    check: bool = True,
) -> CohortTable:
    """
    Read a delimited episode file (UTF-8, header row).

    Args:
        path: File with columns id, tstart, tstop, status and covariates
        sep: Field delimiter
        categorical: Categorical columns mapped to their reference level
        cause_labels: Declared cause codes and labels
        time_axis: Name of the time axis the file is on
        check: Validate episode invariants (False to lint raw files)

    Returns:
        CohortTable

    Raises:
        ValidationError: On a missing file, malformed row or invariant violation
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"episode file not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            dtype={"id": str, "stratum": str},
            encoding="utf-8",
            skipinitialspace=True,
        )
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"malformed episode file {path}: {e}") from e
    return cohort_from_frame(
        frame,
        categorical=categorical,
        cause_labels=cause_labels,
        time_axis=time_axis,
        check=check,
    )


def emit_episodes(cohort: CohortTable, path: PathLike, *, sep: str = ",") -> Path:
    """Write a cohort in the ingest format at full precision."""
    path = Path(path)
    cohort.to_frame().to_csv(path, sep=sep, index=False)
    return path


# ----------------------------------------------------------------- timeline


@dataclass(frozen=True, eq=False)
class Timeline:
    """
    Covariate change records (subject, change time, variable, new value).

    A record applies from its change time onward until the next record for
    the same subject and variable.
    """

    subject_id: np.ndarray
    time: np.ndarray
    variable: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.subject_id).astype(str).reshape(-1)
        time = np.asarray(self.time, dtype=float).reshape(-1)
        variable = np.asarray(self.variable).astype(str).reshape(-1)
        value = np.asarray(self.value, dtype=float).reshape(-1)
        if not (ids.size == time.size == variable.size == value.size):
            raise ValidationError("timeline columns must have the same length")
        if not np.all(np.isfinite(time)):
            raise ValidationError("timeline change times must be finite")
        if np.isnan(value).any():
            raise ValidationError("missing value in timeline")
        if ids.size:
            id_codes = np.unique(ids, return_inverse=True)[1].reshape(-1)
            var_codes = np.unique(variable, return_inverse=True)[1].reshape(-1)
            order = np.lexsort((time, var_codes, id_codes))
            ids, time, variable, value = ids[order], time[order], variable[order], value[order]
        object.__setattr__(self, "subject_id", _readonly(ids))
        object.__setattr__(self, "time", _readonly(time))
        object.__setattr__(self, "variable", _readonly(variable))
        object.__setattr__(self, "value", _readonly(value))

    @classmethod
    def empty(cls) -> "Timeline":
        return cls(np.array([], dtype=str), np.array([]), np.array([], dtype=str), np.array([]))

    def __len__(self) -> int:
        return int(self.time.size)

    @property
    def variables(self) -> Tuple[str, ...]:
        return tuple(sorted(set(self.variable.tolist())))

    def records(self, variable: str) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        """Change times and values of one variable, keyed by subject."""
        mask = self.variable == variable
        ids = self.subject_id[mask]
        times = self.time[mask]
        values = self.value[mask]
        out: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        if ids.size == 0:
            return out
        uniq, starts = np.unique(ids, return_index=True)
        bounds = list(starts) + [ids.size]
        for k, sid in enumerate(uniq):
            out[str(sid)] = (times[bounds[k] : bounds[k + 1]], values[bounds[k] : bounds[k + 1]])
        return out

    def shifted(self, lag: float) -> "Timeline":
        """Delay every change by ``lag``."""
        return Timeline(self.subject_id, self.time + lag, self.variable, self.value)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "id": self.subject_id,
                "time": self.time,
                "variable": self.variable,
                "value": self.value,
            }
        )


def read_timeline(path: PathLike, *, sep: str = ",") -> Timeline:
    """Read a timeline file with columns id, time, variable, value."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"timeline file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=sep, dtype={"id": str, "variable": str}, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise ValidationError(f"malformed timeline file {path}: {e}") from e
    missing = [c for c in TIMELINE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"timeline is missing column(s): {', '.join(missing)}")
    return Timeline(
        subject_id=frame["id"].astype(str).to_numpy(),
        time=_numeric_column(frame, "time"),
        variable=frame["variable"].astype(str).to_numpy(),
        value=_numeric_column(frame, "value"),
    )


def emit_timeline(timeline: Timeline, path: PathLike, *, sep: str = ",") -> Path:
    path = Path(path)
    timeline.to_frame().to_csv(path, sep=sep, index=False)
    return path


def merge_timeline(
    cohort: CohortTable,
    timeline: Timeline,
    baseline: Optional[Mapping[str, float]] = None,
    *,
    variables: Optional[Iterable[str]] = None,
    lag: float = 0.0,
    external: bool = False,
) -> CohortTable:
    """
    Carry timeline values forward onto the episodes.

    Episodes are split at every change time strictly inside them; each
    fragment takes the value of the last record at or before its start, so a
    value never reaches back before its change time. Before a subject's first
    record the ``baseline`` value applies; when a variable has no declared
    baseline but is already a cohort column, that column supplies it. The
    event status stays on the final fragment of each episode.

    Args:
        cohort: Episodes to refine
        timeline: Change records
        baseline: Value per variable before the first record
        variables: Variables to merge (all timeline variables if None)
        lag: Shift applied to every change time
        external: Mark the merged columns as external time-dependent covariates

    Returns:
        The refined CohortTable

    Raises:
        ValidationError: On a missing baseline or a timeline subject without episodes
    """
    names = tuple(variables) if variables is not None else timeline.variables
    if not names:
        return cohort
    baseline = dict(baseline or {})
    for name in names:
        if name not in baseline and not cohort.has_column(name):
            raise ValidationError(f"missing baseline value for '{name}'")

    known = set(cohort.subjects.tolist())
    strays = sorted(set(timeline.subject_id.tolist()) - known)
    if strays:
        raise ValidationError(f"timeline subject '{strays[0]}' has no episodes")

    last_stop = dict(zip(cohort.subjects.tolist(), cohort.tstop[cohort.last_rows].tolist()))
    records: Dict[str, Dict[str, Tuple[np.ndarray, np.ndarray]]] = {}
    for name in names:
        per_subject = {}
        for sid, (times, values) in timeline.records(name).items():
            times = times + lag
            late = times > last_stop[sid]
            if late.any():
                logger.warning(
                    "ignoring %d '%s' record(s) for subject '%s' after the end of follow-up",
                    int(late.sum()),
                    name,
                    sid,
                )
            per_subject[sid] = (times[~late], values[~late])
        records[name] = per_subject

    fallback = {
        name: (None if name in baseline else cohort.column(name)) for name in names
    }

    rows: List[int] = []
    starts: List[float] = []
    stops: List[float] = []
    last: List[bool] = []
    merged: Dict[str, List[float]] = {name: [] for name in names}

    for i in range(cohort.n_episodes):
        sid = str(cohort.subject_id[i])
        a = float(cohort.tstart[i])
        b = float(cohort.tstop[i])
        cuts = set()
        for name in names:
            rec = records[name].get(sid)
            if rec is not None:
                times = rec[0]
                cuts.update(times[(times > a) & (times < b)].tolist())
        bounds = [a] + sorted(cuts) + [b]
        for j in range(len(bounds) - 1):
            rows.append(i)
            starts.append(bounds[j])
            stops.append(bounds[j + 1])
            last.append(j == len(bounds) - 2)
            for name in names:
                rec = records[name].get(sid)
                k = -1 if rec is None else int(np.searchsorted(rec[0], bounds[j], side="right")) - 1
                if k >= 0:
                    merged[name].append(float(rec[1][k]))
                elif fallback[name] is None:
                    merged[name].append(float(baseline[name]))
                else:
                    merged[name].append(float(fallback[name][i]))

    index = np.asarray(rows, dtype=int)
    is_last = np.asarray(last, dtype=bool)
    out = cohort.take(
        index,
        tstart=np.asarray(starts, dtype=float),
        tstop=np.asarray(stops, dtype=float),
        status=np.where(is_last, cohort.status[index], 0),
    )
    for name in names:
        out = out.with_column(
            name, np.asarray(merged[name]), time_dependent=True, external=external
        )
    return out


# -------------------------------------------------------------- reshaping


def _per_subject(cohort: CohortTable, values: Any, what: str) -> np.ndarray:
    """Resolve a per-subject quantity given as a column name or a mapping."""
    if isinstance(values, str):
        return np.asarray(cohort.column(values)[cohort.first_rows], dtype=float)
    if isinstance(values, pd.Series):
        values = values.to_dict()
    out = np.empty(cohort.n_subjects, dtype=float)
    for k, sid in enumerate(cohort.subjects.tolist()):
        try:
            out[k] = float(values[sid])
        except KeyError:
            raise ValidationError(f"no {what} for subject '{sid}'") from None
    return out


def switch_time_axis(
    cohort: CohortTable,
    offsets: Union[str, Mapping[str, float], pd.Series],
    axis: str = "age",
) -> CohortTable:
    """
    Re-express times on another axis by adding a per-subject offset.

    Args:
        cohort: Episodes on the current axis
        offsets: Column holding the offset (its value on each subject's
            first episode is used) or a mapping from subject to offset
        axis: Name of the new time axis

    Raises:
        ValidationError: On a missing offset or a resulting negative time
    """
    per_subject = _per_subject(cohort, offsets, "offset")
    if not np.all(np.isfinite(per_subject)):
        raise ValidationError("offsets must be finite")
    shift = per_subject[cohort.subject_codes]
    tstart = cohort.tstart + shift
    tstop = cohort.tstop + shift
    negative = np.flatnonzero(tstart < 0)
    if negative.size:
        sid = cohort.subject_id[negative[0]]
        raise ValidationError(f"offset produces a negative time for subject '{sid}'")
    return cohort.replace(tstart=tstart, tstop=tstop, time_axis=axis)


def split_episodes(
    cohort: CohortTable,
    cutpoints: Sequence[float],
    *,
    interval_column: Optional[str] = "interval",
) -> CohortTable:
    """
    Split every episode at the cut points strictly inside it.

    Fragments tile the original episode, only the last fragment keeps the
    status, and each fragment is tagged with its interval index (the number
    of cut points at or below its start) in ``interval_column``.
    """
    cuts = np.asarray(cutpoints, dtype=float)
    if np.isnan(cuts).any():
        raise ValidationError("cut points must not be missing")
    cuts = np.unique(cuts[np.isfinite(cuts)])
    rows, starts, stops, _, last, interval = _cut_intervals(cohort.tstart, cohort.tstop, cuts)
    out = cohort.take(
        rows, tstart=starts, tstop=stops, status=np.where(last, cohort.status[rows], 0)
    )
    if interval_column:
        out = out.with_column(
            interval_column, interval.astype(float), time_dependent=True, external=True
        )
    return out


def add_time_covariate(
    cohort: CohortTable,
    name: str = "followup",
    step: float = 1.0,
) -> CohortTable:
    """
    Add time since entry, in completed multiples of ``step``, as a covariate.

    Episodes are split at entry + k * step so the covariate is constant on
    every fragment. It is a deterministic function of time and is marked
    external.
    """
    if step <= 0:
        raise ValidationError("step must be > 0")
    entry = cohort.tstart[cohort.first_rows][cohort.subject_codes]
    rel_start = cohort.tstart - entry
    rel_stop = cohort.tstop - entry
    top = float(np.max(rel_stop)) if cohort.n_episodes else 0.0
    cuts = step * np.arange(1, int(np.ceil(top / step)) + 1)
    rows, starts, stops, first, last, interval = _cut_intervals(rel_start, rel_stop, cuts)
    tstart = np.where(first, cohort.tstart[rows], starts + entry[rows])
    tstop = np.where(last, cohort.tstop[rows], stops + entry[rows])
    status = np.where(last, cohort.status[rows], 0)
    out = cohort.take(rows, tstart=tstart, tstop=tstop, status=status)
    return out.with_column(name, interval * step, time_dependent=True, external=True)


def administrative_censor(cohort: CohortTable, at: float) -> CohortTable:
    """Stop follow-up at ``at``; episodes running past it end censored."""
    keep = np.flatnonzero(cohort.tstart < at)
    if keep.size == 0:
        raise ValidationError(f"no follow-up before t={at:g}")
    tstop = np.minimum(cohort.tstop[keep], at)
    status = np.where(cohort.tstop[keep] > at, 0, cohort.status[keep])
    return cohort.take(keep, tstop=tstop, status=status)


def restrict_after(cohort: CohortTable, t: float) -> CohortTable:
    """Left-truncate follow-up at ``t``."""
    keep = np.flatnonzero(cohort.tstop > t)
    if keep.size == 0:
        raise ValidationError(f"no follow-up after t={t:g}")
    return cohort.take(keep, tstart=np.maximum(cohort.tstart[keep], t))


def subset(cohort: CohortTable, column: str, value: Union[float, str]) -> CohortTable:
    """Keep the episodes where ``column`` (a covariate or ``stratum``) equals ``value``."""
    if column == "stratum":
        mask = cohort.labels("stratum") == str(value)
    else:
        mask = cohort.column(column) == float(value)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ValidationError(f"no episodes with {column} == {value}")
    return cohort.take(rows)


def censoring_as_event(cohort: CohortTable) -> CohortTable:
    """Relabel terminal censorings as events (status 1) and events as censorings."""
    status = np.where(cohort.terminal & (cohort.status == 0), 1, 0)
    return cohort.replace(status=status, cause_labels={1: "censored"})


def resample_subjects(cohort: CohortTable, index: np.ndarray) -> CohortTable:
    """
    Draw subjects by position in ``cohort.subjects``; repeats get distinct ids.

    The k-th draw of subject ``s`` is relabelled ``s#k``.
    """
    index = np.asarray(index, dtype=int)
    starts = cohort.first_rows
    counts = np.diff(np.r_[starts, cohort.n_episodes])
    reps = counts[index]
    offsets = np.cumsum(reps) - reps
    within = np.arange(int(reps.sum())) - np.repeat(offsets, reps)
    rows = np.repeat(starts[index], reps) + within
    draw = np.repeat(np.arange(index.size), reps).astype(str)
    ids = np.char.add(np.char.add(cohort.subject_id[rows], "#"), draw)
    return cohort.take(rows, subject_id=ids)

"""
Cohort linting: interval coding, event placement, immortal time and
censoring patterns.

Rules:
    R1  intervals non-empty, non-negative, sorted and non-overlapping
    R2  a nonzero status only on the last episode of a contiguous run
    R3  no covariate value used before the timeline says it took effect
    R4  no time-fixed coding of a variable the timeline shows changing
    R5  censoring pattern (drop-out share before the administrative cutoff)
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from . import settings
from .cohort import CohortTable, Timeline, episode_problems
from .models import Severity

RULES = {
    "R1": "interval coding",
    "R2": "event before end of follow-up",
    "R3": "lookahead / immortal time",
    "R4": "time-fixed coding of a time-dependent variable",
    "R5": "censoring pattern",
}

_SEVERITY_ORDER = {Severity.ERROR: 0, Severity.WARNING: 1, Severity.INFO: 2}


@dataclass(frozen=True)
class Finding:
    """A single lint finding."""

    rule_id: str
    severity: Severity
    subject: Optional[str]
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rule": self.rule_id,
            "severity": self.severity.value,
            "subject": self.subject,
            "message": self.message,
        }

    def to_line(self) -> str:
        where = f"subject {self.subject}" if self.subject is not None else "cohort"
        return f"{self.rule_id} {self.severity.value:<7} {where}: {self.message}"


@dataclass(frozen=True)
class LintReport:
    """Findings in a fixed order plus summary counts."""

    findings: Tuple[Finding, ...]
    summary: Mapping[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.findings

    @property
    def has_errors(self) -> bool:
        return any(f.severity == Severity.ERROR for f in self.findings)

    def count(self, severity: Severity) -> int:
        return sum(1 for f in self.findings if f.severity == severity)

    def rules_fired(self) -> Tuple[str, ...]:
        return tuple(sorted({f.rule_id for f in self.findings}))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "summary": dict(self.summary),
            "findings": [f.to_dict() for f in self.findings],
        }

    def to_text(self) -> str:
        lines = [f.to_line() for f in self.findings]
        lines.append(
            f"{self.count(Severity.ERROR)} error(s), {self.count(Severity.WARNING)} warning(s), "
            f"{self.count(Severity.INFO)} info"
        )
        return "\n".join(lines) + "\n"

    def write(self, stem: Union[str, Path]) -> Tuple[Path, Path]:
        """Write ``<stem>.txt`` and ``<stem>.json``."""
        stem = Path(stem)
        text_path = stem.with_suffix(".txt")
        json_path = stem.with_suffix(".json")
        text_path.write_text(self.to_text(), encoding="utf-8")
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return text_path, json_path


def _subject_slices(cohort: CohortTable) -> Dict[str, slice]:
    starts = cohort.first_rows
    ends = cohort.last_rows + 1
    return {
        str(sid): slice(int(a), int(b))
        for sid, a, b in zip(cohort.subjects.tolist(), starts, ends)
    }


def _check_lookahead(
    cohort: CohortTable,
    timeline: Timeline,
    baseline: Mapping[str, float],
) -> List[Finding]:
    findings: List[Finding] = []
    slices = _subject_slices(cohort)
    for name in timeline.variables:
        if not cohort.has_column(name):
            continue
        column = cohort.column(name)
        for sid, (times, values) in timeline.records(name).items():
            rows = slices.get(sid)
            if rows is None:
                continue
            first_seen: Dict[float, float] = {}
            for t, v in zip(times.tolist(), values.tolist()):
                first_seen.setdefault(v, t)

            starts = cohort.tstart[rows]
            stops = cohort.tstop[rows]
            coded = column[rows]

            # R3: value used before it took effect
            for a, b, v in zip(starts.tolist(), stops.tolist(), coded.tolist()):
                k = int(np.searchsorted(times, a, side="right")) - 1
                if k >= 0:
                    implied: Optional[float] = float(values[k])
                else:
                    implied = baseline.get(name)
                if implied is not None and v != implied:
                    findings.append(
                        Finding(
                            "R3",
                            Severity.ERROR,
                            sid,
                            f"'{name}' = {v:g} on ({a:g}, {b:g}] but the timeline gives "
                            f"{implied:g} at t={a:g}",
                        )
                    )
                    break
                if implied is None and v in first_seen and first_seen[v] > a:
                    findings.append(
                        Finding(
                            "R3",
                            Severity.ERROR,
                            sid,
                            f"'{name}' = {v:g} used from t={a:g} but first recorded at "
                            f"t={first_seen[v]:g}",
                        )
                    )
                    break

            # R4: constant coding across a mid-follow-up change
            if coded.size and np.all(coded == coded[0]):
                entry, exit_ = float(starts[0]), float(stops[-1])
                previous = baseline.get(name, float(coded[0]))
                for t, v in zip(times.tolist(), values.tolist()):
                    if entry < t < exit_ and v != previous:
                        findings.append(
                            Finding(
                                "R4",
                                Severity.ERROR,
                                sid,
                                f"'{name}' is coded as fixed ({coded[0]:g}) but changes to "
                                f"{v:g} at t={t:g}",
                            )
                        )
                        break
                    previous = v
    return findings


def lint(
    cohort: CohortTable,
    timeline: Optional[Timeline] = None,
    *,
    baseline: Optional[Mapping[str, float]] = None,
    admin_cutoff: Optional[float] = None,
    dropout_threshold: Optional[float] = None,
) -> LintReport:
    """
    Run every rule over a cohort.

    R3 and R4 run only when a timeline is given; they compare each timeline
    variable with the cohort column of the same name. ``baseline`` gives the
    value a variable holds before its first record, when known.

    Args:
        cohort: Episodes to check (build with ``check=False`` for raw files)
        timeline: Covariate change records
        baseline: Pre-record value per timeline variable
        admin_cutoff: Administrative end of follow-up (default: latest tstop)
        dropout_threshold: Share of early censorings that triggers R5
            (default: HAZARDKIT_DROPOUT_THRESHOLD)

    Returns:
        LintReport whose findings are sorted by rule, subject and message
    """
    threshold = settings.DROPOUT_THRESHOLD if dropout_threshold is None else dropout_threshold
    findings: List[Finding] = []

    for rule, subject, message in episode_problems(
        cohort.subject_id, cohort.tstart, cohort.tstop, cohort.status
    ):
        findings.append(Finding(rule, Severity.ERROR, subject, message))

    if timeline is not None and len(timeline):
        findings.extend(_check_lookahead(cohort, timeline, dict(baseline or {})))

    censored = cohort.terminal & (cohort.status == 0)
    n_censored = int(censored.sum())
    cutoff = float(np.max(cohort.tstop)) if admin_cutoff is None else float(admin_cutoff)
    early = int(np.sum(censored & (cohort.tstop < cutoff)))
    if n_censored and early / n_censored > threshold:
        findings.append(
            Finding(
                "R5",
                Severity.WARNING,
                None,
                f"{early} of {n_censored} censorings ({early / n_censored:.1%}) occur before "
                f"the administrative cutoff t={cutoff:g}; check for informative drop-out",
            )
        )

    findings.sort(
        key=lambda f: (f.rule_id, _SEVERITY_ORDER[f.severity], f.subject or "", f.message)
    )
    statuses, counts = np.unique(cohort.status, return_counts=True)
    summary = {
        "episodes": cohort.n_episodes,
        "subjects": cohort.n_subjects,
        "status_counts": {str(int(s)): int(c) for s, c in zip(statuses, counts)},
        "censored": n_censored,
        "censored_before_cutoff": early,
        "admin_cutoff": cutoff,
        "errors": sum(1 for f in findings if f.severity == Severity.ERROR),
        "warnings": sum(1 for f in findings if f.severity == Severity.WARNING),
    }
    return LintReport(tuple(findings), summary)

"""
Text tables for fit summaries, curves and lint reports.

Numbers are printed with 6 significant digits; machine-readable outputs
(CSV, JSON) keep full precision.
"""

import io
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .cox import CoxFit, ModelTests, PHTest
from .lint import LintReport
from .rates import PoissonFit

TEXT_WIDTH = 120


def fmt(value: Any) -> str:
    """Format a number with 6 significant digits; other values pass through ``str``."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "NA"
        return f"{float(value):.6g}"
    if value is None:
        return ""
    return str(value)


def render(table: Table, width: int = TEXT_WIDTH) -> str:
    """Render a rich table to plain text."""
    console = Console(file=io.StringIO(), width=width, color_system=None, force_terminal=False)
    console.print(table)
    return console.file.getvalue()


def frame_table(frame: pd.DataFrame, title: Optional[str] = None) -> Table:
    table = Table(title=title, show_header=True, header_style="bold")
    for column in frame.columns:
        justify = "right" if pd.api.types.is_numeric_dtype(frame[column]) else "left"
        table.add_column(str(column), justify=justify)
    for row in frame.itertuples(index=False):
        table.add_row(*(fmt(v) for v in row))
    return table


def fit_table(fit: CoxFit, title: str, conf_level: Optional[float] = None) -> Table:
    """Coefficient table of a Cox fit with the model's counts in the caption."""
    table = frame_table(fit.summary_frame(conf_level), title=title)
    table.caption = (
        f"{fit.n_subjects} subjects, {fit.n_events} events, "
        f"log partial likelihood {fmt(fit.log_pl)}"
    )
    return table


def rate_fit_table(fit: PoissonFit, title: str, conf_level: Optional[float] = None) -> Table:
    table = frame_table(fit.summary_frame(conf_level), title=title)
    table.caption = f"deviance {fmt(fit.deviance)} on {fit.df_resid} df"
    return table


def tests_table(tests: ModelTests, title: str = "Model tests") -> Table:
    rows = [
        ("Wald", *tests.wald_global),
        (f"likelihood ratio vs {tests.against}", *tests.likelihood_ratio),
        ("score", *tests.score),
    ]
    frame = pd.DataFrame(rows, columns=["test", "statistic", "df", "p"])
    return frame_table(frame, title=title)


def ph_table(test: PHTest, title: str) -> Table:
    table = frame_table(test.table, title=title)
    table.caption = f"time transform: {test.transform.value}"
    return table


def lint_table(report: LintReport, title: str = "Lint findings") -> Table:
    table = Table(title=title, show_header=True, header_style="bold")
    for column in ("rule", "severity", "subject", "message"):
        table.add_column(column)
    for finding in report.findings:
        table.add_row(
            finding.rule_id, finding.severity.value, finding.subject or "", finding.message
        )
    return table


def hr_frame(
    fits: Sequence[CoxFit],
    labels: Sequence[str],
    terms: Sequence[str] = (),
    conf_level: Optional[float] = None,
) -> pd.DataFrame:
    """
    Hazard ratios of several fits side by side, one row per term.

    Each fit contributes a ``<label>`` column holding "HR (lower-upper)"
    and a ``<label> p`` column. A term missing from a fit is left blank.
    """
    order: List[str] = list(terms)
    if not order:
        for fit in fits:
            order.extend(name for name in fit.names if name not in order)

    columns: Dict[str, List[str]] = {"term": order}
    for fit, label in zip(fits, labels):
        lower, upper = fit.confidence_intervals(conf_level)
        cells, pvalues = [], []
        for name in order:
            if name in fit.names:
                j = fit.names.index(name)
                cells.append(
                    f"{fmt(fit.hazard_ratios[j])} ({fmt(lower[j])}-{fmt(upper[j])})"
                )
                pvalues.append(fmt(fit.p_values[j]))
            else:
                cells.append("")
                pvalues.append("")
        columns[label] = cells
        columns[f"{label} p"] = pvalues
    return pd.DataFrame(columns)


def hr_table(
    fits: Sequence[CoxFit],
    labels: Sequence[str],
    terms: Sequence[str] = (),
    conf_level: Optional[float] = None,
    title: str = "Estimated hazard ratios",
) -> Table:
    return frame_table(hr_frame(fits, labels, terms, conf_level), title=title)

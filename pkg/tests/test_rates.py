"""Tests for Lexis tabulation and Poisson rate models."""

import numpy as np
import pytest

from hazardkit import (
    CohortTable,
    MonotoneLikelihoodError,
    RankDeficiencyError,
    TimeAxis,
    ValidationError,
    fit_rate_model,
    rate_summary,
    tabulate_person_time,
)
from hazardkit.rates import INTERCEPT, interval_label, read_rate_table

pytestmark = pytest.mark.unit

OPEN = float("inf")


@pytest.fixture
def two_groups():
    """Two events in 100 units unexposed, four events in 100 units exposed."""
    return CohortTable(
        subject_id=["u1", "u2", "e1", "e2", "e3", "e4"],
        tstart=[0.0] * 6,
        tstop=[50.0, 50.0, 25.0, 25.0, 25.0, 25.0],
        status=[1, 1, 1, 1, 1, 1],
        covariates=[[0.0], [0.0], [1.0], [1.0], [1.0], [1.0]],
        covariate_names=("x",),
    )


class TestTimeAxis:
    """Test axis definitions."""

    def test_labels(self):
        """Test half-open band labels with an open last band."""
        axis = TimeAxis("time", (0, 2, OPEN))
        assert axis.n_bands == 2
        assert axis.labels() == ["[0,2)", "[2,inf)"]
        assert interval_label(40, 50) == "[40,50)"

    @pytest.mark.parametrize("cuts", [(0.0,), (0.0, 0.0), (5.0, 1.0), (-OPEN, 0.0)])
    def test_invalid_cutpoints(self, cuts):
        """Test too few, unsorted or infinite-start cut points are rejected."""
        with pytest.raises(ValidationError):
            TimeAxis("time", cuts)


class TestTabulation:
    """Test splitting follow-up into cells."""

    def test_single_axis(self):
        """Test (0,5] with a cut at 2 gives 2 and 3 units with the event in the last band."""
        cohort = CohortTable(["a"], [0.0], [5.0], [1])
        table = tabulate_person_time(cohort, [TimeAxis("time", (0, 2, OPEN))])
        assert table.cells["time"].tolist() == [0, 1]
        assert table.cells["person_time"].tolist() == [2.0, 3.0]
        assert table.cells["events"].tolist() == [0.0, 1.0]
        assert table.labelled()["time"].tolist() == ["[0,2)", "[2,inf)"]

    def test_two_axes(self):
        """Test splitting on follow-up time and age at once."""
        cohort = CohortTable(
            ["a"], [0.0], [5.0], [1], covariates=[[48.0]], covariate_names=("age",)
        )
        axes = [TimeAxis("time", (0, 3, OPEN)), TimeAxis("attained", (40, 50, 60), offset="age")]
        cells = tabulate_person_time(cohort, axes).cells
        assert list(zip(cells["time"], cells["attained"])) == [(0, 0), (0, 1), (1, 1)]
        assert cells["person_time"].tolist() == [2.0, 1.0, 2.0]
        assert cells["events"].tolist() == [0.0, 0.0, 1.0]

    def test_events_and_person_time_conserved(self, small_cohort):
        """Test tabulation keeps every event and unit of person-time."""
        table = tabulate_person_time(small_cohort, [TimeAxis("time", (0, 3, 6, OPEN))], ["x"])
        assert table.total_events == small_cohort.n_events()
        assert table.total_person_time == pytest.approx(small_cohort.person_time())

    @pytest.mark.parametrize(
        "cause, events", [(None, [2.0, 2.0]), (1, [1.0, 1.0]), (2, [1.0, 1.0])]
    )
    def test_cause_specific_events(self, two_cause_cohort, cause, events):
        """Test a cause counts only its own events while person-time is unchanged."""
        axes = [TimeAxis("time", (0, 3, OPEN))]
        cells = tabulate_person_time(two_cause_cohort, axes, cause=cause).cells
        assert cells["events"].tolist() == events
        assert cells["person_time"].tolist() == [15.0, 6.0]

    def test_unknown_cause(self, two_cause_cohort):
        """Test a cause code absent from the cohort is rejected."""
        with pytest.raises(ValidationError, match="unknown cause code 3"):
            tabulate_person_time(two_cause_cohort, [TimeAxis("time", (0, OPEN))], cause=3)

    def test_follow_up_below_first_cut(self):
        """Test follow-up starting below the first cut point is rejected."""
        cohort = CohortTable(["a"], [0.0], [5.0], [1])
        with pytest.raises(ValidationError, match="below its first cut point"):
            tabulate_person_time(cohort, [TimeAxis("time", (1, OPEN))])

    def test_follow_up_beyond_finite_last_cut(self):
        """Test follow-up past a finite last cut point is rejected."""
        cohort = CohortTable(["a"], [0.0], [5.0], [1])
        with pytest.raises(ValidationError, match="beyond its final cut point"):
            tabulate_person_time(cohort, [TimeAxis("time", (0, 4))])

    def test_axis_and_pattern_names_distinct(self, two_groups):
        """Test an axis may not share its name with a pattern column."""
        with pytest.raises(ValidationError, match="distinct"):
            tabulate_person_time(two_groups, [TimeAxis("x", (0, OPEN))], ["x"])

    def test_csv_reads_back(self, two_groups, tmp_path):
        """Test a written cell table is read back with its labels and totals."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, 30, OPEN))], ["x"])
        path = table.to_csv(tmp_path / "cells.csv")
        again = read_rate_table(path, ["time"])
        assert again.patterns == ("x",)
        assert again.total_events == table.total_events
        assert again.axes[0].cutpoints == (0.0, 30.0, OPEN)


class TestRateModel:
    """Test Poisson regression on cell tables."""

    def test_single_cell_rate(self):
        """Test one event in 20 units gives log rate log(0.05)."""
        cohort = CohortTable(["a"], [0.0], [20.0], [1])
        table = tabulate_person_time(cohort, [TimeAxis("time", (0, OPEN))])
        fit = fit_rate_model(table)
        assert fit.names == (INTERCEPT,)
        assert fit.coefficient(INTERCEPT) == pytest.approx(np.log(0.05), abs=1e-6)

    def test_rate_ratio_factor(self, two_groups):
        """Test the exposed-to-unexposed rate ratio of 2."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))], ["x"])
        fit = fit_rate_model(table, factors=["x"])
        assert fit.names == (INTERCEPT, "x=1.0")
        assert fit.rate_ratios["x=1.0"] == pytest.approx(2.0, rel=1e-6)
        assert fit.coefficient(INTERCEPT) == pytest.approx(np.log(0.02), abs=1e-6)

    def test_rate_ratio_linear(self, two_groups):
        """Test a numeric term gives the same ratio for a 0/1 covariate."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))], ["x"])
        fit = fit_rate_model(table, linear=["x"])
        assert fit.rate_ratios["x"] == pytest.approx(2.0, rel=1e-6)
        frame = fit.summary_frame()
        assert frame.loc[1, "lower"] < 2.0 < frame.loc[1, "upper"]
        assert fit.to_dict()["model"]["linear"] == ["x"]

    def test_band_factor(self, two_groups):
        """Test axis bands enter as labelled factor levels."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, 30, OPEN))])
        fit = fit_rate_model(table, factors=["time"])
        assert fit.names == (INTERCEPT, "time=[30,inf)")
        assert fit.rate_ratios["time=[30,inf)"] == pytest.approx(2.0, rel=1e-6)

    def test_unknown_column(self, two_groups):
        """Test an unknown column is rejected."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))], ["x"])
        with pytest.raises(ValidationError, match="unknown rate-table column 'age'"):
            fit_rate_model(table, factors=["age"])

    def test_no_events(self):
        """Test a table without events cannot be fitted."""
        cohort = CohortTable(["a"], [0.0], [20.0], [0])
        table = tabulate_person_time(cohort, [TimeAxis("time", (0, OPEN))])
        with pytest.raises(ValidationError, match="no events"):
            fit_rate_model(table)

    def test_rank_deficient(self, two_groups):
        """Test the same column as factor and linear term is rank deficient."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))], ["x"])
        with pytest.raises(RankDeficiencyError):
            fit_rate_model(table, factors=["x"], linear=["x"])

    def test_monotone_likelihood(self):
        """Test a group without events makes its rate ratio diverge."""
        cohort = CohortTable(
            ["u1", "e1"],
            [0.0, 0.0],
            [10.0, 10.0],
            [1, 0],
            covariates=[[0.0], [1.0]],
            covariate_names=("x",),
        )
        table = tabulate_person_time(cohort, [TimeAxis("time", (0, OPEN))], ["x"])
        with pytest.raises(MonotoneLikelihoodError) as excinfo:
            fit_rate_model(table, linear=["x"])
        assert excinfo.value.direction == "-"


class TestRateSummary:
    """Test crude rate tables."""

    def test_rates_per_thousand(self, two_groups):
        """Test crude rates per 1000 units of person-time."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))], ["x"])
        summary = rate_summary(table, ["x"], per=1000)
        assert summary["rate"].tolist() == pytest.approx([20.0, 40.0])

    def test_by_band_label(self, two_groups):
        """Test grouping by an axis uses its interval labels."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, 30, OPEN))], ["x"])
        summary = rate_summary(table, ["time"], per=1)
        assert summary["time"].tolist() == ["[0,30)", "[30,inf)"]
        assert summary["events"].tolist() == [4.0, 2.0]
        assert summary["person_time"].tolist() == [160.0, 40.0]

    def test_unknown_grouping(self, two_groups):
        """Test grouping by an unknown column is rejected."""
        table = tabulate_person_time(two_groups, [TimeAxis("time", (0, OPEN))])
        with pytest.raises(ValidationError, match="unknown"):
            rate_summary(table, ["x"])

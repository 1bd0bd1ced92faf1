"""Tests for Nelson-Aalen, Kaplan-Meier and Aalen-Johansen estimators."""

import numpy as np
import pytest

from hazardkit import CohortTable, ValidationError
from hazardkit.nonparam import (
    aalen_johansen,
    at_risk,
    censoring_curve,
    kaplan_meier,
    nelson_aalen,
)

pytestmark = pytest.mark.unit


class TestRiskSet:
    """Test counting the risk set."""

    def test_half_open_intervals(self, small_cohort):
        """Test entry times are excluded and exit times included."""
        np.testing.assert_array_equal(at_risk(small_cohort, [1.0, 2.0, 4.0, 8.0]), [6, 7, 6, 1])


class TestNelsonAalen:
    """Test the cumulative hazard estimator."""

    def test_jumps_with_delayed_entry(self, small_cohort):
        """Test jumps d/Y with the tie at t=4 counted twice."""
        curve = nelson_aalen(small_cohort)
        np.testing.assert_array_equal(curve.jump_times, [2.0, 4.0, 6.0, 8.0])
        np.testing.assert_array_equal(curve.at_risk, [7, 6, 3, 1])
        np.testing.assert_array_equal(curve.events, [1, 2, 1, 1])
        expected = np.cumsum([1 / 7, 2 / 6, 1 / 3, 1.0])
        np.testing.assert_allclose(curve.values, expected, rtol=1e-12)
        np.testing.assert_allclose(curve.variance[0], 1 / 49)
        assert curve.kind == "cumhaz"

    def test_bands_bracket_estimate(self, small_cohort):
        """Test the confidence band contains the estimate."""
        curve = nelson_aalen(small_cohort)
        assert np.all(curve.lower <= curve.values)
        assert np.all(curve.upper >= curve.values)

    def test_single_cause(self, two_cause_cohort):
        """Test counting only one cause."""
        curve = nelson_aalen(two_cause_cohort, cause=1)
        np.testing.assert_array_equal(curve.jump_times, [1.0, 4.0])
        np.testing.assert_allclose(curve.values, [1 / 6, 1 / 6 + 1 / 3])
        assert curve.label == "Nelson-Aalen (cause 1)"

    def test_invalid_conf_level(self, small_cohort):
        """Test a confidence level outside (0, 1) is rejected."""
        with pytest.raises(ValidationError, match="conf_level"):
            nelson_aalen(small_cohort, conf_level=1.5)


class TestKaplanMeier:
    """Test the product-limit estimator."""

    def test_product_limit(self, small_cohort):
        """Test the survival estimate with delayed entry and a tie."""
        curve = kaplan_meier(small_cohort)
        np.testing.assert_allclose(curve.values, [6 / 7, 4 / 7, 8 / 21, 0.0], rtol=1e-12)
        assert curve(1.9) == 1.0
        assert curve.initial_value == 1.0

    def test_three_subjects(self, three_subjects):
        """Test the two-event example."""
        curve = kaplan_meier(three_subjects)
        np.testing.assert_allclose(curve.values, [2 / 3, 1 / 3])

    def test_bands_within_unit_interval(self, small_cohort):
        """Test the log(-log) band stays within [0, 1] and brackets the estimate."""
        curve = kaplan_meier(small_cohort)
        assert np.all((curve.lower >= 0) & (curve.upper <= 1))
        assert np.all(curve.lower <= curve.values)
        assert np.all(curve.upper >= curve.values)

    def test_conditional_survival(self, small_cohort):
        """Test conditioning on survival to t0 restarts the curve at 1."""
        curve = kaplan_meier(small_cohort, condition_time=3.0)
        assert curve.origin == 3.0
        assert curve(3.0) == 1.0
        np.testing.assert_allclose(curve.values, [4 / 6, 4 / 9, 0.0])

    def test_conditioning_past_follow_up(self, small_cohort):
        """Test an empty risk set at t0 raises ValidationError."""
        with pytest.raises(ValidationError, match="empty risk set"):
            kaplan_meier(small_cohort, condition_time=10.0)


class TestAalenJohansen:
    """Test cumulative incidence under competing risks."""

    def test_incidence_per_cause(self, two_cause_cohort):
        """Test each cause's curve against hand-computed values."""
        result = aalen_johansen(two_cause_cohort)
        relapse = result.incidence[1]
        death = result.incidence[2]
        np.testing.assert_allclose(relapse.values, [1 / 6, 1 / 6, 7 / 18, 7 / 18])
        np.testing.assert_allclose(death.values, [0.0, 1 / 6, 1 / 6, 7 / 18])
        assert relapse.label == "relapse"

    def test_curves_sum_to_one(self, two_cause_cohort):
        """Test incidences plus overall survival equal one at every time."""
        result = aalen_johansen(two_cause_cohort)
        for t in [0.5, 1.0, 2.5, 4.0, 5.0, 6.0]:
            assert result.total(t) + result.survival(t) == pytest.approx(1.0)

    def test_single_cause_is_one_minus_km(self, small_cohort):
        """Test with one cause the incidence equals 1 - Kaplan-Meier."""
        incidence = aalen_johansen(small_cohort).incidence[1]
        km = kaplan_meier(small_cohort)
        np.testing.assert_allclose(incidence.values, 1.0 - km.values, atol=1e-12)


class TestCensoringCurve:
    """Test the reverse Kaplan-Meier estimate."""

    def test_censorings_are_events(self, two_cause_cohort):
        """Test censoring times drive the curve."""
        curve = censoring_curve(two_cause_cohort)
        np.testing.assert_array_equal(curve.jump_times, [3.0, 6.0])
        np.testing.assert_allclose(curve.values, [3 / 4, 0.0])

    def test_events_leave_before_tied_censoring(self):
        """Test an event tied with a censoring is out of the censoring risk set."""
        cohort = CohortTable(["a", "b", "c"], [0.0, 0.0, 0.0], [2.0, 2.0, 3.0], [1, 0, 0])
        curve = censoring_curve(cohort)
        np.testing.assert_array_equal(curve.at_risk, [2, 1])
        np.testing.assert_allclose(curve.values, [0.5, 0.0])

"""Tests for absolute-risk prediction, landmarking and the g-formula."""

import logging

import numpy as np
import pytest

from hazardkit import (
    CovariateProfile,
    ModelSpec,
    ValidationError,
    fit_cox,
    g_formula,
    landmark_fit,
    predict_cuminc,
    predict_survival,
    simulate_cohort,
)
from hazardkit.nonparam import aalen_johansen
from hazardkit.predict import attributable_events, landmark_cohort, landmark_series

pytestmark = pytest.mark.unit


@pytest.fixture
def cause_fits(two_cause_cohort):
    """Covariate-free cause-specific models for both causes."""
    return {
        1: fit_cox(two_cause_cohort, ModelSpec.null_model(cause=1)),
        2: fit_cox(two_cause_cohort, ModelSpec.null_model(cause=2)),
    }


class TestPredictSurvival:
    """Test single-cause risk prediction."""

    def test_baseline_profile(self, three_subjects):
        """Test the x=0 profile follows the baseline cumulative hazard."""
        fit = fit_cox(three_subjects, ["x"])
        curve = predict_survival(fit, CovariateProfile({"x": 0}))
        base = fit.baseline["all"]
        np.testing.assert_allclose(curve.values, 1 - np.exp(-base.values))
        assert curve(0.5) == 0.0

    def test_profile_scales_hazard(self, three_subjects):
        """Test a profile multiplies the hazard by exp(beta * x)."""
        fit = fit_cox(three_subjects, ["x"])
        curve = predict_survival(fit, CovariateProfile({"x": 1}))
        hr = fit.hazard_ratios[0]
        expected = 1 - np.exp(-fit.baseline["all"].values * hr)
        np.testing.assert_allclose(curve.values, expected)

    def test_conditional_on_survival(self, three_subjects):
        """Test prediction from t_pred only accumulates later hazard."""
        fit = fit_cox(three_subjects, ["x"])
        curve = predict_survival(fit, CovariateProfile({"x": 0}), t_pred=1.0)
        jump = fit.baseline["all"].increments[1]
        np.testing.assert_array_equal(curve.times, [2.0])
        assert curve(2.0) == pytest.approx(1 - np.exp(-jump))
        assert curve.t_pred == 1.0

    def test_flat_beyond_support(self, three_subjects):
        """Test the curve is flat and flagged past the last event time."""
        fit = fit_cox(three_subjects, ["x"])
        curve = predict_survival(fit, CovariateProfile({"x": 0}))
        assert curve.horizon == 2.0
        assert curve.beyond_support(5.0)
        assert not curve.beyond_support(1.5)
        assert curve(5.0) == curve(2.0)

    def test_to_frame(self, three_subjects):
        """Test the tabulated curve starts at zero risk at t_pred."""
        fit = fit_cox(three_subjects, ["x"])
        frame = predict_survival(fit, CovariateProfile({"x": 1})).to_frame()
        assert list(frame.columns) == ["time", "risk", "cause"]
        assert frame.loc[0, "risk"] == 0.0

    def test_internal_covariate_refused(self, small_cohort):
        """Test a model with an internal time-dependent covariate has no absolute risk."""
        cohort = small_cohort.with_column("x", small_cohort.column("x"), time_dependent=True)
        fit = fit_cox(cohort, ["x"])
        with pytest.raises(ValidationError, match="internal time-dependent"):
            predict_survival(fit, CovariateProfile({"x": 1}))

    def test_incomplete_profile(self, three_subjects):
        """Test a profile must give every model covariate."""
        fit = fit_cox(three_subjects, ["x"])
        with pytest.raises(ValidationError, match="missing covariate 'x'"):
            predict_survival(fit, CovariateProfile({}))

    def test_stratified_model_needs_stratum(self, small_cohort):
        """Test a stratified model needs the profile's stratum."""
        cohort = small_cohort.replace(stratum=np.array(["A"] * 4 + ["B"] * 4))
        fit = fit_cox(cohort, ModelSpec.null_model(strata="stratum"))
        with pytest.raises(ValidationError, match="give a stratum"):
            predict_survival(fit, CovariateProfile())
        curve = predict_survival(fit, CovariateProfile(stratum="B"))
        np.testing.assert_array_equal(curve.times, fit.baseline["B"].jump_times)


class TestPredictCumulativeIncidence:
    """Test competing-risk prediction from cause-specific models."""

    def test_product_limit_matches_aalen_johansen(self, two_cause_cohort, cause_fits):
        """Test covariate-free models reproduce Aalen-Johansen."""
        prediction = predict_cuminc(cause_fits, CovariateProfile(), method="product_limit")
        reference = aalen_johansen(two_cause_cohort)
        for cause in (1, 2):
            np.testing.assert_allclose(
                prediction[cause](reference.incidence[cause].jump_times),
                reference.incidence[cause].values,
                atol=1e-12,
            )
        np.testing.assert_allclose(prediction.survival.values, reference.survival.values)

    @pytest.mark.parametrize("method", ["exponential", "product_limit"])
    def test_incidence_and_survival_sum_to_one(self, cause_fits, method):
        """Test cumulative incidences plus overall survival equal one."""
        prediction = predict_cuminc(cause_fits, CovariateProfile(), method=method)
        for t in [0.5, 1.0, 2.0, 4.5, 10.0]:
            assert prediction.total(t) + prediction.survival(t) == pytest.approx(1.0)
        assert list(prediction) == [1, 2]

    def test_exponential_increments(self, cause_fits):
        """Test each cause gains S(u-) (1 - exp(-dA)) dA_k / dA at its event times."""
        prediction = predict_cuminc(cause_fits, CovariateProfile())
        # relapse at t=1 with 6 at risk, death at t=2 with 5 at risk
        assert prediction[1](1.0) == pytest.approx(1.0 - np.exp(-1.0 / 6.0))
        assert prediction[2](2.0) == pytest.approx(np.exp(-1.0 / 6.0) * (1.0 - np.exp(-0.2)))
        assert prediction.survival(2.0) == pytest.approx(np.exp(-1.0 / 6.0 - 0.2))

    def test_exponential_below_product_limit(self, cause_fits):
        """Test the exponential method gives a larger overall survival."""
        exponential = predict_cuminc(cause_fits, CovariateProfile())
        product = predict_cuminc(cause_fits, CovariateProfile(), method="product_limit")
        assert np.all(exponential.survival.values >= product.survival.values)

    def test_overlapping_causes(self, cause_fits):
        """Test two fits of the same cause are rejected."""
        with pytest.raises(ValidationError, match="overlapping"):
            predict_cuminc({1: cause_fits[1], 2: cause_fits[1]}, CovariateProfile())

    def test_mislabelled_cause(self, cause_fits):
        """Test a fit filed under another cause code is rejected."""
        with pytest.raises(ValidationError, match="counts cause 1"):
            predict_cuminc({2: cause_fits[1]}, CovariateProfile())

    def test_fits_from_different_cohorts(self, cause_fits, three_subjects):
        """Test fits must share one cohort."""
        other = fit_cox(three_subjects, ModelSpec.null_model(cause=1))
        with pytest.raises(ValidationError, match="same cohort"):
            predict_cuminc({1: other, 2: cause_fits[2]}, CovariateProfile())


class TestLandmark:
    """Test landmark data sets and fits."""

    def test_landmark_cohort(self, small_cohort):
        """Test subjects at risk at the landmark are kept and censored at the horizon."""
        data = landmark_cohort(small_cohort, 3.0, 3.0)
        assert data.subjects.tolist() == ["s2", "s3", "s4", "s5", "s6", "s7"]
        np.testing.assert_array_equal(data.tstart, 3.0)
        assert data.tstop.tolist() == [4.0, 4.0, 5.0, 6.0, 6.0, 6.0]
        assert data.status.tolist() == [1, 1, 0, 1, 0, 0]

    def test_covariate_frozen_at_last_record(self, exposure_cohort, exposure_timeline, caplog):
        """Test a timeline covariate is frozen at the landmark and unrecorded subjects drop."""
        with caplog.at_level(logging.WARNING, logger="hazardkit"):
            data = landmark_cohort(
                exposure_cohort,
                2.0,
                5.0,
                timeline=exposure_timeline,
                covariates=["exposure"],
            )
        assert data.subjects.tolist() == ["s2"]
        assert data.column("exposure").tolist() == [1.0]
        assert "dropped" in caplog.text

    def test_nobody_at_risk(self, small_cohort):
        """Test a landmark after all follow-up is rejected."""
        with pytest.raises(ValidationError, match="nobody at risk"):
            landmark_cohort(small_cohort, 20.0, 1.0)

    def test_window_must_be_positive(self, small_cohort):
        """Test a zero window is rejected."""
        with pytest.raises(ValidationError, match="window"):
            landmark_cohort(small_cohort, 3.0, 0.0)

    def test_landmark_fit(self, small_cohort):
        """Test a Cox model on the landmark data set."""
        fit = landmark_fit(small_cohort, 3.0, 3.0, ModelSpec.of("x"))
        assert fit.n_subjects == 6
        assert fit.n_events == 3

    def test_no_events_in_window(self, small_cohort):
        """Test a window without events is rejected."""
        with pytest.raises(ValidationError, match="no events in landmark window"):
            landmark_fit(small_cohort, 6.5, 1.0, ModelSpec.of("x"))

    def test_series_sorted(self, small_cohort):
        """Test landmark fits come back in ascending landmark order."""
        fits = landmark_series(small_cohort, [3.0, 1.0], 3.0, ModelSpec.null_model())
        assert list(fits) == [1.0, 3.0]


class TestGFormula:
    """Test standardised risk contrasts."""

    def test_point_estimate(self, small_cohort):
        """Test with treatment as the only covariate the contrast is two profile risks."""
        fit = fit_cox(small_cohort, ["x"])
        contrast = g_formula(fit, small_cohort, "x", [6.0, 3.0], replicates=0)
        np.testing.assert_array_equal(contrast.times, [3.0, 6.0])
        treated = predict_survival(fit, CovariateProfile({"x": 1}))
        untreated = predict_survival(fit, CovariateProfile({"x": 0}))
        np.testing.assert_allclose(contrast.risk_treated, treated(contrast.times))
        np.testing.assert_allclose(contrast.risk_untreated, untreated(contrast.times))
        np.testing.assert_allclose(
            contrast.difference, contrast.risk_untreated - contrast.risk_treated
        )
        assert contrast.lower is None
        assert contrast.to_dict()["difference_definition"] == "risk(a=0) - risk(a=1)"

    def test_treatment_must_be_binary(self, small_cohort):
        """Test a non-binary treatment is refused."""
        cohort = small_cohort.with_column("z", [0.5, 1.2, -0.3, 0.8, 2.0, -1.0, 0.1, 0.4])
        fit = fit_cox(cohort, ["x", "z"])
        with pytest.raises(ValidationError, match="0/1"):
            g_formula(fit, cohort, "z", [3.0], replicates=0)

    def test_treatment_must_be_in_model(self, small_cohort):
        """Test the treatment must be a model covariate."""
        fit = fit_cox(small_cohort, ModelSpec.null_model())
        with pytest.raises(ValidationError, match="not in the model"):
            g_formula(fit, small_cohort, "x", [3.0], replicates=0)

    def test_time_dependent_covariate_refused(self, small_cohort):
        """Test time-dependent model covariates are refused."""
        cohort = small_cohort.with_column("x", small_cohort.column("x"), time_dependent=True)
        fit = fit_cox(cohort, ["x"])
        with pytest.raises(ValidationError, match="time-dependent"):
            g_formula(fit, cohort, "x", [3.0], replicates=0)

    def test_competing_risks(self, two_cause_cohort):
        """Test a contrast of cause-specific incidence."""
        cohort = two_cause_cohort.with_column("a", [1, 0, 1, 0, 1, 0])
        fits = {
            1: fit_cox(cohort, ModelSpec.of("a", cause=1)),
            2: fit_cox(cohort, ModelSpec.of("a", cause=2)),
        }
        contrast = g_formula(fits, cohort, "a", [5.0], cause=2, replicates=0)
        treated = predict_cuminc(fits, CovariateProfile({"a": 1}))[2](5.0)
        assert contrast.risk_treated[0] == pytest.approx(treated)

    def test_bootstrap_does_not_depend_on_workers(self, two_group_scenario):
        """Test bootstrap intervals are identical with one or two workers."""
        cohort = simulate_cohort(two_group_scenario).cohort
        fit = fit_cox(cohort, ["z"])
        one = g_formula(fit, cohort, "z", [2.0, 5.0], replicates=4, seed=3, workers=1)
        two = g_formula(fit, cohort, "z", [2.0, 5.0], replicates=4, seed=3, workers=2)
        assert one.replicates == 4
        assert one.to_frame().equals(two.to_frame())
        assert np.all(one.lower["difference"] <= one.upper["difference"])


class TestAttributableEvents:
    """Test excess events attributable to an exposure."""

    def test_counts(self, small_cohort):
        """Test the excess is the exposed subjects' risk difference."""
        fit = fit_cox(small_cohort, ["x"])
        result = attributable_events(fit, small_cohort, "x", 6.0)
        r1 = predict_survival(fit, CovariateProfile({"x": 1}))(6.0)
        r0 = predict_survival(fit, CovariateProfile({"x": 0}))(6.0)
        assert result.observed == pytest.approx(4 * r1 + 4 * r0)
        assert result.unexposed == pytest.approx(8 * r0)
        assert result.count == pytest.approx(4 * (r1 - r0))
        expected_label = "excess events" if r1 >= r0 else "prevented events"
        assert result.to_dict()["label"] == expected_label

"""Tests for the Cox partial-likelihood engine."""

import numpy as np
import pytest

from hazardkit import (
    CohortTable,
    ModelSpec,
    MonotoneLikelihoodError,
    RankDeficiencyError,
    Term,
    ValidationError,
    fit_cox,
    model_tests,
    ph_test,
    schoenfeld_residuals,
)
from hazardkit.cohort import subset
from hazardkit.cox import breslow_baseline, martingale_residuals
from hazardkit.nonparam import nelson_aalen

pytestmark = pytest.mark.unit

HALF_LN2 = 0.5 * np.log(2.0)
SQRT2 = np.sqrt(2.0)


@pytest.fixture
def two_covariates(small_cohort):
    """small_cohort with a continuous second covariate."""
    z = [0.5, 1.2, -0.3, 0.8, 2.0, -1.0, 0.1, 0.4]
    return small_cohort.with_column("z", z)


class TestSpec:
    """Test model specifications."""

    def test_of_builds_linear_terms(self):
        """Test plain covariate names become linear terms."""
        spec = ModelSpec.of("x", "z", strata="stratum")
        assert spec.covariates == ("x", "z")
        assert spec.terms[0].transform.value == "linear"

    def test_empty_model_needs_null(self):
        """Test a model without terms must be declared as the null model."""
        with pytest.raises(ValidationError, match="null_model"):
            ModelSpec()
        assert ModelSpec.null_model().null

    def test_duplicate_covariate(self):
        """Test a covariate may appear in only one term."""
        with pytest.raises(ValidationError, match="only one term"):
            ModelSpec(terms=(Term("x"), Term("x", "spline")))

    def test_stratum_and_term(self):
        """Test a column cannot be a stratum and a term at once."""
        with pytest.raises(ValidationError, match="both a stratum and a term"):
            ModelSpec.of("x", strata="x")

    def test_interaction_needs_breaks(self):
        """Test a time interaction without breakpoints is rejected."""
        with pytest.raises(ValidationError, match="breakpoints"):
            Term("x", "time_interaction")

    def test_knots_on_linear_term(self):
        """Test knots are only accepted for spline terms."""
        with pytest.raises(ValidationError, match="non-spline"):
            Term("x", knots=(1.0, 2.0, 3.0))

    def test_interaction_column_names(self):
        """Test one column per time interval."""
        term = Term("x", "time_interaction", breaks=(1.0, 3.0))
        assert term.column_names() == ["x:t<=1", "x:1<t<=3", "x:t>3"]


class TestFit:
    """Test coefficient and baseline estimates."""

    def test_closed_form_coefficient(self, three_subjects):
        """Test the score equation solution e^beta = sqrt(2)."""
        fit = fit_cox(three_subjects, ["x"])
        assert fit.converged
        assert fit.beta[0] == pytest.approx(HALF_LN2, abs=1e-6)
        assert fit.hazard_ratios[0] == pytest.approx(SQRT2, abs=1e-5)
        assert fit.n_events == 2
        assert fit.coefficient("x") == fit.beta[0]

    def test_breslow_jumps(self, three_subjects):
        """Test baseline jumps 1/(2+sqrt 2) and 1/(1+sqrt 2)."""
        fit = fit_cox(three_subjects, ["x"])
        expected = [1 / (2 + SQRT2), 1 / (1 + SQRT2)]
        exact = breslow_baseline(fit, beta=np.array([HALF_LN2]))["all"]
        np.testing.assert_allclose(exact.increments, expected, rtol=1e-10)
        np.testing.assert_allclose(fit.baseline["all"].increments, expected, rtol=1e-6)

    def test_breslow_at_zero_is_nelson_aalen(self, small_cohort):
        """Test the baseline at beta = 0 equals the Nelson-Aalen estimate."""
        fit = fit_cox(small_cohort, ["x"])
        at_zero = breslow_baseline(fit, beta=np.zeros(1))["all"]
        na = nelson_aalen(small_cohort)
        np.testing.assert_allclose(at_zero.values, na.values, rtol=1e-12)

    def test_null_model(self, three_subjects):
        """Test the null model gives the Nelson-Aalen baseline and log PL."""
        fit = fit_cox(three_subjects, ModelSpec.null_model())
        assert fit.names == ()
        np.testing.assert_allclose(fit.baseline["all"].values, [1 / 3, 1 / 3 + 1 / 2])
        assert fit.log_pl == pytest.approx(-np.log(3.0) - np.log(2.0))

    def test_efron_equals_breslow_without_ties(self, three_subjects):
        """Test both tie methods agree when event times are distinct."""
        breslow = fit_cox(three_subjects, ModelSpec.of("x", ties="breslow"))
        efron = fit_cox(three_subjects, ModelSpec.of("x", ties="efron"))
        assert efron.beta[0] == pytest.approx(breslow.beta[0], abs=1e-10)
        assert efron.log_pl == pytest.approx(breslow.log_pl, abs=1e-12)

    def test_efron_differs_with_ties(self, two_covariates):
        """Test the tied events at t=4 change the Efron likelihood."""
        breslow = fit_cox(two_covariates, ModelSpec.of("x", "z", ties="breslow"))
        efron = fit_cox(two_covariates, ModelSpec.of("x", "z", ties="efron"))
        assert efron.log_pl != pytest.approx(breslow.log_pl)

    def test_likelihood_history_non_decreasing(self, two_covariates):
        """Test every accepted Newton step increases the log partial likelihood."""
        fit = fit_cox(two_covariates, ["x", "z"])
        assert np.all(np.diff(fit.history) >= 0)
        assert fit.log_pl >= fit.log_pl_null

    def test_stratified_null_model(self, small_cohort):
        """Test each stratum gets the Nelson-Aalen curve of its own subjects."""
        labels = np.array(["A"] * 4 + ["B"] * 4)
        cohort = small_cohort.replace(stratum=labels)
        fit = fit_cox(cohort, ModelSpec.null_model(strata="stratum"))
        assert sorted(fit.baseline) == ["A", "B"]
        for level in ("A", "B"):
            expected = nelson_aalen(subset(cohort, "stratum", level))
            np.testing.assert_allclose(fit.baseline[level].values, expected.values)

    def test_summary_frame(self, three_subjects):
        """Test the coefficient table and its confidence limits."""
        fit = fit_cox(three_subjects, ["x"])
        frame = fit.summary_frame()
        assert list(frame.columns) == ["term", "coef", "hr", "se", "lower", "upper", "z", "p"]
        assert frame.loc[0, "lower"] < frame.loc[0, "hr"] < frame.loc[0, "upper"]
        document = fit.to_dict()
        assert document["model"]["events"] == 2
        assert document["coefficients"][0]["term"] == "x"

    def test_linear_predictor(self, three_subjects):
        """Test the linear predictor of a profile."""
        fit = fit_cox(three_subjects, ["x"])
        eta = fit.linear_predictor({"x": 2.0}, np.array([1.0, 2.0]))
        np.testing.assert_allclose(eta, 2 * fit.beta[0])
        with pytest.raises(ValidationError, match="missing covariate"):
            fit.linear_predictor({}, np.array([1.0]))


class TestFailures:
    """Test the numerical failure modes."""

    def test_no_events(self):
        """Test a cohort without events cannot be fitted."""
        cohort = CohortTable(
            ["a", "b"],
            [0.0, 0.0],
            [1.0, 2.0],
            [0, 0],
            covariates=[[1.0], [0.0]],
            covariate_names=("x",),
        )
        with pytest.raises(ValidationError, match="no events"):
            fit_cox(cohort, ["x"])

    def test_unknown_column(self, three_subjects):
        """Test an unknown covariate raises ValidationError."""
        with pytest.raises(ValidationError, match="unknown covariate column 'age'"):
            fit_cox(three_subjects, ["age"])

    def test_constant_column(self, three_subjects):
        """Test a column without variation is reported as rank deficient."""
        cohort = three_subjects.with_column("one", np.ones(3))
        with pytest.raises(RankDeficiencyError) as excinfo:
            fit_cox(cohort, ["x", "one"])
        assert excinfo.value.columns == ("one",)

    def test_collinear_columns(self, two_covariates):
        """Test linearly dependent columns are rejected."""
        cohort = two_covariates.with_column("x2", 2 * two_covariates.column("x"))
        with pytest.raises(RankDeficiencyError, match="linearly dependent"):
            fit_cox(cohort, ["x", "x2"])

    def test_monotone_likelihood(self):
        """Test complete separation of events by a covariate is detected."""
        cohort = CohortTable(
            ["m1", "m2", "m3", "m4"],
            [0.0] * 4,
            [1.0, 2.0, 3.0, 4.0],
            [1, 1, 0, 0],
            covariates=[[1.0], [1.0], [0.0], [0.0]],
            covariate_names=("x",),
        )
        with pytest.raises(MonotoneLikelihoodError) as excinfo:
            fit_cox(cohort, ["x"])
        assert excinfo.value.coefficient == "x"
        assert excinfo.value.direction == "+"


class TestResiduals:
    """Test Schoenfeld and martingale residuals."""

    def test_schoenfeld_values(self, three_subjects):
        """Test each residual is the covariate minus its risk-set mean."""
        fit = fit_cox(three_subjects, ["x"])
        res = schoenfeld_residuals(fit, beta=np.array([HALF_LN2]))
        assert res.residuals.shape == (2, 1)
        np.testing.assert_array_equal(res.times, [1.0, 2.0])
        expected = [-SQRT2 / (2 + SQRT2), 1 / (1 + SQRT2)]
        np.testing.assert_allclose(res.residuals[:, 0], expected, rtol=1e-10)

    def test_schoenfeld_sum_to_zero_at_estimate(self, two_covariates):
        """Test residuals sum to the score, which vanishes at the estimate."""
        fit = fit_cox(two_covariates, ["x", "z"])
        res = schoenfeld_residuals(fit)
        assert res.residuals.shape == (5, 2)
        np.testing.assert_allclose(res.residuals.sum(axis=0), 0.0, atol=1e-6)
        frame = res.to_frame()
        assert list(frame.columns) == ["time", "stratum", "x", "z", "x_scaled", "z_scaled"]

    def test_null_model_has_no_residuals(self, three_subjects):
        """Test the null model has no Schoenfeld residuals."""
        fit = fit_cox(three_subjects, ModelSpec.null_model())
        with pytest.raises(ValidationError, match="null model"):
            schoenfeld_residuals(fit)

    def test_martingale_per_subject(self, two_covariates):
        """Test one martingale residual per subject, summing to zero."""
        fit = fit_cox(two_covariates, ["x", "z"])
        residuals = martingale_residuals(fit)
        assert residuals.name == "martingale"
        assert len(residuals) == 8
        assert residuals.sum() == pytest.approx(0.0, abs=1e-8)
        assert np.all(residuals <= 1.0)


class TestHypothesisTests:
    """Test Wald, score, likelihood-ratio and proportional-hazards tests."""

    def test_against_null(self, three_subjects):
        """Test the likelihood-ratio statistic against the null model."""
        fit = fit_cox(three_subjects, ["x"])
        tests = model_tests(fit)
        assert tests.against == "null"
        statistic, df, p = tests.likelihood_ratio
        assert statistic == pytest.approx(2 * (fit.log_pl - fit.log_pl_null))
        assert df == 1
        assert 0.0 < p <= 1.0
        assert tests.wald.loc[0, "chisq"] == pytest.approx(fit.z[0] ** 2)
        assert tests.score[0] >= 0.0

    def test_nested(self, two_covariates):
        """Test the likelihood-ratio test between nested models."""
        full = fit_cox(two_covariates, ["x", "z"])
        reduced = fit_cox(two_covariates, ["x"])
        tests = model_tests(full, nested=reduced)
        assert tests.against == "nested"
        assert tests.likelihood_ratio[1] == 1
        assert tests.likelihood_ratio[0] == pytest.approx(2 * (full.log_pl - reduced.log_pl))
        assert set(tests.to_dict()) >= {"wald", "likelihood_ratio", "score"}

    def test_not_nested(self, two_covariates, three_subjects):
        """Test models on different data are not comparable."""
        full = fit_cox(two_covariates, ["x", "z"])
        other = fit_cox(three_subjects, ["x"])
        with pytest.raises(ValidationError, match="not nested"):
            model_tests(full, nested=other)

    def test_ph_test_single_covariate(self, two_covariates):
        """Test the per-term and global statistics coincide with one covariate."""
        fit = fit_cox(two_covariates, ["x"])
        result = ph_test(fit, "identity")
        assert result.table["term"].tolist() == ["x", "GLOBAL"]
        assert result.table.loc[0, "chisq"] == pytest.approx(result.table.loc[1, "chisq"])
        assert 0.0 <= result.global_p <= 1.0

    @pytest.mark.parametrize("transform", ["identity", "rank", "km"])
    def test_ph_test_transforms(self, two_covariates, transform):
        """Test every time transform produces a valid table."""
        fit = fit_cox(two_covariates, ["x", "z"])
        result = ph_test(fit, transform)
        assert result.table["df"].tolist() == [1, 1, 2]
        assert np.all((result.table["p"] >= 0) & (result.table["p"] <= 1))
        assert result.to_dict()["transform"] == transform

    def test_ph_test_needs_three_events(self, three_subjects):
        """Test fewer than three events are refused."""
        fit = fit_cox(three_subjects, ["x"])
        with pytest.raises(ValidationError, match="at least 3 events"):
            ph_test(fit)

"""Shared fixtures for hazardkit tests."""

import numpy as np
import pytest

from hazardkit import CohortTable, Timeline
from hazardkit.simulate import BaselineHazard, CauseSpec, CensoringSpec, CovariateSpec, Scenario


@pytest.fixture
def three_subjects():
    """
    Three subjects with one covariate and no ties.

    At t=1 the risk set is {a (x=1), b (x=0), c (x=0)} and b fails; at t=2 it
    is {a, c} and a fails; c is censored at 3.
    """
    return CohortTable(
        subject_id=["a", "b", "c"],
        tstart=[0.0, 0.0, 0.0],
        tstop=[2.0, 1.0, 3.0],
        status=[1, 1, 0],
        covariates=[[1.0], [0.0], [0.0]],
        covariate_names=("x",),
    )


@pytest.fixture
def small_cohort():
    """Eight subjects, delayed entry for two of them, one tie at t=4."""
    return CohortTable(
        subject_id=["s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"],
        tstart=[0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0],
        tstop=[2.0, 4.0, 4.0, 5.0, 6.0, 7.0, 8.0, 3.0],
        status=[1, 1, 1, 0, 1, 0, 1, 0],
        covariates=[[1.0], [0.0], [1.0], [0.0], [1.0], [0.0], [0.0], [1.0]],
        covariate_names=("x",),
    )


@pytest.fixture
def two_cause_cohort():
    """Six subjects with two causes and censoring."""
    return CohortTable(
        subject_id=["p1", "p2", "p3", "p4", "p5", "p6"],
        tstart=[0.0] * 6,
        tstop=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        status=[1, 2, 0, 1, 2, 0],
        cause_labels={1: "relapse", 2: "death"},
    )


@pytest.fixture
def exposure_timeline():
    """Exposure switching on at t=3 for s1 and at t=1 for s2."""
    return Timeline(
        subject_id=["s1", "s2"],
        time=[3.0, 1.0],
        variable=["exposure", "exposure"],
        value=[1.0, 1.0],
    )


@pytest.fixture
def exposure_cohort():
    """Two subjects on (0, 5] and (0, 4] with an exposure column still at 0."""
    return CohortTable(
        subject_id=["s1", "s2"],
        tstart=[0.0, 0.0],
        tstop=[5.0, 4.0],
        status=[1, 0],
        covariates=[[0.0, 50.0], [0.0, 60.0]],
        covariate_names=("exposure", "age"),
    )


@pytest.fixture
def two_group_scenario():
    """Exponential hazard 0.1 with a binary covariate of log-HR ln 2."""
    return Scenario(
        n=400,
        seed=11,
        causes=[
            CauseSpec(
                code=1,
                baseline=BaselineHazard(shape="constant", rate=0.1),
                log_hr={"z": float(np.log(2.0))},
            )
        ],
        covariates=[CovariateSpec(name="z", distribution="bernoulli", p=0.5)],
        censoring=CensoringSpec(administrative=10.0),
    )


@pytest.fixture
def episodes_csv(tmp_path):
    """Write a small episode file and return its path."""

    def write(text: str, name: str = "episodes.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write

"""
Public example data: download, cache and cohort construction.

The NAFLD files (a population cohort of non-alcoholic fatty liver disease
cases and matched controls) are fetched over HTTP and cached locally.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import httpx
import numpy as np
import pandas as pd

from . import settings
from .cohort import CohortTable, Timeline, merge_timeline, switch_time_axis
from .exceptions import DatasetNotFoundError, DownloadError, ValidationError
from .retry import RetryConfig, with_retry

logger = logging.getLogger(__name__)

DATASETS: Dict[str, str] = {
    "nafld1": "nafld1.csv",
    "nafld3": "nafld3.csv",
}

DAYS_PER_YEAR = 365.25
NAFLD_CONDITIONS = ("nafld", "diabetes", "htn", "dyslipidemia")


class DatasetClient:
    """
    Downloads dataset files into a local cache.

    Args:
        base_url: Where the files live (default: HAZARDKIT_DATA_URL)
        cache_dir: Local cache (default: HAZARDKIT_DATA_DIR)
        timeout: Request timeout in seconds
        retry_config: Retry policy for transient failures

    Example:
        >>> with DatasetClient() as client:
        ...     path = client.fetch("nafld1")
    """

    def __init__(
        self,
        base_url: Optional[str] = None,
        cache_dir: Optional[Union[str, Path]] = None,
        timeout: float = 60.0,
        retry_config: Optional[RetryConfig] = None,
    ):
        self.base_url = (base_url or settings.DATA_URL).rstrip("/")
        self.cache_dir = Path(cache_dir or settings.DATA_DIR).expanduser()
        self.retry_config = retry_config or RetryConfig()
        self._client = httpx.Client(timeout=timeout, follow_redirects=True)

    def __enter__(self) -> "DatasetClient":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self) -> None:
        self._client.close()

    def _download(self, url: str) -> bytes:
        @with_retry(self.retry_config)
        def get() -> bytes:
            response = self._client.get(url)
            if response.status_code == 404:
                raise DatasetNotFoundError(f"dataset not found at {url}")
            response.raise_for_status()
            return response.content

        return get()

    def fetch(self, name: str, *, refresh: bool = False) -> Path:
        """
        Return the cached path of a dataset, downloading it when needed.

        Raises:
            DatasetNotFoundError: For an unknown name or a missing remote file
            DownloadError: When the download fails after retries
        """
        if name not in DATASETS:
            raise DatasetNotFoundError(
                f"unknown dataset '{name}' (available: {', '.join(sorted(DATASETS))})"
            )
        path = self.cache_dir / DATASETS[name]
        if path.exists() and not refresh:
            logger.debug("using cached %s", path)
            return path

        url = f"{self.base_url}/{DATASETS[name]}"
        logger.info("downloading %s", url)
        try:
            content = self._download(url)
        except DatasetNotFoundError:
            raise
        except httpx.HTTPStatusError as e:
            raise DownloadError(
                f"download of {url} failed with status {e.response.status_code}"
            ) from e
        except httpx.RequestError as e:
            raise DownloadError(f"download of {url} failed: {e}") from e

        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content)
        return path


def fetch_dataset(
    name: str,
    *,
    client: Optional[DatasetClient] = None,
    refresh: bool = False,
) -> Path:
    """Download (or reuse) a dataset file and return its path."""
    if client is not None:
        return client.fetch(name, refresh=refresh)
    with DatasetClient() as own:
        return own.fetch(name, refresh=refresh)


def load_dataset(name: str, *, client: Optional[DatasetClient] = None) -> pd.DataFrame:
    frame = pd.read_csv(fetch_dataset(name, client=client))
    return frame.drop(columns=[c for c in ("rownames", "Unnamed: 0") if c in frame.columns])


def nafld_from_frames(
    subjects: pd.DataFrame, events: pd.DataFrame
) -> Tuple[CohortTable, Timeline]:
    """
    Build the NAFLD cohort on the age axis.

    ``subjects`` has one row per person (id, age, male, futime in days,
    status, case.id); ``events`` has comorbidity onsets (id, days, event).
    Follow-up runs from the index date to death or censoring. NAFLD,
    diabetes, hypertension and dyslipidemia are 0 -> 1 time-dependent
    covariates; cases (id equal to case.id) have NAFLD from entry. Sex is the
    stratum.

    Returns:
        The merged cohort and the timeline behind it (both on the age axis)
    """
    required = {"id", "age", "male", "futime", "status"}
    missing = required - set(subjects.columns)
    if missing:
        raise ValidationError(f"subject table is missing column(s): {', '.join(sorted(missing))}")
    frame = subjects.dropna(subset=sorted(required)).copy()
    short = frame["futime"] <= 0
    if short.any():
        logger.warning("dropping %d subject(s) without follow-up", int(short.sum()))
        frame = frame.loc[~short]

    frame["id"] = frame["id"].astype(int).astype(str)
    male = frame["male"].to_numpy(dtype=float)
    age = frame["age"].to_numpy(dtype=float)
    cohort = CohortTable(
        subject_id=frame["id"].to_numpy(),
        tstart=np.zeros(len(frame)),
        tstop=frame["futime"].to_numpy(dtype=float) / DAYS_PER_YEAR,
        status=(frame["status"].to_numpy(dtype=float) > 0).astype(int),
        covariates=np.column_stack([age, male]),
        covariate_names=("age_at_entry", "male"),
        stratum=np.where(male > 0, "male", "female"),
        cause_labels={1: "death"},
    )
    cohort = switch_time_axis(cohort, "age_at_entry", axis="age")

    entry_age = dict(zip(frame["id"], age))
    records = events.dropna(subset=["id", "days", "event"]).copy()
    records["id"] = records["id"].astype(int).astype(str)
    records = records.loc[records["id"].isin(entry_age) & records["event"].isin(NAFLD_CONDITIONS)]
    times = records["id"].map(entry_age).to_numpy() + records["days"].to_numpy() / DAYS_PER_YEAR
    ids = records["id"].to_numpy()
    variables = records["event"].astype(str).to_numpy()

    if "case.id" in frame.columns:
        cases = frame.loc[frame["id"] == frame["case.id"].astype("Int64").astype(str)]
        ids = np.concatenate([ids, cases["id"].to_numpy()])
        times = np.concatenate([times, cases["age"].to_numpy(dtype=float)])
        variables = np.concatenate([variables, np.full(len(cases), "nafld")])

    exit_age = dict(zip(cohort.subjects.tolist(), cohort.tstop[cohort.last_rows].tolist()))
    within = times <= np.array([exit_age[s] for s in ids])
    timeline = Timeline(
        subject_id=ids[within],
        time=times[within],
        variable=variables[within],
        value=np.ones(int(within.sum())),
    )
    merged = merge_timeline(cohort, timeline, baseline={v: 0.0 for v in NAFLD_CONDITIONS})
    logger.info(
        "NAFLD cohort: %d subjects, %d episodes, %d deaths",
        merged.n_subjects,
        merged.n_episodes,
        merged.n_events(),
    )
    return merged, timeline


def nafld_cohort(*, client: Optional[DatasetClient] = None) -> Tuple[CohortTable, Timeline]:
    """Download the NAFLD files and build the age-axis cohort."""
    return nafld_from_frames(
        load_dataset("nafld1", client=client), load_dataset("nafld3", client=client)
    )

"""Tests for the download retry policy."""

import random
from unittest.mock import Mock

import httpx
import pytest

from hazardkit.exceptions import DatasetNotFoundError
from hazardkit.retry import RetryConfig, is_transient, retry_after, with_retry

pytestmark = pytest.mark.unit


def status_error(code: int, headers=None) -> httpx.HTTPStatusError:
    request = httpx.Request("GET", "https://example.org/nafld1.csv")
    response = httpx.Response(code, request=request, headers=headers)
    return httpx.HTTPStatusError(f"status {code}", request=request, response=response)


class TestRetryConfig:
    """Test the policy itself."""

    def test_defaults(self):
        """Test the default schedule doubles from one second."""
        config = RetryConfig(jitter=False)

        assert list(config.waits()) == [1.0, 2.0, 4.0]
        assert 408 in config.retry_statuses
        assert 404 not in config.retry_statuses

    def test_cap(self):
        """Test waits never exceed max_backoff."""
        config = RetryConfig(max_retries=8, multiplier=3.0, max_backoff=10.0, jitter=False)

        assert list(config.waits())[:4] == [1.0, 3.0, 9.0, 10.0]
        assert max(config.waits()) == 10.0

    def test_jitter_range(self):
        """Test jitter keeps each wait within half to one and a half times the base."""
        config = RetryConfig(max_retries=3, first_wait=2.0, multiplier=1.0)
        waits = list(config.waits(random.Random(0)))

        assert len(waits) == 3
        assert all(1.0 <= w < 3.0 for w in waits)

    def test_no_retries(self):
        """Test max_retries=0 yields no waits."""
        assert list(RetryConfig(max_retries=0).waits()) == []

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"max_retries": -1}, "max_retries must be >= 0"),
            ({"first_wait": -0.5}, "first_wait must be >= 0"),
            ({"multiplier": 0.5}, "multiplier must be >= 1"),
            ({"max_backoff": -10}, "max_backoff must be >= 0"),
        ],
    )
    def test_validation(self, kwargs, message):
        """Test invalid settings are rejected."""
        with pytest.raises(ValueError, match=message):
            RetryConfig(**kwargs)

    def test_validation_lists_every_problem(self):
        """Test several invalid settings are reported together."""
        with pytest.raises(ValueError, match="max_retries.*; multiplier"):
            RetryConfig(max_retries=-1, multiplier=0.0)


class TestTransient:
    """Test which failures are worth retrying."""

    def test_network_failures(self):
        """Test timeouts and dropped connections are transient."""
        config = RetryConfig()

        assert is_transient(httpx.ConnectTimeout("slow"), config)
        assert is_transient(httpx.ConnectError("down"), config)

    def test_status_codes(self):
        """Test only the configured status codes are transient."""
        config = RetryConfig()

        assert is_transient(status_error(503), config)
        assert is_transient(status_error(408), config)
        assert not is_transient(status_error(403), config)
        assert not is_transient(status_error(503), RetryConfig(retry_statuses=(429,)))

    def test_missing_dataset(self):
        """Test a missing dataset is never retried."""
        assert not is_transient(DatasetNotFoundError("gone"), RetryConfig())

    def test_retry_after_header(self):
        """Test Retry-After seconds are read and junk is ignored."""
        assert retry_after(status_error(429, {"Retry-After": "7"})) == 7.0
        assert retry_after(status_error(429, {"Retry-After": "soon"})) is None
        assert retry_after(status_error(503)) is None
        assert retry_after(httpx.ConnectError("down")) is None


class TestWithRetry:
    """Test the decorator."""

    def test_eventually_succeeds(self):
        """Test a download failing twice then succeeding follows the schedule."""
        sleep = Mock()
        func = Mock(side_effect=[httpx.ConnectError("down"), status_error(502), b"ok"])
        wrapped = with_retry(RetryConfig(jitter=False), sleep=sleep)(func)

        assert wrapped() == b"ok"
        assert func.call_count == 3
        assert [c.args[0] for c in sleep.call_args_list] == [1.0, 2.0]

    def test_honours_retry_after(self):
        """Test the server's Retry-After replaces the wait, capped at max_backoff."""
        sleep = Mock()
        func = Mock(
            side_effect=[
                status_error(429, {"Retry-After": "5"}),
                status_error(503, {"Retry-After": "120"}),
                b"ok",
            ]
        )
        wrapped = with_retry(RetryConfig(jitter=False, max_backoff=30), sleep=sleep)(func)

        assert wrapped() == b"ok"
        assert [c.args[0] for c in sleep.call_args_list] == [5.0, 30.0]

    def test_gives_up(self):
        """Test the last error is raised after max_retries."""
        sleep = Mock()
        func = Mock(side_effect=httpx.ConnectError("down"))
        wrapped = with_retry(RetryConfig(max_retries=2, jitter=False), sleep=sleep)(func)

        with pytest.raises(httpx.ConnectError):
            wrapped()
        assert func.call_count == 3
        assert sleep.call_count == 2

    def test_permanent_error_raises_immediately(self):
        """Test a non-retryable error is raised on the first attempt."""
        sleep = Mock()
        func = Mock(side_effect=status_error(404))
        wrapped = with_retry(RetryConfig(), sleep=sleep)(func)

        with pytest.raises(httpx.HTTPStatusError):
            wrapped()
        assert func.call_count == 1
        sleep.assert_not_called()

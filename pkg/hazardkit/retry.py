"""Retry policy for dataset downloads."""

import logging
import random
import time
from dataclasses import dataclass
from functools import wraps
from typing import Callable, Iterator, Optional, Tuple, TypeVar

import httpx

from .exceptions import DatasetNotFoundError

logger = logging.getLogger(__name__)

T = TypeVar("T")

TRANSIENT_STATUSES = (408, 429, 500, 502, 503, 504)


@dataclass(frozen=True)
class RetryConfig:
    """
    How often and how patiently a download is retried.

    Attributes:
        max_retries: Retries after the first attempt (default: 3)
        first_wait: Seconds before the first retry (default: 1)
        multiplier: Growth of the wait per retry (default: 2)
        max_backoff: Cap on a single wait in seconds, Retry-After included (default: 30)
        retry_statuses: HTTP status codes worth retrying
        jitter: Scale waits by a random factor in [0.5, 1.5)
    """

    max_retries: int = 3
    first_wait: float = 1.0
    multiplier: float = 2.0
    max_backoff: float = 30.0
    retry_statuses: Tuple[int, ...] = TRANSIENT_STATUSES
    jitter: bool = True

    def __post_init__(self):
        problems = [
            f"{name} must be {rule}"
            for name, ok, rule in (
                ("max_retries", self.max_retries >= 0, ">= 0"),
                ("first_wait", self.first_wait >= 0, ">= 0"),
                ("multiplier", self.multiplier >= 1, ">= 1"),
                ("max_backoff", self.max_backoff >= 0, ">= 0"),
            )
            if not ok
        ]
        if problems:
            raise ValueError("; ".join(problems))

    def waits(self, rng: Optional[random.Random] = None) -> Iterator[float]:
        """The successive waits, one per allowed retry."""
        draw = (rng or random).random
        for attempt in range(self.max_retries):
            wait = min(self.first_wait * self.multiplier**attempt, self.max_backoff)
            yield wait * (0.5 + draw()) if self.jitter else wait


def retry_after(exception: Exception) -> Optional[float]:
    """Seconds asked for by a ``Retry-After`` header, if the server sent one."""
    if not isinstance(exception, httpx.HTTPStatusError):
        return None
    value = exception.response.headers.get("retry-after", "")
    try:
        return max(float(value), 0.0)
    except ValueError:
        return None


def is_transient(exception: Exception, config: RetryConfig) -> bool:
    """True for timeouts, dropped connections and retryable status codes."""
    if isinstance(exception, DatasetNotFoundError):
        return False
    if isinstance(exception, (httpx.TimeoutException, httpx.NetworkError)):
        return True
    if isinstance(exception, httpx.HTTPStatusError):
        return exception.response.status_code in config.retry_statuses
    return False


def with_retry(
    config: Optional[RetryConfig] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Callable[[Callable[..., T]], Callable[..., T]]:
    """
    Decorator retrying a download under ``config``.

    A server's Retry-After replaces the scheduled wait, still capped at
    ``max_backoff``. The last error is re-raised once the retries run out.

    Example:
        >>> @with_retry(RetryConfig(max_retries=5))
        ... def get():
        ...     response = client.get(url)
        ...     response.raise_for_status()
        ...     return response.content
    """
    policy = config or RetryConfig()

    def decorator(func: Callable[..., T]) -> Callable[..., T]:
        @wraps(func)
        def wrapper(*args, **kwargs) -> T:
            waits = policy.waits()
            attempt = 1
            while True:
                try:
                    return func(*args, **kwargs)
                except Exception as e:
                    wait = next(waits, None) if is_transient(e, policy) else None
                    if wait is None:
                        raise
                    asked = retry_after(e)
                    if asked is not None:
                        wait = min(asked, policy.max_backoff)
                    logger.info("attempt %d failed (%s); retrying in %.1fs", attempt, e, wait)
                    sleep(wait)
                    attempt += 1

        return wrapper

    return decorator

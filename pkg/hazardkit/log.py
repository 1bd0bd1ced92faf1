"""Logging setup for the command line."""

import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

from . import settings

LOGGER_NAME = "hazardkit"


def configure_logging(verbosity: int = 0, console: Optional[Console] = None) -> logging.Logger:
    """
    Attach a rich handler to the package logger.

    Args:
        verbosity: 0 keeps HAZARDKIT_LOG_LEVEL, 1 is INFO, 2 or more is DEBUG
        console: Console to write to (stderr if None)

    Returns:
        The configured ``hazardkit`` logger
    """
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = logging.getLevelName(settings.LOG_LEVEL.upper())
        if not isinstance(level, int):
            level = logging.WARNING

    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)

    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger

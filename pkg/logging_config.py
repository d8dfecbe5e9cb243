"""Logging setup for the RNA design pipeline.

Every CLI invocation configures the package loggers once: records go to stderr
through rich, and optionally to a session log under logs/sessions/. Library
modules only ever call logging.getLogger(__name__).
"""

import importlib.metadata
import logging
import platform
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

LOG_DIR = Path("logs")
SESSION_LOGS = LOG_DIR / "sessions"

FILE_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
PIPELINE_PACKAGES = ("core", "structures", "runner", "analysis", "validation", "orchestrator")
REPORTED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "typer", "rich", "tqdm")


def setup_logging(
    name: str,
    level: int = logging.INFO,
    log_file: Optional[Path] = None,
    console: bool = True,
) -> logging.Logger:
    """Attach fresh handlers to one named logger.

    Args:
        name: Logger name (a pipeline package)
        level: Threshold for the logger and its handlers
        log_file: Plain-text session log; parent directories are created
        console: Mirror records to stderr

    Returns:
        The configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers = []
    logger.propagate = False

    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(level)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        logger.addHandler(file_handler)

    if console:
        stream_handler = RichHandler(console=Console(stderr=True), show_path=False, markup=False)
        stream_handler.setLevel(level)
        logger.addHandler(stream_handler)

    return logger


def setup_pipeline_logging(
    level: int = logging.INFO,
    log_file: Optional[Path] = None,
    console: bool = True,
) -> logging.Logger:
    """Configure the top-level logger of every pipeline package.

    Returns:
        The orchestrator logger
    """
    for name in PIPELINE_PACKAGES:
        setup_logging(name, level=level, log_file=log_file, console=console)
    return logging.getLogger("orchestrator")


def get_session_log_path(command: str) -> Path:
    """logs/sessions/{command}_{YYYYmmdd_HHMMSS}.log"""
    return SESSION_LOGS / f"{command}_{datetime.now():%Y%m%d_%H%M%S}.log"


def log_environment_info(logger: logging.Logger) -> None:
    """Record interpreter, platform and numeric stack versions at the start of a run."""
    logger.info(f"Python {sys.version.split()[0]} ({platform.python_implementation()}) on {platform.platform()}")
    for package in REPORTED_PACKAGES:
        try:
            logger.info(f"  {package} {importlib.metadata.version(package)}")
        except importlib.metadata.PackageNotFoundError:
            logger.warning(f"  {package} not installed")

"""Logging configuration for n2rec"""

import logging
import sys
from pathlib import Path
from typing import Optional


def setup_logging(debug: bool = False, log_dir: Optional[Path] = None) -> logging.Logger:
    """
    Setup application logging

    Args:
        debug: Enable debug level logging
        log_dir: Directory for app.log, or None for ~/.n2rec/logs

    Returns:
        Logger instance
    """
    level = logging.DEBUG if debug else logging.INFO

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    logger = logging.getLogger('n2rec')
    logger.setLevel(level)
    logger.propagate = False

    # Re-running setup (tests, repeated CLI calls) replaces handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # Console handler on stderr; stdout carries command results
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_dir is None:
        log_dir = Path.home() / ".n2rec" / "logs"
    log_file = log_dir / "app.log"

    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except OSError as e:
        logger.warning(f"File logging disabled ({log_file}): {e}")
        log_file = None

    logger.debug("=" * 60)
    logger.debug("n2rec - Logging initialized")
    logger.debug(f"Log file: {log_file}")
    logger.debug("=" * 60)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get logger for module

    Args:
        name: Module name

    Returns:
        Logger instance
    """
    return logging.getLogger(f'n2rec.{name}')

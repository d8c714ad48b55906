"""Package logger for evstereo: one stream handler on the ``evstereo`` logger."""

import logging

from ..config import settings
from ..errors import ConfigError

PACKAGE_LOGGER = "evstereo"
LOG_FORMAT = "%(asctime)s %(levelname)-7s [%(name)s] %(message)s"


def _resolve(level_name: str) -> int:
    level = logging.getLevelName(level_name.upper())
    if not isinstance(level, int):
        raise ConfigError(f"Unknown log level '{level_name}'")
    return level


def _package_logger() -> logging.Logger:
    root = logging.getLogger(PACKAGE_LOGGER)
    if not any(getattr(h, "_evstereo", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._evstereo = True
        root.addHandler(handler)
        root.propagate = False
        try:
            root.setLevel(_resolve(settings.LOG_LEVEL))
        except ConfigError:
            root.setLevel(logging.INFO)
    return root


def get_logger(name: str) -> logging.Logger:
    """
    Logger for a module, attached under the ``evstereo`` package logger.

    Args:
        name: Usually ``__name__``; names outside the package are nested under it.
    """
    _package_logger()
    if name == PACKAGE_LOGGER or name.startswith(PACKAGE_LOGGER + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{PACKAGE_LOGGER}.{name}")


def set_level(level_name: str) -> None:
    """Apply a level name (e.g. ``log_level`` from the pipeline config) to every evstereo logger."""
    _package_logger().setLevel(_resolve(level_name))

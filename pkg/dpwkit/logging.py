# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Logger creation for dpwkit.

The package logger ``dpwkit`` is created once with :func:`basic_logger`; submodules use
``logging.getLogger(__name__)`` and inherit its handler and level.
"""

import logging
import os

__all__ = ["basic_logger", "get_log_level", "LOG_ENV_VAR"]

# Environment variable that sets the default verbosity of the package logger.
LOG_ENV_VAR = "DPWKIT_LOG"


def get_log_level(default="WARNING"):
    """Get the package log level from the ``DPWKIT_LOG`` environment variable.

    The value may be a level name (case insensitive) or an integer. An unrecognized
    value falls back to ``default``.

    :param default: str
        Level used when ``DPWKIT_LOG`` is not set or not understood.
    :returns: str or int
        Level suitable for ``Logger.setLevel``.
    """
    value = os.environ.get(LOG_ENV_VAR)
    if value is None:
        return default
    value = value.strip()
    if value.isdigit():
        return int(value)
    name = value.upper()
    if isinstance(logging.getLevelName(name), int):
        return name
    return default


def basic_logger(
    name, format="%(asctime)s %(funcName)s: %(message)s", propagate=False, **kwargs
):
    """Create logger ``name`` using logging.basicConfig.

    This is a thin wrapper around ``logging.basicConfig`` that configures the ``name``
    logger instead of the root logger. By default the logger does not propagate to
    parent loggers, so a root logger configured by another package does not duplicate
    dpwkit output.

    Nothing is done if the logger already has handlers or a level, unless ``force=True``
    is given. All keyword arguments of ``logging.basicConfig`` are accepted
    (``level``, ``stream``, ``filename``, ``handlers``, ``force``, ...). If ``level`` is
    not given the level comes from :func:`get_log_level`.

    Example::

      from dpwkit.logging import basic_logger
      logger = basic_logger("dpwkit", level="INFO")

    :param name: str
        Logger name
    :param format: str
        Format string for the handler. Use ``None`` for the ``basicConfig`` default.
    :param propagate: bool
        Propagate to parent loggers (default=False)
    :returns: logging.Logger
    """
    if format is not None:
        kwargs["format"] = format
    kwargs.setdefault("level", get_log_level())
    logger = logging.getLogger(name)

    if not kwargs.get("force", False) and (
        logger.handlers or logger.level != logging.NOTSET
    ):
        return logger

    # Point logging.root at our logger while basicConfig runs
    root = logging.root
    try:
        logging.root = logger
        logging.basicConfig(**kwargs)
    finally:
        logging.root = root

    logger.propagate = propagate

    return logger

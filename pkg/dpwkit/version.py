# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Package version of dpwkit.

The version is taken from the installed distribution metadata when available and from the
git repository with `setuptools_scm <https://github.com/pypa/setuptools_scm/>`_ otherwise
(source checkout).
"""

import importlib.util
import io
import logging
import os
import re
import warnings
from importlib import metadata, resources
from pathlib import Path

from dpwkit.logging import basic_logger

__all__ = ["get_version", "parse_version"]

VERSION_DEBUG_ENV_VAR = "DPWKIT_VERSION_DEBUG"


def get_version_logger(level_stdout, level_string):
    logger_string = io.StringIO()
    hdlr_stdout = logging.StreamHandler()
    hdlr_stdout.setLevel(level_stdout)
    hdlr_string = logging.StreamHandler(logger_string)
    hdlr_string.setLevel(level_string)

    logger = basic_logger(
        __name__,
        level="DEBUG",
        format="%(message)s",
        handlers=[hdlr_stdout, hdlr_string],
        force=True,
    )
    return logger, logger_string


def get_version(package, distribution=None):
    """Get version string for ``package`` with optional ``distribution`` name.

    If the package is not from an installed distribution the version comes from git
    using setuptools_scm. This never raises: on failure it warns and returns "0.0.0".

    Parameters
    ----------
    package : str
        Package name, typically ``__package__``.
    distribution : str, optional
        Name of the distribution if different from ``package``.

    Returns
    -------
    str
        Version string
    """
    level_stdout = "DEBUG" if VERSION_DEBUG_ENV_VAR in os.environ else "INFO"
    logger, logger_string = get_version_logger(level_stdout, "DEBUG")
    log = logger.debug

    log(f"Getting version for package={package} distribution={distribution}")
    module_file = importlib.util.find_spec(package).origin
    log(f"  {module_file=}")

    try:
        try:
            version = metadata.version(distribution or package)
            location = resources.files(distribution or package)
            log(f"  distribution {version=} at {location}")

            # An installed distribution that points into a git checkout was built by an
            # earlier "pip install -e" and its version is stale.
            git_dir = location.parent / ".git"
            stale = git_dir.exists() and git_dir.is_dir()
            if stale:
                log("  distribution location is a git repo, using setuptools_scm")
            assert not stale

        except (metadata.PackageNotFoundError, AssertionError):
            from setuptools_scm import get_version as scm_version

            roots = [".."] * len(package.split("."))
            if os.path.basename(module_file) != "__init__.py":
                roots = roots[:-1]
            log(f"  setuptools_scm root={Path(*roots)} relative_to={module_file}")
            version = scm_version(root=Path(*roots), relative_to=module_file)

    except Exception:
        import traceback

        version = "0.0.0"
        log(f"WARNING: got {version=}")
        if "TESTR_FILE" not in os.environ:
            warnings.warn(traceback.format_exc() + "\n\n")
            warnings.warn("Failed to find a package version, setting to 0.0.0")
            warnings.warn(logger_string.getvalue())
    else:
        log(f"SUCCESS: got {version=}")

    return version


def parse_version(version):
    """Parse a version string of the default setuptools_scm scheme.

    Parameters
    ----------
    version : str

    Returns
    -------
    dict
        ``major``, ``minor``, ``patch``, ``distance`` (ints or None), ``letter``,
        ``hash`` and ``date``.
    """
    fmt = (
        r"(?P<major>[0-9]+)(.(?P<minor>[0-9]+))?(.(?P<patch>[0-9]+))?"
        r"(.dev(?P<distance>[0-9]+))?"
        r"(\+(?P<letter>\S)g?(?P<hash>\S+)\.(d(?P<date>[0-9]+))?)?"
    )
    m = re.match(fmt, version)
    if not m:
        raise RuntimeError(f"version {version} could not be parsed")
    result = m.groupdict()
    for k in ["major", "minor", "patch", "distance"]:
        result[k] = None if result[k] is None else int(result[k])
    return result

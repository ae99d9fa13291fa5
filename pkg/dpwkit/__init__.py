# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
dpwkit: numerical loop group tools for harmonic maps into symmetric spaces.

Normalized potentials and extended frames are related by Birkhoff and Iwasawa
factorizations of truncated twisted matrix loops; base points are moved by conjugation
or by dressing.
"""

from .logging import basic_logger
from .version import get_version

__version__ = get_version(__package__)

logger = basic_logger(__name__)


def test(*args, **kwargs):
    """
    Run py.test unit tests.
    """
    import testr

    return testr.test(*args, **kwargs)

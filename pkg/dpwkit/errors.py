# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Exceptions raised by dpwkit.

Every domain failure carries a machine-readable ``kind`` along with an optional
``location`` (grid index or point in the plane) and ``residual`` so that the command line
front end can report it as JSON without inspecting the message text.
"""

__all__ = [
    "DpwError",
    "DimensionMismatch",
    "LoopNotInvertible",
    "OutsideBigCell",
    "OutsideIwasawaCell",
    "DegenerateGauge",
    "PoleOnPath",
    "IntegrationError",
    "NotLieAlgebraValued",
    "GridTooCoarse",
    "MoveInvalid",
    "SchemaError",
    "VerificationFailed",
]


def _jsonable_location(location):
    if location is None:
        return None
    if isinstance(location, complex):
        return [location.real, location.imag]
    if isinstance(location, tuple | list):
        return [_jsonable_location(val) for val in location]
    if hasattr(location, "item"):
        return _jsonable_location(location.item())
    return location


class DpwError(Exception):
    """
    Base class for dpwkit failures.

    Parameters
    ----------
    message : str
        Human readable description.
    location : optional
        Grid index ``(i, j)``, complex point, or None.
    residual : float, optional
        Residual or condition estimate that triggered the failure.
    """

    kind = "numerical"

    def __init__(self, message, *, location=None, residual=None):
        super().__init__(message)
        self.message = message
        self.location = location
        self.residual = residual

    def with_location(self, location):
        """Return a copy of this error tagged with ``location``."""
        return type(self)(self.message, location=location, residual=self.residual)

    def to_dict(self):
        residual = None if self.residual is None else float(self.residual)
        return {
            "kind": self.kind,
            "message": self.message,
            "location": _jsonable_location(self.location),
            "residual": residual,
        }


class DimensionMismatch(DpwError):
    kind = "dimension"


class LoopNotInvertible(DpwError):
    kind = "not_invertible"


class OutsideBigCell(DpwError):
    """Birkhoff factorization does not exist (or is numerically singular)."""

    kind = "outside_big_cell"


class OutsideIwasawaCell(DpwError):
    """Iwasawa factorization does not exist (or the spectral factorization broke down)."""

    kind = "outside_iwasawa_cell"


class DegenerateGauge(DpwError):
    kind = "degenerate_gauge"


class PoleOnPath(DpwError):
    kind = "pole_on_path"


class IntegrationError(DpwError):
    kind = "integration"


class NotLieAlgebraValued(DpwError):
    kind = "not_lie_algebra_valued"


class GridTooCoarse(DpwError):
    kind = "grid_too_coarse"


class MoveInvalid(DpwError):
    kind = "move_invalid"


class SchemaError(DpwError):
    kind = "schema"


class VerificationFailed(DpwError):
    kind = "verification"

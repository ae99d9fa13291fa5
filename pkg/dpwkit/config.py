# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Run configuration shared by the command line tools.

Example::

  >>> from dpwkit.config import RunConfig
  >>> cfg = RunConfig(truncation="12", grid_resolution=11)
  >>> cfg.truncation, cfg.grid.shape
  (12, (11, 11))
"""

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dpwkit.errors import SchemaError
from dpwkit.loopcore import GroupModel
from dpwkit.pipeline import Grid
from dpwkit.utils import TypedDescriptor, convert_to_int_float_str

__all__ = ["RunConfig", "DEFAULT_LAMBDAS", "parse_lambdas", "parse_grid", "parse_override"]

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (1 + 0j, 1j, -1 + 0j, complex(np.exp(1j * np.pi / 4)))


def _to_complex(value):
    if isinstance(value, list | tuple) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        value = convert_to_int_float_str(value)
    return complex(value)


def parse_lambdas(value):
    """Tuple of λ samples from a sequence or a comma separated string."""
    if isinstance(value, str):
        value = [item for item in value.split(",") if item.strip()]
    return tuple(_to_complex(item) for item in value)


def parse_grid(value):
    """``"x0,y0,x1,y1,n"`` into ``(lower, upper, resolution)``."""
    parts = [convert_to_int_float_str(item.strip()) for item in value.split(",")]
    if len(parts) != 5:
        raise ValueError(f"grid must be 'x0,y0,x1,y1,n', got {value!r}")
    x0, y0, x1, y1, n = parts
    return complex(x0, y0), complex(x1, y1), int(n)


def parse_override(text):
    """``"name=value"`` into ``(name, value)`` with the value type inferred."""
    name, sep, value = text.partition("=")
    if not sep:
        raise ValueError(f"override must be 'name=value', got {text!r}")
    return name.strip(), convert_to_int_float_str(value.strip())


class IntDescriptor(TypedDescriptor):
    cls = int


class FloatDescriptor(TypedDescriptor):
    cls = float


class ComplexDescriptor(TypedDescriptor):
    cls = staticmethod(_to_complex)


class StrDescriptor(TypedDescriptor):
    cls = str


@dataclass
class RunConfig:
    """
    Settings for a dpwkit run.

    Values assigned from JSON files or command line strings are coerced to the field type.

    Parameters
    ----------
    truncation : int
        Loop truncation N (modes -N..N).
    structural_tol, pipeline_tol : float
        Tolerances for structural identities and for pipeline audits.
    big_cell_rcond : float
        Reciprocal condition threshold for Birkhoff solves.
    grid_lower, grid_upper : complex
        Corners of the square grid.
    grid_resolution : int
        Points per axis.
    model : str
        "sphere" or "hyperbolic".
    lambda_samples : tuple of complex
        Spectral parameter values on the unit circle used by the associated family.
    out_dir : str
        Output directory.
    seed : int
        Seed for randomized property checks.
    pole_radius : float
        Radius of the detours taken around potential poles.
    newton_max_degree : int
        Largest truncation that uses the dense Iwasawa route.
    membership_samples : int
        Circle samples used for real form membership checks.
    """

    truncation: int = IntDescriptor(default=8)
    structural_tol: float = FloatDescriptor(default=1e-10)
    pipeline_tol: float = FloatDescriptor(default=1e-8)
    big_cell_rcond: float = FloatDescriptor(default=1e-12)
    grid_lower: complex = ComplexDescriptor(default=-0.5 - 0.5j)
    grid_upper: complex = ComplexDescriptor(default=0.5 + 0.5j)
    grid_resolution: int = IntDescriptor(default=21)
    model: str = StrDescriptor(default="sphere")
    lambda_samples: tuple = TypedDescriptor(default=DEFAULT_LAMBDAS, cls=parse_lambdas)
    out_dir: str = StrDescriptor(default=".")
    seed: int = IntDescriptor(default=0)
    pole_radius: float = FloatDescriptor(default=0.05)
    newton_max_degree: int = IntDescriptor(default=16)
    membership_samples: int = IntDescriptor(default=16)

    def __post_init__(self):
        if self.truncation < 1:
            raise SchemaError(f"truncation must be >= 1, got {self.truncation}")
        for name in ("structural_tol", "pipeline_tol", "big_cell_rcond", "pole_radius"):
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive, got {getattr(self, name)}")
        if self.grid_resolution < 3:
            raise SchemaError(f"grid_resolution must be >= 3, got {self.grid_resolution}")
        lower, upper = complex(self.grid_lower), complex(self.grid_upper)
        if not (lower.real < upper.real and lower.imag < upper.imag):
            raise SchemaError(f"grid corners are not ordered: {lower} and {upper}")
        if self.model not in ("sphere", "hyperbolic"):
            raise SchemaError(f"unknown model {self.model!r}")
        if self.membership_samples < 1:
            raise SchemaError("membership_samples must be >= 1")
        if not self.lambda_samples:
            raise SchemaError("lambda_samples must not be empty")
        off_circle = [lam for lam in self.lambda_samples if abs(abs(lam) - 1) > 1e-12]
        if off_circle:
            raise SchemaError(f"lambda_samples must lie on the unit circle: {off_circle}")

    @classmethod
    def field_names(cls):
        return [fld.name for fld in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise SchemaError("configuration must be a JSON object")
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise SchemaError(f"unknown configuration keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as err:
            raise SchemaError(f"invalid configuration: {err}") from None

    @classmethod
    def from_file(cls, path):
        """Read a JSON configuration file."""
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as err:
            raise SchemaError(f"cannot read configuration {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise SchemaError(f"malformed configuration {path}: {err}") from None
        logger.info(f"read configuration from {path}")
        return cls.from_dict(data)

    def replace(self, **overrides):
        """Copy with ``overrides`` applied; None values are ignored."""
        overrides = {key: val for key, val in overrides.items() if val is not None}
        return self.from_dict({**self.to_dict(raw=True), **overrides})

    def to_dict(self, raw=False):
        """Field values; complex values become ``[re, im]`` unless ``raw``."""
        out = {}
        for name in self.field_names():
            value = getattr(self, name)
            if not raw:
                if isinstance(value, complex):
                    value = [value.real, value.imag]
                elif name == "lambda_samples":
                    value = [[lam.real, lam.imag] for lam in value]
            out[name] = value
        return out

    @property
    def grid(self):
        return Grid.square(self.grid_lower, self.grid_upper, self.grid_resolution)

    @property
    def group_model(self):
        return GroupModel.by_name(self.model)

    @property
    def rng(self):
        return np.random.default_rng(self.seed)

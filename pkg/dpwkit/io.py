# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
File formats used by the dpwkit command line tools.

A frame dump is a pair of files ``<stem>.json`` (metadata) and ``<stem>.csv`` (one row per
grid point and mode: ``i, j, k`` followed by the real and imaginary parts of the
coefficient matrix in row-major order). Reports are JSON written with sorted keys so
identical runs produce identical bytes.
"""

import json
import logging
from pathlib import Path

import numpy as np

from dpwkit.basepoint import ConjugationMove, compute_ring_g, ring_g_move
from dpwkit.errors import DpwError, SchemaError
from dpwkit.loopcore import GroupModel, MatrixLoop
from dpwkit.pipeline import ExtendedFrameField, Grid
from dpwkit.potential import PotentialOneForm

__all__ = [
    "SCHEMA_VERSION",
    "write_json",
    "read_json",
    "write_frame_dump",
    "read_frame_dump",
    "write_field_csv",
    "write_family_csv",
    "load_potential",
    "load_move",
    "matrix_to_json",
    "matrix_from_json",
    "error_record",
]

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(key): _jsonable(val) for key, val in obj.items()}
    if isinstance(obj, list | tuple):
        return [_jsonable(val) for val in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def write_json(path, data):
    """Write ``data`` as deterministic JSON (sorted keys, two space indent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")
    logger.info(f"wrote {path}")
    return path


def read_json(path, what="input"):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as err:
        raise SchemaError(f"cannot read {what} {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise SchemaError(f"malformed {what} {path}: {err}") from None


def matrix_to_json(mat):
    mat = np.asarray(mat, dtype=complex)
    return {"re": mat.real.tolist(), "im": mat.imag.tolist()}


def matrix_from_json(data, what="matrix"):
    """Complex matrix from ``{"re": ..., "im": ...}`` or a plain nested list."""
    try:
        if isinstance(data, dict):
            mat = np.array(data["re"], dtype=float) + 1j * np.array(
                data.get("im", np.zeros_like(data["re"])), dtype=float
            )
        else:
            mat = np.array(data, dtype=complex)
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"invalid {what}: {err}") from None
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise SchemaError(f"{what} must be a square matrix, got shape {mat.shape}")
    return mat


def _point(value, what):
    try:
        if isinstance(value, list | tuple):
            re, im = value
            return complex(float(re), float(im))
        return complex(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} must be [re, im], got {value!r}") from None


def _model_to_json(model):
    return {
        "name": model.name,
        "twist_matrix": matrix_to_json(model.twist_matrix),
        "realform_star": matrix_to_json(model.realform_star),
        "cartan_matrix": matrix_to_json(model.cartan_matrix),
    }


def _model_from_json(data):
    if isinstance(data, str):
        return GroupModel.by_name(data)
    return GroupModel(
        matrix_from_json(data["twist_matrix"], "twist_matrix"),
        matrix_from_json(data["realform_star"], "realform_star"),
        matrix_from_json(data["cartan_matrix"], "cartan_matrix"),
        name=data.get("name", "custom"),
    )


def _matrix_columns(size):
    return [f"{part}_{r}{c}" for part in ("re", "im") for r in range(size) for c in range(size)]


def write_field_csv(path, grid, coeffs):
    """Write a ``(nx, ny, K, n, n)`` complex array as ``i, j, k, re.., im..`` rows."""
    nx, ny, n_modes, size, _ = coeffs.shape
    degree = (n_modes - 1) // 2
    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(-degree, degree + 1), indexing="ij"
    )
    flat = coeffs.reshape(nx * ny * n_modes, size * size)
    table = np.column_stack(
        [ii.ravel(), jj.ravel(), kk.ravel(), flat.real, flat.imag]
    )
    names = _matrix_columns(size)
    header = ",".join(["i", "j", "k"] + names)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
    logger.info(f"wrote {path}")
    return path


def write_family_csv(path, family):
    """Write associated family samples as ``l, i, j, re.., im..`` rows.

    ``l`` indexes ``family.lambdas``; rows of flagged grid points are omitted.
    """
    n_lam, nx, ny, size, _ = family.values.shape
    ll, ii, jj = np.meshgrid(np.arange(n_lam), np.arange(nx), np.arange(ny), indexing="ij")
    keep = np.broadcast_to(family.valid, (n_lam, nx, ny)).ravel()
    flat = family.values.reshape(n_lam * nx * ny, size * size)[keep]
    table = np.column_stack(
        [ll.ravel()[keep], ii.ravel()[keep], jj.ravel()[keep], flat.real, flat.imag]
    )
    names = _matrix_columns(size)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join(["l", "i", "j"] + names)
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
    logger.info(f"wrote {path}")
    return path


def write_frame_dump(field_, out_dir, stem="frames", extra=None):
    """Write ``<stem>.json`` and ``<stem>.csv`` for an ExtendedFrameField.

    :returns: Path of the metadata file.
    """
    out_dir = Path(out_dir)
    csv_path = write_field_csv(out_dir / f"{stem}.csv", field_.grid, field_.coefficients)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": field_.kind,
        "data": csv_path.name,
        "grid": field_.grid.to_dict(),
        "model": _model_to_json(field_.model),
        "form": field_.form,
        "basepoint": [field_.basepoint.real, field_.basepoint.imag],
        "N": field_.degree,
        "n": field_.matrix_size,
        "tail_mass": field_.tail_mass,
        "flagged": field_.flagged_records(),
    }
    if extra:
        meta.update(extra)
    return write_json(out_dir / f"{stem}.json", meta)


def read_frame_dump(path):
    """Read a frame dump from its ``.json`` metadata file (or the ``.csv`` beside it)."""
    path = Path(path)
    if path.suffix == ".csv":
        path = path.with_suffix(".json")
    meta = read_json(path, "frame dump")
    try:
        version = meta["schema_version"]
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported frame dump schema_version {version}")
        grid = Grid.from_dict(meta["grid"])
        model = _model_from_json(meta["model"])
        degree = int(meta["N"])
        size = int(meta["n"])
        basepoint = _point(meta["basepoint"], "basepoint")
        csv_path = path.parent / meta.get("data", path.with_suffix(".csv").name)
        flagged_list = meta.get("flagged", [])
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaError(f"invalid frame dump metadata {path}: {err}") from None
    try:
        table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as err:
        raise SchemaError(f"cannot read frame data {csv_path}: {err}") from None

    n_modes = 2 * degree + 1
    expected = (grid.nx * grid.ny * n_modes, 3 + 2 * size * size)
    if table.shape != expected:
        raise SchemaError(f"frame data {csv_path} has shape {table.shape}, expected {expected}")
    order = np.lexsort((table[:, 2], table[:, 1], table[:, 0]))
    table = table[order]
    flat = table[:, 3 : 3 + size * size] + 1j * table[:, 3 + size * size :]
    coeffs = flat.reshape(grid.nx, grid.ny, n_modes, size, size)

    flagged = {}
    for record in flagged_list:
        i, j = record["location"]
        flagged[(int(i), int(j))] = record
    return ExtendedFrameField(
        grid,
        coeffs,
        model,
        basepoint,
        form=meta.get("form", model.default_form),
        kind=meta.get("kind", "extended"),
        flagged=flagged,
        tail_mass=float(meta.get("tail_mass", 0.0)),
    )


def load_potential(path):
    """PotentialOneForm from a JSON file."""
    data = read_json(path, "potential")
    potential = PotentialOneForm.from_dict(data)
    logger.info(f"loaded potential with {len(potential.terms)} terms from {path}")
    return potential


def load_move(path, frames, rcond_min=None):
    """ConjugationMove or DressingMove from a JSON move file.

    Conjugation moves give ``h`` as a matrix or ``"from_frame"`` (``h = F₀(z₁, 1)``).
    Dressing moves may give ``ring_g`` as a loop; otherwise ``g̊`` is computed from the
    frames at ``z_target``.
    """
    data = read_json(path, "move")
    if not isinstance(data, dict) or "type" not in data:
        raise SchemaError(f"move file {path} must be an object with a 'type'")
    kwargs = {} if rcond_min is None else {"rcond_min": rcond_min}
    try:
        z_target = _point(data["z_target"], "z_target")
        z_source = _point(data.get("z_source", frames.basepoint), "z_source")
    except KeyError as err:
        raise SchemaError(f"move file {path} lacks {err}") from None

    gauge = data.get("gauge")
    move_type = data["type"]
    if move_type == "conjugation":
        if gauge is None:
            gauge = "identity"
        elif not isinstance(gauge, str):
            gauge = matrix_from_json(gauge, "gauge")
        try:
            if data.get("h") == "from_frame":
                return ConjugationMove.from_frame(frames, z_target, gauge)
            return ConjugationMove(matrix_from_json(data["h"], "h"), z_source, z_target, gauge)
        except KeyError:
            raise SchemaError(f"conjugation move {path} lacks 'h'") from None
        except ValueError as err:
            raise SchemaError(str(err)) from None

    if move_type == "dressing":
        if gauge is not None:
            gauge = matrix_from_json(gauge, "gauge")
        if data.get("ring_g") is None:
            return compute_ring_g(frames, z_target, gauge, **kwargs)
        try:
            ring_g = MatrixLoop.from_dict(data["ring_g"], degree=frames.degree)
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"invalid ring_g in {path}: {err}") from None
        return ring_g_move(ring_g, frames.model, z_source, z_target, frames.form, **kwargs)

    raise SchemaError(f"unknown move type {move_type!r}")


def error_record(err):
    """``{"error": {...}}`` for a DpwError or a plain exception."""
    if isinstance(err, DpwError):
        return {"error": err.to_dict()}
    return {"error": {"kind": "schema", "message": str(err), "location": None, "residual": None}}

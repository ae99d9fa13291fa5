# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Command line front end ``dpwkit``.

Subcommands::

  dpwkit forward POTENTIAL         frames from a normalized potential
  dpwkit backward FRAMES           normalized potential from a frame dump
  dpwkit transport FRAMES MOVE     move the base point (conjugation or dressing)
  dpwkit dual FRAMES MOVE          compact dual frames of a dressing move
  dpwkit verify                    run the property suite

Exit codes are 0 (pass), 1 (verification failure), 2 (input error) and 3 (numerical
breakdown). Errors are printed to stdout as ``{"error": {...}}`` JSON.
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from dpwkit import __version__  # noqa
from dpwkit.basepoint import (
    ConjugationMove,
    DressingMove,
    audit_conjugation,
    audit_dressing,
    audit_dual,
    conjugate_transport,
    dressed_transport,
    dual_frame_transport,
)
from dpwkit.config import RunConfig, parse_grid, parse_lambdas, parse_override
from dpwkit.errors import (
    DimensionMismatch,
    DpwError,
    MoveInvalid,
    SchemaError,
    VerificationFailed,
)
from dpwkit.io import (
    SCHEMA_VERSION,
    _model_to_json,
    error_record,
    load_move,
    load_potential,
    read_frame_dump,
    write_family_csv,
    write_field_csv,
    write_frame_dump,
    write_json,
)
from dpwkit.pipeline import associated_family, backward_dpw, forward_dpw, frame_flatness
from dpwkit.run_info import log_run_info
from dpwkit.utils import set_log_level
from dpwkit.verify import format_table, run_suite

__all__ = [
    "main",
    "get_opt",
    "get_config",
    "exit_code",
    "cmd_forward",
    "cmd_backward",
    "cmd_transport",
    "cmd_dual",
    "cmd_verify",
]

logger = logging.getLogger("dpwkit")

EXIT_PASS = 0
EXIT_VERIFICATION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

INPUT_KINDS = ("schema", "move_invalid", "dimension")


def exit_code(err):
    """Exit code for a DpwError."""
    if err.kind in INPUT_KINDS:
        return EXIT_INPUT
    if err.kind == "verification":
        return EXIT_VERIFICATION
    return EXIT_NUMERICAL


def _common_parser():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--out", help="Output directory (default: config out_dir)")
    parser.add_argument("--seed", type=int, help="Seed for randomized checks")
    parser.add_argument(
        "--lambda-samples",
        help="Comma separated spectral parameter values on the unit circle, e.g. '1,1j,-1'",
    )
    parser.add_argument("--grid", help="Square grid 'x0,y0,x1,y1,n'")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="Override a configuration value (repeatable)",
    )
    parser.add_argument(
        "--log-level", help="Log level (default: DPWKIT_LOG environment variable or WARNING)"
    )
    return parser


def get_opt(argv=None):
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="dpwkit", description="Loop group tools for harmonic maps (DPW method)"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cmd = sub.add_parser("forward", parents=[common], help="Frames from a normalized potential")
    cmd.add_argument("potential", help="Potential JSON file")

    cmd = sub.add_parser("backward", parents=[common], help="Potential from a frame dump")
    cmd.add_argument("frames", help="Frame dump metadata (.json)")

    for name, text in (
        ("transport", "Move the base point of a frame dump"),
        ("dual", "Compact dual frames for a dressing move"),
    ):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("frames", help="Frame dump metadata (.json)")
        cmd.add_argument("move", help="Move JSON file")

    sub.add_parser("verify", parents=[common], help="Run the property suite")
    return parser.parse_args(argv)


def get_config(opt):
    """RunConfig from ``--config`` with the command line overrides applied."""
    config = RunConfig() if opt.config is None else RunConfig.from_file(opt.config)
    try:
        overrides = dict(parse_override(text) for text in opt.set)
        if opt.grid is not None:
            lower, upper, resolution = parse_grid(opt.grid)
            overrides.update(grid_lower=lower, grid_upper=upper, grid_resolution=resolution)
        if opt.lambda_samples is not None:
            overrides["lambda_samples"] = parse_lambdas(opt.lambda_samples)
    except ValueError as err:
        raise SchemaError(str(err)) from None
    overrides.update(seed=opt.seed, out_dir=opt.out)
    return config.replace(**overrides)


def _audit_report(kind, entries, **extra):
    n_failed = sum(not entry["passed"] for entry in entries)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "identities": entries,
        "n_failed": n_failed,
        "passed": n_failed == 0,
    }
    report.update(extra)
    return report


def _require_passed(report):
    """EXIT_PASS for a passing report.

    :raises VerificationFailed: if any recorded identity failed.
    """
    if report["passed"]:
        return EXIT_PASS
    n_total = len(report.get("identities", report.get("checks", [])))
    raise VerificationFailed(f"{report['n_failed']} of {n_total} checks failed")


def _log_failures(entries):
    for entry in entries:
        if not entry["passed"]:
            logger.warning(
                f"{entry['identity']}: residual {entry['residual']:.3e} "
                f"exceeds {entry['tolerance']:.1e}"
            )


def cmd_forward(config, potential_file):
    """Frames, normalized frames, associated family and flatness for a potential file.

    Writes ``frames.{json,csv}``, ``minus.{json,csv}``, ``family.csv`` and
    ``forward_report.json`` to the output directory.
    """
    eta = load_potential(potential_file)
    model = config.group_model
    if eta.matrix_size != model.matrix_size:
        raise DimensionMismatch(
            f"potential matrix size {eta.matrix_size} does not match model "
            f"{model.name} ({model.matrix_size})"
        )
    result = forward_dpw(
        eta,
        config.grid,
        model,
        degree=config.truncation,
        pole_radius=config.pole_radius,
        rcond_min=config.big_cell_rcond,
        newton_max_degree=config.newton_max_degree,
        membership_samples=config.membership_samples,
    )
    out = Path(config.out_dir)
    write_frame_dump(result.frames, out, "frames")
    write_frame_dump(result.minus, out, "minus")

    lambdas = config.lambda_samples
    family = associated_family(result.frames, lambdas)
    write_family_csv(out / "family.csv", family)
    flatness = [
        {"lambda": lam, "residual": frame_flatness(result.frames, lam)} for lam in lambdas
    ]
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": "forward",
        "config": config.to_dict(),
        "diagnostics": result.diagnostics,
        "associated_family": {
            "lambdas": list(lambdas),
            "involution_residual": family.involution_residual(),
            "spectrum_residual": family.spectrum_residual(),
            "basepoint_residual": family.basepoint_residual(),
        },
        "flatness": flatness,
    }
    write_json(out / "forward_report.json", report)
    return EXIT_PASS


def cmd_backward(config, frame_dump):
    """Normalized potential from a frame dump.

    Writes ``potential.{json,csv}`` (the sampled ``dz`` modes of the projected potential)
    and ``minus.{json,csv}``. Flagged points are listed in the metadata; the command
    fails with exit code 1 when the structure audit does not pass.
    """
    frames = read_frame_dump(frame_dump)
    result = backward_dpw(frames, rcond_min=config.big_cell_rcond, tol=config.pipeline_tol)
    out = Path(config.out_dir)
    csv_path = write_field_csv(out / "potential.csv", frames.grid, result.potential.dz)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "kind": "potential",
        "data": csv_path.name,
        "grid": frames.grid.to_dict(),
        "model": _model_to_json(frames.model),
        "basepoint": [frames.basepoint.real, frames.basepoint.imag],
        "N": result.potential.degree,
        "n": frames.matrix_size,
        "valid": result.potential.valid,
        "audit": result.audit,
    }
    write_json(out / "potential.json", meta)
    write_frame_dump(result.minus, out, "minus")
    if not result.audit["structure_ok"]:
        raise VerificationFailed("backward potential does not have the normalized structure")
    return EXIT_PASS


def cmd_transport(config, frame_dump, move_file):
    """Transport a frame dump to a new base point and audit every relation.

    Writes ``transported.{json,csv}`` (plus ``transported_minus`` for dressing) and
    ``transport_audit.json``.
    """
    frames = read_frame_dump(frame_dump)
    move = load_move(move_file, frames, rcond_min=config.big_cell_rcond)
    out = Path(config.out_dir)
    lambdas = config.lambda_samples
    if isinstance(move, ConjugationMove):
        result = conjugate_transport(frames, move)
        entries = audit_conjugation(
            frames,
            result,
            move,
            lambdas,
            tol=config.pipeline_tol,
            structural_tol=config.structural_tol,
            rcond_min=config.big_cell_rcond,
        )
        write_frame_dump(result.frames, out, "transported", extra={"move": move.to_dict()})
    else:
        result = dressed_transport(frames, move, config.big_cell_rcond)
        entries = audit_dressing(
            frames,
            result,
            lambdas,
            tol=config.pipeline_tol,
            n_samples=config.membership_samples,
            newton_max_degree=config.newton_max_degree,
        )
        write_frame_dump(result.frames, out, "transported", extra={"move": move.to_dict()})
        write_frame_dump(result.minus, out, "transported_minus")

    report = _audit_report(
        "transport",
        entries,
        move=move.to_dict(),
        n_flagged=int(np.sum(~result.frames.valid)),
    )
    write_json(out / "transport_audit.json", report)
    _log_failures(entries)
    return _require_passed(report)


def cmd_dual(config, frame_dump, move_file):
    """Compact dual frames before and after a dressing move, with the W₊ audit.

    Writes ``dual0``, ``dual2`` frame dumps, ``w_plus.csv`` and ``dual_audit.json``.
    """
    frames = read_frame_dump(frame_dump)
    move = load_move(move_file, frames, rcond_min=config.big_cell_rcond)
    if not isinstance(move, DressingMove):
        raise MoveInvalid("dual frames are defined for dressing moves only")
    transported = dressed_transport(frames, move, config.big_cell_rcond)
    result = dual_frame_transport(
        frames,
        transported.frames,
        move,
        newton_max_degree=config.newton_max_degree,
        membership_samples=config.membership_samples,
    )
    out = Path(config.out_dir)
    write_frame_dump(result.dual0, out, "dual0")
    write_frame_dump(result.dual2, out, "dual2")
    write_field_csv(out / "w_plus.csv", frames.grid, result.w_plus)
    entries = audit_dual(result, move, config.pipeline_tol, config.membership_samples)
    report = _audit_report("dual", entries, move=move.to_dict())
    write_json(out / "dual_audit.json", report)
    _log_failures(entries)
    return _require_passed(report)


def cmd_verify(config):
    """Run the property suite; writes ``verify_report.json`` and prints a table."""
    report = run_suite(config)
    write_json(Path(config.out_dir) / "verify_report.json", report)
    print(format_table(report))
    return _require_passed(report)


def _run(opt, config):
    if opt.command == "forward":
        return cmd_forward(config, opt.potential)
    if opt.command == "backward":
        return cmd_backward(config, opt.frames)
    if opt.command == "transport":
        return cmd_transport(config, opt.frames, opt.move)
    if opt.command == "dual":
        return cmd_dual(config, opt.frames, opt.move)
    return cmd_verify(config)


def main(argv=None):
    """Entry point of the ``dpwkit`` command; returns the exit code."""
    opt = get_opt(argv)
    with set_log_level(logger, opt.log_level):
        log_run_info(logger.info, opt)
        try:
            config = get_config(opt)
            return _run(opt, config)
        except DpwError as err:
            logger.error(f"{err.kind}: {err.message}")
            print(json.dumps(error_record(err), sort_keys=True))
            return exit_code(err)


if __name__ == "__main__":
    raise SystemExit(main())

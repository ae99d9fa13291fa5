# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Property suite run by ``dpwkit verify``.

Canned instances (the vacuum, two polynomial potentials, constructed cell-boundary loops)
are independent of the seed; random instances are drawn from ``RunConfig.seed``. Each check
contributes records ``{identity, category, residual, tolerance, passed}`` to the report.
"""

import logging

import numpy as np

from dpwkit.basepoint import (
    ConjugationMove,
    _entry,
    audit_conjugation,
    audit_dressing,
    audit_dual,
    compute_ring_g,
    conjugate_transport,
    dressed_transport,
    dual_frame_transport,
    involution_transport,
)
from dpwkit.errors import DpwError, OutsideBigCell, OutsideIwasawaCell
from dpwkit.factor import birkhoff_split, iwasawa_split
from dpwkit.loopcore import (
    GroupModel,
    MatrixLoop,
    _norms,
    check_twisted,
    loop_exp,
    random_real_element,
    random_twisted_loop,
)
from dpwkit.pipeline import (
    Grid,
    _masked_max,
    associated_family,
    backward_dpw,
    fd_threshold,
    forward_dpw,
    frame_flatness,
)
from dpwkit.potential import PotentialOneForm, PotentialTerm

__all__ = [
    "VACUUM_XI",
    "vacuum_potential",
    "vacuum_frames",
    "polynomial_potentials",
    "run_suite",
    "format_table",
]

logger = logging.getLogger(__name__)

VACUUM_XI = np.array([[0.0, 1.0], [1.0, 0.0]])
N_RANDOM = 3


def vacuum_potential(basepoint=0j):
    """``η = λ⁻¹ A dz`` with ``A = [[0, 1], [1, 0]]``."""
    return PotentialOneForm.constant(VACUUM_XI, mode=-1, basepoint=basepoint)


def vacuum_frames(points, degree, model, basepoint=0j):
    """Closed form extended frames of the vacuum.

    ``exp(zλ⁻¹A - z̄λA)`` for the compact model, ``exp(zλ⁻¹A + z̄λA)`` for the
    indefinite one (``z`` measured from the base point).

    :returns: ndarray of shape ``points.shape + (2 degree + 1, 2, 2)``
    """
    points = np.asarray(points, dtype=complex)
    sign = -1.0 if model.is_compact else 1.0
    out = np.zeros(points.shape + (2 * degree + 1, 2, 2), dtype=complex)
    for idx in np.ndindex(*points.shape):
        z = points[idx] - basepoint
        x = MatrixLoop.from_modes(
            {-1: z * VACUUM_XI, 1: sign * np.conj(z) * VACUUM_XI}, degree, parity="algebra"
        )
        out[idx] = loop_exp(x, degree).coefficients
    return out


def polynomial_potentials(c=0.5):
    """``ξ = [[0, 1], [z, 0]]`` and ``ξ = [[0, 1 + z²], [c, 0]]`` as normalized potentials."""
    linear = np.zeros((2, 2, 2))
    linear[0] = [[0, 1], [0, 0]]
    linear[1] = [[0, 0], [1, 0]]
    quadratic = np.zeros((3, 2, 2))
    quadratic[0] = [[0, 1], [c, 0]]
    quadratic[2] = [[0, 1], [0, 0]]
    return {
        "linear": PotentialOneForm((PotentialTerm(-1, linear),)),
        "quadratic": PotentialOneForm((PotentialTerm(-1, quadratic),)),
    }


def _record(category, prefix, entry):
    out = dict(entry)
    out["identity"] = f"{prefix}.{entry['identity']}"
    out["category"] = category
    return out


def _failed(category, name, err):
    """Record for a check that raised."""
    return {
        "identity": name,
        "category": category,
        "residual": None,
        "tolerance": None,
        "passed": False,
        "error": err.to_dict(),
    }


class _Suite:
    def __init__(self, config):
        self.config = config
        self.model = config.group_model
        self.grid = config.grid
        self.degree = config.truncation
        self.records = []
        self.warnings = []

    def add(self, category, prefix, entries):
        for entry in entries:
            self.records.append(_record(category, prefix, entry))

    def tail(self, name, tail):
        if tail > self.config.structural_tol:
            message = f"{name}: truncation tail {tail:.2e} exceeds {self.config.structural_tol:.0e}"
            logger.warning(message)
            self.warnings.append(message)

    def forward(self, eta, grid=None):
        cfg = self.config
        return forward_dpw(
            eta,
            self.grid if grid is None else grid,
            self.model,
            degree=self.degree,
            pole_radius=cfg.pole_radius,
            rcond_min=cfg.big_cell_rcond,
            newton_max_degree=cfg.newton_max_degree,
            membership_samples=cfg.membership_samples,
        )


def _check_factorizations(suite, rng):
    cfg, model, degree = suite.config, suite.model, suite.degree
    a, b = 0.3 * VACUUM_XI, 0.2 * VACUUM_XI
    x = MatrixLoop.from_modes({-1: a, 1: b}, degree, parity="algebra")
    g = loop_exp(x, degree)
    try:
        pair = birkhoff_split(g, cfg.big_cell_rcond)
    except DpwError as err:
        suite.records.append(_failed("canned", "birkhoff.commuting_exponential", err))
        pair = None
    minus = loop_exp(MatrixLoop.from_modes({-1: a}, degree, parity="algebra"), degree)
    plus = loop_exp(MatrixLoop.from_modes({1: b}, degree, parity="algebra"), degree)
    tail = max(minus.tail_mass, plus.tail_mass)
    if pair is not None:
        tail = max(tail, pair.minus.tail_mass)
    suite.tail("commuting exponential", tail)
    if pair is not None:
        residual = max(
            float(np.sum(_norms(pair.minus.coefficients - minus.coefficients))),
            float(np.sum(_norms(pair.plus.coefficients - plus.coefficients))),
        )
        suite.add(
            "canned", "birkhoff", [_entry("commuting_exponential", residual, 1e-10, tail)]
        )

    for draw in range(N_RANDOM):
        g = random_twisted_loop(rng, model, degree)
        prefix = f"random[{draw}]"
        try:
            bpair = birkhoff_split(g, cfg.big_cell_rcond)
            ipair = iwasawa_split(
                g,
                model,
                rcond_min=cfg.big_cell_rcond,
                newton_max_degree=cfg.newton_max_degree,
                n_samples=cfg.membership_samples,
            )
        except DpwError as err:
            suite.records.append(_failed("random", f"{prefix}.factorization", err))
            continue
        tail = max(bpair.minus.tail_mass, ipair.real_part.tail_mass)
        suite.add(
            "random",
            prefix,
            [
                _entry("birkhoff_reconstruction", bpair.residual, 1e-9, tail),
                _entry("birkhoff_minus_twisted", check_twisted(bpair.minus, model).violation, 1e-9),
                _entry("iwasawa_reconstruction", ipair.residual, 1e-9, tail),
                _entry("iwasawa_real_form", ipair.membership, 1e-9, tail),
            ],
        )


def _check_cell_boundaries(suite):
    cfg, degree = suite.config, suite.degree
    weyl = MatrixLoop.from_modes(
        {-1: [[0, 0], [-1, 0]], 1: [[0, 1], [0, 0]]}, max(degree, 1), size=2
    )
    suite.records.append(
        _expect_raise(
            "birkhoff.outside_big_cell",
            OutsideBigCell,
            lambda: birkhoff_split(weyl, cfg.big_cell_rcond),
        )
    )

    hyperbolic = GroupModel.hyperbolic()
    lower = MatrixLoop.from_modes({0: np.eye(2), -1: [[0, 0], [2, 0]]}, max(degree, 1), size=2)
    suite.records.append(
        _expect_raise(
            "iwasawa.outside_iwasawa_cell",
            OutsideIwasawaCell,
            lambda: iwasawa_split(lower, hyperbolic, "indefinite", rcond_min=cfg.big_cell_rcond),
        )
    )


def _expect_raise(name, exc_type, func):
    try:
        func()
    except exc_type as err:
        return {
            "identity": name,
            "category": "canned",
            "residual": None if err.residual is None else float(err.residual),
            "tolerance": None,
            "passed": True,
        }
    except DpwError as err:
        return _failed("canned", name, err)
    return {
        "identity": name,
        "category": "canned",
        "residual": None,
        "tolerance": None,
        "passed": False,
    }


def _check_vacuum(suite):
    cfg, model, grid = suite.config, suite.model, suite.grid
    result = suite.forward(vacuum_potential())
    frames = result.frames
    tail = result.diagnostics["max_tail"]
    suite.tail("vacuum forward", tail)
    exact = vacuum_frames(grid.points, suite.degree, model)
    errors = np.max(np.abs(frames.coefficients - exact), axis=(-3, -2, -1))
    diff = _masked_max(errors, frames.valid)
    entries = [
        _entry("closed_form", diff, cfg.pipeline_tol, tail),
        _entry("twisting", frames.twist_violation(), 1e-9, tail),
        _entry("real_form", frames.realform_violation(cfg.membership_samples), 1e-9, tail),
    ]

    family = associated_family(frames, cfg.lambda_samples)
    entries += [
        _entry("family_involution", family.involution_residual(), 1e-9, tail),
        _entry("family_spectrum", family.spectrum_residual(), 1e-9, tail),
        _entry("family_basepoint", family.basepoint_residual(), 1e-9, tail),
    ]
    for lam in cfg.lambda_samples:
        entries.append(_entry(f"flatness[{lam:.3f}]", frame_flatness(frames, lam), 1e-6, tail))

    back = backward_dpw(frames, cfg.big_cell_rcond, cfg.pipeline_tol)
    threshold = back.audit["threshold"]
    usable = back.potential.valid
    xi_err = _norms(back.xi - VACUUM_XI)
    entries += [
        _entry("round_trip_xi", _masked_max(xi_err, usable), threshold, tail),
        _entry("backward_structure", 0.0 if back.audit["structure_ok"] else 1.0, 0.0),
    ]
    suite.add("canned", "vacuum", entries)
    return result


def _check_polynomial(suite):
    cfg = suite.config
    for name, eta in polynomial_potentials().items():
        try:
            result = suite.forward(eta)
        except DpwError as err:
            suite.records.append(_failed("canned", f"{name}.forward", err))
            continue
        frames = result.frames
        tail = result.diagnostics["max_tail"]
        suite.tail(f"{name} forward", tail)
        back = backward_dpw(frames, cfg.big_cell_rcond, cfg.pipeline_tol)
        xi_exact = eta.xi(frames.grid.points)[-1]
        usable = back.potential.valid
        xi_err = _norms(back.xi - xi_exact)
        flat = max(frame_flatness(frames, lam) for lam in cfg.lambda_samples)
        suite.add(
            "canned",
            name,
            [
                _entry("round_trip_xi", _masked_max(xi_err, usable), back.audit["threshold"], tail),
                _entry("flatness", flat, fd_threshold(1e-6, frames.grid.h), tail),
            ],
        )


def _check_convergence(suite):
    """Flatness of the linear potential's frames decreases at second order."""
    eta = polynomial_potentials()["linear"]
    residuals, spacings = [], []
    lam = suite.config.lambda_samples[-1]
    cfg = suite.config
    for resolution in (11, 21, 41):
        grid = Grid.square(cfg.grid_lower, cfg.grid_upper, resolution)
        try:
            frames = suite.forward(eta, grid).frames
        except DpwError as err:
            suite.records.append(_failed("canned", "convergence.flatness_order", err))
            return
        residuals.append(frame_flatness(frames, lam))
        spacings.append(grid.h)
    floor = 1e-11
    orders = [
        np.log(residuals[i] / residuals[i + 1]) / np.log(spacings[i] / spacings[i + 1])
        for i in range(2)
        if residuals[i + 1] > floor
    ]
    order = min(orders) if orders else 2.0
    # residual = shortfall from second order
    suite.add("canned", "convergence", [_entry("flatness_order", max(0.0, 2.0 - order), 0.2)])


def _nearest_point(grid, z):
    points = grid.points
    idx = np.unravel_index(np.argmin(np.abs(points - z)), points.shape)
    return complex(points[idx])


def _check_conjugation(suite, frames, rng):
    cfg, model = suite.config, suite.model
    # F(z, 1) = I on this axis, so any K₀ element maps f(z₀) to f(z₁)
    z1 = _nearest_point(frames.grid, 0.3 if model.is_compact else 0.3j)
    h = np.diag(np.exp([0.3j, -0.3j]))
    move = ConjugationMove(h, frames.basepoint, z1, "basepoint")
    try:
        result = conjugate_transport(frames, move)
    except DpwError as err:
        suite.records.append(_failed("canned", "conjugation.transport", err))
    else:
        entries = audit_conjugation(
            frames, result, move, cfg.lambda_samples, cfg.pipeline_tol, 1e-12, cfg.big_cell_rcond
        )
        suite.add("canned", "conjugation", entries)

    z_off = _nearest_point(frames.grid, 0.2 + 0.2j)
    move = ConjugationMove.from_frame(frames, z_off, gauge="identity")
    try:
        result = conjugate_transport(frames, move)
    except DpwError as err:
        suite.records.append(_failed("canned", "conjugation_from_frame.transport", err))
    else:
        entries = audit_conjugation(
            frames, result, move, cfg.lambda_samples, cfg.pipeline_tol, 1e-12, cfg.big_cell_rcond
        )
        suite.add("canned", "conjugation_from_frame", entries)

    for draw in range(N_RANDOM):
        h = random_real_element(rng, model, form=frames.form)
        move = ConjugationMove(h, frames.basepoint, frames.basepoint, "identity")
        data = involution_transport(move, model, tol=1e-12)
        suite.add(
            "random",
            f"involutions[{draw}]",
            [_entry(name, val, 1e-12) for name, val in sorted(data.residuals.items())],
        )


def _check_dressing(suite, frames):
    cfg = suite.config
    z2 = _nearest_point(frames.grid, 0.3)
    try:
        move = compute_ring_g(frames, z2, rcond_min=cfg.big_cell_rcond)
        result = dressed_transport(frames, move, cfg.big_cell_rcond)
    except DpwError as err:
        suite.records.append(_failed("canned", "dressing.transport", err))
        return
    suite.tail("dressing", move.ring_g.tail_mass)
    entries = audit_dressing(
        frames,
        result,
        cfg.lambda_samples,
        cfg.pipeline_tol,
        cfg.membership_samples,
        cfg.newton_max_degree,
    )
    suite.add("canned", "dressing", entries)

    dual = dual_frame_transport(
        frames, result.frames, move, cfg.newton_max_degree, cfg.membership_samples
    )
    suite.add("canned", "dual", audit_dual(dual, move, 1e-9, cfg.membership_samples))

    same = compute_ring_g(frames, frames.basepoint, rcond_min=cfg.big_cell_rcond)
    same_frames = dressed_transport(frames, same, cfg.big_cell_rcond).frames
    dual = dual_frame_transport(
        frames, same_frames, same, cfg.newton_max_degree, cfg.membership_samples
    )
    suite.add("canned", "dual_identity", audit_dual(dual, same, 1e-9, cfg.membership_samples))


def run_suite(config):
    """Run every check for ``config``.

    :param config: RunConfig
    :returns: dict
        Report with ``checks``, ``warnings`` and the overall ``passed`` flag.
    """
    suite = _Suite(config)
    rng = np.random.default_rng(config.seed)
    logger.info(f"verify: model={config.model} N={config.truncation} seed={config.seed}")

    _check_factorizations(suite, rng)
    _check_cell_boundaries(suite)
    try:
        vacuum = _check_vacuum(suite)
    except DpwError as err:
        suite.records.append(_failed("canned", "vacuum.forward", err))
        vacuum = None
    _check_polynomial(suite)
    _check_convergence(suite)
    if vacuum is not None:
        _check_conjugation(suite, vacuum.frames, rng)
        _check_dressing(suite, vacuum.frames)

    n_failed = sum(not rec["passed"] for rec in suite.records)
    report = {
        "schema_version": 1,
        "config": config.to_dict(),
        "checks": suite.records,
        "warnings": suite.warnings,
        "n_checks": len(suite.records),
        "n_failed": n_failed,
        "passed": n_failed == 0,
    }
    log = logger.info if n_failed == 0 else logger.warning
    log(f"verify: {len(suite.records) - n_failed} of {len(suite.records)} checks passed")
    return report


def format_table(report):
    """Human readable table of a verification report."""
    rows = [("identity", "category", "residual", "tolerance", "status")]
    for rec in report["checks"]:
        residual = "-" if rec["residual"] is None else f"{rec['residual']:.3e}"
        tolerance = "-" if rec["tolerance"] is None else f"{rec['tolerance']:.1e}"
        rows.append(
            (
                rec["identity"],
                rec["category"],
                residual,
                tolerance,
                "ok" if rec["passed"] else "FAIL",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * width for width in widths))
    lines.extend(f"warning: {msg}" for msg in report["warnings"])
    lines.append(f"{report['n_checks'] - report['n_failed']} of {report['n_checks']} checks passed")
    return "\n".join(lines)

# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
The DPW construction in both directions on a rectangular grid.

Forward: normalized potential → normalized frame ``F₋`` (holomorphic integration) →
extended frame ``F`` (Iwasawa at every grid point) → associated family.

Backward: extended frame → ``F₋`` (Birkhoff at every grid point) → normalized potential
``F₋⁻¹ dF₋``.

Every grid point is processed independently. A numerical failure at a point does not stop
the run: the point is flagged with the error record and skipped by later reductions.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from dpwkit.errors import DpwError
from dpwkit.factor import BIG_CELL_RCOND, MEMBERSHIP_SAMPLES, NEWTON_MAX_DEGREE
from dpwkit.factor import birkhoff_split, iwasawa_split
from dpwkit.loopcore import (
    STRUCTURAL_TOL,
    MatrixLoop,
    _dagger,
    _multiply_coefficients,
    _norms,
    _sample_coefficients,
    identity_loop,
    loop_inverse,
)
from dpwkit.potential import (
    POLE_RADIUS,
    OneFormField,
    decompose_mc,
    flatness_residual,
    integrate_field,
    loopify,
    mc_form,
)

__all__ = [
    "Grid",
    "ExtendedFrameField",
    "AssociatedFamilySample",
    "ForwardResult",
    "BackwardResult",
    "forward_dpw",
    "frames_from_minus",
    "birkhoff_field",
    "backward_dpw",
    "associated_family",
    "frame_flatness",
    "evaluate_at_mu",
    "fd_threshold",
]

logger = logging.getLogger(__name__)

PIPELINE_TOL = 1e-8


def fd_threshold(tol, h, scale=1.0):
    """Pass threshold ``tol + scale·h²`` for second order finite difference quantities."""
    return tol + scale * h**2


@dataclass(frozen=True)
class Grid:
    """
    Rectangular grid ``lower ≤ z ≤ upper`` with ``nx × ny`` points.

    Point ``(i, j)`` is ``x[i] + 1j * y[j]``.
    """

    lower: complex = -0.5 - 0.5j
    upper: complex = 0.5 + 0.5j
    nx: int = 21
    ny: int = 21

    def __post_init__(self):
        object.__setattr__(self, "lower", complex(self.lower))
        object.__setattr__(self, "upper", complex(self.upper))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs at least one point per axis, got {self.nx}x{self.ny}")
        if self.upper.real < self.lower.real or self.upper.imag < self.lower.imag:
            raise ValueError(f"grid corners {self.lower}, {self.upper} are not ordered")

    @classmethod
    def square(cls, lower, upper, resolution):
        return cls(lower, upper, resolution, resolution)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def x(self):
        return np.linspace(self.lower.real, self.upper.real, self.nx)

    @property
    def y(self):
        return np.linspace(self.lower.imag, self.upper.imag, self.ny)

    @property
    def points(self):
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return xx + 1j * yy

    @property
    def h(self):
        hx = (self.upper.real - self.lower.real) / max(self.nx - 1, 1)
        hy = (self.upper.imag - self.lower.imag) / max(self.ny - 1, 1)
        return max(hx, hy)

    def index_of(self, z, rtol=1e-9):
        """Grid index ``(i, j)`` of the grid point equal to ``z``, or None."""
        z = complex(z)
        tol = rtol * max(self.h, 1.0)
        ix = np.flatnonzero(np.abs(self.x - z.real) <= tol)
        iy = np.flatnonzero(np.abs(self.y - z.imag) <= tol)
        if ix.size == 0 or iy.size == 0:
            return None
        return int(ix[0]), int(iy[0])

    def to_dict(self):
        return {
            "lower": [self.lower.real, self.lower.imag],
            "upper": [self.upper.real, self.upper.imag],
            "nx": self.nx,
            "ny": self.ny,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(complex(*data["lower"]), complex(*data["upper"]), data["nx"], data["ny"])


@dataclass(frozen=True, eq=False)
class ExtendedFrameField:
    """
    Loop at every point of a grid.

    Parameters
    ----------
    grid : Grid
    coefficients : (nx, ny, 2N + 1, n, n) array
        Loop coefficients per grid point.
    model : GroupModel
    basepoint : complex
        Point where the field is normalized to the identity.
    form : str
        Real form the frames take values in ("compact" or "indefinite").
    kind : str
        "extended" for frames F, "minus" for normalized frames F₋, "plus" for the
        positive remainders.
    flagged : dict
        ``{(i, j): error record}`` of points where the computation failed.
    tail_mass : float
        Largest truncation tail over the field.
    """

    grid: Grid
    coefficients: np.ndarray
    model: object
    basepoint: complex = 0j
    form: str = "compact"
    kind: str = "extended"
    flagged: dict = field(default_factory=dict)
    tail_mass: float = 0.0

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=complex)
        if coeffs.ndim != 5 or coeffs.shape[:2] != self.grid.shape:
            raise ValueError(
                f"field coefficients of shape {coeffs.shape} do not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "basepoint", complex(self.basepoint))

    @property
    def degree(self):
        return (self.coefficients.shape[2] - 1) // 2

    @property
    def matrix_size(self):
        return self.coefficients.shape[-1]

    @property
    def valid(self):
        mask = np.ones(self.grid.shape, dtype=bool)
        for i, j in self.flagged:
            mask[i, j] = False
        return mask

    @property
    def basepoint_index(self):
        return self.grid.index_of(self.basepoint)

    def loop(self, i, j):
        return MatrixLoop(self.coefficients[i, j], tail_mass=self.tail_mass)

    def at_lambda(self, lam):
        """Matrix values at ``λ = lam``, shape ``(nx, ny, n, n)``."""
        powers = complex(lam) ** np.arange(-self.degree, self.degree + 1).astype(float)
        return np.einsum("k,xykij->xyij", powers, self.coefficients)

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def twist_violation(self, model=None):
        """Max over valid points of the twisting violation relative to ``model``."""
        model = self.model if model is None else model
        modes = np.arange(-self.degree, self.degree + 1)
        signs = np.where(modes % 2 == 0, 1.0, -1.0)[:, None, None]
        resid = _norms(model.sigma(self.coefficients) - signs * self.coefficients).max(axis=-1)
        return _masked_max(resid, self.valid)

    def realform_violation(self, n_samples=MEMBERSHIP_SAMPLES, form=None):
        """Max over valid points and circle samples of ``‖F^H s F - s‖``."""
        s = self.model.star_matrix(self.form if form is None else form)
        values = _sample_coefficients(self.coefficients, max(n_samples, 2 * self.degree + 1))
        resid = _norms(_dagger(values) @ s @ values - s).max(axis=-1)
        return _masked_max(resid, self.valid)

    def flagged_records(self):
        return [self.flagged[key] for key in sorted(self.flagged)]


def _masked_max(values, mask):
    return float(np.max(values[mask])) if np.any(mask) else 0.0


def _flag(flagged, grid, idx, err):
    record = err.with_location(idx).to_dict()
    z = grid.points[idx]
    record["z"] = [z.real, z.imag]
    flagged[idx] = record


@dataclass(frozen=True, eq=False)
class AssociatedFamilySample:
    """
    Cartan embedding ``P(z, λ) = F(z, λ) Q F(z, λ)⁻¹`` for a set of λ on the circle.

    ``values`` has shape ``(n_lambda, nx, ny, n, n)``.
    """

    lambdas: np.ndarray
    grid: Grid
    values: np.ndarray
    twist_matrix: np.ndarray
    valid: np.ndarray
    basepoint_index: tuple | None = None

    def involution_residual(self):
        """Max ``‖P² - Q²‖``."""
        q2 = self.twist_matrix @ self.twist_matrix
        resid = _norms(self.values @ self.values - q2).max(axis=0)
        return _masked_max(resid, self.valid)

    def spectrum_residual(self):
        """Max distance between the sorted spectra of P and Q."""
        target = np.sort(np.linalg.eigvals(self.twist_matrix))
        spec = np.sort(np.linalg.eigvals(self.values), axis=-1)
        resid = np.abs(spec - target).max(axis=(0, -1))
        return _masked_max(resid, self.valid)

    def basepoint_residual(self):
        """Max over λ of ``‖P(z₀, λ) - Q‖`` (0 if z₀ is not a grid point)."""
        if self.basepoint_index is None:
            return 0.0
        i, j = self.basepoint_index
        return float(np.max(_norms(self.values[:, i, j] - self.twist_matrix)))


@dataclass(frozen=True, eq=False)
class ForwardResult:
    frames: ExtendedFrameField
    minus: ExtendedFrameField
    plus: ExtendedFrameField
    diagnostics: dict


@dataclass(frozen=True, eq=False)
class BackwardResult:
    """
    Output of :func:`backward_dpw`.

    ``potential`` holds the normalized potential (mode -1, dz, 𝔭-part) and ``raw`` the full
    Maurer-Cartan form of ``minus`` before projection.
    """

    minus: ExtendedFrameField
    potential: OneFormField
    raw: OneFormField
    audit: dict

    @property
    def xi(self):
        """Sampled ξ of ``η = λ⁻¹ ξ dz``, shape ``(nx, ny, n, n)``."""
        return self.potential.dz[:, :, self.potential.degree - 1]


def frames_from_minus(
    minus,
    model=None,
    form=None,
    rcond_min=BIG_CELL_RCOND,
    newton_max_degree=NEWTON_MAX_DEGREE,
    membership_samples=MEMBERSHIP_SAMPLES,
):
    """Iwasawa split ``F₋ = F V₊`` at every valid point of a normalized frame field.

    :returns: tuple
        ``(frames, plus, stats)``: two ExtendedFrameField and a dict with the maximum
        reconstruction residual and real-form violation.
    """
    model = minus.model if model is None else model
    form = model.default_form if form is None else form
    grid = minus.grid
    real = np.zeros_like(minus.coefficients)
    plus = np.zeros_like(minus.coefficients)
    flagged = dict(minus.flagged)
    stats = {"max_residual": 0.0, "max_membership": 0.0, "max_tail": minus.tail_mass}
    for idx in np.ndindex(*grid.shape):
        if idx in flagged:
            real[idx] = identity_loop(model.matrix_size, minus.degree).coefficients
            plus[idx] = real[idx]
            continue
        try:
            pair = iwasawa_split(
                minus.loop(*idx),
                model,
                form,
                rcond_min=rcond_min,
                newton_max_degree=newton_max_degree,
                n_samples=membership_samples,
            )
        except DpwError as err:
            _flag(flagged, grid, idx, err)
            real[idx] = identity_loop(model.matrix_size, minus.degree).coefficients
            plus[idx] = real[idx]
            continue
        real[idx] = pair.real_part.coefficients
        plus[idx] = pair.plus_part.coefficients
        stats["max_residual"] = max(stats["max_residual"], pair.residual)
        stats["max_membership"] = max(stats["max_membership"], pair.membership)
        stats["max_tail"] = max(stats["max_tail"], pair.real_part.tail_mass)

    common = dict(model=model, basepoint=minus.basepoint, form=form, flagged=flagged)
    frames = ExtendedFrameField(grid, real, kind="extended", tail_mass=stats["max_tail"], **common)
    plus_field = ExtendedFrameField(grid, plus, kind="plus", tail_mass=stats["max_tail"], **common)
    return frames, plus_field, stats


def _continuity_jump(field_):
    """Largest Wiener distance between valid nearest neighbors."""
    coeffs, valid = field_.coefficients, field_.valid
    worst = 0.0
    for axis in (0, 1):
        diff = np.diff(coeffs, axis=axis)
        jump = _norms(diff).sum(axis=-1)
        both = (
            valid[1:] & valid[:-1] if axis == 0 else valid[:, 1:] & valid[:, :-1]
        )
        worst = max(worst, _masked_max(jump, both))
    return worst


def forward_dpw(
    eta,
    grid,
    model,
    form=None,
    degree=8,
    pole_radius=POLE_RADIUS,
    rcond_min=BIG_CELL_RCOND,
    newton_max_degree=NEWTON_MAX_DEGREE,
    membership_samples=MEMBERSHIP_SAMPLES,
):
    """Extended frames from a normalized potential.

    :param eta: PotentialOneForm
        Normalized potential; frames are normalized at ``eta.basepoint``.
    :param grid: Grid
    :param model: GroupModel
    :param form: str, optional
        Real form of the frames (default: the model's own real form).
    :param degree: int
        Loop truncation N.
    :returns: ForwardResult
    :raises DpwError: if the computation fails at the base point itself.
    """
    form = model.default_form if form is None else form
    if eta.matrix_size != model.matrix_size:
        raise ValueError(
            f"potential matrix size {eta.matrix_size} does not match model size "
            f"{model.matrix_size}"
        )
    if not eta.is_normalized(model):
        logger.warning("potential is not a normalized potential (mode -1, 𝔭-valued)")
    logger.info(f"forward_dpw: grid {grid.nx}x{grid.ny}, N={degree}, form={form}")

    coeffs, failures, tails = integrate_field(eta, grid.points, degree, pole_radius=pole_radius)
    flagged = {}
    for flat, err in failures.items():
        idx = tuple(int(v) for v in np.unravel_index(flat, grid.shape))
        _flag(flagged, grid, idx, err)
    base_idx = grid.index_of(eta.basepoint)
    if base_idx is not None and base_idx in flagged:
        raise DpwError(f"integration failed at the base point: {flagged[base_idx]['message']}")
    minus = ExtendedFrameField(
        grid,
        coeffs,
        model,
        eta.basepoint,
        form,
        kind="minus",
        flagged=flagged,
        tail_mass=float(np.max(tails)),
    )

    frames, plus, stats = frames_from_minus(
        minus, model, form, rcond_min, newton_max_degree, membership_samples
    )
    if base_idx is not None and base_idx in frames.flagged:
        raise DpwError(
            f"Iwasawa split failed at the base point: {frames.flagged[base_idx]['message']}"
        )

    frames, drift = _enforce_basepoint(frames, base_idx)
    diagnostics = {
        "drift": drift,
        "continuity_jump": _continuity_jump(frames),
        "h": grid.h,
        "max_tail": stats["max_tail"],
        "max_iwasawa_residual": stats["max_residual"],
        "max_membership": stats["max_membership"],
        "n_flagged": len(frames.flagged),
        "flagged": frames.flagged_records(),
    }
    if frames.flagged:
        logger.info(f"forward_dpw: {len(frames.flagged)} flagged grid points")
    if stats["max_tail"] > STRUCTURAL_TOL:
        logger.warning(
            f"truncation tail {stats['max_tail']:.2e} exceeds {STRUCTURAL_TOL:.0e}; "
            "consider a larger truncation"
        )
    return ForwardResult(frames, minus, plus, diagnostics)


def _enforce_basepoint(frames, base_idx):
    """Left multiply by ``F(z₀)⁻¹`` and set ``F(z₀) = I`` exactly; returns the drift.

    A base point off the grid leaves the frames unchanged with zero drift.
    """
    if base_idx is None:
        return frames, 0.0
    degree, size = frames.degree, frames.matrix_size
    base = frames.loop(*base_idx)
    ident = identity_loop(size, degree).coefficients
    drift = float(np.sum(_norms(base.coefficients - ident)))
    logger.info(f"base point drift {drift:.3e}")
    coeffs = frames.coefficients
    if drift > 0:
        inv = loop_inverse(base).coefficients
        coeffs, _ = _multiply_coefficients(inv, coeffs, degree)
        coeffs = np.array(coeffs)
        coeffs[~frames.valid] = frames.coefficients[~frames.valid]
    coeffs = np.array(coeffs)
    coeffs[base_idx] = ident
    return frames.replace(coefficients=coeffs), drift


def birkhoff_field(frames, rcond_min=BIG_CELL_RCOND):
    """Birkhoff split ``F = F₋ F₊`` at every valid point of a field.

    :returns: tuple
        ``(minus, plus)`` ExtendedFrameField of kinds "minus" and "plus"; points where
        the split fails are flagged in both and hold the identity.
    """
    grid = frames.grid
    minus = np.zeros_like(frames.coefficients)
    plus = np.zeros_like(frames.coefficients)
    flagged = dict(frames.flagged)
    ident = identity_loop(frames.matrix_size, frames.degree).coefficients
    for idx in np.ndindex(*grid.shape):
        if idx not in flagged:
            try:
                pair = birkhoff_split(frames.loop(*idx), rcond_min=rcond_min)
            except DpwError as err:
                _flag(flagged, grid, idx, err)
            else:
                minus[idx] = pair.minus.coefficients
                plus[idx] = pair.plus.coefficients
                continue
        minus[idx] = ident
        plus[idx] = ident
    if len(flagged) > len(frames.flagged):
        logger.info(f"Birkhoff split failed at {len(flagged) - len(frames.flagged)} points")
    return (
        frames.replace(coefficients=minus, kind="minus", flagged=flagged),
        frames.replace(coefficients=plus, kind="plus", flagged=dict(flagged)),
    )


def backward_dpw(frames, rcond_min=BIG_CELL_RCOND, tol=PIPELINE_TOL, fd_scale=None):
    """Normalized potential from an extended frame field.

    Birkhoff splits every frame, differentiates the minus parts and projects the result
    onto ``λ⁻¹ 𝔭 dz``. The audit records what the projection discards (other modes, the dz̄
    component and the 𝔨-part) over interior points; the structure check passes when all
    of them are below :func:`fd_threshold`.

    :param frames: ExtendedFrameField
    :param tol: float
        Tolerance added to the finite difference allowance.
    :param fd_scale: float, optional
        Constant of the ``h²`` allowance; default ``(1 + max‖ξ‖)³``.
    :returns: BackwardResult
    """
    grid, model = frames.grid, frames.model
    logger.info(f"backward_dpw: grid {grid.nx}x{grid.ny}, N={frames.degree}")
    minus_field, _ = birkhoff_field(frames, rcond_min)
    minus, flagged = minus_field.coefficients, minus_field.flagged
    ident = identity_loop(frames.matrix_size, frames.degree).coefficients
    valid = minus_field.valid

    raw = mc_form(minus, grid.x, grid.y, valid=valid)
    degree = raw.degree
    xi = model.p_part(raw.dz[:, :, degree - 1])
    dz = np.zeros_like(raw.dz)
    dz[:, :, degree - 1] = xi
    potential = OneFormField(grid.x, grid.y, dz, np.zeros_like(dz), raw.valid)

    usable = raw.valid.copy()
    usable[[0, -1]] = False
    usable[:, [0, -1]] = False
    other_modes = [k for k in range(-degree, degree + 1) if k != -1]
    xi_size = _masked_max(_norms(xi), raw.valid)
    if fd_scale is None:
        fd_scale = (1.0 + xi_size) ** 3
    threshold = fd_threshold(tol, grid.h, fd_scale)
    audit = {
        "h": grid.h,
        "threshold": threshold,
        "off_mode_mass": _masked_max(raw.mode_mass("dz", other_modes), usable),
        "dzbar_mass": _masked_max(raw.mode_mass("dzbar", range(-degree, degree + 1)), usable),
        "k_part_mass": _masked_max(_norms(model.k_part(raw.dz[:, :, degree - 1])), usable),
        "basepoint_residual": 0.0,
        "n_flagged": len(flagged),
        "flagged": minus_field.flagged_records(),
    }
    base_idx = minus_field.basepoint_index
    if base_idx is not None and valid[base_idx]:
        audit["basepoint_residual"] = float(np.sum(_norms(minus[base_idx] - ident)))
    audit["structure_ok"] = bool(
        max(audit["off_mode_mass"], audit["dzbar_mass"], audit["k_part_mass"]) <= threshold
        and audit["basepoint_residual"] <= tol
    )
    log = logger.info if audit["structure_ok"] else logger.warning
    log(
        f"backward_dpw structure audit: off-mode {audit['off_mode_mass']:.2e}, "
        f"dzbar {audit['dzbar_mass']:.2e}, k-part {audit['k_part_mass']:.2e} "
        f"(threshold {threshold:.2e})"
    )
    return BackwardResult(minus_field, potential, raw, audit)


def associated_family(frames, lambdas):
    """Cartan embedding ``P = F(λ) Q F(λ)⁻¹`` of the frames for each λ in ``lambdas``."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=complex))
    if np.any(np.abs(np.abs(lambdas) - 1) > 1e-12):
        raise ValueError("associated family parameters must lie on the unit circle")
    twist = frames.model.twist_matrix
    values = []
    for lam in lambdas:
        f = frames.at_lambda(lam)
        values.append(f @ twist @ np.linalg.inv(f))
    return AssociatedFamilySample(
        lambdas, frames.grid, np.array(values), twist, frames.valid, frames.basepoint_index
    )


def frame_flatness(frames, lam):
    """Harmonicity residual of a frame field.

    The Maurer-Cartan form of the frames at ``λ = 1`` is decomposed, loopified and tested
    for flatness at ``λ = lam``.
    """
    values = frames.at_lambda(1.0)[:, :, None]
    alpha = mc_form(values, frames.grid.x, frames.grid.y, valid=frames.valid)
    alpha_lam = loopify(decompose_mc(alpha, frames.model, tol=None))
    return flatness_residual(alpha_lam, lam)


def evaluate_at_mu(frames, mu):
    """Frame field of the ``μ`` member of the associated family: ``F_μ(z, λ) = F(z, μλ)``."""
    mu = complex(mu)
    if abs(abs(mu) - 1) > 1e-12:
        raise ValueError(f"μ must lie on the unit circle, got {mu}")
    scale = mu ** np.arange(-frames.degree, frames.degree + 1).astype(float)
    return frames.replace(coefficients=frames.coefficients * scale[:, None, None])

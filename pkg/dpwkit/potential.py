# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Holomorphic potentials, Maurer-Cartan forms and their integration.

A potential ``η(z, λ) = Σ_j λ^j ξ_j(z) dz`` has rational matrix coefficient functions
``ξ_j``, each a matrix polynomial in z over a scalar polynomial. A normalized potential
has the single mode ``j = -1`` with 𝔭-valued ξ.

Sampled 1-forms on a rectangular grid are :class:`OneFormField` objects holding the loop
coefficients of the dz and dz̄ components at every grid point. Grid arrays use
``indexing="ij"`` throughout: axis 0 is x, axis 1 is y.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import solve_ivp

from dpwkit.errors import (
    GridTooCoarse,
    IntegrationError,
    LoopNotInvertible,
    NotLieAlgebraValued,
    PoleOnPath,
    SchemaError,
)
from dpwkit.loopcore import (
    STRUCTURAL_TOL,
    MatrixLoop,
    _coefficients_from_samples,
    _dagger,
    _norms,
    _sample_coefficients,
)

__all__ = [
    "PotentialTerm",
    "PotentialOneForm",
    "OneFormField",
    "MaurerCartanDecomposition",
    "decompose_mc",
    "loopify",
    "integrate_holomorphic",
    "integrate_field",
    "integrate_along",
    "route_path",
    "flatness_residual",
    "mc_form",
    "sample_potential",
]

logger = logging.getLogger(__name__)

POLE_RADIUS = 0.05
ODE_RTOL = 1e-11
ODE_ATOL = 1e-13
MAX_DETOURS = 8


def _as_complex(value):
    """Complex number from a number, a ``[re, im]`` pair or a string like ``"0.3+0.1j"``."""
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    if isinstance(value, list | tuple):
        if len(value) != 2:
            raise SchemaError(f"complex value must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def _complex_array(data, key):
    """Array from ``data[key]`` plus the optional imaginary part ``data[key + "_im"]``."""
    try:
        out = np.array(data[key], dtype=float).astype(complex)
        if key + "_im" in data:
            out = out + 1j * np.array(data[key + "_im"], dtype=float)
    except (TypeError, ValueError) as err:
        raise SchemaError(f"invalid {key!r}: {err}") from None
    return out


@dataclass(frozen=True, eq=False)
class PotentialTerm:
    """
    One mode ``λ^mode ξ(z)`` of a potential.

    ``ξ(z) = Σ_p numerator[p] z^p / Σ_q denominator[q] z^q`` with coefficients in
    ascending powers; ``numerator`` has shape ``(deg + 1, n, n)``.
    """

    mode: int
    numerator: np.ndarray
    denominator: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        num = np.array(self.numerator, dtype=complex)
        if num.ndim == 2:
            num = num[None]
        if num.ndim != 3 or num.shape[1] != num.shape[2]:
            raise SchemaError(f"numerator must have shape (deg+1, n, n), got {num.shape}")
        den = np.atleast_1d(np.array(self.denominator, dtype=complex))
        if den.ndim != 1 or not np.any(den != 0):
            raise SchemaError("denominator must be a nonzero 1-d coefficient list")
        object.__setattr__(self, "mode", int(self.mode))
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @property
    def matrix_size(self):
        return self.numerator.shape[1]

    @property
    def poles(self):
        den = np.trim_zeros(self.denominator, "b")
        if len(den) <= 1:
            return np.zeros(0, dtype=complex)
        return npoly.polyroots(den)

    def __call__(self, z):
        """Values at ``z`` (any shape), shape ``z.shape + (n, n)``."""
        z = np.asarray(z, dtype=complex)
        num = np.moveaxis(npoly.polyval(z, self.numerator), (0, 1), (-2, -1))
        den = npoly.polyval(z, self.denominator)
        with np.errstate(divide="ignore", invalid="ignore"):
            return num / den[..., None, None]


@dataclass(frozen=True, eq=False)
class PotentialOneForm:
    """
    Potential ``η = Σ_j λ^j ξ_j(z) dz`` with base point ``basepoint``.

    Parameters
    ----------
    terms : tuple of PotentialTerm
    basepoint : complex
        Point z₀ where the integrated frame is the identity.
    domain : tuple of complex, optional
        ``(lower, upper)`` corners of the rectangle where the potential is used.
    poles : tuple of complex
        Poles in addition to the roots of the term denominators.
    """

    terms: tuple
    basepoint: complex = 0j
    domain: tuple | None = None
    poles: tuple = ()

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise SchemaError("a potential needs at least one term")
        sizes = {term.matrix_size for term in terms}
        if len(sizes) != 1:
            raise SchemaError(f"potential terms have different matrix sizes {sorted(sizes)}")
        for term in terms:
            if term.mode < -1:
                raise SchemaError(f"potential modes must be >= -1, got {term.mode}")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "basepoint", complex(self.basepoint))
        object.__setattr__(self, "poles", tuple(complex(p) for p in self.poles))
        if self.domain is not None:
            lower, upper = (complex(c) for c in self.domain)
            object.__setattr__(self, "domain", (lower, upper))

    @classmethod
    def constant(cls, xi, mode=-1, basepoint=0j):
        """Potential ``λ^mode ξ dz`` with constant ξ."""
        return cls((PotentialTerm(mode, np.asarray(xi)[None]),), basepoint=basepoint)

    @classmethod
    def zero(cls, size=2, basepoint=0j):
        return cls.constant(np.zeros((size, size)), basepoint=basepoint)

    @property
    def matrix_size(self):
        return self.terms[0].matrix_size

    @property
    def modes(self):
        return sorted({term.mode for term in self.terms})

    @property
    def all_poles(self):
        found = [complex(p) for term in self.terms for p in term.poles]
        return np.array(found + list(self.poles), dtype=complex)

    def xi(self, z):
        """``{mode: ξ_mode(z)}`` with terms of equal mode summed."""
        out = {}
        for term in self.terms:
            val = term(z)
            out[term.mode] = out[term.mode] + val if term.mode in out else val
        return out

    def loop_coefficients(self, z, degree):
        """Loop coefficients of η at ``z``, shape ``z.shape + (2 degree + 1, n, n)``."""
        z = np.asarray(z, dtype=complex)
        size = self.matrix_size
        out = np.zeros(z.shape + (2 * degree + 1, size, size), dtype=complex)
        for mode, val in self.xi(z).items():
            if abs(mode) <= degree:
                out[..., mode + degree, :, :] += val
        return out

    def is_normalized(self, model, tol=STRUCTURAL_TOL, n_check=7):
        """True if η is ``λ⁻¹ ξ dz`` with ξ 𝔭-valued and finite at the base point."""
        if self.modes != [-1]:
            return False
        zs = self._check_points(n_check)
        xi = self.xi(zs)[-1]
        if not np.all(np.isfinite(self.xi(self.basepoint)[-1])):
            return False
        return bool(np.nanmax(_norms(model.k_part(xi))) <= tol * max(1.0, np.nanmax(_norms(xi))))

    def twist_violation(self, model, n_check=7):
        """Max over sample points of ``‖σ(ξ_j) - (-1)^j ξ_j‖``."""
        zs = self._check_points(n_check)
        worst = 0.0
        for mode, val in self.xi(zs).items():
            sign = 1.0 if mode % 2 == 0 else -1.0
            resid = _norms(model.sigma(val) - sign * val)
            worst = max(worst, float(np.nanmax(resid)))
        return worst

    def _check_points(self, n_check):
        if self.domain is None:
            lower, upper = self.basepoint - 0.5 - 0.5j, self.basepoint + 0.5 + 0.5j
        else:
            lower, upper = self.domain
        t = np.linspace(0.1, 0.9, n_check)
        return lower + t * (upper - lower).real + 1j * t[::-1] * (upper - lower).imag

    def to_dict(self):
        terms = []
        for term in self.terms:
            terms.append(
                {
                    "mode": term.mode,
                    "numerator_poly": term.numerator.real.tolist(),
                    "numerator_poly_im": term.numerator.imag.tolist(),
                    "denominator_poly": term.denominator.real.tolist(),
                    "denominator_poly_im": term.denominator.imag.tolist(),
                }
            )
        out = {
            "basepoint": _pair(self.basepoint),
            "domain": None,
            "terms": terms,
            "poles": [_pair(p) for p in self.poles],
        }
        if self.domain is not None:
            out["domain"] = {"lower": _pair(self.domain[0]), "upper": _pair(self.domain[1])}
        return out

    @classmethod
    def from_dict(cls, data):
        """Potential from the JSON schema.

        ``{basepoint, domain: {lower, upper} | null, terms: [{mode, numerator_poly,
        numerator_poly_im?, denominator_poly?, denominator_poly_im?}], poles}``.
        ``numerator_poly`` is a list of n×n matrices in ascending powers of z; complex
        scalars are ``[re, im]`` pairs or strings.
        """
        if not isinstance(data, dict) or "terms" not in data:
            raise SchemaError("potential must be a JSON object with a 'terms' list")
        terms = []
        for item in data["terms"]:
            try:
                mode = int(item["mode"])
            except (KeyError, TypeError, ValueError):
                raise SchemaError(f"potential term needs an integer 'mode': {item!r}") from None
            num = _complex_array(item, "numerator_poly")
            den = _complex_array(item, "denominator_poly") if "denominator_poly" in item else [1.0]
            terms.append(PotentialTerm(mode, num, den))
        domain = data.get("domain")
        if domain is not None:
            try:
                domain = (_as_complex(domain["lower"]), _as_complex(domain["upper"]))
            except (KeyError, TypeError):
                raise SchemaError("domain must be {'lower': [re, im], 'upper': [re, im]}") from None
        return cls(
            tuple(terms),
            basepoint=_as_complex(data.get("basepoint", 0.0)),
            domain=domain,
            poles=tuple(_as_complex(p) for p in data.get("poles", [])),
        )


@dataclass(frozen=True, eq=False)
class OneFormField:
    """
    Loop-valued 1-form ``a dz + b dz̄`` sampled on a rectangular grid.

    ``dz`` and ``dzbar`` have shape ``(nx, ny, 2d + 1, n, n)`` (loop coefficients per
    grid point). ``valid`` marks grid points usable in reductions.
    """

    x: np.ndarray
    y: np.ndarray
    dz: np.ndarray
    dzbar: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        dz = np.asarray(self.dz, dtype=complex)
        dzbar = np.asarray(self.dzbar, dtype=complex)
        if dz.shape != dzbar.shape or dz.shape[:2] != (len(self.x), len(self.y)):
            raise ValueError(f"inconsistent 1-form shapes {dz.shape}, {dzbar.shape}")
        object.__setattr__(self, "dz", dz)
        object.__setattr__(self, "dzbar", dzbar)
        if self.valid is None:
            object.__setattr__(self, "valid", np.ones(dz.shape[:2], dtype=bool))

    @property
    def degree(self):
        return (self.dz.shape[2] - 1) // 2

    @property
    def spacing(self):
        return float(np.max(np.diff(self.x))), float(np.max(np.diff(self.y)))

    @property
    def h(self):
        return max(self.spacing)

    def at(self, lam):
        """Matrix values ``(a, b)`` of the dz and dz̄ components at ``λ = lam``."""
        powers = complex(lam) ** np.arange(-self.degree, self.degree + 1).astype(float)
        a = np.einsum("k,xykij->xyij", powers, self.dz)
        b = np.einsum("k,xykij->xyij", powers, self.dzbar)
        return a, b

    def mode_mass(self, component, modes):
        """Per-point Wiener mass of ``component`` ("dz" or "dzbar") restricted to ``modes``."""
        coeffs = getattr(self, component)
        idx = [k + self.degree for k in modes if abs(k) <= self.degree]
        return _norms(coeffs[:, :, idx]).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class MaurerCartanDecomposition:
    """
    Splitting ``α = α′ + α_k + α″`` of a sampled 1-form.

    ``alpha_prime`` is the 𝔭-part of the dz component, ``alpha_doubleprime`` the 𝔭-part
    of the dz̄ component and ``alpha_k_dz``, ``alpha_k_dzbar`` the two components of the
    𝔨-part; each has shape ``(nx, ny, n, n)``.
    """

    x: np.ndarray
    y: np.ndarray
    alpha_prime: np.ndarray
    alpha_k_dz: np.ndarray
    alpha_k_dzbar: np.ndarray
    alpha_doubleprime: np.ndarray
    valid: np.ndarray | None = None

    def reassemble(self):
        """The original form as a degree 0 :class:`OneFormField`."""
        dz = (self.alpha_prime + self.alpha_k_dz)[:, :, None]
        dzbar = (self.alpha_k_dzbar + self.alpha_doubleprime)[:, :, None]
        return OneFormField(self.x, self.y, dz, dzbar, self.valid)


def decompose_mc(alpha, model, tol=STRUCTURAL_TOL, form=None, lam=1.0):
    """Split a sampled 1-form into its 𝔭 (1,0), 𝔨 and 𝔭 (0,1) parts.

    :param alpha: OneFormField
        Maurer-Cartan form; its value at ``λ = lam`` is decomposed.
    :param model: GroupModel
    :param tol: float or None
        Tolerance on the trace (and, with ``form``, on the real-form condition
        ``τ(α_x) = α_x``, ``τ(α_y) = α_y``). None skips the check.
    :param form: str, optional
        Real form whose Lie algebra α must take values in.
    :returns: MaurerCartanDecomposition
    :raises NotLieAlgebraValued: if the check fails.
    """
    a, b = alpha.at(lam)
    if tol is not None:
        scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
        resid = np.abs(np.trace(a, axis1=-2, axis2=-1)) + np.abs(np.trace(b, axis1=-2, axis2=-1))
        if form is not None:
            s = model.star_matrix(form)
            s_inv = np.linalg.inv(s)
            for comp in (a + b, 1j * (a - b)):
                resid = resid + _norms(-s @ _dagger(comp) @ s_inv - comp)
        worst = float(np.max(resid[alpha.valid])) if np.any(alpha.valid) else 0.0
        if worst > tol * scale:
            raise NotLieAlgebraValued(
                f"1-form is not Lie algebra valued (residual {worst:.3e})", residual=worst
            )
    return MaurerCartanDecomposition(
        alpha.x,
        alpha.y,
        model.p_part(a),
        model.k_part(a),
        model.k_part(b),
        model.p_part(b),
        alpha.valid,
    )


def loopify(decomp):
    """``α_λ = λ⁻¹ α′ + α_k + λ α″`` as a degree 1 :class:`OneFormField`."""
    zero = np.zeros_like(decomp.alpha_prime)
    dz = np.stack([decomp.alpha_prime, decomp.alpha_k_dz, zero], axis=2)
    dzbar = np.stack([zero, decomp.alpha_k_dzbar, decomp.alpha_doubleprime], axis=2)
    return OneFormField(decomp.x, decomp.y, dz, dzbar, decomp.valid)


def _check_grid(x, y):
    if len(x) < 3 or len(y) < 3:
        raise GridTooCoarse(
            f"need at least 3 grid points per axis for finite differences, got {len(x)}x{len(y)}"
        )


def _interior(arr, margin=1):
    return arr[margin:-margin, margin:-margin]


def flatness_residual(alpha, lam):
    """Max over interior grid points of ``‖dα + α∧α‖`` at ``λ = lam``.

    For ``α = a dz + b dz̄`` this is ``∂_z b - ∂_z̄ a + [a, b]`` with central differences
    (second order). Points next to an invalid point are skipped.

    :param alpha: OneFormField
    :param lam: complex
    :returns: float
    :raises GridTooCoarse: if either axis has fewer than 3 points.
    """
    _check_grid(alpha.x, alpha.y)
    a, b = alpha.at(lam)
    dz_b = (_gradient(b, alpha.x, 0) - 1j * _gradient(b, alpha.y, 1)) / 2
    dzbar_a = (_gradient(a, alpha.x, 0) + 1j * _gradient(a, alpha.y, 1)) / 2
    resid = _norms(dz_b - dzbar_a + a @ b - b @ a)
    # one-sided stencils on the boundary rows of α feed the first interior row
    margin = 2 if min(len(alpha.x), len(alpha.y)) >= 5 else 1
    usable = _interior(_neighborhood_valid(alpha.valid), margin)
    if not np.any(usable):
        return 0.0
    return float(np.max(_interior(resid, margin)[usable]))


def _gradient(values, coords, axis):
    return np.gradient(values, coords, axis=axis, edge_order=2)


def _neighborhood_valid(valid):
    """Points whose 4-neighbors (and themselves) are valid."""
    out = valid.copy()
    out[1:] &= valid[:-1]
    out[:-1] &= valid[1:]
    out[:, 1:] &= valid[:, :-1]
    out[:, :-1] &= valid[:, 1:]
    return out


def mc_form(values, x, y, degree=None, n_samples=None, valid=None):
    """Maurer-Cartan form ``F⁻¹ dF`` of a loop field on a grid.

    Derivatives are second order finite differences (central inside, one-sided on the
    boundary); products and inverses are taken pointwise on ``n_samples`` circle points.

    :param values: ndarray
        Loop coefficients, shape ``(nx, ny, 2N + 1, n, n)``.
    :param x, y: ndarray
        Grid coordinates.
    :param degree: int, optional
        Loop truncation of the result (default N).
    :param valid: ndarray, optional
        Boolean mask of usable grid points; invalid points are replaced by the identity
        before differencing and their neighbors are marked invalid in the result.
    :returns: OneFormField
    :raises LoopNotInvertible: if F is singular at a valid grid point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_grid(x, y)
    values = np.array(values, dtype=complex)
    loop_degree = (values.shape[2] - 1) // 2
    if degree is None:
        degree = loop_degree
    if n_samples is None:
        n_samples = 4 * max(loop_degree, degree) + 2
    if valid is None:
        valid = np.ones(values.shape[:2], dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool)
        values[~valid] = 0
        values[~valid, loop_degree] = np.eye(values.shape[-1])

    dx = _gradient(values, x, 0)
    dy = _gradient(values, y, 1)
    samples = _sample_coefficients(values, n_samples)
    try:
        inv = np.linalg.inv(samples)
    except np.linalg.LinAlgError:
        dets = np.abs(np.linalg.det(samples)).min(axis=-1)
        i, j = np.unravel_index(np.argmin(dets), dets.shape)
        raise LoopNotInvertible(
            "frame is singular at a grid point", location=(int(i), int(j)), residual=dets[i, j]
        ) from None
    ax = inv @ _sample_coefficients(dx, n_samples)
    ay = inv @ _sample_coefficients(dy, n_samples)
    dz = _coefficients_from_samples((ax - 1j * ay) / 2, degree)
    dzbar = _coefficients_from_samples((ax + 1j * ay) / 2, degree)
    return OneFormField(x, y, dz, dzbar, _neighborhood_valid(valid))


def sample_potential(eta, x, y, degree=1):
    """Potential ``η`` sampled on the grid as a :class:`OneFormField` (zero dz̄ part)."""
    xx, yy = np.meshgrid(x, y, indexing="ij")
    dz = eta.loop_coefficients(xx + 1j * yy, degree)
    valid = np.all(np.isfinite(dz), axis=(-3, -2, -1))
    return OneFormField(x, y, np.where(np.isfinite(dz), dz, 0), np.zeros_like(dz), valid)


def _apply_potential(state, xi, scale):
    """``F · η`` for a stack of loop states ``(m, K, n, n)`` truncated to the window.

    Also returns, per state, the Wiener mass of the product that falls outside the window.
    """
    out = np.zeros_like(state)
    dropped = np.zeros(state.shape[0])
    n_modes = state.shape[1]
    for mode, val in xi.items():
        val = val[:, None] * scale[:, None, None, None]
        if mode >= n_modes or -mode >= n_modes:
            dropped += _norms(state @ val).sum(axis=-1)
            continue
        if mode >= 0:
            out[:, mode:] += state[:, : n_modes - mode] @ val
            lost = state[:, n_modes - mode :] @ val
        else:
            out[:, : n_modes + mode] += state[:, -mode:] @ val
            lost = state[:, :-mode] @ val
        dropped += _norms(lost).sum(axis=-1)
    return out, dropped


def _segment_distance(a, b, p):
    d = b - a
    if d == 0:
        return abs(p - a), 0.0
    t = min(max(((p - a) * np.conj(d)).real / abs(d) ** 2, 0.0), 1.0)
    return abs(a + t * d - p), t


def _blocking_pole(a, b, poles, radius):
    """First pole along ``a → b`` closer than ``radius`` to the segment, or None."""
    hits = []
    for p in poles:
        dist, t = _segment_distance(a, b, p)
        if dist < radius:
            hits.append((t, p))
    return min(hits, key=lambda item: item[0])[1] if hits else None


def route_path(start, end, poles, radius=POLE_RADIUS, depth=0):
    """Piecewise linear path from ``start`` to ``end`` avoiding disks around ``poles``.

    A blocked segment is replaced by two segments through a waypoint beside the first
    blocking pole (left side tried first), recursively.

    :returns: list of complex
        Vertices including both end points.
    :raises PoleOnPath: if an end point is inside a pole disk or no route is found.
    """
    start, end = complex(start), complex(end)
    poles = np.asarray(poles, dtype=complex)
    for point in (start, end):
        if poles.size and np.min(np.abs(poles - point)) < radius:
            raise PoleOnPath(
                f"point {point} is within {radius} of a pole", location=point,
                residual=float(np.min(np.abs(poles - point))),
            )
    pole = _blocking_pole(start, end, poles, radius)
    if pole is None:
        return [start, end]
    if depth >= MAX_DETOURS:
        raise PoleOnPath(f"no pole-avoiding path from {start} to {end}", location=end)
    direction = (end - start) / abs(end - start)
    for side in (1j, -1j):
        waypoint = pole + 3 * radius * side * direction
        try:
            first = route_path(start, waypoint, poles, radius, depth + 1)
            second = route_path(waypoint, end, poles, radius, depth + 1)
        except PoleOnPath:
            continue
        return first[:-1] + second
    raise PoleOnPath(f"no pole-avoiding path from {start} to {end}", location=end)


def _solve_segments(eta, state, starts, ends, rtol, atol):
    """Integrate ``dF = F η`` from ``starts`` to ``ends`` (arrays of equal length).

    :returns: tuple
        Final states and, per segment, the Wiener mass lost to truncation on the way.
    """
    shape = state.shape
    size = state.size
    delta = ends - starts

    def rhs(t, flat):
        xi = eta.xi(starts + t * delta)
        out, dropped = _apply_potential(flat[:size].reshape(shape), xi, delta)
        return np.concatenate([out.ravel(), dropped.astype(complex)])

    y0 = np.concatenate([state.ravel(), np.zeros(shape[0], dtype=complex)])
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"integration failed: {sol.message}")
    logger.debug(f"solve_ivp: {len(starts)} segments, {sol.nfev} evaluations")
    final = sol.y[:, -1]
    return final[:size].reshape(shape), final[size:].real


def integrate_along(eta, path, degree, rtol=ODE_RTOL, atol=ODE_ATOL, pole_radius=POLE_RADIUS):
    """Solve ``dF₋ = F₋ η``, ``F₋(path[0]) = I`` along the polyline ``path``.

    :returns: MatrixLoop
        ``F₋`` at the last vertex.
    :raises PoleOnPath: if a segment passes within ``pole_radius`` of a pole.
    """
    path = [complex(z) for z in path]
    poles = eta.all_poles
    size = eta.matrix_size
    state = np.zeros((1, 2 * degree + 1, size, size), dtype=complex)
    state[0, degree] = np.eye(size)
    tail = 0.0
    for a, b in zip(path[:-1], path[1:]):
        pole = _blocking_pole(a, b, poles, pole_radius)
        if pole is not None:
            raise PoleOnPath(f"path segment {a} -> {b} passes pole {pole}", location=b)
        if a != b:
            state, lost = _solve_segments(
                eta, state, np.array([a]), np.array([b]), rtol, atol
            )
            tail += float(lost[0])
    return MatrixLoop(state[0], tail_mass=tail)


def integrate_field(
    eta, points, degree, basepoint=None, rtol=ODE_RTOL, atol=ODE_ATOL, pole_radius=POLE_RADIUS
):
    """Normalized frames ``F₋(z)`` at many points, collecting per-point failures.

    Points visible from the base point along a straight segment are integrated together
    in one vectorized ODE solve; the others follow their own pole-avoiding polyline.

    :returns: tuple
        Coefficients of shape ``points.shape + (2 degree + 1, n, n)`` (identity where
        integration failed), a dict mapping flat point index to the DpwError raised and
        the per-point Wiener mass lost to truncation (shape ``points.shape``).
    """
    if basepoint is None:
        basepoint = eta.basepoint
    basepoint = complex(basepoint)
    points = np.asarray(points, dtype=complex)
    flat = points.ravel()
    size = eta.matrix_size
    poles = eta.all_poles
    out = np.zeros((flat.size, 2 * degree + 1, size, size), dtype=complex)
    out[:, degree] = np.eye(size)
    tails = np.zeros(flat.size)
    failures = {}

    direct, routed = [], {}
    for idx, z in enumerate(flat):
        try:
            path = route_path(basepoint, z, poles, pole_radius)
        except PoleOnPath as err:
            failures[idx] = err
            continue
        if len(path) == 2:
            direct.append(idx)
        else:
            routed[idx] = path

    if direct:
        idx = np.array(direct)
        state = out[idx]
        try:
            out[idx], tails[idx] = _solve_segments(
                eta, state, np.full(idx.size, basepoint), flat[idx], rtol, atol
            )
        except IntegrationError as err:
            for i in direct:
                failures[i] = err
    for idx, path in routed.items():
        logger.debug(f"integrating to {flat[idx]} along {len(path) - 1} segments")
        try:
            loop = integrate_along(eta, path, degree, rtol, atol, pole_radius)
            out[idx], tails[idx] = loop.coefficients, loop.tail_mass
        except (IntegrationError, PoleOnPath) as err:
            failures[idx] = err
    out[list(failures)] = 0
    tails[list(failures)] = 0.0
    for idx in failures:
        out[idx, degree] = np.eye(size)
    if failures:
        logger.info(f"integration failed at {len(failures)} of {flat.size} points")
    return out.reshape(points.shape + out.shape[1:]), failures, tails.reshape(points.shape)


def integrate_holomorphic(eta, targets, degree, basepoint=None, **kwargs):
    """Solve ``dF₋ = F₋ η``, ``F₋(z₀) = I`` and return ``F₋`` at each target.

    :param eta: PotentialOneForm
    :param targets: sequence of complex
    :param degree: int
        Loop truncation N.
    :param basepoint: complex, optional
        Initial point (default ``eta.basepoint``).
    :returns: list of MatrixLoop
    :raises PoleOnPath: if a target cannot be reached without crossing a pole.
    :raises IntegrationError: if the ODE solver fails.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    coeffs, failures, tails = integrate_field(eta, targets, degree, basepoint, **kwargs)
    if failures:
        idx = min(failures)
        raise failures[idx].with_location(complex(targets[idx]))
    return [MatrixLoop(c, tail_mass=t) for c, t in zip(coeffs, tails)]

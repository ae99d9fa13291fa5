# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Truncated twisted matrix loops.

A loop ``g(λ) = Σ_k c_k λ^k`` is stored as its Fourier coefficients for
``k = -N, ..., N`` in an array of shape ``(2N + 1, n, n)`` (mode ``k`` at index
``k + N``). Products are evaluated exactly on ``4N + 1`` or more equispaced points of the
unit circle and truncated back to the window; the Wiener mass dropped by each truncation
is accumulated in ``MatrixLoop.tail_mass`` so truncation error stays observable.

The group structure (twisting involution σ, real form star τ and Cartan involution θ) is
described by :class:`GroupModel`. With ``ε = -1`` a loop is twisted when
``σ(c_k) = (-1)^k c_k`` for every mode.
"""

import functools
import logging
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from dpwkit.errors import DimensionMismatch, LoopNotInvertible

__all__ = [
    "GroupModel",
    "MatrixLoop",
    "TwistCheck",
    "identity_loop",
    "loop_multiply",
    "loop_inverse",
    "loop_evaluate",
    "loop_sample",
    "loop_from_samples",
    "loop_exp",
    "loop_conjugate",
    "check_twisted",
    "tau_star",
    "wiener_norm",
    "random_twisted_loop",
    "random_real_element",
    "unit_circle",
]

logger = logging.getLogger(__name__)

TwistCheck = namedtuple("TwistCheck", ["passed", "violation"])

DEFAULT_TRUNCATION = 8
STRUCTURAL_TOL = 1e-10


def _norms(arr):
    """Frobenius norms over the last two axes."""
    return np.linalg.norm(arr, axis=(-2, -1))


def _dagger(arr):
    return np.conj(np.swapaxes(arr, -1, -2))


def unit_circle(n_samples):
    """Equispaced points ``exp(2πij/M)`` on the unit circle."""
    return np.exp(2j * np.pi * np.arange(n_samples) / n_samples)


@dataclass(frozen=True, eq=False)
class GroupModel:
    """
    Concrete inner symmetric space setup.

    σ acts on matrices by conjugation with ``twist_matrix`` Q. The real form star is
    ``g*(λ) = s · conj-transpose(g(1/λ̄)) · s⁻¹`` with ``s = realform_star``; the Cartan
    involution θ is the same construction with ``s = cartan_matrix``. On the Lie algebra
    the corresponding antilinear involutions are ``τ(X) = -s X^H s⁻¹`` and
    ``θ(X) = -c X^H c⁻¹``.

    Parameters
    ----------
    twist_matrix : (n, n) array
        Matrix Q defining ``σ(g) = Q g Q⁻¹``.
    realform_star : (n, n) array
        Signature matrix of the real form G.
    cartan_matrix : (n, n) array
        Matrix implementing θ, which fixes the compact real form U.
    name : str
        Label used in reports.
    """

    twist_matrix: np.ndarray
    realform_star: np.ndarray
    cartan_matrix: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        for attr in ("twist_matrix", "realform_star", "cartan_matrix"):
            val = np.asarray(getattr(self, attr), dtype=complex)
            if val.ndim != 2 or val.shape[0] != val.shape[1]:
                raise ValueError(f"{attr} must be a square matrix, got shape {val.shape}")
            object.__setattr__(self, attr, val)
        shapes = {self.twist_matrix.shape, self.realform_star.shape, self.cartan_matrix.shape}
        if len(shapes) != 1:
            raise DimensionMismatch(f"group model matrices have shapes {sorted(shapes)}")

    @classmethod
    def sphere(cls):
        """Compact rank-one model: SU(2) with Q = diag(1, -1), s = I."""
        return cls(np.diag([1.0, -1.0]), np.eye(2), np.eye(2), name="sphere")

    @classmethod
    def hyperbolic(cls):
        """Indefinite rank-one model: SU(1,1) with Q = diag(1, -1), s = diag(1, -1)."""
        return cls(np.diag([1.0, -1.0]), np.diag([1.0, -1.0]), np.eye(2), name="hyperbolic")

    @classmethod
    def by_name(cls, name):
        models = {"sphere": cls.sphere, "hyperbolic": cls.hyperbolic}
        try:
            return models[name]()
        except KeyError:
            raise ValueError(
                f"unknown group model {name!r}, expected one of {sorted(models)}"
            ) from None

    @property
    def matrix_size(self):
        return self.twist_matrix.shape[0]

    @functools.cached_property
    def twist_inverse(self):
        return np.linalg.inv(self.twist_matrix)

    @property
    def is_compact(self):
        """True if the real form star is positive definite (G is the compact form)."""
        herm = (self.realform_star + _dagger(self.realform_star)) / 2
        return bool(np.all(np.linalg.eigvalsh(herm) > 0))

    @property
    def default_form(self):
        return "compact" if self.is_compact else "indefinite"

    def star_matrix(self, form=None):
        """Matrix ``s`` of the star operation for ``form``.

        :param form: None, "real", "compact" or "indefinite"
            None and "real" select the real form G of this model, "compact" the compact
            form U fixed by θ and "indefinite" the (necessarily non-compact) real form G.
        """
        if form in (None, "real"):
            return self.realform_star
        if form == "compact":
            return self.cartan_matrix
        if form == "indefinite":
            if self.is_compact:
                raise ValueError(f"model {self.name!r} has no indefinite real form")
            return self.realform_star
        raise ValueError(f"unknown real form {form!r}")

    def sigma(self, x):
        return self.twist_matrix @ x @ self.twist_inverse

    def k_part(self, x):
        """Projection onto the +1 eigenspace of σ on the Lie algebra."""
        return (x + self.sigma(x)) / 2

    def p_part(self, x):
        """Projection onto the -1 eigenspace of σ on the Lie algebra."""
        return (x - self.sigma(x)) / 2

    def tau(self, x):
        s = self.realform_star
        return -s @ _dagger(x) @ np.linalg.inv(s)

    def theta(self, x):
        c = self.cartan_matrix
        return -c @ _dagger(x) @ np.linalg.inv(c)

    def lie_algebra_basis(self):
        """Basis of the traceless matrices sl(n, C), shape ``(n² - 1, n, n)``."""
        n = self.matrix_size
        basis = []
        for i in range(n):
            for j in range(n):
                if i != j:
                    mat = np.zeros((n, n), dtype=complex)
                    mat[i, j] = 1
                    basis.append(mat)
        for i in range(n - 1):
            mat = np.zeros((n, n), dtype=complex)
            mat[i, i] = 1
            mat[i + 1, i + 1] = -1
            basis.append(mat)
        return np.array(basis)

    def involution_residuals(self):
        """Residuals of involutivity and pairwise commutation of σ, τ, θ.

        Antilinear maps composed with linear ones are determined by their values on a
        complex basis, so the traceless basis suffices.

        :returns: dict
            Maximum Frobenius residual for each identity.
        """
        basis = self.lie_algebra_basis()
        sig, tau, theta = self.sigma, self.tau, self.theta
        pairs = {
            "sigma_squared": (sig(sig(basis)), basis),
            "tau_squared": (tau(tau(basis)), basis),
            "theta_squared": (theta(theta(basis)), basis),
            "sigma_tau": (sig(tau(basis)), tau(sig(basis))),
            "sigma_theta": (sig(theta(basis)), theta(sig(basis))),
            "tau_theta": (tau(theta(basis)), theta(tau(basis))),
        }
        return {key: float(np.max(_norms(a - b))) for key, (a, b) in pairs.items()}

    def in_fixed_group(self, x, tol=1e-9):
        """True if ``x`` commutes with the twist (lies in K^C for this σ)."""
        return bool(np.max(_norms(self.sigma(x) - x)) <= tol)

    def in_real_form(self, x, tol=1e-9, form=None):
        """True if the constant matrix ``x`` lies in the real form, ``x^H s x = s``."""
        s = self.star_matrix(form)
        resid = _dagger(x) @ s @ x - s
        return bool(np.max(_norms(resid)) <= tol)

    def conjugated(self, h):
        """Model transported by ``Ad(h)``: σ₁ = Ad(h)σ Ad(h)⁻¹, θ₁ = Ad(h)θ Ad(h)⁻¹.

        The real form star is unchanged (τ is the same for every base point).
        """
        h = np.asarray(h, dtype=complex)
        if h.shape != self.twist_matrix.shape:
            raise DimensionMismatch(
                f"h has shape {h.shape}, model matrices are {self.twist_matrix.shape}"
            )
        twist = h @ self.twist_matrix @ np.linalg.inv(h)
        cartan = h @ self.cartan_matrix @ _dagger(h)
        return GroupModel(twist, self.realform_star, cartan, name=f"{self.name}:moved")


@dataclass(frozen=True, eq=False)
class MatrixLoop:
    """
    Truncated Laurent series with square matrix coefficients.

    Parameters
    ----------
    coefficients : (2N + 1, n, n) array
        Coefficient of ``λ^k`` at index ``k + N``.
    parity : str
        Declared twisting class, "group" or "algebra".
    tail_mass : float
        Estimate of the Wiener mass discarded by truncation while computing this loop.
    """

    coefficients: np.ndarray
    parity: str = "group"
    tail_mass: float = field(default=0.0)

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=complex)
        if coeffs.ndim != 3 or coeffs.shape[1] != coeffs.shape[2] or coeffs.shape[0] % 2 == 0:
            raise DimensionMismatch(
                f"loop coefficients must have shape (2N+1, n, n), got {coeffs.shape}"
            )
        if self.parity not in ("group", "algebra"):
            raise ValueError(f"parity must be 'group' or 'algebra', not {self.parity!r}")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "tail_mass", float(self.tail_mass))

    @property
    def degree(self):
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def matrix_size(self):
        return self.coefficients.shape[1]

    @property
    def modes(self):
        return np.arange(-self.degree, self.degree + 1)

    def __getitem__(self, k):
        """Coefficient of ``λ^k`` (zero outside the window)."""
        if abs(k) > self.degree:
            return np.zeros((self.matrix_size, self.matrix_size), dtype=complex)
        return self.coefficients[k + self.degree]

    def __matmul__(self, other):
        if isinstance(other, MatrixLoop):
            return loop_multiply(self, other)
        return NotImplemented

    def __repr__(self):
        return (
            f"<MatrixLoop n={self.matrix_size} N={self.degree} parity={self.parity} "
            f"wiener={self.wiener_norm():.4g}>"
        )

    @classmethod
    def from_modes(cls, modes, degree, size=None, parity="group"):
        """Create a loop from ``{k: c_k}``; modes outside ``[-degree, degree]`` are an error."""
        if size is None:
            size = np.asarray(next(iter(modes.values()))).shape[0]
        coeffs = np.zeros((2 * degree + 1, size, size), dtype=complex)
        for k, val in modes.items():
            if abs(k) > degree:
                raise ValueError(f"mode {k} outside truncation window of degree {degree}")
            coeffs[k + degree] = val
        return cls(coeffs, parity=parity)

    @classmethod
    def constant(cls, matrix, degree, parity="group"):
        matrix = np.asarray(matrix, dtype=complex)
        return cls.from_modes({0: matrix}, degree, size=matrix.shape[0], parity=parity)

    def with_degree(self, degree):
        """Zero-pad or truncate to ``degree``; truncated mass is added to ``tail_mass``."""
        coeffs, dropped = _resize(self.coefficients, degree)
        return MatrixLoop(coeffs, self.parity, self.tail_mass + float(dropped))

    def replace(self, coefficients, tail_mass=None):
        if tail_mass is None:
            tail_mass = self.tail_mass
        return MatrixLoop(coefficients, self.parity, tail_mass)

    def wiener_norm(self):
        return wiener_norm(self)

    def mode_mass(self, which):
        """Wiener mass of the "negative", "positive" or "nonzero" modes."""
        norms = _norms(self.coefficients)
        modes = self.modes
        select = {"negative": modes < 0, "positive": modes > 0, "nonzero": modes != 0}
        return float(np.sum(norms[select[which]]))

    def evaluate(self, lam):
        return loop_evaluate(self, lam)

    def to_dict(self):
        """JSON representation ``{n, N, coefficients: [{k, re, im}]}`` (nonzero modes)."""
        out = {"n": self.matrix_size, "N": self.degree, "parity": self.parity}
        out["coefficients"] = [
            {"k": int(k), "re": c.real.tolist(), "im": c.imag.tolist()}
            for k, c in zip(self.modes, self.coefficients)
            if np.any(c != 0)
        ]
        return out

    @classmethod
    def from_dict(cls, data, degree=None):
        """Inverse of :meth:`to_dict`; ``degree`` overrides the stored ``N``."""
        size = int(data["n"])
        stored = int(data["N"])
        modes = {}
        for item in data["coefficients"]:
            modes[int(item["k"])] = np.array(item["re"], dtype=float) + 1j * np.array(
                item["im"], dtype=float
            )
        loop = cls.from_modes(modes, stored, size=size, parity=data.get("parity", "group"))
        return loop if degree is None else loop.with_degree(degree)


def identity_loop(size=2, degree=DEFAULT_TRUNCATION):
    return MatrixLoop.constant(np.eye(size), degree)


def wiener_norm(g):
    """Wiener norm ``Σ_k ‖c_k‖`` (Frobenius norm of each coefficient)."""
    return float(np.sum(_norms(g.coefficients)))


def _resize(coeffs, degree):
    """Resize coefficient stacks ``(..., 2N+1, n, n)`` to ``degree``.

    Returns the resized array and the Wiener mass dropped (per leading index).
    """
    old = (coeffs.shape[-3] - 1) // 2
    if degree >= old:
        pad = [(0, 0)] * coeffs.ndim
        pad[-3] = (degree - old, degree - old)
        dropped = np.zeros(coeffs.shape[:-3])
        return np.pad(coeffs, pad), dropped
    cut = old - degree
    kept = coeffs[..., cut : coeffs.shape[-3] - cut, :, :]
    outside = np.concatenate(
        [coeffs[..., :cut, :, :], coeffs[..., coeffs.shape[-3] - cut :, :, :]], axis=-3
    )
    return kept, _norms(outside).sum(axis=-1)


def _sample_coefficients(coeffs, n_samples):
    """Values ``Σ_k c_k λ_j^k`` at ``λ_j = exp(2πij/M)`` along axis -3."""
    degree = (coeffs.shape[-3] - 1) // 2
    if n_samples < 2 * degree + 1:
        raise ValueError(f"need at least {2 * degree + 1} samples, got {n_samples}")
    shape = list(coeffs.shape)
    shape[-3] = n_samples
    spread = np.zeros(shape, dtype=complex)
    spread[..., np.arange(-degree, degree + 1) % n_samples, :, :] = coeffs
    return np.fft.ifft(spread, axis=-3) * n_samples


def _coefficients_from_samples(values, degree):
    """Coefficients ``k = -degree..degree`` from unit-circle samples along axis -3."""
    n_samples = values.shape[-3]
    coeffs = np.fft.fft(values, axis=-3) / n_samples
    return coeffs[..., np.arange(-degree, degree + 1) % n_samples, :, :]


def _multiply_coefficients(a, b, degree):
    """Truncated Cauchy product of coefficient stacks.

    The full product (modes up to ``Na + Nb``) is computed exactly by sampling on
    ``2(Na + Nb) + 1`` points, then truncated to ``degree``.

    :returns: tuple
        Product coefficients and the Wiener mass discarded by the truncation.
    """
    full = (a.shape[-3] - 1) // 2 + (b.shape[-3] - 1) // 2
    n_samples = 2 * full + 1
    values = _sample_coefficients(a, n_samples) @ _sample_coefficients(b, n_samples)
    prod = _coefficients_from_samples(values, full)
    return _resize(prod, degree)


def loop_multiply(a, b, degree=None):
    """Product ``a·b`` truncated to ``degree`` (default: the larger input degree).

    :param a: MatrixLoop
    :param b: MatrixLoop
    :param degree: int, optional
        Truncation of the result.
    :returns: MatrixLoop
    """
    if a.matrix_size != b.matrix_size:
        raise DimensionMismatch(
            f"cannot multiply loops of matrix size {a.matrix_size} and {b.matrix_size}"
        )
    if degree is None:
        degree = max(a.degree, b.degree)
    coeffs, dropped = _multiply_coefficients(a.coefficients, b.coefficients, degree)
    parity = "group" if "group" in (a.parity, b.parity) else "algebra"
    return MatrixLoop(coeffs, parity, a.tail_mass + b.tail_mass + float(dropped))


def _block_toeplitz(coeffs, rows, cols):
    """Block matrix with block ``(r, c) = coeffs[r - c]`` for the given mode lists."""
    degree = (coeffs.shape[0] - 1) // 2
    size = coeffs.shape[1]
    out = np.zeros((len(rows) * size, len(cols) * size), dtype=complex)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            k = r - c
            if abs(k) <= degree:
                out[i * size : (i + 1) * size, j * size : (j + 1) * size] = coeffs[
                    k + degree
                ]
    return out


def _reciprocal_condition(mat):
    cond = np.linalg.cond(mat)
    return 0.0 if not np.isfinite(cond) else 1.0 / cond


def loop_inverse(g, rcond_min=1e-12):
    """Inverse loop from the block Toeplitz convolution system ``g · X = I``.

    The unknowns are the coefficients ``X_l, |l| <= N``; the equations are the modes
    ``|k| <= N`` of the truncated product.

    :param g: MatrixLoop
    :param rcond_min: float
        Reciprocal condition number below which the system is declared singular.
    :returns: MatrixLoop
    :raises LoopNotInvertible: if the system is singular at this truncation.
    """
    degree, size = g.degree, g.matrix_size
    modes = np.arange(-degree, degree + 1)
    mat = _block_toeplitz(g.coefficients, modes, modes)
    rcond = _reciprocal_condition(mat)
    logger.debug(f"loop_inverse: N={degree} rcond={rcond:.3e}")
    if rcond < rcond_min:
        raise LoopNotInvertible(
            f"loop is not invertible at truncation N={degree}", residual=rcond
        )
    rhs = np.zeros((len(modes) * size, size), dtype=complex)
    rhs[degree * size : (degree + 1) * size] = np.eye(size)
    sol = scipy.linalg.solve(mat, rhs)
    coeffs = sol.reshape(len(modes), size, size)
    _, dropped = _multiply_coefficients(g.coefficients, coeffs, degree)
    return MatrixLoop(coeffs, g.parity, g.tail_mass + float(dropped))


def loop_evaluate(g, lam):
    """Value ``Σ_k c_k λ₀^k`` at a nonzero complex ``λ₀``."""
    lam = complex(lam)
    if lam == 0:
        raise ValueError("loops cannot be evaluated at λ = 0")
    powers = lam ** g.modes.astype(float)
    return np.einsum("k,kij->ij", powers, g.coefficients)


def loop_sample(g, n_samples=None):
    """Values of ``g`` on ``n_samples`` equispaced unit-circle points (default ``4N + 2``)."""
    if n_samples is None:
        n_samples = 4 * g.degree + 2
    return _sample_coefficients(g.coefficients, n_samples)


def loop_from_samples(values, degree, parity="group"):
    """Loop of truncation ``degree`` from its samples on the unit circle."""
    values = np.asarray(values, dtype=complex)
    n_samples = values.shape[0]
    coeffs = _coefficients_from_samples(values, degree)
    tail = 0.0
    if n_samples > 2 * degree + 1:
        full = _coefficients_from_samples(values, (n_samples - 1) // 2)
        tail = float(_resize(full, degree)[1])
    return MatrixLoop(coeffs, parity, tail)


def loop_exp(x, degree=None, oversample=4):
    """Exponential of an algebra-valued loop, evaluated pointwise on the circle.

    :param x: MatrixLoop
    :param degree: int, optional
        Truncation of the result (default ``x.degree``).
    :param oversample: int
        Samples per retained mode; aliasing error decays with the tail of ``exp(x)``.
    """
    if degree is None:
        degree = x.degree
    n_samples = oversample * (2 * max(degree, x.degree) + 1)
    values = scipy.linalg.expm(_sample_coefficients(x.coefficients, n_samples))
    out = loop_from_samples(values, degree, parity="group")
    return out.replace(out.coefficients, tail_mass=out.tail_mass + x.tail_mass)


def loop_conjugate(h, g):
    """``h g h⁻¹`` for a constant invertible matrix ``h``."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (g.matrix_size, g.matrix_size):
        raise DimensionMismatch(f"h has shape {h.shape}, loop matrix size {g.matrix_size}")
    return g.replace(h @ g.coefficients @ np.linalg.inv(h))


def check_twisted(g, model, tol=STRUCTURAL_TOL):
    """Check ``σ(c_k) = (-1)^k c_k`` for every mode.

    :returns: TwistCheck
        ``(passed, violation)`` with the maximum Frobenius violation.
    """
    if g.matrix_size != model.matrix_size:
        raise DimensionMismatch(
            f"loop matrix size {g.matrix_size} does not match model size {model.matrix_size}"
        )
    signs = np.where(g.modes % 2 == 0, 1.0, -1.0)[:, None, None]
    resid = model.sigma(g.coefficients) - signs * g.coefficients
    violation = float(np.max(_norms(resid)))
    return TwistCheck(violation <= tol, violation)


def tau_star(g, model, form=None):
    """Star ``g*(λ) = s · conj-transpose(g(1/λ̄)) · s⁻¹``, i.e. ``c_k ↦ s c_{-k}^H s⁻¹``.

    :param form: None, "real", "compact" or "indefinite"
        Selects ``s`` (see :meth:`GroupModel.star_matrix`).
    """
    s = model.star_matrix(form)
    flipped = g.coefficients[::-1]
    return g.replace(s @ _dagger(flipped) @ np.linalg.inv(s))


def random_twisted_loop(rng, model, degree, *, spread=2, scale=0.05, parity="group"):
    """Random twisted loop with modes ``|k| <= spread`` and coefficients of size ``scale``.

    Group loops are ``I + small``; algebra loops have no identity term.
    """
    size = model.matrix_size
    modes = {}
    for k in range(-spread, spread + 1):
        raw = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        part = model.k_part(raw) if k % 2 == 0 else model.p_part(raw)
        modes[k] = scale * part
    if parity == "group":
        modes[0] = modes[0] + np.eye(size)
    return MatrixLoop.from_modes(modes, degree, size=size, parity=parity)


def random_real_element(rng, model, scale=0.5, form=None):
    """Random element ``exp(X)`` of the real form, X fixed by ``X ↦ -s X^H s⁻¹``."""
    size = model.matrix_size
    s = model.star_matrix(form)
    raw = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    raw = raw - np.trace(raw) / size * np.eye(size)
    x = (raw - s @ _dagger(raw) @ np.linalg.inv(s)) / 2
    return scipy.linalg.expm(scale * x)

# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Birkhoff and Iwasawa factorization of truncated twisted loops.

Birkhoff: ``g = g₋ g₊`` with ``g₋ = I + O(λ⁻¹)`` and ``g₊`` holomorphic at ``λ = 0``. The
coefficients of ``g₋⁻¹`` solve one dense block Toeplitz system expressing that the
strictly negative modes of ``g₋⁻¹ g`` vanish. A numerically singular system means ``g`` is
outside the big cell.

Iwasawa: ``g = F V₊`` with ``F`` in the real form selected by ``form`` and ``V₊`` in Λ⁺
with constant term upper triangular with positive diagonal. It is computed from the
spectral factorization ``P = g* g = V₊* V₊`` of the self-adjoint loop ``P``, either from the
Birkhoff factorization of ``P`` (dense solve) or, for the compact form at large
truncation, by a Newton iteration on the Λ⁺ factor.

Both factorizations work at an internal degree ``2N`` (inputs zero padded) and truncate
the factors back to ``N``.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from dpwkit.errors import DegenerateGauge, OutsideBigCell, OutsideIwasawaCell
from dpwkit.loopcore import (
    MatrixLoop,
    _block_toeplitz,
    _coefficients_from_samples,
    _dagger,
    _multiply_coefficients,
    _norms,
    _reciprocal_condition,
    _resize,
    _sample_coefficients,
    tau_star,
)

__all__ = [
    "BirkhoffPair",
    "IwasawaPair",
    "birkhoff_split",
    "iwasawa_split",
    "gauge_normalize",
    "real_form_violation",
    "minus_inverse",
    "plus_inverse",
]

logger = logging.getLogger(__name__)

BIG_CELL_RCOND = 1e-12
NEWTON_MAX_DEGREE = 16
MEMBERSHIP_SAMPLES = 16
POSITIVITY_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class BirkhoffPair:
    """
    Factors of ``g = minus · plus``.

    ``minus`` has only nonpositive modes and constant term I; ``plus`` has only
    nonnegative modes. ``rcond`` is the reciprocal condition number of the Toeplitz
    system and ``residual`` the Wiener norm of ``minus · plus - g``.
    """

    minus: MatrixLoop
    plus: MatrixLoop
    rcond: float
    residual: float


@dataclass(frozen=True, eq=False)
class IwasawaPair:
    """
    Factors of ``g = real_part · plus_part``.

    ``membership`` is the pointwise real-form violation of ``real_part`` on the unit
    circle and ``residual`` the Wiener norm of ``real_part · plus_part - g``.
    """

    real_part: MatrixLoop
    plus_part: MatrixLoop
    form: str
    residual: float = 0.0
    membership: float = 0.0


def minus_inverse(coeffs):
    """Inverse of ``I + Σ_{k<0} c_k λ^k`` by forward recursion, same window."""
    degree = (coeffs.shape[0] - 1) // 2
    out = np.zeros_like(coeffs)
    out[degree] = np.eye(coeffs.shape[1])
    for m in range(1, degree + 1):
        acc = np.zeros_like(coeffs[0])
        for j in range(1, m + 1):
            acc += coeffs[degree - j] @ out[degree - (m - j)]
        out[degree - m] = -acc
    return out


def plus_inverse(coeffs):
    """Inverse of ``Σ_{k>=0} c_k λ^k`` (invertible ``c_0``) by forward recursion."""
    degree = (coeffs.shape[0] - 1) // 2
    out = np.zeros_like(coeffs)
    c0_inv = np.linalg.inv(coeffs[degree])
    out[degree] = c0_inv
    for m in range(1, degree + 1):
        acc = np.zeros_like(coeffs[0])
        for j in range(1, m + 1):
            acc += coeffs[degree + j] @ out[degree + m - j]
        out[degree + m] = -c0_inv @ acc
    return out


def _reconstruction_residual(a, b, target):
    prod, _ = _multiply_coefficients(a.coefficients, b.coefficients, target.degree)
    return float(np.sum(_norms(prod - target.coefficients)))


def birkhoff_split(g, rcond_min=BIG_CELL_RCOND, working_degree=None):
    """Birkhoff factorization ``g = g₋ g₊``.

    :param g: MatrixLoop
        Twisted loop, invertible on the unit circle.
    :param rcond_min: float
        Reciprocal condition number below which ``g`` is declared outside the big cell.
    :param working_degree: int, optional
        Truncation used for the linear solve (default ``2N``).
    :returns: BirkhoffPair
    :raises OutsideBigCell: if the Toeplitz system is numerically singular.
    """
    degree, size = g.degree, g.matrix_size
    if working_degree is None:
        working_degree = 2 * degree
    work = max(working_degree, degree, 1)
    gw, _ = _resize(g.coefficients, work)

    # Rows are the equations for modes k = -W..-1 of Y·g, columns the unknown Y_j,
    # transposed so the unknowns stand on the right.
    gt = np.swapaxes(gw, -1, -2)
    modes = np.arange(-work, 0)
    mat = _block_toeplitz(gt, modes, modes)
    rcond = _reciprocal_condition(mat)
    logger.debug(f"birkhoff_split: N={degree} W={work} rcond={rcond:.3e}")
    if rcond < rcond_min:
        raise OutsideBigCell(
            f"loop is outside the Birkhoff big cell (rcond={rcond:.3e})", residual=rcond
        )
    rhs = -np.concatenate([gt[k + work] for k in modes], axis=0)
    sol = scipy.linalg.solve(mat, rhs)

    y_coeffs = np.zeros_like(gw)
    y_coeffs[work] = np.eye(size)
    for idx, k in enumerate(modes):
        y_coeffs[k + work] = sol[idx * size : (idx + 1) * size].T

    plus_w, _ = _multiply_coefficients(y_coeffs, gw, work)
    plus_w[:work] = 0
    minus_w = minus_inverse(y_coeffs)

    minus_c, minus_drop = _resize(minus_w, degree)
    plus_c, plus_drop = _resize(plus_w, degree)
    tail = g.tail_mass + float(minus_drop) + float(plus_drop)
    minus = MatrixLoop(minus_c, g.parity, tail)
    plus = MatrixLoop(plus_c, g.parity, tail)
    return BirkhoffPair(minus, plus, rcond, _reconstruction_residual(minus, plus, g))


def real_form_violation(f, model, form=None, n_samples=MEMBERSHIP_SAMPLES):
    """Max over ``n_samples`` circle points of ``‖F(λ)^H s F(λ) - s‖``."""
    s = model.star_matrix(form)
    n_samples = max(n_samples, 2 * f.degree + 1)
    values = _sample_coefficients(f.coefficients, n_samples)
    resid = _dagger(values) @ s @ values - s
    return float(np.max(_norms(resid)))


def _twist_classes(model):
    """Index classes of equal diagonal entries of the twist matrix (K^C blocks)."""
    twist = model.twist_matrix
    if np.max(np.abs(twist - np.diag(np.diag(twist)))) > 0:
        raise ValueError("Iwasawa gauge requires a diagonal twist matrix")
    diag = np.round(np.diag(twist), 12)
    classes = []
    for val in dict.fromkeys(diag.tolist()):
        classes.append(np.flatnonzero(diag == val))
    return classes


def _positive_gauge(const, model, star):
    """Factor ``C = D s D^H s`` with D in K^C lower triangular with positive diagonal."""
    classes = _twist_classes(model)
    star_diag = np.diag(star)
    if np.max(np.abs(star - np.diag(star_diag))) > 0:
        raise ValueError("Iwasawa gauge requires a diagonal star matrix")
    gauge = np.zeros_like(const)
    for idx in classes:
        signs = star_diag[idx]
        if np.max(np.abs(signs - signs[0])) > 0:
            raise ValueError("star matrix must be constant on each K^C block")
        block = const[np.ix_(idx, idx)]
        block = (block + _dagger(block)) / 2
        try:
            gauge[np.ix_(idx, idx)] = scipy.linalg.cholesky(block, lower=True)
        except np.linalg.LinAlgError:
            eig = float(np.min(np.linalg.eigvalsh(block)))
            raise OutsideIwasawaCell(
                f"loop is outside the Iwasawa cell (gauge block eigenvalue {eig:.3e})",
                residual=eig,
            ) from None
    return gauge


def _spectral_dense(p, model, star, rcond_min):
    """Λ⁺ factor of ``P = V* V`` from the Birkhoff factorization of P."""
    try:
        pair = birkhoff_split(p, rcond_min=rcond_min)
    except OutsideBigCell as err:
        raise OutsideIwasawaCell(
            f"spectral factorization failed: {err.message}", residual=err.residual
        ) from None
    plus = pair.plus.coefficients
    const = plus[p.degree]
    gauge = _positive_gauge(const, model, star)
    return np.linalg.inv(gauge) @ plus


def _plus_projection(values, degree):
    """Modes ``k > 0`` plus half the constant term of sampled values."""
    coeffs = _coefficients_from_samples(values, degree)
    coeffs[:degree] = 0
    coeffs[degree] *= 0.5
    return _sample_coefficients(coeffs, values.shape[0])


def _spectral_newton(p, max_iter=100, rtol=1e-13):
    """Λ⁺ factor of a pointwise positive ``P = V^H V`` by Newton iteration.

    Works on ``S = P^T = ψ ψ^H`` with ψ holomorphic in the disk, initialized from the
    Cholesky factor of the λ-mean of S; then ``V = ψ^T``.

    :returns: ndarray or None
        Coefficients of V at degree ``p.degree``, or None if not converged.
    """
    degree = p.degree
    n_samples = 4 * degree + 2
    spec = np.swapaxes(_sample_coefficients(p.coefficients, n_samples), -1, -2)
    mean = spec.mean(axis=0)
    mean = (mean + _dagger(mean)) / 2
    try:
        psi = np.broadcast_to(np.linalg.cholesky(mean), spec.shape).copy()
    except np.linalg.LinAlgError:
        return None
    ident = np.eye(spec.shape[-1])
    scale = np.max(np.abs(spec))
    for it in range(max_iter):
        psi_inv = np.linalg.inv(psi)
        inner = psi_inv @ spec @ _dagger(psi_inv) + ident
        psi = psi @ _plus_projection(inner, degree)
        err = np.max(np.abs(spec - psi @ _dagger(psi))) / scale
        if err < rtol:
            logger.debug(f"spectral Newton converged in {it + 1} iterations (err={err:.2e})")
            break
    else:
        logger.debug(f"spectral Newton did not converge (err={err:.2e})")
        return None

    coeffs = _coefficients_from_samples(np.swapaxes(psi, -1, -2), degree)
    coeffs[:degree] = 0
    q, _ = np.linalg.qr(coeffs[degree])
    return _dagger(q) @ coeffs


def gauge_normalize(pair):
    """Make the diagonal of the constant term of ``plus_part`` positive.

    The unitary diagonal factor ``U`` is moved across: ``F ↦ F U``, ``V₊ ↦ U⁻¹ V₊``, so
    the product is unchanged.

    :raises DegenerateGauge: if a diagonal entry of the constant term vanishes.
    """
    plus = pair.plus_part
    diag = np.diag(plus[0])
    size = np.abs(diag)
    if np.min(size) <= 1e-14 * max(1.0, float(np.max(size))):
        raise DegenerateGauge(
            "constant term of the plus part has a zero diagonal entry",
            residual=float(np.min(size)),
        )
    phase = diag / size
    real = pair.real_part.replace(pair.real_part.coefficients * phase[None, None, :])
    plus = plus.replace(np.conj(phase)[None, :, None] * plus.coefficients)
    return IwasawaPair(real, plus, pair.form, pair.residual, pair.membership)


def iwasawa_split(
    g,
    model,
    form=None,
    rcond_min=BIG_CELL_RCOND,
    newton_max_degree=NEWTON_MAX_DEGREE,
    n_samples=MEMBERSHIP_SAMPLES,
):
    """Iwasawa factorization ``g = F V₊``.

    :param g: MatrixLoop
        Twisted loop.
    :param model: GroupModel
    :param form: "compact" or "indefinite", optional
        Real form of F (default: the model's own real form).
    :param rcond_min: float
        Big-cell threshold for the dense spectral factorization.
    :param newton_max_degree: int
        Truncations up to this degree use the dense solve; above it the compact form uses
        the Newton iteration (falling back to the dense solve if it does not converge).
    :param n_samples: int
        Circle samples used for the positivity and membership checks.
    :returns: IwasawaPair
    :raises OutsideIwasawaCell: if the spectral factorization breaks down.
    """
    if form is None:
        form = model.default_form
    star = model.star_matrix(form)
    degree = g.degree
    work = 2 * degree
    gw = g.with_degree(work)
    p = MatrixLoop(
        _multiply_coefficients(tau_star(gw, model, form).coefficients, gw.coefficients, work)[0]
    )

    if form == "compact":
        n_check = max(n_samples, 2 * work + 1)
        values = _sample_coefficients(p.coefficients, n_check)
        values = (values + _dagger(values)) / 2
        eig = np.linalg.eigvalsh(values)
        low = float(np.min(eig))
        if low <= POSITIVITY_RTOL * float(np.max(eig)):
            raise OutsideIwasawaCell(
                f"g*g is not positive on the unit circle (min eigenvalue {low:.3e})",
                residual=low,
            )

    plus_w = None
    use_newton = (
        form == "compact"
        and degree > newton_max_degree
        and np.allclose(star, np.eye(star.shape[0]))
    )
    if use_newton:
        plus_w = _spectral_newton(p)
    if plus_w is None:
        plus_w = _spectral_dense(p, model, star, rcond_min)

    real_w, _ = _multiply_coefficients(gw.coefficients, plus_inverse(plus_w), work)
    real_c, real_drop = _resize(real_w, degree)
    plus_c, plus_drop = _resize(plus_w, degree)
    tail = g.tail_mass + float(real_drop) + float(plus_drop)
    real = MatrixLoop(real_c, g.parity, tail)
    plus = MatrixLoop(plus_c, g.parity, tail)
    pair = gauge_normalize(IwasawaPair(real, plus, form))
    return IwasawaPair(
        pair.real_part,
        pair.plus_part,
        form,
        _reconstruction_residual(pair.real_part, pair.plus_part, g),
        real_form_violation(pair.real_part, model, form, n_samples),
    )

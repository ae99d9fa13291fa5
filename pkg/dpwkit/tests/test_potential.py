import numpy as np
import pytest

from dpwkit.errors import GridTooCoarse, NotLieAlgebraValued, PoleOnPath, SchemaError
from dpwkit.loopcore import GroupModel, MatrixLoop, loop_exp
from dpwkit.potential import (
    OneFormField,
    PotentialOneForm,
    PotentialTerm,
    decompose_mc,
    flatness_residual,
    integrate_along,
    integrate_field,
    integrate_holomorphic,
    loopify,
    mc_form,
    route_path,
    sample_potential,
)

SPHERE = GroupModel.sphere()
A = np.array([[0.0, 1.0], [1.0, 0.0]])
D = np.diag([1.0, -1.0])
E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
E21 = E12.T


def constant_form(a, b=None, n=3):
    x = np.linspace(-0.1, 0.1, n)
    dz = np.broadcast_to(np.asarray(a, dtype=complex), (n, n, 1, 2, 2)).copy()
    dzbar = np.zeros_like(dz) if b is None else np.broadcast_to(b, dz.shape).copy()
    return OneFormField(x, x, dz, dzbar)


def linear_potential():
    num = np.zeros((2, 2, 2))
    num[0] = E12
    num[1] = E21
    return PotentialOneForm((PotentialTerm(-1, num),))


def test_term_values_and_poles():
    num = np.array([E12, E21])
    term = PotentialTerm(-1, num, [-0.25, 1.0])
    assert np.allclose(term.poles, [0.25])
    z = np.array([0.5, 1j])
    vals = term(z)
    assert vals.shape == (2, 2, 2)
    assert np.allclose(vals[0], (E12 + 0.5 * E21) / 0.25)
    assert np.allclose(vals[1], (E12 + 1j * E21) / (1j - 0.25))
    assert PotentialTerm(-1, A).poles.size == 0


def test_term_schema_errors():
    with pytest.raises(SchemaError, match="numerator"):
        PotentialTerm(-1, np.zeros((2, 2, 3)))
    with pytest.raises(SchemaError, match="denominator"):
        PotentialTerm(-1, A, [0.0, 0.0])


def test_potential_schema_errors():
    with pytest.raises(SchemaError, match="at least one term"):
        PotentialOneForm(())
    with pytest.raises(SchemaError, match="modes must be"):
        PotentialOneForm((PotentialTerm(-2, A),))
    with pytest.raises(SchemaError, match="different matrix sizes"):
        PotentialOneForm((PotentialTerm(-1, A), PotentialTerm(0, np.eye(3))))


def test_normalized_checks():
    vacuum = PotentialOneForm.constant(A)
    assert vacuum.matrix_size == 2
    assert vacuum.modes == [-1]
    assert vacuum.is_normalized(SPHERE)
    assert vacuum.twist_violation(SPHERE) == 0
    assert np.allclose(vacuum.xi(0.3)[-1], A)

    k_valued = PotentialOneForm.constant(D)
    assert not k_valued.is_normalized(SPHERE)
    assert k_valued.twist_violation(SPHERE) == pytest.approx(2 * np.sqrt(2))

    mixed = PotentialOneForm((PotentialTerm(-1, A), PotentialTerm(0, D)))
    assert mixed.modes == [-1, 0]
    assert not mixed.is_normalized(SPHERE)
    assert mixed.twist_violation(SPHERE) == 0

    pole_at_base = PotentialOneForm((PotentialTerm(-1, A, [0.0, 1.0]),))
    assert not pole_at_base.is_normalized(SPHERE)
    assert PotentialOneForm.zero().is_normalized(SPHERE)


def test_loop_coefficients():
    eta = PotentialOneForm((PotentialTerm(-1, A), PotentialTerm(1, 2 * A)))
    coeffs = eta.loop_coefficients(np.array([0.1, 0.2]), 2)
    assert coeffs.shape == (2, 5, 2, 2)
    assert np.allclose(coeffs[:, 1], A)
    assert np.allclose(coeffs[:, 3], 2 * A)
    assert np.allclose(coeffs[:, [0, 2, 4]], 0)


def test_potential_dict():
    eta = PotentialOneForm(
        (PotentialTerm(-1, np.array([E12, 1j * E21]), [-0.25, 1.0]),),
        basepoint=0.1j,
        domain=(-1 - 1j, 1 + 1j),
        poles=(0.7,),
    )
    data = eta.to_dict()
    assert data["basepoint"] == [0.0, 0.1]
    back = PotentialOneForm.from_dict(data)
    assert back.basepoint == 0.1j
    assert back.domain == (-1 - 1j, 1 + 1j)
    assert np.allclose(sorted(back.all_poles.real), [0.25, 0.7])
    assert np.allclose(back.xi(0.5)[-1], eta.xi(0.5)[-1])


def test_potential_from_dict_errors():
    with pytest.raises(SchemaError, match="terms"):
        PotentialOneForm.from_dict({"basepoint": [0, 0]})
    with pytest.raises(SchemaError, match="integer 'mode'"):
        PotentialOneForm.from_dict({"terms": [{"numerator_poly": [A.tolist()]}]})
    with pytest.raises(SchemaError, match="numerator_poly"):
        PotentialOneForm.from_dict({"terms": [{"mode": -1, "numerator_poly": "abc"}]})
    with pytest.raises(SchemaError, match="domain"):
        PotentialOneForm.from_dict(
            {"terms": [{"mode": -1, "numerator_poly": [A.tolist()]}], "domain": [0, 1]}
        )
    eta = PotentialOneForm.from_dict(
        {"terms": [{"mode": -1, "numerator_poly": [A.tolist()]}], "basepoint": "0.1+0.2j"}
    )
    assert eta.basepoint == 0.1 + 0.2j


def test_decompose_zero():
    decomp = decompose_mc(constant_form(np.zeros((2, 2))), SPHERE)
    for part in (
        decomp.alpha_prime,
        decomp.alpha_k_dz,
        decomp.alpha_k_dzbar,
        decomp.alpha_doubleprime,
    ):
        assert np.allclose(part, 0)


def test_decompose_parts():
    b = np.array([[0.0, 2.0], [-1.0, 0.0]])
    alpha = constant_form(A + D, b)
    decomp = decompose_mc(alpha, SPHERE)
    assert np.allclose(decomp.alpha_prime, A)
    assert np.allclose(decomp.alpha_k_dz, D)
    assert np.allclose(decomp.alpha_k_dzbar, 0)
    assert np.allclose(decomp.alpha_doubleprime, b)
    back = decomp.reassemble()
    assert np.allclose(back.dz, alpha.dz)
    assert np.allclose(back.dzbar, alpha.dzbar)


def test_decompose_not_lie_algebra():
    with pytest.raises(NotLieAlgebraValued) as exc:
        decompose_mc(constant_form(np.eye(2)), SPHERE)
    assert exc.value.residual == pytest.approx(2.0)
    # skipping the check still splits the form
    decomp = decompose_mc(constant_form(np.eye(2)), SPHERE, tol=None)
    assert np.allclose(decomp.alpha_k_dz, np.eye(2))


def test_decompose_real_form():
    # a dz + b dz̄ with b = -a^H is su(2) valued
    a = np.array([[0.2j, 0.5], [0.1, -0.2j]])
    alpha = constant_form(a, -a.conj().T)
    decompose_mc(alpha, SPHERE, form="compact")
    with pytest.raises(NotLieAlgebraValued):
        decompose_mc(constant_form(a, a), SPHERE, form="compact")


def test_loopify():
    b = np.array([[0.0, 2.0], [-1.0, 0.0]])
    alpha = constant_form(A + D, b)
    looped = loopify(decompose_mc(alpha, SPHERE))
    assert looped.degree == 1
    a1, b1 = looped.at(1.0)
    assert np.allclose(a1, A + D)
    assert np.allclose(b1, b)
    lam = np.exp(0.5j)
    a_lam, b_lam = looped.at(lam)
    assert np.allclose(a_lam, A / lam + D)
    assert np.allclose(b_lam, lam * b)
    assert np.allclose(looped.mode_mass("dz", [1]), 0)
    assert np.allclose(looped.mode_mass("dzbar", [-1]), 0)


def test_flatness_constant_forms():
    assert flatness_residual(constant_form(A, -A, n=5), 1.0) < 1e-14
    resid = flatness_residual(constant_form(E12, E21, n=5), 1.0)
    assert resid == pytest.approx(np.sqrt(2))
    with pytest.raises(GridTooCoarse):
        flatness_residual(constant_form(A, n=2), 1.0)


def test_mc_form_linear_frame():
    x = np.linspace(-0.2, 0.2, 5)
    zz = x[:, None] + 1j * x[None, :]
    values = np.zeros((5, 5, 3, 2, 2), dtype=complex)
    values[:, :, 1] = np.eye(2)
    values[:, :, 0] = zz[:, :, None, None] * E12
    alpha = mc_form(values, x, x)
    assert np.allclose(alpha.dz[:, :, 0], E12, atol=1e-12)
    assert np.allclose(alpha.dz[:, :, 1:], 0, atol=1e-12)
    assert np.allclose(alpha.dzbar, 0, atol=1e-12)
    assert alpha.valid.all()


def test_mc_form_invalid_points():
    x = np.linspace(-0.2, 0.2, 5)
    values = np.zeros((5, 5, 3, 2, 2), dtype=complex)
    values[:, :, 1] = np.eye(2)
    values[2, 2] = np.nan
    valid = np.ones((5, 5), dtype=bool)
    valid[2, 2] = False
    alpha = mc_form(values, x, x, valid=valid)
    assert not alpha.valid[2, 2]
    assert not alpha.valid[1, 2]
    assert not alpha.valid[2, 3]
    assert alpha.valid[0, 0]
    assert np.all(np.isfinite(alpha.dz))


def test_sample_potential():
    x = np.linspace(-0.5, 0.5, 5)
    field_ = sample_potential(PotentialOneForm.constant(A), x, x)
    assert field_.dz.shape == (5, 5, 3, 2, 2)
    assert np.allclose(field_.dz[:, :, 0], A)
    assert np.allclose(field_.dzbar, 0)

    with_pole = PotentialOneForm((PotentialTerm(-1, A, [0.0, 1.0]),), basepoint=0.5)
    field_ = sample_potential(with_pole, x, x)
    assert not field_.valid[2, 2]
    assert field_.valid.sum() == 24
    assert np.all(np.isfinite(field_.dz))


def test_route_path():
    assert route_path(0, 1, []) == [0j, 1 + 0j]
    path = route_path(0, 1, [0.5], radius=0.05)
    assert len(path) > 2
    assert path[0] == 0 and path[-1] == 1
    for a, b in zip(path[:-1], path[1:]):
        t = np.linspace(0, 1, 201)
        assert np.min(np.abs(a + t * (b - a) - 0.5)) >= 0.05 - 1e-12
    with pytest.raises(PoleOnPath) as exc:
        route_path(0, 0.51, [0.5], radius=0.05)
    assert exc.value.kind == "pole_on_path"


def test_integrate_vacuum():
    z = 0.3 - 0.2j
    loop = integrate_along(PotentialOneForm.constant(A), [0, z], 10)
    exact = loop_exp(MatrixLoop.from_modes({-1: z * A}, 10, parity="algebra"))
    assert np.allclose(loop.coefficients, exact.coefficients, atol=1e-9)
    assert np.allclose(loop.coefficients[11:], 0)


def test_integration_tail_mass():
    # the window is exact for the vacuum; the loss is the first dropped mode of exp(zλ⁻¹A)
    z = 0.3 - 0.2j
    eta = PotentialOneForm.constant(A)
    loop = integrate_along(eta, [0, z], 2)
    assert loop.tail_mass == pytest.approx(np.sqrt(2) * abs(z) ** 3 / 6, rel=1e-6)
    bent = integrate_along(eta, [0, 0.3, z], 2)
    assert bent.tail_mass > 0
    assert integrate_along(eta, [0, z], 10).tail_mass < 1e-9

    coeffs, failures, tails = integrate_field(eta, np.array([[0, z]]), 2)
    assert not failures
    assert tails.shape == (1, 2)
    assert tails[0, 0] == 0
    assert tails[0, 1] == pytest.approx(loop.tail_mass, rel=1e-6)
    holo = integrate_holomorphic(eta, [z], 2)
    assert holo[0].tail_mass == pytest.approx(loop.tail_mass, rel=1e-6)


def test_integrate_path_independent():
    eta = linear_potential()
    z = 0.3 + 0.4j
    direct = integrate_along(eta, [0, z], 8)
    bent = integrate_along(eta, [0, 0.4, 0.2 + 0.5j, z], 8)
    assert np.allclose(direct.coefficients, bent.coefficients, atol=1e-9)


def test_integrate_field_around_pole():
    eta = PotentialOneForm((PotentialTerm(-1, A, [-0.25, 1.0]),))
    points = np.array([0.1, 0.25, 0.4, 0.4j])
    coeffs, failures, tails = integrate_field(eta, points, 6, pole_radius=0.05)
    assert list(failures) == [1]
    assert isinstance(failures[1], PoleOnPath)
    assert np.allclose(coeffs[1, 6], np.eye(2))
    assert tails[1] == 0.0
    # routed around the pole: the frame is still normalized at the origin
    assert np.all(np.isfinite(coeffs))
    holo = integrate_holomorphic(eta, [0.1, 0.4j], 6)
    assert np.allclose(holo[0].coefficients, coeffs[0])
    assert np.allclose(holo[1].coefficients, coeffs[3])
    with pytest.raises(PoleOnPath) as exc:
        integrate_holomorphic(eta, [0.1, 0.26], 6)
    assert exc.value.location == 0.26

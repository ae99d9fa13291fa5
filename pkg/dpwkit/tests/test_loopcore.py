import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwkit.errors import DimensionMismatch, LoopNotInvertible
from dpwkit.loopcore import (
    GroupModel,
    MatrixLoop,
    check_twisted,
    identity_loop,
    loop_conjugate,
    loop_evaluate,
    loop_exp,
    loop_from_samples,
    loop_inverse,
    loop_multiply,
    loop_sample,
    random_real_element,
    random_twisted_loop,
    tau_star,
    wiener_norm,
)

MODELS = [GroupModel.sphere(), GroupModel.hyperbolic()]
NILPOTENT = np.array([[0.0, 1.0], [0.0, 0.0]])


def test_identity_loop():
    ident = identity_loop(2, 4)
    assert ident.degree == 4
    assert ident.matrix_size == 2
    assert np.allclose(ident[0], np.eye(2))
    assert np.allclose(ident[3], 0)
    assert np.allclose(ident[7], 0)
    assert wiener_norm(ident) == pytest.approx(np.sqrt(2))
    assert ident.mode_mass("nonzero") == 0


def test_bad_shapes():
    with pytest.raises(DimensionMismatch, match="shape"):
        MatrixLoop(np.zeros((4, 2, 2)))
    with pytest.raises(DimensionMismatch):
        MatrixLoop(np.zeros((3, 2, 3)))
    with pytest.raises(ValueError, match="outside truncation window"):
        MatrixLoop.from_modes({3: np.eye(2)}, degree=2)
    with pytest.raises(ValueError, match="parity"):
        MatrixLoop(np.zeros((3, 2, 2)), parity="other")


def test_multiply_monomials():
    a = MatrixLoop.from_modes({-1: NILPOTENT}, 3)
    b = MatrixLoop.from_modes({1: NILPOTENT.T}, 3)
    prod = loop_multiply(a, b)
    assert np.allclose(prod[0], NILPOTENT @ NILPOTENT.T)
    assert prod.mode_mass("nonzero") < 1e-14
    assert prod.tail_mass < 1e-14


def test_multiply_records_tail():
    a = MatrixLoop.from_modes({2: np.eye(2)}, 2)
    prod = loop_multiply(a, a)
    assert np.allclose(prod.coefficients, 0)
    assert prod.tail_mass == pytest.approx(np.sqrt(2))
    assert np.allclose(loop_multiply(a, a, degree=4)[4], np.eye(2))


def test_multiply_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        loop_multiply(identity_loop(2, 2), identity_loop(3, 2))


def test_matmul_operator():
    rng = np.random.default_rng(1)
    a = random_twisted_loop(rng, MODELS[0], 6)
    b = random_twisted_loop(rng, MODELS[0], 6)
    assert np.allclose((a @ b).coefficients, loop_multiply(a, b).coefficients)


def test_inverse_of_nilpotent_perturbation():
    g = MatrixLoop.from_modes({0: np.eye(2), -1: NILPOTENT}, 4)
    inv = loop_inverse(g)
    expected = MatrixLoop.from_modes({0: np.eye(2), -1: -NILPOTENT}, 4)
    assert np.allclose(inv.coefficients, expected.coefficients, atol=1e-13)


def test_inverse_singular():
    g = MatrixLoop.constant(np.diag([1.0, 0.0]), 2)
    with pytest.raises(LoopNotInvertible) as exc:
        loop_inverse(g)
    assert exc.value.kind == "not_invertible"


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_inverse_random(model):
    rng = np.random.default_rng(3)
    g = random_twisted_loop(rng, model, 12, scale=0.05)
    inv = loop_inverse(g)
    prod = loop_multiply(g, inv)
    ident = identity_loop(2, 12)
    assert wiener_norm(prod.replace(prod.coefficients - ident.coefficients)) < 1e-9


def test_evaluate():
    g = MatrixLoop.from_modes({-1: NILPOTENT, 0: np.eye(2), 1: 2 * NILPOTENT.T}, 2)
    lam = np.exp(0.3j)
    expected = NILPOTENT / lam + np.eye(2) + 2 * lam * NILPOTENT.T
    assert np.allclose(g.evaluate(lam), expected)
    assert np.allclose(loop_evaluate(g, 2.0), NILPOTENT / 2 + np.eye(2) + 4 * NILPOTENT.T)
    with pytest.raises(ValueError, match="λ = 0"):
        loop_evaluate(g, 0)


def test_sample_and_recover():
    rng = np.random.default_rng(5)
    g = random_twisted_loop(rng, MODELS[0], 5, spread=4, scale=0.3)
    values = loop_sample(g)
    assert values.shape == (22, 2, 2)
    lam = np.exp(2j * np.pi * 3 / 22)
    assert np.allclose(values[3], g.evaluate(lam))
    back = loop_from_samples(values, 5)
    assert np.allclose(back.coefficients, g.coefficients)
    assert back.tail_mass < 1e-13


def test_with_degree_tail():
    g = MatrixLoop.from_modes({0: np.eye(2), 3: 0.5 * np.eye(2)}, 3)
    cut = g.with_degree(2)
    assert cut.degree == 2
    assert cut.tail_mass == pytest.approx(0.5 * np.sqrt(2))
    padded = g.with_degree(5)
    assert padded.tail_mass == 0
    assert np.allclose(padded[3], 0.5 * np.eye(2))


def test_loop_exp_constant():
    x = MatrixLoop.constant(np.diag([0.4, -0.4]), 3, parity="algebra")
    out = loop_exp(x)
    assert out.parity == "group"
    assert np.allclose(out[0], scipy.linalg.expm(np.diag([0.4, -0.4])))
    assert out.mode_mass("nonzero") < 1e-13


def test_loop_exp_twisted():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    x = MatrixLoop.from_modes({-1: 0.2 * a, 1: -0.2 * a}, 12, parity="algebra")
    out = loop_exp(x)
    assert check_twisted(out, MODELS[0]).passed
    lam = np.exp(0.7j)
    expected = scipy.linalg.expm(0.2 * a / lam - 0.2 * lam * a)
    assert np.allclose(out.evaluate(lam), expected, atol=1e-12)


def test_loop_conjugate():
    rng = np.random.default_rng(7)
    g = random_twisted_loop(rng, MODELS[0], 4)
    h = np.array([[1.0, 2.0], [0.5, 3.0]])
    out = loop_conjugate(h, g)
    lam = np.exp(1.1j)
    assert np.allclose(out.evaluate(lam), h @ g.evaluate(lam) @ np.linalg.inv(h))
    with pytest.raises(DimensionMismatch):
        loop_conjugate(np.eye(3), g)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_check_twisted(model):
    rng = np.random.default_rng(11)
    g = random_twisted_loop(rng, model, 6, spread=3, scale=0.5)
    check = check_twisted(g, model)
    assert check.passed
    assert check.violation < 1e-14

    bad = MatrixLoop.from_modes({1: np.eye(2)}, 2)
    check = check_twisted(bad, model)
    assert not check.passed
    assert check.violation == pytest.approx(2 * np.sqrt(2))

    with pytest.raises(DimensionMismatch):
        check_twisted(identity_loop(3, 2), model)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_tau_star(model):
    rng = np.random.default_rng(13)
    g = random_twisted_loop(rng, model, 5, scale=0.4)
    assert np.allclose(tau_star(tau_star(g, model), model).coefficients, g.coefficients)
    s = model.realform_star
    lam = np.exp(0.4j)
    star = tau_star(g, model).evaluate(lam)
    assert np.allclose(star, s @ g.evaluate(lam).conj().T @ np.linalg.inv(s))
    assert check_twisted(tau_star(g, model), model).passed


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_random_real_element(model):
    rng = np.random.default_rng(17)
    for _ in range(5):
        h = random_real_element(rng, model)
        assert model.in_real_form(h, tol=1e-12)
        assert abs(np.linalg.det(h) - 1) < 1e-12


def test_group_model_forms():
    sphere, hyperbolic = MODELS
    assert sphere.is_compact
    assert not hyperbolic.is_compact
    assert sphere.default_form == "compact"
    assert hyperbolic.default_form == "indefinite"
    assert np.allclose(hyperbolic.star_matrix("compact"), np.eye(2))
    assert np.allclose(hyperbolic.star_matrix("indefinite"), np.diag([1, -1]))
    with pytest.raises(ValueError, match="no indefinite real form"):
        sphere.star_matrix("indefinite")
    with pytest.raises(ValueError, match="unknown real form"):
        sphere.star_matrix("split")
    with pytest.raises(ValueError, match="unknown group model"):
        GroupModel.by_name("torus")
    with pytest.raises(DimensionMismatch):
        GroupModel(np.eye(2), np.eye(3), np.eye(2))


def test_projections():
    model = MODELS[0]
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    assert np.allclose(model.k_part(x), np.diag([1.0, -1.0]))
    assert np.allclose(model.p_part(x), [[0, 2], [3, 0]])
    assert np.allclose(model.k_part(x) + model.p_part(x), x)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_involutions_commute(model):
    residuals = model.involution_residuals()
    assert set(residuals) == {
        "sigma_squared",
        "tau_squared",
        "theta_squared",
        "sigma_tau",
        "sigma_theta",
        "tau_theta",
    }
    assert max(residuals.values()) < 1e-12


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_conjugated_model(model):
    rng = np.random.default_rng(19)
    h = random_real_element(rng, model)
    moved = model.conjugated(h)
    assert moved.name == f"{model.name}:moved"
    assert np.allclose(moved.twist_matrix, h @ model.twist_matrix @ np.linalg.inv(h))
    assert np.allclose(moved.realform_star, model.realform_star)
    assert max(moved.involution_residuals().values()) < 1e-12

    g = random_twisted_loop(rng, model, 4)
    assert check_twisted(loop_conjugate(h, g), moved, tol=1e-12).passed
    assert moved.in_fixed_group(h @ np.diag([2.0, 0.5]) @ np.linalg.inv(h))
    with pytest.raises(DimensionMismatch):
        model.conjugated(np.eye(3))


def test_loop_dict():
    g = MatrixLoop.from_modes({-1: NILPOTENT, 0: np.eye(2)}, 3)
    data = g.to_dict()
    assert data["n"] == 2
    assert data["N"] == 3
    assert [item["k"] for item in data["coefficients"]] == [-1, 0]
    back = MatrixLoop.from_dict(data, degree=5)
    assert back.degree == 5
    assert np.allclose(back[-1], NILPOTENT)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), model_idx=st.sampled_from([0, 1]))
def test_product_associative_and_twisted(seed, model_idx):
    model = MODELS[model_idx]
    rng = np.random.default_rng(seed)
    a, b, c = (random_twisted_loop(rng, model, 8, scale=0.3) for _ in range(3))
    left = loop_multiply(loop_multiply(a, b), c)
    right = loop_multiply(a, loop_multiply(b, c))
    assert np.allclose(left.coefficients, right.coefficients, atol=1e-12)
    assert left.tail_mass < 1e-12
    assert check_twisted(left, model).passed

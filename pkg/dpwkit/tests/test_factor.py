import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwkit.errors import DegenerateGauge, OutsideBigCell, OutsideIwasawaCell
from dpwkit.factor import (
    IwasawaPair,
    birkhoff_split,
    gauge_normalize,
    iwasawa_split,
    minus_inverse,
    plus_inverse,
    real_form_violation,
)
from dpwkit.loopcore import (
    GroupModel,
    MatrixLoop,
    _multiply_coefficients,
    check_twisted,
    identity_loop,
    loop_exp,
    random_twisted_loop,
)

SPHERE = GroupModel.sphere()
HYPERBOLIC = GroupModel.hyperbolic()
A = np.array([[0.0, 1.0], [1.0, 0.0]])
NILPOTENT = np.array([[0.0, 1.0], [0.0, 0.0]])


def wiener_diff(a, b):
    return float(np.sum(np.linalg.norm(a.coefficients - b.coefficients, axis=(-2, -1))))


def check_birkhoff_structure(pair, model):
    degree = pair.minus.degree
    minus, plus = pair.minus.coefficients, pair.plus.coefficients
    assert np.allclose(minus[degree], np.eye(2), atol=1e-12)
    assert np.allclose(minus[degree + 1 :], 0)
    assert np.allclose(plus[:degree], 0)
    assert model.in_fixed_group(plus[degree], tol=1e-10)
    assert check_twisted(pair.minus, model, tol=1e-9).passed
    assert check_twisted(pair.plus, model, tol=1e-9).passed


def test_birkhoff_identity():
    pair = birkhoff_split(identity_loop(2, 6))
    assert np.allclose(pair.minus.coefficients, identity_loop(2, 6).coefficients)
    assert np.allclose(pair.plus.coefficients, identity_loop(2, 6).coefficients)
    assert pair.residual < 1e-14


def test_birkhoff_already_minus():
    g = MatrixLoop.from_modes({0: np.eye(2), -1: NILPOTENT}, 6)
    pair = birkhoff_split(g)
    assert wiener_diff(pair.minus, g) < 1e-12
    assert wiener_diff(pair.plus, identity_loop(2, 6)) < 1e-12


def test_birkhoff_commuting_exponential():
    degree = 12
    g = loop_exp(MatrixLoop.from_modes({-1: 0.3 * A, 1: 0.2 * A}, degree, parity="algebra"))
    pair = birkhoff_split(g)
    minus = loop_exp(MatrixLoop.from_modes({-1: 0.3 * A}, degree, parity="algebra"))
    plus = loop_exp(MatrixLoop.from_modes({1: 0.2 * A}, degree, parity="algebra"))
    assert wiener_diff(pair.minus, minus) < 1e-10
    assert wiener_diff(pair.plus, plus) < 1e-10
    check_birkhoff_structure(pair, SPHERE)


@pytest.mark.parametrize("model", [SPHERE, HYPERBOLIC], ids=lambda m: m.name)
def test_birkhoff_random(model):
    rng = np.random.default_rng(23)
    g = random_twisted_loop(rng, model, 12, spread=1, scale=0.05)
    pair = birkhoff_split(g)
    assert pair.residual < 1e-9
    assert pair.rcond > 1e-12
    check_birkhoff_structure(pair, model)

    # same factors from the solve at the loop's own truncation
    narrow = birkhoff_split(g, working_degree=12)
    assert wiener_diff(narrow.minus, pair.minus) < 1e-10
    assert wiener_diff(narrow.plus, pair.plus) < 1e-10


def test_birkhoff_outside_big_cell():
    weyl = MatrixLoop.from_modes({-1: [[0, 0], [-1, 0]], 1: [[0, 1], [0, 0]]}, 8, size=2)
    with pytest.raises(OutsideBigCell, match="big cell") as exc:
        birkhoff_split(weyl)
    assert exc.value.kind == "outside_big_cell"
    assert exc.value.residual < 1e-12


def test_minus_plus_inverse():
    minus = MatrixLoop.from_modes({0: np.eye(2), -1: 0.5 * A, -2: np.diag([0.3, -0.2])}, 6)
    plus = MatrixLoop.from_modes({0: np.diag([2.0, 0.5]), 1: 0.4 * A, 2: np.eye(2)}, 6)
    ident = identity_loop(2, 6).coefficients
    for loop, inverse in ((minus, minus_inverse), (plus, plus_inverse)):
        prod, _ = _multiply_coefficients(loop.coefficients, inverse(loop.coefficients), 6)
        assert np.allclose(prod, ident, atol=1e-12)


def test_real_form_violation():
    assert real_form_violation(identity_loop(2, 3), SPHERE) == 0
    doubled = MatrixLoop.constant(2 * np.eye(2), 3)
    assert real_form_violation(doubled, SPHERE) == pytest.approx(3 * np.sqrt(2))
    boost = np.array([[np.cosh(0.4), np.sinh(0.4)], [np.sinh(0.4), np.cosh(0.4)]])
    loop = MatrixLoop.constant(boost, 3)
    assert real_form_violation(loop, HYPERBOLIC, "indefinite") < 1e-14
    assert real_form_violation(loop, HYPERBOLIC, "compact") > 0.1


def check_iwasawa(pair, g, model, form):
    degree = g.degree
    plus = pair.plus_part.coefficients
    assert pair.form == form
    assert pair.residual < 1e-9
    assert pair.membership < 1e-9
    assert real_form_violation(pair.real_part, model, form) < 1e-9
    assert np.allclose(plus[:degree], 0)
    const = plus[degree]
    assert np.allclose(const, np.diag(np.diag(const)), atol=1e-10)
    assert np.all(np.diag(const).real > 0)
    assert np.allclose(np.diag(const).imag, 0, atol=1e-12)
    assert check_twisted(pair.real_part, model, tol=1e-9).passed


@pytest.mark.parametrize(
    "model,form",
    [(SPHERE, "compact"), (HYPERBOLIC, "indefinite"), (HYPERBOLIC, "compact")],
    ids=["sphere", "hyperbolic", "hyperbolic-dual"],
)
def test_iwasawa_random(model, form):
    rng = np.random.default_rng(31)
    g = random_twisted_loop(rng, model, 12, spread=1, scale=0.05)
    pair = iwasawa_split(g, model, form)
    check_iwasawa(pair, g, model, form)


def test_iwasawa_default_form():
    rng = np.random.default_rng(37)
    g = random_twisted_loop(rng, HYPERBOLIC, 8)
    assert iwasawa_split(g, HYPERBOLIC).form == "indefinite"
    assert iwasawa_split(g, SPHERE).form == "compact"


def test_iwasawa_of_real_constant():
    k = np.diag(np.exp([0.4j, -0.4j]))
    g = MatrixLoop.constant(k, 4)
    pair = iwasawa_split(g, SPHERE)
    assert np.allclose(pair.real_part.coefficients, g.coefficients, atol=1e-12)
    assert np.allclose(pair.plus_part.coefficients, identity_loop(2, 4).coefficients, atol=1e-12)


def test_iwasawa_newton_matches_dense():
    rng = np.random.default_rng(41)
    g = random_twisted_loop(rng, SPHERE, 8, spread=1, scale=0.01)
    dense = iwasawa_split(g, SPHERE, newton_max_degree=16)
    newton = iwasawa_split(g, SPHERE, newton_max_degree=4)
    assert wiener_diff(dense.real_part, newton.real_part) < 1e-9
    assert wiener_diff(dense.plus_part, newton.plus_part) < 1e-9


def test_iwasawa_outside_cell():
    lower = MatrixLoop.from_modes({0: np.eye(2), -1: [[0, 0], [2, 0]]}, 8, size=2)
    with pytest.raises(OutsideIwasawaCell) as exc:
        iwasawa_split(lower, HYPERBOLIC, "indefinite")
    assert exc.value.kind == "outside_iwasawa_cell"
    # the compact form always has a factorization
    check_iwasawa(iwasawa_split(lower, HYPERBOLIC, "compact"), lower, HYPERBOLIC, "compact")


def test_iwasawa_singular_on_circle():
    g = MatrixLoop.constant(np.diag([1.0, 0.0]), 4)
    with pytest.raises(OutsideIwasawaCell, match="not positive"):
        iwasawa_split(g, SPHERE)


def test_gauge_normalize():
    real = MatrixLoop.constant(np.eye(2), 2)
    plus = MatrixLoop.from_modes({0: np.diag([2j, -3.0]), 1: [[0, 1], [1, 0]]}, 2)
    pair = gauge_normalize(IwasawaPair(real, plus, "compact"))
    assert np.allclose(np.diag(pair.plus_part[0]), [2, 3])
    prod, _ = _multiply_coefficients(
        pair.real_part.coefficients, pair.plus_part.coefficients, 2
    )
    expected, _ = _multiply_coefficients(real.coefficients, plus.coefficients, 2)
    assert np.allclose(prod, expected)


def test_gauge_normalize_degenerate():
    real = MatrixLoop.constant(np.eye(2), 2)
    plus = MatrixLoop.constant(A, 2)
    with pytest.raises(DegenerateGauge, match="zero diagonal"):
        gauge_normalize(IwasawaPair(real, plus, "compact"))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hyperbolic=st.booleans())
def test_factorizations_reconstruct(seed, hyperbolic):
    model = HYPERBOLIC if hyperbolic else SPHERE
    rng = np.random.default_rng(seed)
    g = random_twisted_loop(rng, model, 10, spread=1, scale=0.05)
    bpair = birkhoff_split(g)
    assert bpair.residual < 1e-9
    check_birkhoff_structure(bpair, model)
    ipair = iwasawa_split(g, model)
    check_iwasawa(ipair, g, model, model.default_form)

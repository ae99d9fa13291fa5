import numpy as np
import pytest

from dpwkit.loopcore import GroupModel, MatrixLoop, identity_loop
from dpwkit.pipeline import (
    ExtendedFrameField,
    Grid,
    associated_family,
    backward_dpw,
    birkhoff_field,
    evaluate_at_mu,
    fd_threshold,
    forward_dpw,
    frame_flatness,
    frames_from_minus,
)
from dpwkit.potential import PotentialOneForm
from dpwkit.verify import VACUUM_XI, vacuum_frames, vacuum_potential

MODELS = [GroupModel.sphere(), GroupModel.hyperbolic()]
GRID = Grid.square(-0.3 - 0.3j, 0.3 + 0.3j, 9)
DEGREE = 12


@pytest.fixture(scope="module", params=MODELS, ids=lambda m: m.name)
def vacuum(request):
    model = request.param
    return model, forward_dpw(vacuum_potential(), GRID, model, degree=DEGREE)


def test_grid():
    grid = Grid(-1 - 1j, 1 + 0j, 5, 3)
    assert grid.shape == (5, 3)
    assert grid.h == pytest.approx(0.5)
    assert grid.points[1, 2] == pytest.approx(-0.5 + 0j)
    assert grid.index_of(0.5 - 0.5j) == (3, 1)
    assert grid.index_of(0.25) is None
    assert Grid.from_dict(grid.to_dict()) == grid
    with pytest.raises(ValueError, match="not ordered"):
        Grid(1, -1)
    with pytest.raises(ValueError, match="at least one point"):
        Grid(nx=0)


def test_fd_threshold():
    assert fd_threshold(1e-8, 0.1) == pytest.approx(1e-8 + 1e-2)
    assert fd_threshold(1e-8, 0.1, 4.0) == pytest.approx(1e-8 + 4e-2)


def test_field_shape_check():
    with pytest.raises(ValueError, match="do not match grid"):
        ExtendedFrameField(GRID, np.zeros((3, 3, 5, 2, 2)), MODELS[0])


def test_forward_vacuum_closed_form(vacuum):
    model, result = vacuum
    frames = result.frames
    assert frames.kind == "extended"
    assert result.minus.kind == "minus"
    assert result.plus.kind == "plus"
    assert frames.form == model.default_form
    assert not frames.flagged
    assert result.diagnostics["n_flagged"] == 0

    exact = vacuum_frames(GRID.points, DEGREE, model)
    assert np.allclose(frames.coefficients, exact, atol=1e-8)
    base = frames.basepoint_index
    assert base == (4, 4)
    assert np.array_equal(frames.coefficients[base], identity_loop(2, DEGREE).coefficients)
    assert frames.twist_violation() < 1e-9
    assert frames.realform_violation() < 1e-9
    assert result.diagnostics["max_tail"] < 1e-10


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.name)
def test_forward_basepoint_off_grid(model):
    grid = Grid.square(-0.2 - 0.2j, 0.2 + 0.2j, 5)
    z0 = 0.05 + 0.02j
    result = forward_dpw(vacuum_potential(z0), grid, model, degree=10)
    assert result.frames.basepoint_index is None
    assert result.diagnostics["drift"] == 0.0
    exact = vacuum_frames(grid.points, 10, model, basepoint=z0)
    assert np.allclose(result.frames.coefficients, exact, atol=1e-8)


def test_forward_minus_is_exponential(vacuum):
    _, result = vacuum
    i, j = 7, 2
    z = GRID.points[i, j]
    minus = result.minus.loop(i, j)
    assert np.allclose(minus[-1], z * VACUUM_XI, atol=1e-9)
    assert np.allclose(minus[-2], z**2 / 2 * VACUUM_XI @ VACUUM_XI, atol=1e-9)
    assert minus.mode_mass("positive") == 0


def test_forward_size_mismatch():
    eta = PotentialOneForm.constant(np.zeros((3, 3)))
    with pytest.raises(ValueError, match="does not match model size"):
        forward_dpw(eta, GRID, MODELS[0], degree=4)


def test_backward_round_trip(vacuum):
    _, result = vacuum
    back = backward_dpw(result.frames)
    audit = back.audit
    assert audit["structure_ok"]
    assert audit["basepoint_residual"] < 1e-12
    assert audit["n_flagged"] == 0
    err = np.linalg.norm(back.xi - VACUUM_XI, axis=(-2, -1))
    assert np.max(err[back.potential.valid]) <= audit["threshold"]
    # interior points are accurate to second order
    assert np.max(err[2:-2, 2:-2]) < 0.01


def test_associated_family(vacuum):
    _, result = vacuum
    lambdas = [1.0, 1j, np.exp(0.25j * np.pi)]
    family = associated_family(result.frames, lambdas)
    assert family.values.shape == (3, 9, 9, 2, 2)
    assert family.involution_residual() < 1e-9
    assert family.spectrum_residual() < 1e-9
    assert family.basepoint_residual() < 1e-12
    with pytest.raises(ValueError, match="unit circle"):
        associated_family(result.frames, [2.0])


def test_frame_flatness(vacuum):
    _, result = vacuum
    for lam in (1.0, 1j, -1.0):
        assert frame_flatness(result.frames, lam) < 1e-6


def test_evaluate_at_mu(vacuum):
    _, result = vacuum
    mu = np.exp(0.7j)
    moved = evaluate_at_mu(result.frames, mu)
    lam = np.exp(-1.3j)
    assert np.allclose(moved.at_lambda(lam), result.frames.at_lambda(mu * lam))
    with pytest.raises(ValueError, match="unit circle"):
        evaluate_at_mu(result.frames, 0.5)


def test_frames_from_minus_keeps_flags(vacuum):
    _, result = vacuum
    record ={"kind": "pole_on_path", "message": "test", "location": [1, 1], "residual": None}
    minus = result.minus.replace(flagged={(1, 1): record})
    frames, plus, stats = frames_from_minus(minus)
    assert frames.flagged == {(1, 1): record}
    assert not frames.valid[1, 1]
    assert np.array_equal(frames.coefficients[1, 1], identity_loop(2, DEGREE).coefficients)
    assert stats["max_residual"] < 1e-9
    assert plus.kind == "plus"


def test_birkhoff_field_flags_failures(vacuum):
    _, result = vacuum
    weyl = MatrixLoop.from_modes({-1: [[0, 0], [-1, 0]], 1: [[0, 1], [0, 0]]}, DEGREE, size=2)
    coeffs = np.array(result.frames.coefficients)
    coeffs[2, 6] = weyl.coefficients
    minus, plus = birkhoff_field(result.frames.replace(coefficients=coeffs))
    assert list(minus.flagged) == [(2, 6)]
    record = minus.flagged[(2, 6)]
    assert record["kind"] == "outside_big_cell"
    assert record["location"] == [2, 6]
    assert record["z"] == pytest.approx([GRID.x[2], GRID.y[6]])
    assert np.array_equal(plus.coefficients[2, 6], identity_loop(2, DEGREE).coefficients)
    valid = minus.valid
    assert np.allclose(minus.coefficients[valid], result.minus.coefficients[valid], atol=1e-9)

import json

import pytest

from dpwkit.config import (
    DEFAULT_LAMBDAS,
    RunConfig,
    parse_grid,
    parse_lambdas,
    parse_override,
)
from dpwkit.errors import SchemaError


def test_defaults():
    cfg = RunConfig()
    assert cfg.truncation == 8
    assert cfg.model == "sphere"
    assert cfg.group_model.is_compact
    assert cfg.lambda_samples == DEFAULT_LAMBDAS
    assert cfg.grid.shape == (21, 21)
    assert cfg.grid.lower == -0.5 - 0.5j


def test_coercion():
    cfg = RunConfig(truncation="12", grid_resolution=11.0, grid_lower="-0.2-0.2j", seed="7")
    assert cfg.truncation == 12
    assert cfg.grid.shape == (11, 11)
    assert cfg.grid_lower == -0.2 - 0.2j
    assert cfg.seed == 7
    assert RunConfig(grid_upper=[0.2, 0.3]).grid_upper == 0.2 + 0.3j


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"truncation": 0}, "truncation"),
        ({"pipeline_tol": 0.0}, "pipeline_tol"),
        ({"grid_resolution": 2}, "grid_resolution"),
        ({"model": "torus"}, "unknown model"),
        ({"membership_samples": 0}, "membership_samples"),
        ({"lambda_samples": "2"}, "unit circle"),
        ({"grid_lower": 0.5 + 0.5j, "grid_upper": -0.5 - 0.5j}, "not ordered"),
        ({"grid_lower": -0.5 + 0.5j, "grid_upper": 0.5 + 0.5j}, "not ordered"),
    ],
)
def test_validation(kwargs, match):
    with pytest.raises(SchemaError, match=match):
        RunConfig(**kwargs)


def test_from_dict():
    cfg = RunConfig.from_dict({"truncation": 10, "model": "hyperbolic"})
    assert cfg.truncation == 10
    assert not cfg.group_model.is_compact
    with pytest.raises(SchemaError, match="unknown configuration keys"):
        RunConfig.from_dict({"truncation": 10, "resolution": 5})
    with pytest.raises(SchemaError, match="JSON object"):
        RunConfig.from_dict([1, 2])
    with pytest.raises(SchemaError, match="invalid configuration"):
        RunConfig.from_dict({"truncation": "many"})


def test_dict_round_trip():
    cfg = RunConfig(truncation=6, grid_lower=-0.1 - 0.2j, lambda_samples=(1, 1j))
    data = cfg.to_dict()
    assert data["grid_lower"] == [-0.1, -0.2]
    assert data["lambda_samples"] == [[1.0, 0.0], [0.0, 1.0]]
    json.dumps(data)
    assert RunConfig.from_dict(data) == cfg


def test_replace():
    cfg = RunConfig()
    assert cfg.replace(seed=None, out_dir=None) == cfg
    other = cfg.replace(seed=5, truncation="4")
    assert (other.seed, other.truncation) == (5, 4)
    assert cfg.seed == 0


def test_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"truncation": 9, "grid_resolution": 7}))
    cfg = RunConfig.from_file(path)
    assert cfg.truncation == 9
    assert cfg.grid.shape == (7, 7)

    path.write_text("{truncation: 9")
    with pytest.raises(SchemaError, match="malformed configuration"):
        RunConfig.from_file(path)
    with pytest.raises(SchemaError, match="cannot read configuration"):
        RunConfig.from_file(tmp_path / "missing.json")


def test_parse_lambdas():
    assert parse_lambdas("1,1j,-1") == (1, 1j, -1)
    assert parse_lambdas([[0.0, 1.0], "-1"]) == (1j, -1)
    assert parse_lambdas("1, ") == (1,)


def test_parse_grid():
    assert parse_grid("-0.5,-0.25,0.5,0.25,11") == (-0.5 - 0.25j, 0.5 + 0.25j, 11)
    with pytest.raises(ValueError, match="x0,y0,x1,y1,n"):
        parse_grid("0,0,1,1")


def test_parse_override():
    assert parse_override("truncation=12") == ("truncation", 12)
    assert parse_override(" model = hyperbolic ") == ("model", "hyperbolic")
    assert parse_override("grid_lower=-0.1-0.1j") == ("grid_lower", -0.1 - 0.1j)
    with pytest.raises(ValueError, match="name=value"):
        parse_override("truncation")

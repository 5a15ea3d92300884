from pathlib import Path

import pytest

from walkgrid.config import config_from_mapping, load_config, parse_config_text
from walkgrid.errors import ConfigError
from walkgrid.fields import ComponentKind

BASE = """
input.nodes = n.csv
grid.origin_x = 0
grid.origin_y = 0
grid.n_rows = 3
grid.n_cols = 4
"""


def test_parse_and_defaults(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\n" + BASE + "decay.sigma_m = 500\nindex.weights.PT = 2\n")
    cfg = load_config(p)
    assert cfg.decay.sigma == 500.0
    assert cfg.weights[ComponentKind.PT] == 2.0
    assert cfg.weights[ComponentKind.SLOPE] == -1.0
    assert cfg.iso.max_distance == 1275.0
    assert cfg.inputs["nodes"] == tmp_path / "n.csv"
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.moran_scheme == "queen"


@pytest.mark.parametrize("text,match", [
    ("foo.bar = 1", "unknown key"),
    ("grid.n_rows = 1\ngrid.n_rows = 2", "duplicate"),
    ("grid.n_rows 1", "expected"),
])
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


@pytest.mark.parametrize("extra,match", [
    ("decay.sigma_m = -1", "sigma"),
    ("index.weights.SLOPE = 1", "SLOPE"),
    ("moran.scheme = bishop", "moran.scheme"),
    ("decile.threshold = 0", "decile"),
    ("grid.cell_size = abc", "grid.cell_size"),
    ("slope.method = zevenbergen", "slope.method"),
])
def test_invalid_values(extra, match):
    raw = parse_config_text(BASE + extra)
    with pytest.raises(ConfigError, match=match):
        config_from_mapping(raw, Path("."))


def test_missing_grid_key():
    raw = parse_config_text("grid.origin_x = 0\ngrid.origin_y = 0\ngrid.n_rows = 2")
    with pytest.raises(ConfigError, match="grid.n_cols"):
        config_from_mapping(raw, Path("."))


def test_validate_names_missing_input(tmp_path):
    cfg = config_from_mapping(parse_config_text(BASE), tmp_path)
    with pytest.raises(ConfigError, match="input.nodes: file not found"):
        cfg.validate()
    (tmp_path / "n.csv").write_text("id,x,y\n")
    with pytest.raises(ConfigError, match="missing required key input.edges"):
        cfg.validate()


def test_hash_ignores_threads():
    a = config_from_mapping(parse_config_text(BASE + "run.threads = 1"), Path("."))
    b = config_from_mapping(parse_config_text(BASE + "run.threads = 8"), Path("."))
    c = config_from_mapping(parse_config_text(BASE + "decay.sigma_m = 600"), Path("."))
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_moran_units_default_to_admin(tmp_path):
    cfg = config_from_mapping(parse_config_text(BASE + "input.admin = a.geojson"), tmp_path)
    assert cfg.inputs["moran_units"] == tmp_path / "a.geojson"

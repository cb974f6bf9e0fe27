import json

import numpy as np
import pytest

from bmeigen.config import ConfigError, load_config, parse_config
from bmeigen.geometry import Disc, Grid2D, SdfGrid, rasterize, signed_distance
from bmeigen.grid import GridField
from bmeigen.io import dump_field, dump_grid, dumps, load_grid, read_csv, read_grid, write_csv


def test_json_is_deterministic_and_strict():
    payload = {"b": np.float64(1.5), "a": [np.int64(2), float("nan"), np.array([1.0, np.inf])]}
    s = dumps(payload)
    assert s == dumps(json.loads(s))
    assert json.loads(s) == {"a": [2, None, [1.0, None]], "b": 1.5}


def test_grid_roundtrip(tmp_path):
    g, sdf = rasterize(Disc((0.1, -0.2), 0.5), 1 / 16)
    vals = np.where(g.mask, np.arange(sdf.size).reshape(sdf.shape) * 0.25, 0.0)
    meta = dump_grid(vals, g, tmp_path / "u.field", "u")
    assert (tmp_path / "u.field.f64").stat().st_size == 8 * sdf.size
    back, g2, m2 = read_grid(tmp_path / "u.field.json")
    assert np.array_equal(back, vals) and np.array_equal(g2.mask, g.mask)
    assert g2.origin == pytest.approx(g.origin) and g2.h == g.h and m2["sha256"] == meta["sha256"]
    rows = read_csv(tmp_path / "u.field.csv")
    assert len(rows) == g.mask.sum()


def test_grid_checksum_detects_corruption(tmp_path):
    g = Grid2D((0.0, 0.0), 0.5, 3, 3, np.ones((3, 3), bool))
    f = GridField(g, np.ones((3, 3)))
    dump_field(f, tmp_path / "f")
    raw = bytearray((tmp_path / "f.f64").read_bytes())
    raw[0] ^= 0xFF
    (tmp_path / "f.f64").write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_grid(tmp_path / "f")


def test_csv_writes_blank_for_missing(tmp_path):
    write_csv(tmp_path / "t.csv", [{"a": 1, "b": float("nan")}])
    assert read_csv(tmp_path / "t.csv") == [{"a": "1", "b": ""}]


BASE = {"command": "eigen", "operator": {"kind": "p_laplacian", "p": 2},
        "domain": {"type": "disc", "center": [0, 0], "radius": 1}}


def test_parse_minimal():
    cfg = parse_config(BASE)
    assert cfg.operator.p == 2 and isinstance(cfg.domain, Disc) and cfg.h == 1 / 64 and cfg.seed == 0


@pytest.mark.parametrize("mutate, field", [
    (lambda c: c["operator"].pop("p"), "operator.p"),
    (lambda c: c["operator"].update(kind="laplace"), "operator.kind"),
    (lambda c: c["operator"].update(p="two"), "operator.p"),
    (lambda c: c["domain"].update(radius=-1), "domain"),
    (lambda c: c.update(command="solve"), "command"),
    (lambda c: c.update(h=0), "h"),
    (lambda c: c.update(seed=-3), "seed"),
    (lambda c: c.pop("domain"), "domain"),
    (lambda c: c.update(solver={"damping": 2.0}), "solver"),
    (lambda c: c.update(formats=["xml"]), "formats"),
])
def test_schema_errors_name_the_field(mutate, field):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg)
    assert exc.value.path == field and str(exc.value).startswith(field)


def test_load_config_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"command": "eigen",\n  "h": }')
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert "line 2" in str(exc.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.json")


def test_sdf_grid_domain_relative_path(tmp_path):
    g, sdf = rasterize(Disc((0, 0), 1), 1 / 16)
    dump_grid(sdf, g, tmp_path / "grids" / "disc_sdf", "u")
    cfg = dict(BASE, domain={"type": "sdf_grid", "path": "grids/disc_sdf.json"})
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    c = load_config(tmp_path / "c.json")
    assert isinstance(c.domain, SdfGrid)
    assert len(c.sha256) == 64
    assert signed_distance(c.domain, np.zeros((1, 2)))[0] == pytest.approx(-1.0, abs=1e-12)
    bad = dict(BASE, domain={"type": "sdf_grid", "path": "missing.json"})
    (tmp_path / "d.json").write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="domain.path"):
        load_config(tmp_path / "d.json")


def test_bm_and_minkowski_sections():
    cfg = parse_config({"command": "bm-check", "operator": {"kind": "pucci_min", "lam": 1, "Lam": 2},
                        "domain0": {"type": "square", "side": 1}, "domain1": {"type": "disc", "radius": 1},
                        "ts": [0.5], "bm": {"subdivide": 2, "violation_budget": 0.02}})
    assert cfg.ts == (0.5,) and cfg.bm == {"subdivide": 2, "violation_budget": 0.02}
    with pytest.raises(ConfigError, match="weights"):
        parse_config({"command": "minkowski", "operator": {"kind": "p_laplacian", "p": 2},
                      "domains": [{"type": "disc", "radius": 1}], "weights": [0.5, 0.5]})

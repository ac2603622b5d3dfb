import pytest

from freebound.config import ConfigError, RunConfig, parse_config, serialize

MINIMAL_1D = """\
mode = solve
[grid]
dim = 1
origin = 0
extent = 1
n = 65
[boundary]
faces = xmin
kind = constant
value = 0.5
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL_1D)
    assert isinstance(cfg, RunConfig)
    assert cfg.grid.n == (65,)
    assert cfg.nonlinear.kind == "zero"
    assert cfg.force.q0 == 1.0
    assert cfg.diagnostics.seed == 0
    assert cfg.diagnostics.audit_trials == 200
    assert cfg.output.formats == ("csv", "json")
    spec = cfg.model()
    assert spec.grid.hmin == pytest.approx(1 / 64)
    assert spec.bc.mask.sum() == 1


def test_round_trip():
    cfg = parse_config(MINIMAL_1D)
    assert parse_config(serialize(cfg)) == cfg


def test_broadcast_2d():
    text = MINIMAL_1D.replace("dim = 1", "dim = 2").replace("origin = 0", "origin = -1").replace("extent = 1", "extent = 2")
    cfg = parse_config(text)
    assert cfg.grid.n == (65, 65)
    assert cfg.grid.origin == (-1.0, -1.0)


def test_lambda_above_half_F0():
    text = MINIMAL_1D + "[nonlinear]\nkind = quadratic_affine\nlam = 0.9\nF0 = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("lam" in msg for _, msg in exc.value.errors)


def test_duplicate_key_names_both_lines():
    text = MINIMAL_1D.replace("n = 65", "n = 65\nn = 129")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    line, msg = exc.value.errors[0]
    assert line == 7
    assert "6" in msg


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL_1D + "colour = red\n[extra]\n")
    assert len(exc.value.errors) == 2


def test_missing_grid_key():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL_1D.replace("n = 65\n", ""))


def test_bad_value_type():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL_1D.replace("n = 65", "n = many"))


def test_radius_beyond_box():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL_1D + "[diagnostics]\nrmax = 0.6\n")


def test_sweep_needs_sizes():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL_1D.replace("mode = solve", "mode = sweep"))

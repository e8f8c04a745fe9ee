"""Scenario files: loading, validation anchors, overrides, builtins."""

import pytest

from prerand.errors import ValidationError
from prerand.metrics import PreRandersMetric
from prerand.scenario import builtin_dir, list_builtins, load_scenario

BASE = """\
name = "t"
[manifold]
kind = "torus"
bounds = [[0.0, 1.0], [0.0, 1.0]]
[pre_randers]
h = [["1", "0"], ["0", "1"]]
omega = ["0", "0"]
"""

BUILTINS = ("cut_torus_point", "euclidean_plane", "magnetic_constant_B",
            "magnetic_zeroflux_torus", "paper_g2_torus", "plane_drift_05",
            "randers_torus", "vicious_cylinder")


def test_builtin_inventory():
    assert tuple(list_builtins()) == BUILTINS
    assert builtin_dir().is_dir()


@pytest.mark.parametrize("name", BUILTINS)
def test_every_builtin_loads(name):
    sc = load_scenario(name)
    assert sc.name == name
    assert isinstance(sc.metric, PreRandersMetric)
    assert sc.grid >= 4 and sc.stencil in (8, 16, 32)
    if name.startswith("magnetic"):
        assert sc.magnetic is not None and sc.energy is not None
    else:
        assert sc.magnetic is None


def test_numeric_overrides():
    sc = load_scenario("randers_torus", grid=24, stencil=8, seed=3)
    assert (sc.grid, sc.stencil, sc.seed) == (24, 8, 3)
    assert sc.resolved["numerics.grid"] == 24


def test_header_lines_sorted():
    sc = load_scenario("randers_torus", grid=24)
    lines = sc.header_lines({"zeta": 1, "alpha": 2})
    assert all(l.startswith("# ") and " = " in l for l in lines)
    keys = [l[2:].split(" = ")[0] for l in lines]
    assert keys == sorted(keys)
    assert "# alpha = 2" in lines and "# zeta = 1" in lines


def write(tmp_path, text):
    p = tmp_path / "s.toml"
    p.write_text(text)
    return str(p)


def test_load_from_path(tmp_path):
    sc = load_scenario(write(tmp_path, BASE))
    assert sc.name == "t"
    assert sc.chart.periodic.all()


def test_unknown_top_key_is_anchored(tmp_path):
    p = write(tmp_path, BASE + "[extras]\nfoo = 1\n")
    with pytest.raises(ValidationError, match=r"s\.toml:8: unknown section"):
        load_scenario(p)


def test_exactly_one_metric_section(tmp_path):
    two = BASE + '[som]\nbeta = "1"\nomega = ["0","0"]\ng0 = [["1","0"],["0","1"]]\n'
    with pytest.raises(ValidationError, match="exactly one metric section"):
        load_scenario(write(tmp_path, two))
    none = "\n".join(BASE.splitlines()[:4]) + "\n"
    with pytest.raises(ValidationError, match="exactly one metric section"):
        load_scenario(write(tmp_path, none))


def test_numerics_validation(tmp_path):
    with pytest.raises(ValidationError, match="grid must be >= 4"):
        load_scenario(write(tmp_path, BASE + "[numerics]\ngrid = 3\n"))
    with pytest.raises(ValidationError, match="stencil must be 8, 16 or 32"):
        load_scenario(write(tmp_path, BASE + "[numerics]\nstencil = 12\n"))


def test_task_key_validation(tmp_path):
    with pytest.raises(ValidationError, match="unknown task key 'wormhole'"):
        load_scenario(write(tmp_path, BASE + "[task]\nwormhole = 1\n"))


def test_bad_expression_reported(tmp_path):
    broken = BASE.replace('h = [["1", "0"]', 'h = [["1 +", "0"]')
    with pytest.raises(ValidationError, match="cannot parse expression"):
        load_scenario(write(tmp_path, broken))


def test_unknown_builtin_lists_options():
    with pytest.raises(ValidationError, match="builtins are"):
        load_scenario("no_such_scenario")

"""Command-line driver: outputs, determinism, exit codes."""

import numpy as np
import pytest

from prerand.cli import main


def run(argv, capsys):
    rc = main(argv)
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def test_distance_pair(capsys):
    rc, out, _ = run(["distance", "--config", "plane_drift_05", "--grid", "24",
                      "--from", "0,0.5", "--to", "1,0.5"], capsys)
    assert rc == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "kind,from_x,from_y,to_x,to_y,value"
    assert rows[1].split(",")[0] == "d_F" and rows[1].endswith("1.5")
    assert rows[2].endswith("0.5")
    assert rows[3].split(",")[0] == "d_s" and rows[3].endswith("1")
    assert "# status = finite" in out


def test_distance_is_deterministic(tmp_path, capsys):
    texts = []
    for k in range(2):
        out = tmp_path / f"run{k}.csv"
        rc, _, _ = run(["distance", "--config", "randers_torus", "--grid", "16",
                        "--field", "--out", str(out)], capsys)
        assert rc == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]
    rows = [l for l in texts[0].decode().splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 16 * 16


def test_distance_reports_collapse(capsys):
    rc, out, _ = run(["distance", "--config", "vicious_cylinder",
                      "--grid", "12"], capsys)
    assert rc == 0
    assert "# status = neg_infinity" in out
    assert "# witness_length = " in out
    assert "-inf" in out


def test_classify_report(capsys):
    rc, out, _ = run(["classify", "--config", "vicious_cylinder",
                      "--grid", "12"], capsys)
    assert rc == 0
    assert "totally_vicious" in out and "HOLDS" in out
    assert out.count("FAILS") >= 6


def test_weight_report(capsys):
    rc, out, _ = run(["weight", "--config", "randers_torus", "--grid", "16"],
                     capsys)
    assert rc == 0
    assert "wt = 0.300000" in out and "case 6" in out
    assert "delta-ladder" in out


def test_convert_to_som_audited(capsys):
    rc, out, _ = run(["convert", "--config", "randers_torus", "--to", "som"],
                     capsys)
    assert rc == 0
    assert "# audit_max_dev = 0" in out
    assert "[som]" in out and 'beta = "1"' in out
    # composed expressions survive as quoted text
    assert '"(1) - (0.3)*(0.3)"' in out


def test_convert_magnetic_refused(capsys):
    rc, _, err = run(["convert", "--config", "magnetic_constant_B",
                      "--to", "som"], capsys)
    assert rc == 2
    assert "explicit potential" in err


def test_geodesic_ray_and_connect(tmp_path, capsys):
    rc, out, _ = run(["geodesic", "--config", "euclidean_plane", "--grid", "16",
                      "--from", "0.2,0.2", "--dir", "1,0", "--span", "0.5",
                      "--steps", "64"], capsys)
    assert rc == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "s,x,y,vx,vy"
    last = np.array(rows[-1].split(","), dtype=float)
    assert np.allclose(last, [0.5, 0.7, 0.2, 1.0, 0.0], atol=1e-9)

    rc, out, _ = run(["geodesic", "--config", "euclidean_plane", "--grid", "16",
                      "--from", "0.2,0.2", "--to", "0.8,0.6"], capsys)
    assert rc == 0
    assert f"# length = {np.hypot(0.6, 0.4):.12g}"[:18] in out


def test_geodesic_leaving_chart_is_exit_3(capsys):
    rc, _, err = run(["geodesic", "--config", "euclidean_plane",
                      "--from", "0.2,0.2", "--dir", "1,0", "--span", "10"],
                     capsys)
    assert rc == 3
    assert "outside chart" in err


def test_cutlocus_csv(capsys):
    rc, out, _ = run(["cutlocus", "--config", "cut_torus_point",
                      "--grid", "24"], capsys)
    assert rc == 0
    assert "# n_cut = " in out and "# detector_agreement = 1" in out
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "x,y,rho,multiplicity,nonsmooth_stat,cut"
    assert len(rows) == 1 + 24 * 24


def test_magnetic_ray_conserves_energy(capsys):
    rc, out, _ = run(["magnetic", "--config", "magnetic_constant_B",
                      "--steps", "512"], capsys)
    assert rc == 0
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "t,x,y,vx,vy,energy,eleq_residual"
    data = np.array([r.split(",") for r in rows[1:]], dtype=float)
    assert np.max(np.abs(data[:, 5] - 0.5)) < 1e-8


def test_magnetic_connect_refused_at_low_energy(capsys):
    rc, _, err = run(["magnetic", "--config", "magnetic_constant_B",
                      "--to", "0.7,0.7"], capsys)
    assert rc == 2
    assert "connection hypotheses fail" in err


def test_unknown_scenario_is_exit_2(capsys):
    rc, _, err = run(["distance", "--config", "no_such_scenario"], capsys)
    assert rc == 2
    assert "builtins are" in err


def test_selftest_single_criterion(capsys):
    rc, out, _ = run(["selftest", "--criteria", "1"], capsys)
    assert rc == 0
    assert "criterion 1" in out and "PASS" in out
    assert "1/1 criteria passed" in out

import csv
import json

import numpy as np
import pytest

from diskmin.cli import main
from diskmin.errors import AssumptionViolated

import oracles


def read_csv(path):
    with open(path) as fh:
        comments = []
        rows = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line.rstrip("\n"))
            else:
                rows.append(line.rstrip("\n"))
    return comments, list(csv.reader(rows))


def test_simulate_reference(tmp_path, capsys):
    code = main(["simulate", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0", "--tf", "4",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    comments, rows = read_csv(tmp_path / "trajectory.csv")
    assert comments and comments[0].startswith("# config:")
    header, data = rows[0], rows[1:]
    assert header == ["t", "x1", "x2", "x3", "x4", "p1", "p2", "p3", "p4",
                      "u1", "u2", "rho", "hmax", "event"]
    switch_rows = [r for r in data if r[-1] == "switch"]
    assert len(switch_rows) == 1
    assert abs(float(switch_rows[0][0]) - 2.0) <= 1e-8
    assert float(switch_rows[0][12]) == 0.0          # hmax continuous at rho=0
    doc = json.loads((tmp_path / "switches.json").read_text())
    assert doc["switches"][0]["sigma_class"] == "SIGMA_MINUS"
    assert abs(doc["switches"][0]["t_bar"] - 2.0) <= 1e-8
    assert doc["config"]["command"] == "simulate"
    assert doc["config"]["tolerances"]["tol_int"] == 1e-10


def test_simulate_deterministic_reruns(tmp_path):
    args = ["simulate", "--system", "nilpotent-kepler", "--x0", "0,0,0,0",
            "--p0", "-1,0,-2,0", "--tf", "3", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    first = (tmp_path / "trajectory.csv").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "trajectory.csv").read_bytes() == first


def test_simulate_zero_horizon_single_row(tmp_path):
    code = main(["simulate", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0", "--tf", "0",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 2                            # header + one sample


def test_missing_system_is_config_error(capsys):
    code = main(["simulate", "--x0", "0,0,0,0", "--p0", "-1,0,-2,0",
                 "--tf", "1"])
    assert code == 1
    assert "system" in capsys.readouterr().out


def test_short_vector_is_config_error(tmp_path):
    code = main(["simulate", "--system", "nilpotent-kepler",
                 "--x0", "0,0", "--p0", "-1,0,-2,0", "--tf", "1",
                 "--out-dir", str(tmp_path)])
    assert code == 1


def test_negative_tolerance_is_config_error(tmp_path):
    code = main(["simulate", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0", "--tf", "1",
                 "--tol-int", "-1e-10", "--out-dir", str(tmp_path)])
    assert code == 1


@pytest.mark.parametrize("p0,expected", [
    ("-1,0,-2,0", "Ss, t_bar=2.000000"),
    ("-1,0,2,0", "Su"),
    ("-1,0,-2,-0.5", "S0"),
])
def test_classify_strata(tmp_path, capsys, p0, expected):
    code = main(["classify", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", p0, "--horizon", "5",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith(expected)
    doc = json.loads((tmp_path / "stratum.json").read_text())
    assert doc["label"] == expected.split(",")[0]


def test_classify_assumption_violation_exit_code(tmp_path, monkeypatch):
    import diskmin.cli as cli

    def boom(*a, **kw):
        raise AssumptionViolated("A2", "forced for the exit-code contract")
    monkeypatch.setattr(cli, "stratum_of", boom)
    code = main(["classify", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0",
                 "--out-dir", str(tmp_path)])
    assert code == 3


def test_jacobi_reference_verdict(tmp_path):
    code = main(["jacobi", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0", "--tf", "4",
                 "--npoints", "51", "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "verdict.json").read_text())
    assert doc["flags"]["normal"] is True
    assert abs(doc["t_bar"] - 2.0) <= 1e-8
    assert doc["config"]["command"] == "jacobi"
    comments, rows = read_csv(tmp_path / "det_profile.csv")
    assert comments[0].startswith("# config:")
    assert rows[0] == ["t", "detM", "side", "conj_flag"]
    sides = [r[2] for r in rows[1:]]
    assert "-" in sides and "+" in sides


def test_jacobi_abnormal_verdict_withheld(tmp_path):
    code = main(["jacobi", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--p0", "-1,0,-2,0", "--tf", "4",
                 "--p0-cost", "0", "--npoints", "51",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "verdict.json").read_text())
    assert doc["statements"] == ["verdict withheld"]
    assert doc["reasons"]


def test_shoot_reference_target(tmp_path):
    code = main(["shoot", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--xf", "-0.5,0,-1,0",
                 "--guess-p0", "-1.005,0.003,-1.99,0.004",
                 "--guess-tf", "3.02", "--tol-shoot", "1e-10",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "shoot.json").read_text())
    assert doc["converged"] is True
    assert doc["switch_count"] == 1
    assert doc["iterations"] <= 15
    assert abs(doc["t_f"] - 3.0) <= 1e-8
    assert np.abs(np.array(doc["p0"]) - oracles.REF_P0).max() <= 1e-7


def test_shoot_budget_exhaustion_is_numerics_error(tmp_path, capsys):
    code = main(["shoot", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--xf", "-0.5,0,-1,0",
                 "--guess-p0", "-1.005,0.003,-1.99,0.004",
                 "--guess-tf", "3.02", "--max-iter", "1",
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "NewtonDivergence" in capsys.readouterr().out


def test_value_map_artifacts(tmp_path):
    code = main(["value-map", "--system", "nilpotent-kepler",
                 "--x0", "0,0,0,0", "--center", "-0.5,0,-1,0",
                 "--direction", "0,1,1,0", "--span", "0.004", "--count", "5",
                 "--guess-p0", "-1,0,-2,0", "--guess-tf", "3",
                 "--tol-shoot", "1e-10", "--out-dir", str(tmp_path)])
    assert code == 0
    comments, rows = read_csv(tmp_path / "value_map.csv")
    assert any(c.startswith("# slope_before:") for c in comments)
    assert rows[0][:6] == ["s", "xf1", "xf2", "xf3", "xf4", "tf"]
    assert len(rows) == 6
    doc = json.loads((tmp_path / "value_map.json").read_text())
    assert doc["n_converged"] == 5
    assert doc["seam_s"] == pytest.approx(0.004, abs=1e-12)
    # the middle row sits on the seam: t_f equals the reference time
    mid = rows[3]
    assert float(mid[11]) == 0.0
    assert abs(float(mid[5]) - 3.0) <= 1e-9


def test_scan_parallel_matches_serial(tmp_path):
    base = ["scan", "--system", "nilpotent-kepler", "--x0", "0,0,0,0",
            "--p0", "-1,0,-2,0", "--axes", "2,4", "--radius", "0.02",
            "--n", "5", "--horizon", "5"]
    d1, d2 = tmp_path / "serial", tmp_path / "parallel"
    assert main(base + ["--jobs", "1", "--out-dir", str(d1)]) == 0
    assert main(base + ["--jobs", "2", "--out-dir", str(d2)]) == 0
    _, rows1 = read_csv(d1 / "scan.csv")
    _, rows2 = read_csv(d2 / "scan.csv")
    assert rows1 == rows2
    labels = {(round(float(r[1]), 10), round(float(r[3]), 10)): r[4]
              for r in rows1[1:]}
    # the switching sheet is the closed-form diagonal p4 = 2 p2
    assert labels[(0.0, 0.0)] == "Ss"
    assert labels[(0.01, 0.02)] == "Ss"
    assert labels[(0.02, 0.02)] == "S0"


def test_config_file_with_flag_override(tmp_path):
    cfg = {"system": "nilpotent-kepler", "x0": [0, 0, 0, 0],
           "p0": [-1, 0, -2, 0], "tf": 1.0,
           "tol": {"tol_switch_rho_rel": 1e-9}}
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    code = main(["simulate", "--config", str(cfg_path), "--tf", "4",
                 "--out-dir", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "switches.json").read_text())
    assert doc["config"]["tf"] == 4.0                 # flag wins
    assert doc["config"]["tolerances"]["tol_switch_rho_rel"] == 1e-9
    assert len(doc["switches"]) == 1                  # reached past t_bar=2


def test_unknown_tolerance_key_is_config_error(tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"system": "nilpotent-kepler",
                                    "tol": {"bogus": 1e-3}}))
    assert main(["simulate", "--config", str(cfg_path), "--x0", "0,0,0,0",
                 "--p0", "-1,0,-2,0", "--tf", "1"]) == 1

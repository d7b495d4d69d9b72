import json
import subprocess
import sys

import pytest

from barabanov import examples as ex
from barabanov.cli import main
from barabanov.model import system_to_dict


def run(*argv):
    return main([str(a) for a in argv])


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_validate_example1(tmp_path):
    assert run("validate", "--example", "example1", "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "validation.json").read_text())
    assert rec["irreducible"] and rec["passed"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man) == {"command", "config", "versions", "tolerances", "outputs"}
    assert man["command"] == "validate" and man["outputs"] == ["validation.json"]
    assert man["config"]["example"] == "example1"


def test_validate_untuned_pair_fails(tmp_path):
    # its vertices are not Hurwitz before shifting
    assert run("validate", "--example", "sample-pair", "--out", tmp_path) == 1
    assert not json.loads((tmp_path / "validation.json").read_text())["passed"]


def test_validate_malformed_system(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"n": 3, "pair": {"A": [[1, 0], [0, 1]], "b": [1, 0, 0], "c": [0, 1, 0]}})
    assert run("validate", "--system", bad, "--out", tmp_path) == 2
    assert "pair.A" in capsys.readouterr().err


def test_missing_system_file(tmp_path, capsys):
    assert run("validate", "--system", tmp_path / "nope.json", "--out", tmp_path) == 2
    assert "not found" in capsys.readouterr().err


def test_system_required(tmp_path):
    assert run("validate", "--out", tmp_path) == 2
    assert run("validate", "--example", "example1", "--system", "x.json", "--out", tmp_path) == 2


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_simulate_with_signal_file(tmp_path):
    sig = write(tmp_path / "sig.json", [[0.5, 0], [0.7, 1]])
    assert run("simulate", "--example", "example1", "--signal", sig, "--x0", "[1, 0, 0]",
               "--l0", "[0, 1, 0]", "--out", tmp_path) == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "time,x_1,x_2,x_3,l_1,l_2,l_3,u"
    assert float(lines[-1].split(",")[0]) == pytest.approx(1.2)


@pytest.mark.parametrize("signal,needle", [
    ([[0.5, 5]], "out of range"),
    ([[-1.0, 0]], "positive"),
    ({"segments": 3}, "segments"),
])
def test_simulate_bad_signal(tmp_path, capsys, signal, needle):
    sig = write(tmp_path / "sig.json", signal)
    assert run("simulate", "--example", "example1", "--signal", sig, "--out", tmp_path) == 2
    assert needle in capsys.readouterr().err


def test_simulate_bad_vector(tmp_path, capsys):
    assert run("simulate", "--example", "example1", "--x0", "[1, 2]", "--out", tmp_path) == 2
    assert "x0" in capsys.readouterr().err
    assert run("simulate", "--example", "example1", "--x0", "oops", "--out", tmp_path) == 2


def test_extremal_rejects_zero_start(tmp_path, capsys):
    pair = tmp_path / "p.json"
    write(pair, system_to_dict(ex.sample_pair()))
    assert run("extremal", "--system", pair, "--x0", "[0, 0, 0]", "--out", tmp_path) == 2
    assert "x0" in capsys.readouterr().err


def test_extremal_needs_pair(tmp_path, capsys):
    assert run("extremal", "--example", "example1", "--out", tmp_path) == 2
    assert "pair" in capsys.readouterr().err


def test_rho_singleton_and_config(tmp_path):
    A = [[-1.0, 2.0], [0.0, -0.5]]
    sys_file = write(tmp_path / "s.json", {"n": 2, "generators": [A]})
    cfg = write(tmp_path / "cfg.json", {"tol": 1e-4})
    assert run("rho", "--system", sys_file, "--config", cfg, "--out", tmp_path) == 0
    rec = json.loads((tmp_path / "rho.json").read_text())
    assert rec["value"] == pytest.approx(-0.5, abs=1e-4)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["tol"] == 1e-4 and man["tolerances"]["tol"] == 1e-4


def test_config_unknown_key(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {"tolerance": 1e-4})
    assert run("rho", "--example", "example2", "--config", cfg, "--out", tmp_path) == 2
    assert "tolerance" in capsys.readouterr().err


def test_config_bad_json(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{")
    assert run("rho", "--example", "example2", "--config", cfg, "--out", tmp_path) == 2


def test_command_line_overrides_config(tmp_path):
    cfg = write(tmp_path / "cfg.json", {"tol": 1e-2})
    assert run("rho", "--example", "supgap", "--config", cfg, "--tol", "1e-3", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["tol"] == 1e-3


def test_norm_and_dual_round_trip(tmp_path):
    assert run("norm", "--example", "example2", "--out", tmp_path) == 0
    for name in ("field.json", "level_set.obj"):
        assert (tmp_path / name).exists()
    out2 = tmp_path / "dual"
    assert run("dual", "--field", tmp_path / "field.json", "--out", out2) == 0
    summary = json.loads((out2 / "dual_summary.json").read_text())
    assert summary["polar_residual"] <= 2 * summary["grid_error"]


def test_norm_divergence_is_failure(tmp_path):
    sys_file = write(tmp_path / "s.json", {"n": 2, "generators": [[[0.5, -1.0], [1.0, 0.5]],
                                                                  [[0.5, -2.0], [0.5, 0.5]]]})
    assert run("norm", "--system", sys_file, "--out", tmp_path) == 1
    assert json.loads((tmp_path / "norm_error.json").read_text())["error"] == "DivergenceError"


def test_dual_bad_field(tmp_path, capsys):
    bad = write(tmp_path / "f.json", {"n": 2, "nodes": [], "values": []})
    assert run("dual", "--field", bad, "--out", tmp_path) == 2


def test_reproduce_example2_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("reproduce", "example2", "--out", a) == 0
    assert run("reproduce", "example2", "--out", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    rep = json.loads((a / "example2_report.json").read_text())
    assert rep["passed"] and all(c["passed"] for c in rep["checks"])
    man = json.loads((a / "manifest.json").read_text())
    assert man["outputs"] == ["example2_level_set.obj", "example2_report.json"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "barabanov", "validate", "--example", "example2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "barabanov", "validate", "--system",
                           str(tmp_path / "missing.json"), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2

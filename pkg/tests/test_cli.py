import json

import numpy as np
import pytest

from coordsim import cli, oracle


def test_exact_line_example(tmp_path, capsys):
    assert cli.main(["exact", "--scenario", "LINE-EX", "--schedule", "1,10,100,1000", "--out", str(tmp_path)]) == 0
    js = json.loads((tmp_path / "LINE-EX_exact.json").read_text())
    lam = np.array(list(js["lambda"].values()))
    np.testing.assert_allclose(lam, [0.5, 0.5, 0.4085, 0.5, 0.4085], atol=0.01)
    assert len(js["solutions"]) == 4
    assert "gap_bound" in js["solutions"][-1]


def test_run_writes_trace_and_summary(tmp_path):
    rc = cli.main(["run", "--scenario", "STAR-C1", "--algo", "steep", "--frames", "50", "--seed", "1",
                   "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "STAR-C1_steep_b5_s1.csv").exists()
    summ = json.loads((tmp_path / "STAR-C1_steep_b5_s1.json").read_text())
    assert summ["algorithm"] == "steep" and summ["frames"] == 50


def test_unknown_preset_is_a_usage_error(tmp_path, capsys):
    assert cli.main(["run", "--scenario", "NOPE", "--out", str(tmp_path)]) == 1
    assert "unknown preset" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run", "--scenario", "STAR-C1"], ["sweep", "--scenario", "STAR-C1",
                                                                                   "--betas", "a,b", "--out", "x"],
                                  ["exact", "--scenario", "LINE-EX", "--beta", "2", "--schedule", "1,2", "--out", "x"]])
def test_usage_errors(argv):
    assert cli.main(argv) == 1


def test_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["exact", "--scenario", "LINE-EX", "--out", str(blocker / "sub")]) == 3


def test_nonconvergence_exit_code(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise oracle.NonConvergenceError("stuck")
    monkeypatch.setattr(oracle, "solve_a_cg_opt", fail)
    assert cli.main(["exact", "--scenario", "LINE-EX", "--beta", "3", "--out", str(tmp_path)]) == 2


def test_game_command(tmp_path):
    assert cli.main(["game", "--scenario", "LINE-EX", "--beta", "2", "--steps", "100", "--out", str(tmp_path)]) == 0
    js = json.loads((tmp_path / "LINE-EX_game.json").read_text())
    assert js["oracle_distance"] <= 1e-4
    lines = (tmp_path / "LINE-EX_ascent.csv").read_text().splitlines()
    assert lines[0].startswith("# schema: coordsim-ascent-v1")
    pots = np.loadtxt(lines[2:], delimiter=",")[:, 1]
    assert np.all(np.diff(pots) >= -1e-12)


def test_sweep_command(tmp_path):
    rc = cli.main(["sweep", "--scenario", "LINE-EX", "--betas", "0.5,2", "--frames", "40", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "LINE-EX_sweep.json").exists()


def test_columns_command(capsys):
    assert cli.main(["columns", "--scenario", "LINE-EX"]) == 0
    assert capsys.readouterr().out.splitlines()[2] == "3\ttheta_n1"


def test_verify_subset(capsys):
    assert cli.main(["verify", "--only", "ae"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2

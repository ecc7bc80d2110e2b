import csv
import json
import subprocess
import sys

import pytest

from qho_kam import homological as hom
from qho_kam.cli import main

SMALL = "delta = 0.1\nN = 16\nstop_tol = 0.0\n"


def run_cli(tmp_path, command, text, *extra):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out / command


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_perturbation_constant(tmp_path):
    code, d = run_cli(tmp_path, "perturbation", SMALL + 'potential = "constant"\n')
    assert code == 0
    rep = json.loads((d / "decay_report.json").read_text())
    assert rep["inej_sup"] < 1e-14 and rep["sqrtj_sup"] < 1e-14
    assert (d / "P_blocks" / "manifest.json").exists()


def test_perturbation_cos_two_blocks(tmp_path):
    code, d = run_cli(tmp_path, "perturbation", SMALL)
    assert code == 0
    rep = json.loads((d / "decay_report.json").read_text())
    big = [m for m in rep["mode_norms"] if m["op_norm"] > 1e-12]
    assert sorted(m["k"] for m in big) == [[-1], [1]]


def test_config_conflict_exit_2(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "kam", "alpha = 0.45\ndelta = 0.1\nN = 16\n")
    assert code == 2
    assert "alpha" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["delta = 0.1\nN = 8\n", "delta = 0.1\neps = 1.0\nN = 16\n",
                                  "delta = 0.1\nsigma_0 = -1.0\nN = 16\n", "delta = 0.1\nfoo = 1\n"])
def test_invalid_configs_exit_2(tmp_path, text):
    assert run_cli(tmp_path, "kam", text)[0] == 2


def test_bad_seed_exit_2(tmp_path):
    assert run_cli(tmp_path, "measure", SMALL, "--seed", "-1")[0] == 2


def test_kam_eps_zero(tmp_path):
    code, d = run_cli(tmp_path, "kam", SMALL + "eps = 0.0\n")
    assert code == 0
    rows = read_csv(d / "step_log.csv")
    assert len(rows) == 1 and float(rows[0]["P_op"]) == 0.0
    lam = read_csv(d / "lambda_inf.csv")
    assert all(float(r["lambda_inf_minus_2i_minus_1"]) == 0.0 for r in lam)


def test_kam_default_run(tmp_path):
    code, d = run_cli(tmp_path, "kam", SMALL)
    assert code == 0
    rows = read_csv(d / "step_log.csv")
    assert [int(r["m"]) for r in rows] == [0, 1, 2, 3, 4]
    assert float(rows[1]["eps_m"]) == pytest.approx(1e-4, rel=1e-12)
    summary = json.loads((d / "summary.json").read_text())
    assert summary["kept"] is True and summary["max_drift"] <= 2e-3


def test_kam_rejected_exit_3(tmp_path, capsys):
    code, d = run_cli(tmp_path, "kam", SMALL + "omega = [2.0]\n")
    assert code == 3
    assert "rejected" in capsys.readouterr().err
    summary = json.loads((d / "summary.json").read_text())
    assert summary["kept"] is False and summary["rejection"][0] == "carve"
    viol = read_csv(d / "violations.csv")
    assert viol and all(float(r["divisor"]) == 0.0 for r in viol if r["kind"] == "carve")


def test_measure_single_sample(tmp_path):
    code, d = run_cli(tmp_path, "measure", SMALL + "n_samples = 1\n")
    assert code == 0
    rows = read_csv(d / "measure_scan.csv")
    assert all(float(r["fraction"]) in (0.0, 1.0) for r in rows)


def test_measure_gamma_sweep_monotone(tmp_path):
    text = SMALL + 'n_samples = 2048\n[measure]\nmode = "gamma"\ngamma_grid = [1e-3, 1e-2, 1e-1]\nK_grid = [1, 2]\n'
    code, d = run_cli(tmp_path, "measure", text)
    assert code == 0
    rows = read_csv(d / "measure_scan.csv")
    for K in ("1", "2"):
        fr = [float(r["fraction"]) for r in rows if r["K"] == K]
        assert fr == sorted(fr) and fr[-1] > 0


def test_measure_eps_mode(tmp_path):
    text = SMALL + 'n_samples = 1024\ngamma_scale = 2e-3\n[measure]\nmode = "eps"\neps_grid = [0.0, 1e-3]\n'
    code, d = run_cli(tmp_path, "measure", text)
    assert code == 0
    rows = read_csv(d / "measure_scan.csv")
    assert len(rows) == 8
    assert all(float(r["fraction_cumulative"]) == 0.0 for r in rows[:4])


def test_verify_default_passes(tmp_path):
    code, d = run_cli(tmp_path, "verify", SMALL)
    assert code == 0
    rep = json.loads((d / "verify_report.json").read_text())
    assert rep["passed"] is True


def test_verify_detects_sign_flip(tmp_path):
    text = SMALL + "[verify]\nsamples = 10\nseries_M = 1000\ninject_sign_flip = true\n"
    code, d = run_cli(tmp_path, "verify", text)
    assert code == 4
    rep = json.loads((d / "verify_report.json").read_text())
    assert rep["passed"] is False
    assert hom._SOLUTION_SIGN == 1.0


def test_evolve_eps_zero_flat(tmp_path):
    text = SMALL + "eps = 0.0\n[evolve]\nT = 2.0\nn_out = 11\n"
    code, d = run_cli(tmp_path, "evolve", text)
    assert code == 0
    rows = read_csv(d / "trajectory.csv")
    for p in ("norm_0", "norm_1", "norm_2"):
        v = [float(r[p]) for r in rows]
        assert max(v) - min(v) < 1e-14


def test_evolve_cross_check(tmp_path):
    text = SMALL + "[evolve]\nT = 1.0\nn_out = 11\ncross_check = true\n"
    code, d = run_cli(tmp_path, "evolve", text)
    assert code == 0
    s = json.loads((d / "summary.json").read_text())
    assert s["within_band"] is True and s["max_diff_direct"] < 1e-8


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL + "eps = 0.0\n")
    r = subprocess.run([sys.executable, "-m", "qho_kam", "kam", "--config", str(cfg), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "kam" / "step_log.csv").exists()


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for c in ("perturbation", "kam", "measure", "verify", "evolve"):
        assert c in out

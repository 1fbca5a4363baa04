import subprocess
import sys
from pathlib import Path

from distsg.cli import main

CONFIGS = str(Path(__file__).resolve().parents[1] / "configs")


def test_unknown_flag_is_usage_error(capsys):
    assert main(["graph", CONFIGS + "/path3.edges", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert main([]) == 1


def test_graph_path3(capsys):
    assert main(["graph", CONFIGS + "/path3.edges"]) == 0
    out = capsys.readouterr().out
    assert "diameter: 2" in out
    assert "eigenvalues: 0, 0.333333333333, 1" in out


def test_graph_disconnected(tmp_path, capsys):
    p = tmp_path / "g.edges"
    p.write_text("1 2\n3 4\n")
    assert main(["graph", str(p)]) == 0
    assert "connected: False" in capsys.readouterr().out


def test_graph_missing_file(capsys):
    assert main(["graph", "nope.edges"]) == 1


def test_lemma_check_rejects_step_sizes(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 3\nm = 2\ntopology = path\nmu = 0.5\nnu = 0.5\n")
    assert main(["lemma-check", str(cfg)]) == 1
    assert "mu*(1+4*nu) <= 1" in capsys.readouterr().err


def test_lemma_check_passes(tmp_path, capsys):
    cfg = tmp_path / "ok.cfg"
    cfg.write_text("n = 3\nm = 2\ntopology = path\nmu = 0.2\nnu = 0.5\n")
    assert main(["lemma-check", str(cfg), "--runs", "10", "--steps", "10", "--seed", "3"]) == 0
    assert capsys.readouterr().out.count("PASS") == 5


def test_simulate_and_diagnose(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", CONFIGS + "/small.cfg", "--runs", "10", "--steps", "80", "--out", str(out)]) == 0
    assert {"mse.csv", "mse.svg", "summary.txt", "config.txt", "trajectory_run0.csv"} <= {
        p.name for p in out.iterdir()}
    assert "runs = 10" in (out / "config.txt").read_text()
    capsys.readouterr()
    diag = tmp_path / "diag"
    assert main(["diagnose", str(out / "trajectory_run0.csv"), "--out", str(diag), "--stride", "5"]) == 0
    text = capsys.readouterr().out
    assert "cooperative excitation:" in text and "noise partial sum" in text
    assert (diag / "excitation.csv").exists() and (diag / "noise_trace.csv").exists()


def test_simulate_horizon_rejected(tmp_path):
    cfg = tmp_path / "boom.cfg"
    cfg.write_text("n = 2\nm = 1\ntopology = path\ngrowth = 1e40\nxi_std = 1\nsteps = 10\nruns = 1\n")
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_simulate_io_failure_is_runtime_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    args = ["simulate", CONFIGS + "/small.cfg", "--runs", "1", "--steps", "5", "--out", str(blocker / "o")]
    assert main(args) == 2
    assert "runtime error" in capsys.readouterr().err


def test_diagnose_bad_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("not,a,trajectory\n")
    assert main(["diagnose", str(p)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "distsg", "graph", CONFIGS + "/path3.edges"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "l2:" in proc.stdout

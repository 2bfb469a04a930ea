import subprocess
import sys

import numpy as np
import pytest

from sbattn.cli import main
from sbattn.io import load_matrix, save_matrix

SMALL = ["--n", "64", "--d", "4", "--repeats", "1", "--thresholds", "0.1,0.2"]


def test_sweep_csv(capsys):
    assert main(["sweep", *SMALL, "--no-timing"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "threshold,engine,wall_ms_median,linf_err,rel_fro_err,mask_size,alpha_hat"
    assert len(lines) == 1 + 2 * 3
    assert all(line.split(",")[2] == "0" for line in lines[1:])


def test_sweep_no_timing_is_byte_stable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", *SMALL, "--no-timing", "--out", str(a)]) == 0
    assert main(["sweep", *SMALL, "--no-timing", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# sweep\nn = 32\nd=2\nthresholds=0.1\nrepeats=1\nengines=exact,as23\n")
    assert main(["sweep", "--config", str(cfg), "--n", "48", "--no-timing"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert lines[1].endswith(f",{48 * 48},1")


def test_usage_errors(tmp_path):
    assert main(["sweep", *SMALL, "--engines", "nope"]) == 2
    assert main(["sweep", "--n", "64", "--thresholds", "0.3,0.2"]) == 2
    assert main(["bogus"]) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("colour=blue\n")
    assert main(["sweep", "--config", str(cfg)]) == 2


def test_seed_env(monkeypatch, capsys):
    monkeypatch.setenv("SBATTN_SEED", "x")
    assert main(["verify"]) == 2


def test_verify_and_fault(capsys):
    assert main(["verify", "fast"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == len(out.strip().splitlines())
    assert main(["verify", "fast", "--inject-fault"]) == 1
    assert "FAIL factorization_exactness" in capsys.readouterr().out


def test_dist(tmp_path, capsys):
    p = tmp_path / "m.txt"
    save_matrix(p, np.random.default_rng(0).normal(0, 0.1, (64, 8)))
    assert main(["dist", "--input", str(p), "--bins", "10"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 11 + 1
    assert lines[-1].startswith("# n=64,d=8,")
    assert sum(int(line.split(",")[2]) for line in lines[1:-1]) == 64 * 8


def test_convert_and_io_errors(tmp_path):
    src, dst = tmp_path / "a.txt", tmp_path / "a.bin"
    M = np.arange(6.0).reshape(2, 3) / 7
    save_matrix(src, M)
    assert main(["convert", str(src), str(dst), "--to", "binary"]) == 0
    assert np.array_equal(load_matrix(dst), M)
    assert main(["convert", str(tmp_path / "missing"), str(dst), "--to", "text"]) == 3
    src.write_text("DMAT 2 2\n1\n")
    assert main(["convert", str(src), str(dst), "--to", "text"]) == 3


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sbattn", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "sweep" in r.stdout

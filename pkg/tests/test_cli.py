import json
import subprocess
import sys

import numpy as np
import pytest

from coarsecert.cli import RunConfig, UsageError, main, parse_range
from coarsecert.groups import LatticeGroup, ball_enumerate
from coarsecert.kernels import TubeKernel


def run_cli(tmp_path, *args):
    return main([*args, "--out", str(tmp_path / "out")])


def report_dirs(tmp_path):
    return sorted((tmp_path / "out").iterdir())


def load_report(path):
    return json.loads((path / "report.json").read_text())


def indefinite_kernel_file(tmp_path):
    Z1 = LatticeGroup(1)
    window = ball_enumerate(Z1, 4)
    pts = [(-1,), (0,), (1,)]
    v = np.ones(3) / np.sqrt(3)
    bad = np.eye(3) - 1.1 * np.outer(v, v)
    rows = {s: {s: 1.0} for s in window}
    for i, s in enumerate(pts):
        rows[s] = {t: float(bad[i, j]) for j, t in enumerate(pts)}
    h = TubeKernel.from_rows(Z1, "positive-type", rows, normalized=False)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(h.to_json()))
    return path


def test_parse_range():
    assert parse_range("5") == [5]
    assert parse_range("1..4") == [1, 2, 3, 4]
    assert parse_range("10..30:10") == [10, 20, 30]
    assert parse_range("2,4,8") == [2, 4, 8]


class TestExitCodes:
    def test_certify_folner(self, tmp_path):
        assert run_cli(tmp_path, "certify", "--group", "z:1", "--method", "folner", "--n", "1..16", "--tube", "2") == 0
        (d,) = report_dirs(tmp_path)
        rep = load_report(d)["report"]
        assert all(rep["checks"].values())
        assert (d / "config.json").exists() and (d / "table.csv").exists()

    def test_certify_boundary(self, tmp_path):
        code = run_cli(tmp_path, "certify", "--group", "free:2", "--method", "boundary", "--n", "20", "--depth", "4", "--tube", "2")
        assert code == 0

    def test_under_coverage(self, tmp_path):
        assert run_cli(tmp_path, "certify", "--method", "folner", "--n", "4", "--window", "1", "--tube", "5") == 2

    def test_convert(self, tmp_path):
        assert run_cli(tmp_path, "convert", "--group", "z:1", "--n", "6", "--tube", "2", "--window", "6") == 0

    def test_factorize_delta(self, tmp_path):
        assert run_cli(tmp_path, "factorize", "--group", "free:2", "--source", "delta") == 0
        rep = load_report(report_dirs(tmp_path)[0])["report"]
        assert rep["residual"] == 0

    def test_factorize_indefinite(self, tmp_path):
        path = indefinite_kernel_file(tmp_path)
        assert run_cli(tmp_path, "factorize", "--kernel", str(path), "--window-in", "1") == 1
        rep = load_report(report_dirs(tmp_path)[0])["report"]
        assert rep["verdict"] == "indefinite" and rep["witness"]
        assert rep["min_eigenvalue"] == pytest.approx(-0.1, abs=1e-12)

    def test_psd_sources(self, tmp_path):
        assert run_cli(tmp_path, "psd", "--group", "free:2", "--source", "boundary", "--n", "4") == 0
        assert run_cli(tmp_path, "psd", "--group", "free:2", "--source", "coefficient", "--n", "4") == 0

    def test_psd_indefinite_file(self, tmp_path):
        path = indefinite_kernel_file(tmp_path)
        assert run_cli(tmp_path, "psd", "--kernel", str(path), "--sample-radius", "2") == 1
        rep = load_report(report_dirs(tmp_path)[0])["report"]
        assert rep["verdict"] == "indefinite" and len(rep["witness"]) == 5

    def test_embed(self, tmp_path):
        assert run_cli(tmp_path, "embed", "--group", "z:1", "--levels", "4", "--window", "8") == 0
        (d,) = report_dirs(tmp_path)
        assert (d / "profile.csv").read_text().startswith("distance,")

    def test_usage_errors(self, tmp_path):
        assert run_cli(tmp_path, "certify", "--group", "q:3") == 64
        assert run_cli(tmp_path, "bogus") == 64
        assert run_cli(tmp_path, "certify", "--method", "nope") == 64
        assert run_cli(tmp_path, "certify", "--psd-tol", "0.5") == 64
        assert run_cli(tmp_path, "certify", "--tube", "-1") == 64
        assert run_cli(tmp_path, "certify", "--group", "z:1", "--method", "boundary") == 64

    def test_parse_errors(self, tmp_path):
        junk = tmp_path / "junk.json"
        junk.write_text("{not json")
        assert run_cli(tmp_path, "factorize", "--kernel", str(junk)) == 65
        assert run_cli(tmp_path, "psd", "--kernel", str(tmp_path / "missing.json")) == 65
        wrong = tmp_path / "wrong.json"
        wrong.write_text(json.dumps({"group": {"type": "free", "rank": 2}, "kind": "l2"}))
        assert run_cli(tmp_path, "factorize", "--kernel", str(wrong)) == 65

    def test_list_methods(self, capsys):
        assert main(["list-methods"]) == 0
        out = capsys.readouterr().out
        assert "folner" in out and "boundary" in out


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig(command="embed", group="free:2", levels=3, omega="b|a")
        assert RunConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg

    def test_validation(self):
        with pytest.raises(UsageError):
            RunConfig.from_json({"command": "certify", "colour": 3})
        with pytest.raises(UsageError):
            RunConfig(command="certify", tube="2").validate()
        with pytest.raises(UsageError):
            RunConfig(command="certify", n="0..3").validate()

    def test_config_file_with_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"command": "certify", "method": "folner", "n": "1..4", "tube": 1}))
        assert main(["certify", "--config", str(cfg), "--tube", "2", "--out", str(tmp_path / "out")]) == 0
        conf = json.loads((report_dirs(tmp_path)[0] / "config.json").read_text())
        assert conf["tube"] == 2 and conf["n"] == "1..4"
        cfg.write_text(json.dumps({"command": "embed"}))
        assert main(["certify", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 64

    def test_digest_ignores_out_but_not_content(self, tmp_path):
        a = RunConfig(command="certify", out="x")
        assert a.digest() == RunConfig(command="certify", out="y").digest()
        assert a.digest() != RunConfig(command="certify", tube=2).digest()
        path = tmp_path / "k.json"
        path.write_text("{}")
        b = RunConfig(command="psd", kernel=str(path))
        d1 = b.digest()
        path.write_text("{ }")
        assert b.digest() != d1


class TestDeterminism:
    def test_byte_identical(self, tmp_path):
        args = ["embed", "--group", "z:1", "--levels", "4", "--window", "8"]
        assert run_cli(tmp_path, *args) == 0
        (d,) = report_dirs(tmp_path)
        first = {p.name: p.read_bytes() for p in d.iterdir()}
        assert run_cli(tmp_path, *args) == 0
        assert report_dirs(tmp_path) == [d]
        assert {p.name: p.read_bytes() for p in d.iterdir()} == first

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "coarsecert", "certify", "--n", "3", "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert "certify" in proc.stdout

from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from ssmf.cli import main

DATA = Path(__file__).parent / "data"
BERN = str(DATA / "bernoulli.json")
GENERIC = str(DATA / "generic.json")
ORIGINAL = str(DATA / "original.json")


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_validate_ok(self, capsys):
        code, out, _ = run(capsys, "validate", "--spec", BERN)
        doc = json.loads(out)
        assert code == 0 and doc["valid"] and doc["support"] == pytest.approx([-2, 2])
        assert doc["config"]["command"] == "validate"

    def test_validate_original(self, capsys):
        code, out, _ = run(capsys, "validate", "--spec", ORIGINAL)
        assert code == 0 and json.loads(out)["kind"] == "original"

    def test_validation_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"groups": [{"ratio": 0.5, "maps": [{"a": 0, "p": 0.5}]},
                                              {"ratio": 0.5, "maps": [{"a": 1, "p": 0.5}]}]}))
        code, _, err = run(capsys, "validate", "--spec", str(bad))
        assert code == 2 and "coincide" in err

    def test_missing_file(self, capsys):
        code, _, err = run(capsys, "validate", "--spec", "/nonexistent.json")
        assert code == 2 and "cannot read" in err

    def test_numeric_guard(self, capsys, tmp_path):
        slow = tmp_path / "slow.json"
        slow.write_text(json.dumps({"groups": [{"ratio": 0.999, "maps": [{"a": -1, "p": 0.5}, {"a": 1, "p": 0.5}]}]}))
        code, _, err = run(capsys, "ft", "--spec", str(slow), "--t", "1e12", "--tol", "1e-8")
        assert code == 3 and "lattice levels" in err

    def test_seed_required(self, capsys):
        code, _, err = run(capsys, "diagnose", "--spec", GENERIC)
        assert code == 2 and "--seed" in err

    def test_bad_format(self, capsys):
        code, _, err = run(capsys, "bounds", "--B1", "16", "--B2", "32", "--d", "2", "--s", "0.5",
                           "--format", "csv")
        assert code == 2 and "format" in err

    def test_argparse_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["ft", "--tol", "abc"])
        assert exc.value.code == 2


class TestSubcommands:
    def test_ft_zero(self, capsys):
        code, out, _ = run(capsys, "ft", "--spec", GENERIC, "--t", "0")
        row = json.loads(out)["values"][0]
        assert code == 0 and row["re"] == 1.0 and row["im"] == 0.0

    def test_ft_csv_golden(self, capsys):
        code, out, _ = run(capsys, "ft", "--spec", BERN, "--t", "0,0.5", "--format", "csv")
        lines = out.split("\n")
        assert lines[0].startswith("# config: ")
        assert lines[1] == "t,re,im,abs,error_bound"
        assert lines[2] == "0.0,1.0,0.0,1.0,0.0"
        t, re, im, ab, eb = (float(x) for x in lines[3].split(","))
        assert abs(re - math.sin(1.0)) <= eb and eb <= 1e-8

    def test_decay_golden(self, capsys):
        code, out, _ = run(capsys, "decay", "--spec", str(DATA / "bernoulli.json"), "--N0", "4", "--N1", "7",
                           "--grid", "16", "--threads", "1")
        golden = (DATA / "decay_bernoulli.csv").read_text().split("\n")
        assert code == 0
        assert out.split("\n")[1:] == golden[1:]
        for line in golden[2:6]:
            N, t, s, _ = line.split(",")
            assert float(s) == pytest.approx(abs(math.sin(2 * float(t)) / (2 * float(t))), abs=1e-8)

    def test_decay_alpha(self, capsys):
        code, out, _ = run(capsys, "decay", "--spec", BERN, "--N0", "4", "--N1", "14", "--threads", "2")
        footer = out.strip().split("\n")[-1]
        alpha = float(footer.split(",")[0].split("=")[1])
        assert code == 0 and 0.9 <= alpha <= 1.1

    def test_bounds(self, capsys):
        code, out, _ = run(capsys, "bounds", "--B1", "16", "--B2", "32", "--d", "2", "--s", "0.5")
        doc = json.loads(out)
        assert code == 0
        assert doc["rho_fraction"] == "1/12804" and doc["A"] == 6403
        for k in ("rho", "A", "L1_log", "L2_log", "A1_log", "k1", "rate", "N0"):
            assert k in doc
        assert doc["rate"] < 0

    def test_reduce(self, capsys):
        code, out, _ = run(capsys, "reduce", "--spec", ORIGINAL, "--ell", "3")
        doc = json.loads(out)
        assert code == 0
        assert len(doc["spec"]["groups"]) == 4
        a = [m["a"] for m in doc["spec"]["groups"][0]["maps"]]
        assert abs(a[1] - a[0] - math.pi) <= 1e-12
        prov = doc["provenance"]
        assert prov["ell"] == 3 and prov["d"] == 4 and set(prov["transform"]) == {"shift", "scale", "order"}

    def test_reduce_needs_level(self, capsys):
        code, _, _ = run(capsys, "reduce", "--spec", ORIGINAL)
        assert code == 2

    def test_ek_scan(self, capsys):
        code, out, _ = run(capsys, "ek-scan", "--spec", GENERIC, "--k1", "20", "--N", "40", "--grid", "4",
                           "--trials", "3", "--seed", "1")
        lines = out.strip().split("\n")
        assert code == 0 and len(lines) == 1 + 12
        assert json.loads(lines[0])["config"]["seed"] == 1
        rec = json.loads(lines[1])
        assert set(rec) == {"t", "word", "good_track_count", "threshold", "witness"}
        assert len(rec["word"]) == 40 and rec["threshold"] == 2.0

    def test_diagnose(self, capsys):
        code, out, _ = run(capsys, "diagnose", "--spec", GENERIC, "--seed", "2", "--N", "40",
                           "--trials", "1000", "--k1", "100", "--tail-N", "20,40")
        doc = json.loads(out)
        assert code == 0
        assert len(doc["Z"]) == 2 and doc["U"]["support_ok"]
        assert doc["delta_chain"]["delta"] > 0 and len(doc["tail"]["rows"]) == 2
        assert doc["invariant_Y_le_X"]


class TestConfig:
    def test_config_file_and_override(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"spec": BERN, "t": "1", "tol": 1e-6}))
        code, out, _ = run(capsys, "ft", "--config", str(cfg), "--tol", "1e-10")
        doc = json.loads(out)
        assert code == 0
        assert doc["config"]["tol"] == 1e-10
        assert doc["values"][0]["error_bound"] <= 1e-10

    def test_threads_env(self, capsys, monkeypatch):
        monkeypatch.setenv("SSMF_THREADS", "2")
        code, out, _ = run(capsys, "ft", "--spec", BERN)
        assert code == 0 and "threads" not in json.loads(out)["config"]

    def test_out_file(self, capsys, tmp_path):
        dest = tmp_path / "o.json"
        code, out, _ = run(capsys, "bounds", "--B1", "1.9", "--B2", "2", "--d", "2", "--s", "1.5",
                           "--out", str(dest))
        assert code == 0 and out == ""
        assert json.loads(dest.read_text())["rho_fraction"] == "1/84"

    def test_module_entry(self):
        proc = subprocess.run([sys.executable, "-m", "ssmf", "ft", "--spec", BERN, "--t", "0"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and json.loads(proc.stdout)["values"][0]["abs"] == 1.0

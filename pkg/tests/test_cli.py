import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from martingale_lps import __version__
from martingale_lps.cli import COMMANDS, main, render, resolve_config, build_parser


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def mask(text: str) -> dict:
    report = json.loads(text)
    report["header"]["timestamp"] = None
    return report


class TestCommands:
    @pytest.mark.parametrize(
        "argv",
        [
            ["verify-semigroup", "--depth", "5", "--samples", "10"],
            ["verify-theorem-a", "--depth", "8", "--samples", "50", "--seed", "7"],
            ["verify-gamma", "--q", "1", "--depth", "4"],
            ["verify-nc", "--samples", "20", "--factor-dims", "2,2,2"],
            ["constants", "--depth", "6", "--samples", "20", "--budget", "500", "--p", "2,4"],
            ["emit-kernel", "--depth", "10"],
        ],
        ids=lambda a: a[0],
    )
    def test_exit_zero_and_schema(self, argv, capsys):
        code, out, err = run(argv, capsys)
        assert code == 0, err
        report = json.loads(out)
        assert report["passed"] is True
        assert report["header"]["command"] == argv[0]
        assert report["header"]["version"] == __version__
        assert report["records"]
        for rec in report["records"]:
            assert rec["anchor"] and rec["check"]
            assert rec["passed"] is True
            assert "margin" in rec

    def test_every_command_covered(self):
        assert set(COMMANDS) == {"verify-semigroup", "verify-theorem-a", "verify-gamma",
                                 "verify-nc", "constants", "emit-kernel"}

    def test_gamma_q1_closed_forms(self, capsys):
        code, out, _ = run(["verify-gamma", "--q", "1", "--depth", "4"], capsys)
        assert code == 0
        checks = {r["check"]: r for r in json.loads(out)["records"]}
        assert checks["q=1:closed form l_k"]["value"] <= 1e-12
        assert checks["q=1:closed form m_k"]["value"] <= 1e-12

    def test_emit_kernel_csv(self, capsys):
        code, out, _ = run(["emit-kernel", "--depth", "50", "--format", "csv"], capsys)
        assert code == 0
        B = np.array([[float(v) for v in row] for row in csv.reader(io.StringIO(out))])
        assert B.shape == (49, 49)
        np.testing.assert_array_equal(B, B.T)
        assert np.all(np.diag(B) == 0.25)
        radius = (np.abs(B).sum(axis=1) - 0.25).max()
        assert radius <= 2 / 15 + 1e-12
        eig = np.linalg.eigvalsh(B)
        assert eig.min() >= 7 / 60 - 1e-12 and eig.max() <= 23 / 60 + 1e-12

    def test_constants_csv_table(self, capsys):
        code, out, _ = run(["constants", "--depth", "4", "--samples", "5", "--budget", "200",
                            "--p", "2,4", "--format", "csv"], capsys)
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "p,searched_ratio,witness_ratio,envelope,evals,seed"
        assert len(lines) == 3

    def test_records_csv(self, capsys):
        code, out, _ = run(["verify-gamma", "--q", "2", "--depth", "3", "--format", "csv"], capsys)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows and all(r["passed"] == "True" for r in rows)

    def test_out_file(self, tmp_path, capsys):
        target = tmp_path / "report.json"
        code, out, _ = run(["emit-kernel", "--depth", "5", "--out", str(target)], capsys)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["summary"]["size"] == 4


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [
            ["emit-kernel", "--seed", "3"],
            ["verify-gamma", "--factor-dims", "2,2"],
            ["verify-semigroup", "--samples", "0"],
            ["verify-semigroup", "--depth", "1"],
            ["constants", "--p", "4,2"],
            ["constants", "--p", "1.5"],
            ["constants", "--depth", "15"],
            ["verify-nc", "--p", "1.5"],
            ["verify-nc", "--factor-dims", "2,1"],
            ["verify-gamma", "--q", "0.5"],
            ["verify-theorem-a", "--seed", "-1"],
            ["emit-kernel", "--depth", "1"],
        ],
    )
    def test_usage_errors(self, argv, capsys):
        code, _, err = run(argv, capsys)
        assert code == 2
        assert "error" in err

    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["nope"])
        assert info.value.code == 2

    def test_config_file_and_override(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("# sample config\ndepth = 5\nsamples=7\nseed = 11\n")
        args = build_parser().parse_args(["verify-theorem-a", "--config", str(cfg_path), "--samples", "3"])
        cfg = resolve_config(args)
        assert (cfg["depth"], cfg["samples"], cfg["seed"]) == (5, 3, 11)

    def test_config_file_errors(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("depth 5\n")
        assert run(["verify-theorem-a", "--config", str(bad)], capsys)[0] == 2
        wrong = tmp_path / "wrong.cfg"
        wrong.write_text("budget = 5\n")
        assert run(["verify-theorem-a", "--config", str(wrong)], capsys)[0] == 2
        assert run(["verify-theorem-a", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 2


class TestReport:
    def test_failure_exit_code(self, capsys):
        cfg = {"format": "json", "out": None}
        result = {"records": [{"anchor": "a", "check": "c", "value": 1.0, "margin": -1.0, "passed": False}]}
        text, passed = render("verify-gamma", cfg, result, timestamp="T")
        assert passed is False
        assert json.loads(text)["passed"] is False

    def test_non_finite_values_are_strings(self):
        cfg = {"format": "json", "out": None}
        result = {"records": [{"anchor": "a", "check": "c", "value": math.inf, "margin": math.inf, "passed": True}]}
        text, _ = render("verify-gamma", cfg, result, timestamp="T")
        assert json.loads(text)["records"][0]["value"] == "inf"

    @pytest.mark.parametrize(
        "argv",
        [
            ["verify-theorem-a", "--depth", "6", "--samples", "40", "--seed", "5"],
            ["verify-nc", "--samples", "10", "--seed", "5"],
            ["constants", "--depth", "5", "--samples", "10", "--budget", "300", "--p", "2,3", "--seed", "5"],
        ],
        ids=lambda a: a[0],
    )
    def test_deterministic_modulo_timestamp(self, argv, capsys):
        _, first, _ = run(argv, capsys)
        _, second, _ = run(argv, capsys)
        a, b = mask(first), mask(second)
        assert a == b
        strip = lambda s: "\n".join(l for l in s.splitlines() if '"timestamp"' not in l)
        assert strip(first) == strip(second)

    def test_seed_changes_report(self, capsys):
        base = ["verify-theorem-a", "--depth", "6", "--samples", "20"]
        _, a, _ = run(base + ["--seed", "1"], capsys)
        _, b, _ = run(base + ["--seed", "2"], capsys)
        assert mask(a)["records"] != mask(b)["records"]

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "martingale_lps", "--version"],
                              capture_output=True, text=True, check=True)
        assert __version__ in proc.stdout

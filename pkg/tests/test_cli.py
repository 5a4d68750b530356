import json
import subprocess
import sys
from pathlib import Path

import pytest

from sbmfk.cli import run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def records(out: Path) -> list[dict]:
    return [json.loads(line) for line in (out / "results.jsonl").read_text().splitlines()]


def write_cfg(tmp_path, text: str) -> Path:
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


SOLVE = """
[run]
seed = 3
[spec]
kind = stable
alpha = 1.5
[domain]
kind = interval
lo = -1
hi = 1
[source]
kind = constant
value = 1
[solve]
points = -0.5, 0.25
moments = 2
[solver]
n_paths = 3000
"""

PSI = """
[run]
seed = 3
[spec]
kind = stable
alpha = 1
[psi]
u = 0.5, 1, 4
"""


class TestExitCodes:
    def test_unknown_command(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["bogus"])
        assert exc.value.code == 1
        assert "usage:" in capsys.readouterr().err

    def test_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "sbmfk", "bogus"], capture_output=True, text=True)
        assert res.returncode == 1
        assert "usage:" in res.stderr

    def test_success(self, tmp_path):
        assert run(["psi", "--config", str(write_cfg(tmp_path, PSI)), "--out", str(tmp_path / "o")]) == 0
        rows = (tmp_path / "o" / "psi.csv").read_text().splitlines()
        assert rows[0].split(",")[:2] == ["u", "psi"]
        assert [float(r.split(",")[1]) for r in rows[1:]] == [0.5 ** 0.5, 1.0, 2.0]
        assert all(r["pass"] for r in records(tmp_path / "o") if r["record"] == "scaling")

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, PSI + "[solver]\nn_path = 5\n")
        assert run(["psi", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "config error at solver.n_path" in capsys.readouterr().err

    def test_unknown_spec_parameter(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, PSI.replace("alpha = 1", "alpha = 1\nmass = 2"))
        assert run(["psi", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "spec.mass" in capsys.readouterr().err

    def test_missing_seed(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, PSI.replace("seed = 3", ""))
        assert run(["psi", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "seed" in capsys.readouterr().err

    def test_seed_flag_supplies_seed(self, tmp_path):
        cfg = write_cfg(tmp_path, PSI.replace("seed = 3", ""))
        assert run(["psi", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o")]) == 0

    def test_command_mismatch(self, tmp_path):
        cfg = write_cfg(tmp_path, PSI.replace("seed = 3", "seed = 3\ncommand = eigen"))
        assert run(["psi", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_bad_value(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, PSI.replace("alpha = 1", "alpha = one"))
        assert run(["psi", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "spec.alpha" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run(["psi", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 1


class TestBundledConfigs:
    def test_brownian_eigenvalue(self, tmp_path):
        out = tmp_path / "eig"
        assert run(["eigen", "--config", str(CONFIGS / "brownian_interval.cfg"), "--seed", "7", "--out", str(out)]) == 0
        lam = next(r for r in records(out) if r["record"] == "lambda_star")
        assert abs(lam["mean"] / 2.4674011 - 1) < 0.05
        assert (out / "survival.csv").exists()

    def test_narrow_gate_failure(self, tmp_path):
        out = tmp_path / "narrow"
        assert run(["abp", "--config", str(CONFIGS / "narrow.cfg"), "--out", str(out)]) == 2
        (verdict,) = records(out)
        assert verdict["pass"] is False
        assert verdict["witnesses"]

    def test_narrow_pass(self, tmp_path):
        out = tmp_path / "narrow"
        assert run(["abp", "--config", str(CONFIGS / "narrow_pass.cfg"), "--out", str(out)]) == 0

    def test_principles(self, tmp_path):
        out = tmp_path / "pr"
        assert run(["principles", "--config", str(CONFIGS / "stable_principles.cfg"), "--out", str(out)]) == 0
        assert [r["record"] for r in records(out)] == ["classification", "verdict", "antimax"]

    def test_kernel_table(self, tmp_path):
        out = tmp_path / "k"
        assert run(["kernel", "--config", str(CONFIGS / "cauchy_kernel.cfg"), "--out", str(out)]) == 0
        assert all(r.get("deterministic") for r in records(out) if "mean" not in r)

    def test_report(self, tmp_path):
        assert run(["abp", "--config", str(CONFIGS / "narrow.cfg"), "--out", str(tmp_path / "a")]) == 2
        assert run(["psi", "--config", str(write_cfg(tmp_path, PSI)), "--out", str(tmp_path / "b")]) == 0
        assert run(["report", "--config", str(write_cfg(tmp_path, PSI)), "--out", str(tmp_path / "summary")]) == 2
        (summary,) = records(tmp_path / "summary")
        # two scaling verdicts from psi, one failed narrow-domain verdict
        assert (summary["verdicts"], summary["failures"]) == (3, 1)


class TestOutputs:
    def test_rows_carry_error_bars_or_deterministic_tag(self, tmp_path):
        out = tmp_path / "s"
        assert run(["solve", "--config", str(write_cfg(tmp_path, SOLVE)), "--out", str(out)]) == 0
        for r in records(out):
            assert {"mean", "stderr", "n"} <= r.keys() or r.get("deterministic") is True

    def test_csv_is_rfc4180(self, tmp_path):
        out = tmp_path / "s"
        run(["solve", "--config", str(write_cfg(tmp_path, SOLVE)), "--out", str(out)])
        raw = (out / "solution.csv").read_bytes()
        assert raw.count(b"\r\n") == raw.count(b"\n") > 1

    def test_timestamps_segregated(self, tmp_path):
        out = tmp_path / "p"
        run(["psi", "--config", str(write_cfg(tmp_path, PSI)), "--out", str(out)])
        meta = json.loads((out / "metadata.json").read_text())
        assert "started" in meta
        assert "started" not in (out / "results.jsonl").read_text()

    @pytest.mark.parametrize("cfg,cmd", [(SOLVE, "solve"), ((CONFIGS / "stable_sample.cfg").read_text(), "sample")],
                             ids=["solve", "sample"])
    def test_byte_identical_across_workers(self, tmp_path, cfg, cmd):
        outs = []
        path = write_cfg(tmp_path, cfg)
        for w in ("1", "4"):
            out = tmp_path / f"w{w}"
            run([cmd, "--config", str(path), "--workers", w, "--out", str(out), "--dump-paths", "2"])
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir() if p.name != "metadata.json")
        assert names == sorted(p.name for p in outs[1].iterdir() if p.name != "metadata.json")
        for name in names:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_dump_paths(self, tmp_path):
        out = tmp_path / "d"
        run(["solve", "--config", str(write_cfg(tmp_path, SOLVE)), "--out", str(out), "--dump-paths", "3"])
        lines = (out / "paths.csv").read_text().splitlines()
        assert lines[0].startswith("path,t,S")
        assert {ln.split(",")[0] for ln in lines[1:]} == {"0", "1", "2"}

import json
import os

import numpy as np

from dsmpc.cli import main


def run(argv):
    return main(argv)


class TestExitCodes:
    def test_unknown_flag_usage_error(self, formation3_path, tmp_path):
        code = run(["simulate", "--scenario", formation3_path,
                    "--frobnicate", "1", "--out", str(tmp_path)])
        assert code == 2

    def test_missing_subcommand_usage_error(self):
        assert run([]) == 2

    def test_missing_file_scenario_error(self, tmp_path):
        code = run(["simulate", "--scenario", str(tmp_path / "nope.json"),
                    "--out", str(tmp_path)])
        assert code == 3

    def test_malformed_scenario_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{]")
        code = run(["check", "--scenario", str(bad), "--out", str(tmp_path)])
        assert code == 3

    def test_solver_failure_reported(self, tmp_path, formation3_path):
        # shrink the input box so the terminal pin is unreachable from x0
        doc = json.loads(open(formation3_path).read())
        for a in doc["agents"]:
            a["input_poly"] = {"box": [[-1e-4, -1e-4], [1e-4, 1e-4]]}
        p = tmp_path / "tight.json"
        p.write_text(json.dumps(doc))
        code = run(["solve", "--scenario", str(p), "--iters", "3",
                    "--out", str(tmp_path)])
        assert code == 4


class TestSimulate:
    def test_writes_trace_and_metadata(self, formation3_path, tmp_path):
        out = tmp_path / "runs"
        code = run(["simulate", "--scenario", formation3_path, "--iters", "1",
                    "--steps", "6", "--out", str(out)])
        assert code == 0
        files = sorted(os.listdir(out))
        csvs = [f for f in files if f.endswith(".csv")]
        metas = [f for f in files if f.endswith(".meta.json")]
        assert len(csvs) == 1 and len(metas) == 1
        meta = json.loads(open(out / metas[0]).read())
        assert meta["ell"] == 1 and meta["steps"] == 6
        body = open(out / csvs[0]).read()
        assert body.startswith("# dsmpc-trace-v1\n")
        assert body.count("\n") == 2 + 6 + 1  # header comment + header + rows

    def test_byte_identical_reruns(self, formation3_path, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert run(["simulate", "--scenario", formation3_path,
                        "--iters", "1", "--steps", "6", "--seed", "7",
                        "--out", str(out)]) == 0
        name = [f for f in os.listdir(out1) if f.endswith(".csv")][0]
        assert open(out1 / name, "rb").read() == open(out2 / name, "rb").read()

    def test_scenario_file_untouched(self, formation3_path, tmp_path):
        before = open(formation3_path, "rb").read()
        run(["simulate", "--scenario", formation3_path, "--iters", "1",
             "--steps", "4", "--out", str(tmp_path)])
        assert open(formation3_path, "rb").read() == before


class TestSweep:
    def test_grid_outputs(self, formation3_path, tmp_path):
        out = tmp_path / "sweep"
        code = run(["sweep", "--scenario", formation3_path, "--iters", "1,3",
                    "--steps", "5", "--out", str(out)])
        assert code == 0
        summary = json.loads(open(out / "sweep_summary.json").read())
        assert len(summary["grid"]) == 2
        assert {g["iters"] for g in summary["grid"]} == {1, 3}
        for gpt in summary["grid"]:
            assert os.path.exists(gpt["csv"])


class TestCheckAndDump:
    def test_check_passes_on_bundled(self, formation3_path, tmp_path, capsys):
        code = run(["check", "--scenario", formation3_path,
                    "--out", str(tmp_path), "--points", "5"])
        assert code == 0
        text = capsys.readouterr().out
        assert "check: pass" in text

    def test_dump_matrices(self, formation3_path, tmp_path):
        code = run(["dump", "--scenario", formation3_path,
                    "--out", str(tmp_path)])
        assert code == 0
        doc = json.loads(open(tmp_path / "formation3_condensed.json").read())
        assert len(doc["agents"]) == 3
        H = np.asarray(doc["agents"][0]["H"])
        assert H.shape == (20, 20)
        assert np.allclose(H, H.T)


class TestSolve:
    def test_writes_curve_report(self, formation3_path, tmp_path, capsys):
        out = tmp_path / "solve"
        code = run(["solve", "--scenario", formation3_path, "--iters", "20",
                    "--eps", "0.05", "--out", str(out)])
        assert code == 0
        files = os.listdir(out)
        assert any(f.endswith(".json") for f in files)
        assert any(f.endswith(".csv") for f in files)
        assert "dual gap" in capsys.readouterr().out


class TestParallelAndEntryPoint:
    def test_sweep_jobs_parallel(self, formation3_path, tmp_path):
        out = tmp_path / "par"
        code = run(["sweep", "--scenario", formation3_path, "--iters", "1,2",
                    "--steps", "4", "--jobs", "2", "--out", str(out)])
        assert code == 0
        summary = json.loads(open(out / "sweep_summary.json").read())
        assert len(summary["grid"]) == 2

    def test_module_entry_point(self, formation3_path, tmp_path):
        import subprocess, sys
        proc = subprocess.run(
            [sys.executable, "-m", "dsmpc.cli", "simulate", "--scenario",
             formation3_path, "--iters", "1", "--steps", "3",
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "trace written" in proc.stdout

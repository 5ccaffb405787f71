import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from chimera.cli import main
from chimera.genome import SearchBounds, genome_to_record, random_genome


def write_config(tmp_path, **overrides):
    record = {
        "engine": {"population_size": 3, "max_iter": 5, "max_exhaustion": 4, "rng_seed": 11},
        "mutation": {},
        "bounds": {"max_layers": 8},
        "evaluator": {"type": "surrogate", "target_seed": 3},
    }
    record.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(record, indent=2))
    return path


class TestRunCommand:
    def test_completes_and_writes_artifacts(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run1"
        assert main(["run", "--config", str(config), "--out", str(out), "--quiet"]) == 0
        for name in ("manifest.json", "config.json", "telemetry.jsonl", "iterations.csv", "checkpoint.json", "final_models.json"):
            assert (out / name).exists(), name
        final = json.loads((out / "final_models.json").read_text())
        assert final and final[0]["loss"] <= final[-1]["loss"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "completed"

    def test_rerun_with_same_seed_is_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(config), "--out", str(out1), "--quiet"]) == 0
        assert main(["run", "--config", str(config), "--out", str(out2), "--quiet"]) == 0
        assert (out1 / "final_models.json").read_bytes() == (out2 / "final_models.json").read_bytes()
        assert (out1 / "telemetry.jsonl").read_bytes() == (out2 / "telemetry.jsonl").read_bytes()

    def test_seed_flag_overrides(self, tmp_path):
        config = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(config), "--out", str(out1), "--quiet", "--seed", "123"]) == 0
        assert main(["run", "--config", str(config), "--out", str(out2), "--quiet"]) == 0
        assert (out1 / "final_models.json").read_bytes() != (out2 / "final_models.json").read_bytes()

    def test_invalid_config_names_field(self, tmp_path, capsys):
        config = write_config(tmp_path, mutation={"p_add": 0.5, "p_remove": 0.3, "p_modify": 0.3, "p_reseed": 0.1})
        code = main(["run", "--config", str(config), "--out", str(tmp_path / "x"), "--quiet"])
        assert code == 2
        error = json.loads(capsys.readouterr().err.strip())
        assert error["error"] == "config"
        assert "p_add" in error["message"]

    def test_refuses_to_clobber_run_dir(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["run", "--config", str(config), "--out", str(out), "--quiet"]) == 0
        assert main(["run", "--config", str(config), "--out", str(out), "--quiet"]) == 2

    def test_workers_env_override(self, tmp_path, monkeypatch):
        config = write_config(tmp_path)
        monkeypatch.setenv("CHIMERA_WORKERS", "2")
        out = tmp_path / "run"
        assert main(["run", "--config", str(config), "--out", str(out), "--quiet"]) == 0
        snapshot = json.loads((out / "config.json").read_text())
        assert snapshot["engine"]["parallel_evals"] == 2

    def test_stub_evaluator_flag(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["run", "--config", str(config), "--out", str(out), "--quiet", "--evaluator", "stub"]) == 0
        final = json.loads((out / "final_models.json").read_text())
        assert all(entry["loss"] == 0.5 for entry in final)


class TestExportCommand:
    def test_csv_rows_match_iterations(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        main(["run", "--config", str(config), "--out", str(out), "--quiet"])
        assert main(["export", "--run", str(out)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "iteration,best_loss,mean_loss,archive_size,evals_total"
        assert len(lines) == 1 + 5  # header + one row per iteration
        best = [float(line.split(",")[1]) for line in lines[1:]]
        assert all(a >= b for a, b in zip(best, best[1:]))
        # matches the live-written CSV
        assert (out / "iterations.csv").read_text().strip().splitlines() == lines

    def test_export_before_any_iteration_errors(self, tmp_path, capsys):
        run_dir = tmp_path / "empty"
        run_dir.mkdir()
        (run_dir / "telemetry.jsonl").write_text("")
        assert main(["export", "--run", str(run_dir)]) == 1
        error = json.loads(capsys.readouterr().err.strip())
        assert error["error"] == "missing-artifact"

    def test_export_to_file(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        main(["run", "--config", str(config), "--out", str(out), "--quiet"])
        target = tmp_path / "curve.csv"
        assert main(["export", "--run", str(out), "--out", str(target)]) == 0
        assert target.read_text().startswith("iteration,")


class TestValidateAndPrint:
    def test_validate_ok(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["validate-config", "--config", str(config)]) == 0
        assert "config OK" in capsys.readouterr().out

    def test_validate_rejects(self, tmp_path):
        config = write_config(tmp_path, engine={"population_size": 0, "max_iter": 1})
        assert main(["validate-config", "--config", str(config)]) == 2

    def test_print_genome(self, tmp_path, capsys):
        genome = random_genome(SearchBounds(), np.random.default_rng(9))
        path = tmp_path / "genome.json"
        path.write_text(json.dumps(genome_to_record(genome)))
        assert main(["print-genome", str(path)]) == 0
        output = capsys.readouterr().out
        assert "fingerprint" in output
        assert str(genome.input_shape) in output


class TestResumeCommand:
    def test_resume_checkpoint_version_mismatch(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        main(["run", "--config", str(config), "--out", str(out), "--quiet"])
        snapshot = json.loads((out / "checkpoint.json").read_text())
        snapshot["version"] = 42
        (out / "checkpoint.json").write_text(json.dumps(snapshot))
        assert main(["resume", "--checkpoint", str(out / "checkpoint.json"), "--quiet"]) == 1
        assert json.loads(capsys.readouterr().err.strip())["error"] == "version-mismatch"

    def test_resume_corrupt_checkpoint(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        main(["run", "--config", str(config), "--out", str(out), "--quiet"])
        snapshot_text = (out / "checkpoint.json").read_text()
        (out / "checkpoint.json").write_text(snapshot_text[: len(snapshot_text) // 2])
        assert main(["resume", "--checkpoint", str(out / "checkpoint.json"), "--quiet"]) == 1
        assert json.loads(capsys.readouterr().err.strip())["error"] == "corrupt-snapshot"

    def test_killed_run_resumes_to_identical_artifacts(self, tmp_path):
        """Kill a run mid-flight, resume from its checkpoint, compare with an
        uninterrupted run of the same config."""
        record = {
            "engine": {"population_size": 4, "max_iter": 30, "max_exhaustion": 5, "rng_seed": 21},
            "bounds": {"max_layers": 8},
            "evaluator": {"type": "surrogate", "target_seed": 3},
        }
        config = tmp_path / "config.json"
        config.write_text(json.dumps(record))

        reference = tmp_path / "reference"
        assert main(["run", "--config", str(config), "--out", str(reference), "--quiet"]) == 0

        interrupted = tmp_path / "interrupted"
        process = subprocess.Popen(
            [sys.executable, "-m", "chimera", "run", "--config", str(config), "--out", str(interrupted), "--quiet"],
        )
        checkpoint_path = interrupted / "checkpoint.json"
        deadline = time.time() + 60
        while time.time() < deadline:
            if checkpoint_path.exists():
                try:
                    if json.loads(checkpoint_path.read_text()).get("iteration", 0) >= 3:
                        break
                except (json.JSONDecodeError, OSError):
                    pass
            if process.poll() is not None:
                break
            time.sleep(0.02)
        if process.poll() is None:
            process.send_signal(signal.SIGKILL)
            process.wait()
        assert checkpoint_path.exists(), "run was killed before writing any checkpoint"

        assert main(["resume", "--checkpoint", str(checkpoint_path), "--quiet"]) == 0
        assert (interrupted / "final_models.json").read_bytes() == (reference / "final_models.json").read_bytes()
        assert (interrupted / "telemetry.jsonl").read_bytes() == (reference / "telemetry.jsonl").read_bytes()
        assert (interrupted / "iterations.csv").read_bytes() == (reference / "iterations.csv").read_bytes()

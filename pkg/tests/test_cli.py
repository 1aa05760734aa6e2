"""CLI smoke tests: every subcommand, exit codes, manifests, determinism."""

import csv
import json
import os
import subprocess
import sys

import pytest

from mcxeb.circuit import sample_circuit, serialize
from mcxeb.cli import EXIT_CONFIG, EXIT_OK, main
from mcxeb.orchestrator import generate_dataset
from mcxeb.trajectory import InitialState


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def run(cmd, cfg_path, out, extra=()):
    return main([cmd, "--config", cfg_path, "--out", str(out), *extra])


@pytest.fixture
def tiny_circuit_file(tmp_path):
    c = sample_circuit(4, 0.1, seed=3)
    path = tmp_path / "circuit.json"
    path.write_text(serialize(c))
    return str(path)


class TestConfigHandling:
    def test_missing_config_file(self, tmp_path):
        assert run("sweep", str(tmp_path / "nope.json"), tmp_path / "out") == EXIT_CONFIG

    def test_version_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, "c.json", {"version": 99, "experiment": "sweep"})
        assert run("sweep", cfg, tmp_path / "out") == EXIT_CONFIG

    def test_experiment_command_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "entropy", "L": [2], "p": [0.1]})
        assert run("sweep", cfg, tmp_path / "out") == EXIT_CONFIG

    def test_infeasible_length_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "sweep", "L": [26], "p": [0.1],
                            "num_circuits": 2, "num_runs": 10})
        assert run("sweep", cfg, tmp_path / "out") == EXIT_CONFIG

    def test_out_root_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MCXEB_OUT_ROOT", str(tmp_path / "root"))
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "gradcheck", "seed": 1,
                            "n_hidden": 2, "record_length": 2, "batch_size": 2})
        assert main(["gradcheck", "--config", cfg]) == EXIT_OK
        assert (tmp_path / "root" / "gradcheck" / "gradcheck.json").exists()


class TestSubcommands:
    def test_sweep(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "sweep", "seed": 5,
                            "L": [4], "p": [0.1, 0.3], "num_circuits": 3, "num_runs": 40})
        out = tmp_path / "out"
        assert run("sweep", cfg, out) == EXIT_OK
        rows = read_rows(out / "sweep.csv")
        assert len(rows) == 6
        assert {r["estimator"] for r in rows} == {"histogram"}
        summary = read_rows(out / "sweep_summary.csv")
        assert len(summary) == 2
        assert all(int(r["n_circuits"]) == 3 for r in summary)
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) >= {"sweep.csv", "sweep_summary.csv"}
        # every descriptor hash in the CSV is persisted
        hashes = {os.path.basename(f)[:-5] for f in manifest["files"]
                  if f.startswith("circuits/")}
        assert hashes  # at least one circuit file written

    def test_sweep_exact_estimator_override(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "sweep", "seed": 5,
                            "L": [4], "p": [0.05], "num_circuits": 2, "num_runs": 10})
        out = tmp_path / "out"
        assert run("sweep", cfg, out, extra=["--estimator", "exact"]) == EXIT_OK
        rows = read_rows(out / "sweep.csv")
        assert {r["estimator"] for r in rows} == {"exact"}

    def test_convergence(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "convergence", "seed": 5,
                            "L": 4, "p": 0.1, "circuit_seed": 3,
                            "m_grid": [20, 50, 100]})
        out = tmp_path / "out"
        assert run("convergence", cfg, out) == EXIT_OK
        rows = read_rows(out / "curve.csv")
        assert [int(r["M"]) for r in rows] == [20, 50, 100]
        assert {r["ref_kind"] for r in rows} == {"exact-enumeration"}

    def test_convergence_single_point_grid(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "convergence", "seed": 5,
                            "L": 4, "p": 0.1, "circuit_seed": 3, "m_grid": [25]})
        out = tmp_path / "out"
        assert run("convergence", cfg, out) == EXIT_OK
        assert len(read_rows(out / "curve.csv")) == 1

    def test_entropy_l2_smoke(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "entropy", "seed": 5,
                            "L": [2], "p": [0.2], "num_circuits": 3})
        out = tmp_path / "out"
        assert run("entropy", cfg, out) == EXIT_OK
        rows = read_rows(out / "entropy.csv")
        assert rows and all(r["L"] == "2" for r in rows)
        assert all(float(r["S_mean"]) >= -1e-10 for r in rows)
        assert all(int(r["n_circuits"]) == 3 for r in rows)

    def test_delta_m_tiny(self, tmp_path):
        table = {str(m): {"batch_size": 8, "validation_size": 8, "n_hidden": 3,
                          "dropout_rate": 0.0, "n_epochs": 25, "n_sample": 300}
                 for m in (30, 60)}
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "delta-m", "seed": 5,
                            "L": 4, "p": 0.1, "circuit_seed": 3,
                            "m_grid": [30, 60], "training": table})
        out = tmp_path / "out"
        assert run("delta-m", cfg, out) == EXIT_OK
        curve = read_rows(out / "curve.csv")
        assert {r["estimator"] for r in curve} == {"histogram", "rnn"}
        delta = read_rows(out / "deltam.csv")
        assert delta
        for r in delta:
            if r["Mmin_hist"] != "NA" and r["Mmin_rnn"] != "NA":
                assert int(r["deltaM"]) == int(r["Mmin_hist"]) - int(r["Mmin_rnn"])
        assert (out / "models" / "rho_M30.json").exists()
        assert (out / "models" / "sigma_M60_training.csv").exists()

    def test_train_and_chi_rnn(self, tmp_path, tiny_circuit_file):
        c = sample_circuit(4, 0.1, seed=3)
        data = tmp_path / "records.txt"
        generate_dataset(c, InitialState.ZERO, 40, seed=9, path=data)
        cfg = write_config(tmp_path, "t.json",
                           {"version": 1, "experiment": "train", "seed": 5,
                            "dataset": str(data),
                            "training": {"batch_size": 8, "validation_size": 8,
                                         "n_hidden": 3, "dropout_rate": 0.0,
                                         "n_epochs": 20}})
        out = tmp_path / "trained"
        assert run("train", cfg, out) == EXIT_OK
        assert (out / "model.json").exists()
        lines = (out / "training.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_nll,val_nll"
        assert len(lines) == 21
        for line in lines[1:]:
            epoch, train_nll, val_nll = line.split(",")
            int(epoch), float(train_nll), float(val_nll)  # plain numbers only

        chi_cfg = write_config(tmp_path, "chi.json",
                               {"version": 1, "experiment": "chi", "seed": 5,
                                "circuit": tiny_circuit_file,
                                "rho_model": str(out / "model.json"),
                                "sigma_model": str(out / "model.json"),
                                "n_sample": None})
        chi_out = tmp_path / "chi_rnn"
        assert run("chi", chi_cfg, chi_out, extra=["--estimator", "rnn"]) == EXIT_OK
        doc = json.loads((chi_out / "chi.json").read_text())
        assert doc["estimator"] == "rnn"
        assert doc["chi"] == pytest.approx(1.0)  # identical models

    def test_chi_exact_and_histogram(self, tmp_path, tiny_circuit_file):
        cfg = write_config(tmp_path, "chi.json",
                           {"version": 1, "experiment": "chi", "seed": 5,
                            "circuit": tiny_circuit_file, "num_runs": 400})
        out_exact = tmp_path / "exact"
        assert run("chi", cfg, out_exact) == EXIT_OK
        exact = json.loads((out_exact / "chi.json").read_text())
        out_hist = tmp_path / "hist"
        assert run("chi", cfg, out_hist, extra=["--estimator", "histogram"]) == EXIT_OK
        hist = json.loads((out_hist / "chi.json").read_text())
        assert exact["estimator"] == "exact" and hist["estimator"] == "histogram"
        assert abs(exact["chi"] - hist["chi"]) < 0.5

    def test_gradcheck(self, tmp_path):
        cfg = write_config(tmp_path, "g.json",
                           {"version": 1, "experiment": "gradcheck", "seed": 5,
                            "n_hidden": 3, "record_length": 3, "batch_size": 3})
        out = tmp_path / "out"
        assert run("gradcheck", cfg, out) == EXIT_OK
        doc = json.loads((out / "gradcheck.json").read_text())
        assert doc["max_relative_error"] < 1e-4


class TestDeterminism:
    def test_sweep_workers_and_rerun(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "sweep", "seed": 5,
                            "L": [4], "p": [0.1, 0.2], "num_circuits": 4, "num_runs": 30})
        outs = []
        for tag, workers in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / tag
            assert run("sweep", cfg, out, extra=["--workers", workers]) == EXIT_OK
            outs.append(out)
        ref = (outs[0] / "sweep.csv").read_bytes()
        assert (outs[1] / "sweep.csv").read_bytes() == ref
        assert (outs[2] / "sweep.csv").read_bytes() == ref
        ref_sum = (outs[0] / "sweep_summary.csv").read_bytes()
        assert (outs[2] / "sweep_summary.csv").read_bytes() == ref_sum

    def test_seed_override_changes_results(self, tmp_path):
        cfg = write_config(tmp_path, "c.json",
                           {"version": 1, "experiment": "sweep", "seed": 5,
                            "L": [4], "p": [0.2], "num_circuits": 2, "num_runs": 30})
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run("sweep", cfg, out_a) == EXIT_OK
        assert run("sweep", cfg, out_b, extra=["--seed", "99"]) == EXIT_OK
        assert (out_a / "sweep.csv").read_bytes() != (out_b / "sweep.csv").read_bytes()


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"version": 1, "experiment": "gradcheck", "seed": 1,
                               "n_hidden": 2, "record_length": 2, "batch_size": 2}))
    proc = subprocess.run(
        [sys.executable, "-m", "mcxeb.cli", "gradcheck", "--config", str(cfg),
         "--out", str(tmp_path / "out")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "gradcheck" in proc.stdout

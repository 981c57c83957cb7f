import csv
import json

import numpy as np
import pytest

from sevenleague.cli import cli_main


def test_simulate_deterministic_files(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["simulate", "--scheme", "exact", "--dt", "0.5", "--paths", "1000", "--seed", "7", "--out"]
    assert cli_main(argv + [str(a)]) == 0
    assert cli_main(argv + [str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    values = np.loadtxt(a, delimiter=",", skiprows=1)
    assert values.shape == (1000, 5)
    assert a.read_text().splitlines()[0] == "t_0,t_1,t_2,t_3,t_4"


@pytest.mark.parametrize("scheme", ["7l", "7l-cdc", "euler"])
def test_simulate_schemes(tmp_path, scheme, capsys):
    out = tmp_path / "p.csv"
    assert cli_main(["simulate", "--scheme", scheme, "--dt", "1", "--paths", "200", "--backend", "pool:3",
                     "--out", str(out)]) == 0
    assert scheme in capsys.readouterr().out


def test_bench_rows_per_variant(tmp_path):
    out = tmp_path / "bench.csv"
    assert cli_main(["bench", "--paths", "1000,5000", "--repeats", "1", "--backend", "pool:2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    for scheme in ("7l", "7l-cdc"):
        assert [int(r["n_paths"]) for r in rows if r["scheme"] == scheme] == [1000, 5000]


def test_convergence_csv(tmp_path):
    out = tmp_path / "conv.csv"
    assert cli_main(["convergence", "--schemes", "7l,euler", "--dts", "0.5,1", "--paths", "500", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert all(float(r["strong_error"]) < 1e-9 for r in rows if r["scheme"] == "7l")


def test_train_missing_data(capsys):
    assert cli_main(["train"]) == 1
    assert "--data" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert cli_main(["simulate", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_no_command():
    assert cli_main([]) == 1


def test_bad_dt_is_usage_error(capsys):
    assert cli_main(["simulate", "--dt", "0.3"]) == 1


def test_runtime_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "model.json"
    bad.write_text(json.dumps({"format_version": 42}))
    assert cli_main(["simulate", "--scheme", "7l", "--model", str(bad), "--paths", "10"]) == 2
    assert "format_version" in capsys.readouterr().err


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": {"sigma": 0.0, "y0": 2.0}, "sim": {"T": 1.0, "n_steps": 2, "n_paths": 5}}))
    out = tmp_path / "p.csv"
    assert cli_main(["--config", str(cfg), "simulate", "--scheme", "exact", "--paths", "3", "--out", str(out)]) == 0
    values = np.loadtxt(out, delimiter=",", skiprows=1)
    assert values.shape == (3, 3)
    np.testing.assert_allclose(values[:, -1], 2.0 * np.exp(-1.0))


def test_bad_config_section(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gpu": {}}))
    assert cli_main(["--config", str(cfg), "simulate"]) == 1


def test_gen_data_train_simulate_pipeline(tmp_path, capsys):
    data = tmp_path / "train.csv"
    model = tmp_path / "model.json"
    assert cli_main(["gen-data", "--samples", "300", "--labels", "exact", "--seed", "2", "--out", str(data)]) == 0
    assert data.with_suffix(".json").exists()
    assert cli_main(["train", "--data", str(data), "--epochs", "3", "--out", str(model),
                     "--history", str(tmp_path / "hist.csv")]) == 0
    doc = json.loads(model.read_text())
    assert doc["layer_sizes"] == [5, 50, 50, 50, 50, 5]
    assert doc["training_config"]["epochs"] == 3
    assert cli_main(["simulate", "--scheme", "7l-cdc", "--model", str(model), "--paths", "100"]) == 0


def test_gen_data_euler_labels(tmp_path):
    data = tmp_path / "d.csv"
    assert cli_main(["gen-data", "--samples", "2", "--inner-paths", "200", "--fine-dt", "0.01", "--out", str(data)]) == 0
    meta = json.loads(data.with_suffix(".json").read_text())
    assert meta["label_source"] == "euler" and meta["inner_paths"] == 200

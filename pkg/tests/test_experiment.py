import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from qudit_reupload import __version__, learn
from qudit_reupload.checkpoint import from_record, load_checkpoint, save_checkpoint
from qudit_reupload.circuit import CircuitSpec, param_count
from qudit_reupload.cli_parser import build_experiment_config
from qudit_reupload.experiment import RUNS_COLUMNS, SUMMARY_COLUMNS, build_settings, run_experiment
from qudit_reupload.learn import STATUS_OK, RunRecord
from qudit_reupload.main import (
    EXIT_CONFIG_ERROR,
    EXIT_IO_ERROR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    main,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

REGRESSION = """
    task: regression
    data:
      train_size: 10
      test_size: 5
    circuit:
      layers: 1
    train:
      epochs: 3
    evaluation:
      shots: 64
    seeds: [0]
"""

STRIPES = """
    task: stripes
    data:
      num_classes: 3
      train_size: 20
      test_size: 10
    circuit:
      layers: [1, 2]
    train:
      epochs: 2
    evaluation:
      knn_k: 1
    seeds: [0, 1]
"""


def read_csv(path):
    with open(path, encoding="utf-8") as f:
        return list(csv.reader(f))


def test_regression_run_artifacts(write_config, tmp_path):
    config = build_experiment_config(write_config(REGRESSION))
    records, summary = run_experiment(config)
    out = tmp_path / "output"

    assert len(records) == 1
    assert records[0].setting == "euler_d3_L1"
    runs = read_csv(out / "runs.csv")
    assert runs[0] == RUNS_COLUMNS
    assert len(runs) == 2
    row = dict(zip(RUNS_COLUMNS, runs[1]))
    assert row["status"] == STATUS_OK
    assert row["param_count"] == "5"
    assert row["label_assignment"] == "aligned"
    assert row["knn_test_metric"] == "nan"
    assert math.isfinite(float(row["shot_test_metric"]))

    checkpoint = load_checkpoint(str(out / row["checkpoint"]))
    assert checkpoint.spec == records[0].spec
    assert checkpoint.output_shift == -1.0
    assert checkpoint.task == "regression"

    predictions = read_csv(out / "predictions" / "euler_d3_L1_seed0.csv")
    assert predictions[0] == ["x", "target", "prediction", "shot_prediction"]
    assert len(predictions) == 6

    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["artifact_version"] == __version__
    assert manifest["config_sha256"] == config.digest
    assert manifest["aborted"] == 0
    assert "checkpoints/euler_d3_L1_seed0.json" in manifest["artifacts"]
    assert [row.metric for row in summary] == ["test", "shot"]

    report = (out / "report.md").read_text(encoding="utf-8")
    assert "# Experiment report: config.yml" in report
    assert "euler_d3_L1" in report


def test_rerun_is_byte_identical(write_config, tmp_path):
    path = write_config(STRIPES)
    run_experiment(build_experiment_config(path, output_dir=str(tmp_path / "first")))
    run_experiment(build_experiment_config(path, output_dir=str(tmp_path / "second")))
    for name in (
        "runs.csv",
        "summary.csv",
        "report.md",
        "manifest.json",
        "checkpoints/euler_d3_L2_seed1.json",
    ):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_worker_count_does_not_change_results(write_config, tmp_path):
    path = write_config(STRIPES)
    run_experiment(build_experiment_config(path, output_dir=str(tmp_path / "serial"), workers=1))
    run_experiment(build_experiment_config(path, output_dir=str(tmp_path / "pool"), workers=2))
    for name in ("runs.csv", "summary.csv"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()


def test_summary_recomputes_from_runs(write_config, tmp_path):
    run_experiment(build_experiment_config(write_config(STRIPES)))
    out = tmp_path / "output"
    runs = [dict(zip(RUNS_COLUMNS, row)) for row in read_csv(out / "runs.csv")[1:]]
    summary = read_csv(out / "summary.csv")
    assert summary[0] == SUMMARY_COLUMNS
    assert [(row[0], row[1]) for row in summary[1:]] == [
        ("euler_d3_L1", "test"),
        ("euler_d3_L1", "knn"),
        ("euler_d3_L2", "test"),
        ("euler_d3_L2", "knn"),
    ]
    for row in summary[1:]:
        setting, metric = row[0], row[1]
        column = "test_metric" if metric == "test" else "knn_test_metric"
        values = [float(r[column]) for r in runs if r["setting"] == setting]
        assert int(row[2]) == len(values) == 2
        assert float(row[5]) == pytest.approx(np.median(values))
        assert float(row[3]) == min(values)
        assert float(row[7]) == max(values)


def test_settings_cover_every_sweep_axis(write_config):
    text = """
        task: stripes
        data:
          num_classes: 3
        circuit:
          layers: [1, 2]
          arch: [euler, extended]
          squeeze: [true, false]
          label_assignment: [aligned, randomized]
    """
    names = [s.name for s in build_settings(build_experiment_config(write_config(text)))]
    # extended circuits have no squeeze switch
    assert len(names) == 2 * 2 * 2 + 2 * 2
    assert len(set(names)) == len(names)
    assert "euler_d3_L2_nosqueeze_randlabels" in names
    assert "extended_d3_L1" in names


def test_qubit_baseline_checkpoint_keeps_its_labels(write_config, tmp_path):
    text = """
        task: rings
        data:
          train_size: 20
          test_size: 10
        circuit:
          layers: 1
          qubit_baseline: true
        train:
          epochs: 2
    """
    records, _ = run_experiment(build_experiment_config(write_config(text)))
    checkpoint_path = tmp_path / "output" / "checkpoints" / "qubit_d2_L1_seed0.json"
    checkpoint = load_checkpoint(str(checkpoint_path))
    assert records[0].spec.d == 2
    assert checkpoint.qubit_labels == 4
    assert checkpoint.label_states().shape == (4, 2)

    assert main(["render-regions", str(checkpoint_path), "--grid", "8", "-q"]) == EXIT_OK
    assert (tmp_path / "output" / "checkpoints" / "qubit_d2_L1_seed0_regions.ppm").exists()


def test_main_run_and_validate(write_config, tmp_path):
    path = write_config(REGRESSION)
    assert main(["validate", path, "-q"]) == EXIT_OK
    assert not (tmp_path / "output").exists()
    assert main(["run", path, "--output-dir", str(tmp_path / "cli"), "-q"]) == EXIT_OK
    assert (tmp_path / "cli" / "runs.csv").exists()


def test_main_config_error(write_config):
    assert main(["validate", write_config("task: spirals\n"), "-q"]) == EXIT_CONFIG_ERROR


def test_main_missing_files(tmp_path):
    assert main(["validate", str(tmp_path / "absent.yml"), "-q"]) == EXIT_IO_ERROR
    assert main(["spectrum", str(tmp_path / "absent.json"), "-q"]) == EXIT_IO_ERROR


def test_main_render_husimi(tmp_path):
    output = tmp_path / "husimi.ppm"
    args = ["render-husimi", "--state", "squeezed:1.57,0,0.05", "--resolution", "16"]
    assert main([*args, "--output", str(output), "-q"]) == EXIT_OK
    assert output.read_bytes().startswith(b"P6")
    assert main([*args[:-2], "--resolution", "8", "--output", str(output), "-q"]) == EXIT_RUNTIME_ERROR
    assert main(["render-husimi", "--state", "basis:99", "-q"]) == EXIT_CONFIG_ERROR


def test_main_spectrum(tmp_path, rng):
    spec = CircuitSpec(3, 1, 1)
    record = RunRecord(
        seed=0,
        setting="euler_d3_L1",
        spec=spec,
        status=STATUS_OK,
        final_train_loss=0.1,
        train_metric=0.1,
        test_metric=0.1,
        params=rng.uniform(-np.pi, np.pi, size=param_count(spec)),
        loss_trace=[0.1],
    )
    path = tmp_path / "run.json"
    save_checkpoint(str(path), from_record(record, "regression"))
    assert main(["spectrum", str(path), "--grid", "64", "-q"]) == EXIT_OK
    assert len(read_csv(tmp_path / "run_spectrum.csv")) == 34
    assert main(["spectrum", str(path), "--grid", "60", "-q"]) == EXIT_RUNTIME_ERROR
    assert main(["render-regions", str(path), "-q"]) == EXIT_RUNTIME_ERROR


def test_all_aborted_run_exits_with_runtime_error(write_config, tmp_path, monkeypatch):
    def broken(spec, params, *args, **kwargs):
        return math.nan, np.zeros(param_count(spec))

    monkeypatch.setattr(learn, "loss_gradient_batch", broken)
    path = write_config(STRIPES)
    assert main(["run", path, "-q"]) == EXIT_RUNTIME_ERROR
    manifest = json.loads((tmp_path / "output" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["aborted"] == 4
    runs = read_csv(tmp_path / "output" / "runs.csv")
    assert all(row[2] == "aborted" for row in runs[1:])
    assert "Aborted runs" in (tmp_path / "output" / "report.md").read_text(encoding="utf-8")


@pytest.mark.parametrize(
    "name, count",
    [
        ("regression.yml", 2),
        ("stripes.yml", 6 * 2 * 2),
        ("digits.yml", 3 * 3),
        ("tilted_qudit.yml", 6 * 2 * 2),
        ("tilted_qubit.yml", 6),
    ],
)
def test_shipped_configs_are_valid(name, count):
    config = build_experiment_config(str(CONFIG_DIR / name))
    assert len(build_settings(config)) == count


def test_tilted_stripes_configs_compare_qubit_and_qudit():
    qudit = build_experiment_config(str(CONFIG_DIR / "tilted_qudit.yml"))
    qubit = build_experiment_config(str(CONFIG_DIR / "tilted_qubit.yml"))
    assert qudit.data == qubit.data
    assert qudit.data.angle == 27.0
    assert {s.spec.d for s in build_settings(qudit)} == {6}
    assert {s.spec.d for s in build_settings(qubit)} == {2}
    assert qubit.circuit.qubit_baseline
    assert {s.spec.arch for s in build_settings(qudit) + build_settings(qubit)} == {"simplified"}

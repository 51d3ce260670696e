import hashlib
import os
import textwrap

import numpy as np
from numpy.testing import assert_allclose
import pytest

from qudit_reupload.cli_parser import (
    ENV_OUTPUT_DIR,
    ENV_WORKERS,
    build_experiment_config,
    default_output,
    describe_config,
    parse_arguments,
    parse_seeds,
    parse_state_spec,
)
from qudit_reupload.errors import ConfigError
from qudit_reupload.learn import LOSS_MSE, LOSS_OVERLAP
from qudit_reupload.qudit_core import basis_state, spin_coherent_state

STRIPES = textwrap.dedent(
    """
    task: stripes
    circuit:
      layers: [1, 2]
    """
)


def test_stripes_defaults(write_config, tmp_path):
    config = build_experiment_config(write_config(STRIPES))
    assert config.task == "stripes"
    assert config.data.num_classes == 7
    assert (config.data.train_size, config.data.test_size) == (750, 250)
    assert config.circuit.d == 7
    assert config.circuit.input_dim == 2
    assert config.circuit.layers == (1, 2)
    assert config.circuit.archs == ("euler",)
    assert config.train.loss == LOSS_OVERLAP
    assert config.train.epochs == 2000
    assert config.train.learning_rate == 0.05
    assert config.seeds == (0,)
    assert config.workers == 1
    assert config.output_dir == os.path.join(str(tmp_path), "output")


def test_regression_defaults(write_config):
    config = build_experiment_config(
        write_config(
            """
            task: regression
            circuit:
              layers: 1
            """
        )
    )
    assert config.circuit.d == 3
    assert config.circuit.input_dim == 1
    assert config.train.loss == LOSS_MSE
    assert config.train.output_shift == -1.0
    assert config.data.num_classes == 0


def test_config_digest(write_config):
    path = write_config(STRIPES)
    with open(path, "rb") as f:
        expected = hashlib.sha256(f.read()).hexdigest()
    assert build_experiment_config(path).digest == expected


def test_unknown_top_level_key(write_config):
    with pytest.raises(ConfigError, match="Invalid configuration options: depth"):
        build_experiment_config(write_config(STRIPES + "depth: 3\n"))


def test_unknown_section_key(write_config):
    text = """
        task: stripes
        circuit:
          layers: 1
          depth: 3
    """
    with pytest.raises(ConfigError, match="circuit.depth"):
        build_experiment_config(write_config(text))


def test_bool_is_not_an_int(write_config):
    text = """
        task: stripes
        circuit:
          layers: 1
        train:
          epochs: true
    """
    with pytest.raises(ConfigError, match="train.epochs"):
        build_experiment_config(write_config(text))


def test_yaml_errors_name_the_line(write_config):
    text = """
        task: stripes
        circuit:
          layers: [1, 2
    """
    with pytest.raises(ConfigError, match="line"):
        build_experiment_config(write_config(text))


def test_config_must_be_yaml(write_config):
    with pytest.raises(ConfigError):
        build_experiment_config(write_config(STRIPES, name="config.ini"))


def test_config_must_be_a_mapping(write_config):
    with pytest.raises(ConfigError):
        build_experiment_config(write_config("- 1\n- 2\n"))


def test_missing_config_file_is_an_os_error(tmp_path):
    with pytest.raises(OSError):
        build_experiment_config(str(tmp_path / "absent.yml"))


@pytest.mark.parametrize(
    "circuit",
    [
        "d: 3",
        "arch: spiral",
        "label_assignment: shuffled",
        "layers: [1, 0]",
        "ladder: crooked",
    ],
)
def test_invalid_circuit_options(write_config, circuit):
    text = f"task: stripes\ncircuit:\n  layers: 1\n  {circuit}\n"
    if circuit.startswith("layers"):
        text = f"task: stripes\ncircuit:\n  {circuit}\n"
    with pytest.raises(ConfigError):
        build_experiment_config(write_config(text))


def test_layers_are_required(write_config):
    with pytest.raises(ConfigError, match="circuit.layers"):
        build_experiment_config(write_config("task: rings\ncircuit:\n  d: 4\n"))


def test_unknown_task(write_config):
    with pytest.raises(ConfigError, match="task must be one of"):
        build_experiment_config(write_config("task: spirals\ncircuit:\n  layers: 1\n"))


def test_regression_rejects_classification_options(write_config):
    text = """
        task: regression
        circuit:
          layers: 1
        train:
          loss: overlap
    """
    with pytest.raises(ConfigError):
        build_experiment_config(write_config(text))
    text = """
        task: regression
        circuit:
          layers: 1
        evaluation:
          knn_k: 3
    """
    with pytest.raises(ConfigError):
        build_experiment_config(write_config(text))


def test_qubit_baseline_forces_a_qubit(write_config):
    text = """
        task: rings
        circuit:
          layers: 2
          qubit_baseline: true
    """
    config = build_experiment_config(write_config(text))
    assert config.circuit.d == 2
    assert config.circuit.qubit_baseline


def test_qubit_baseline_class_counts(write_config):
    text = """
        task: stripes
        data:
          num_classes: 5
        circuit:
          layers: 2
          qubit_baseline: true
    """
    with pytest.raises(ConfigError):
        build_experiment_config(write_config(text))


def test_sweep_axes_accept_lists(write_config):
    text = """
        task: stripes
        data:
          num_classes: 3
        circuit:
          layers: [1, 3]
          arch: [euler, simplified]
          squeeze: [true, false]
          label_assignment: [aligned, randomized]
          ladder: [standard, randomized]
    """
    circuit = build_experiment_config(write_config(text)).circuit
    assert circuit.d == 3
    assert circuit.archs == ("euler", "simplified")
    assert circuit.squeeze == (True, False)
    assert circuit.label_assignment == ("aligned", "randomized")
    assert circuit.ladder == ("standard", "randomized")


def test_seed_forms():
    assert parse_seeds(4) == (4,)
    assert parse_seeds([3, 1]) == (3, 1)
    assert parse_seeds({"start": 5, "count": 3}) == (5, 6, 7)
    with pytest.raises(ConfigError):
        parse_seeds([-1])
    with pytest.raises(ConfigError):
        parse_seeds({"count": 0})
    with pytest.raises(ConfigError):
        parse_seeds({"first": 1})


def test_digits_config(write_config, digits_path):
    text = f"""
        task: digits
        data:
          digits_path: {digits_path}
          train_size: 40
          test_size: 20
          random_classes: 6
          pca_dim: 3
        circuit:
          layers: 1
    """
    config = build_experiment_config(write_config(text))
    assert config.data.num_classes == 6
    assert config.data.classes is None
    assert config.circuit.input_dim == 3
    assert config.circuit.d == 6


def test_digits_class_list(write_config, digits_path):
    text = f"""
        task: digits
        data:
          digits_path: {digits_path}
          classes: [3, 8]
        circuit:
          layers: 1
    """
    config = build_experiment_config(write_config(text))
    assert config.data.classes == (3, 8)
    assert config.data.num_classes == 2


def test_digits_path_must_exist(write_config):
    text = """
        task: digits
        data:
          digits_path: nowhere.csv
        circuit:
          layers: 1
    """
    with pytest.raises(ConfigError, match="file not found"):
        build_experiment_config(write_config(text))


def test_digits_class_options_are_exclusive(write_config, digits_path):
    text = f"""
        task: digits
        data:
          digits_path: {digits_path}
          classes: 4
          random_classes: 4
        circuit:
          layers: 1
    """
    with pytest.raises(ConfigError, match="exclusive"):
        build_experiment_config(write_config(text))


def test_output_dir_and_workers_precedence(write_config, tmp_path, monkeypatch):
    path = write_config(STRIPES + "output_dir: from-config\nworkers: 2\n")
    config = build_experiment_config(path)
    assert config.output_dir == os.path.join(str(tmp_path), "from-config")
    assert config.workers == 2

    monkeypatch.setenv(ENV_OUTPUT_DIR, "/tmp/from-env")
    monkeypatch.setenv(ENV_WORKERS, "3")
    config = build_experiment_config(path)
    assert config.output_dir == "/tmp/from-env"
    assert config.workers == 3

    config = build_experiment_config(path, output_dir="/tmp/from-cli", workers=4)
    assert config.output_dir == "/tmp/from-cli"
    assert config.workers == 4


def test_invalid_worker_settings(write_config, monkeypatch):
    path = write_config(STRIPES)
    with pytest.raises(ConfigError):
        build_experiment_config(path, workers=0)
    monkeypatch.setenv(ENV_WORKERS, "many")
    with pytest.raises(ConfigError, match=ENV_WORKERS):
        build_experiment_config(path)


def test_describe_config(write_config):
    summary = describe_config(build_experiment_config(write_config(STRIPES)))
    assert summary["task"] == "stripes"
    assert summary["d"] == 7
    assert summary["layers"] == [1, 2]
    assert summary["seeds"] == 1


def test_state_specs():
    assert_allclose(parse_state_spec("basis:2", 3).amplitudes, basis_state(3, 2).amplitudes)
    assert_allclose(
        parse_state_spec("coherent:1.0,0.5", 5).amplitudes,
        spin_coherent_state(5, 1.0, 0.5).amplitudes,
    )
    squeezed = parse_state_spec("squeezed:1.5707963267948966,0,0.05", 15)
    coherent = spin_coherent_state(15, np.pi / 2, 0.0)
    assert squeezed.d == 15
    assert abs(np.vdot(coherent.amplitudes, squeezed.amplitudes)) < 1.0 - 1e-6


@pytest.mark.parametrize(
    "text", ["basis:3", "basis:x", "coherent:1.0", "squeezed:1,2", "thermal:1", "coherent:a,b"]
)
def test_invalid_state_specs(text):
    with pytest.raises(ConfigError):
        parse_state_spec(text, 3)


def test_parser_subcommands():
    args = parse_arguments(["run", "exp.yml", "--workers", "3", "-v"])
    assert (args.command, args.config, args.workers, args.verbose) == ("run", "exp.yml", 3, True)
    assert args.output_dir is None

    args = parse_arguments(["render-husimi", "--state", "basis:0"])
    assert (args.dim, args.resolution, args.output) == (15, 128, "husimi.ppm")

    args = parse_arguments(["spectrum", "run.json", "--grid", "128"])
    assert (args.checkpoint, args.grid, args.output) == ("run.json", 128, None)

    with pytest.raises(SystemExit):
        parse_arguments([])
    with pytest.raises(SystemExit):
        parse_arguments(["render-husimi"])


def test_default_output():
    assert default_output(os.path.join("out", "run.json"), "_regions.ppm") == os.path.join(
        "out", "run_regions.ppm"
    )

import argparse
import hashlib
import math
import os
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import yaml

from qudit_reupload.circuit import ARCHITECTURES
from qudit_reupload.data import ASSIGNMENT_ALIGNED, ASSIGNMENT_RANDOMIZED
from qudit_reupload.errors import ConfigError
from qudit_reupload.learn import LOSS_MSE, LOSS_OVERLAP, LOSSES, TrainConfig
from qudit_reupload.logger import get_logger
from qudit_reupload.qubitmap import QUBIT_LABEL_DIMENSIONS
from qudit_reupload.qudit_core import (
    QuditState,
    apply,
    basis_state,
    rotation,
    spin_coherent_state,
    squeezing_generator,
)

logger = get_logger()

ENV_OUTPUT_DIR = "QUDIT_REUPLOAD_OUTPUT_DIR"
ENV_WORKERS = "QUDIT_REUPLOAD_WORKERS"

TASK_REGRESSION = "regression"
TASK_STRIPES = "stripes"
TASK_RINGS = "rings"
TASK_DIGITS = "digits"
TASKS = (TASK_REGRESSION, TASK_STRIPES, TASK_RINGS, TASK_DIGITS)

LADDER_STANDARD = "standard"
LADDER_RANDOMIZED = "randomized"

DEFAULT_SIZES = {
    TASK_REGRESSION: (100, 100),
    TASK_STRIPES: (750, 250),
    TASK_RINGS: (750, 250),
    TASK_DIGITS: (750, 250),
}
DEFAULT_CLASSES = {TASK_STRIPES: 7, TASK_RINGS: 4, TASK_DIGITS: 2}
DEFAULT_REGRESSION_DIMENSION = 3

TOP_LEVEL_KEYS = (
    "task",
    "data",
    "circuit",
    "train",
    "evaluation",
    "seeds",
    "output_dir",
    "workers",
)

# section -> key -> accepted types
CONFIG_SCHEMA: Dict[str, Dict[str, tuple]] = {
    "data": {
        "train_size": (int,),
        "test_size": (int,),
        "num_classes": (int,),
        "angle": (float, int),
        "center": (list,),
        "digits_path": (str,),
        "classes": (int, list),
        "random_classes": (int,),
        "pca_dim": (int,),
    },
    "circuit": {
        "d": (int,),
        "layers": (int, list),
        "arch": (str, list),
        "squeeze": (bool, list),
        "label_assignment": (str, list),
        "ladder": (str, list),
        "qubit_baseline": (bool,),
    },
    "train": {
        "loss": (str,),
        "learning_rate": (float, int),
        "adam_beta1": (float, int),
        "adam_beta2": (float, int),
        "adam_epsilon": (float, int),
        "epochs": (int,),
        "init_range": (list,),
        "output_shift": (float, int),
        "log_every": (int,),
    },
    "evaluation": {
        "shots": (int,),
        "knn_k": (int,),
        "export_predictions": (bool,),
    },
}


class DataConfig(NamedTuple):
    train_size: int
    test_size: int
    num_classes: int = 0
    angle: float = 0.0
    center: Tuple[float, float] = (0.2, -0.1)
    digits_path: Optional[str] = None
    classes: Optional[Tuple[int, ...]] = None
    random_classes: int = 0
    pca_dim: int = 2


class CircuitConfig(NamedTuple):
    d: int
    input_dim: int
    layers: Tuple[int, ...]
    archs: Tuple[str, ...] = ("euler",)
    squeeze: Tuple[bool, ...] = (True,)
    label_assignment: Tuple[str, ...] = (ASSIGNMENT_ALIGNED,)
    ladder: Tuple[str, ...] = (LADDER_STANDARD,)
    qubit_baseline: bool = False


class EvaluationConfig(NamedTuple):
    shots: int = 0
    knn_k: int = 0
    export_predictions: bool = True


class ExperimentConfig(NamedTuple):
    path: str
    digest: str
    task: str
    data: DataConfig
    circuit: CircuitConfig
    train: TrainConfig
    evaluation: EvaluationConfig
    seeds: Tuple[int, ...]
    output_dir: str
    workers: int


def load_config_file(file_path: str) -> Dict[str, Any]:
    logger.success(f"Reading config from {file_path}")
    if not file_path.endswith((".yml", ".yaml")):
        raise ConfigError("Config file must be YAML (.yml/.yaml)")
    with open(file_path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"line {mark.line + 1}: " if mark is not None else ""
            raise ConfigError(f"{file_path}: {where}{e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{file_path}: top level must be a mapping")
    return data


def resolve_file_path(value: str, config_dir: str, cwd: str) -> str:
    """Resolve a relative path against the config file directory, then the cwd."""
    if os.path.isabs(value):
        return value

    config_relative = os.path.join(config_dir, value)
    if os.path.exists(config_relative):
        return config_relative

    cwd_relative = os.path.join(cwd, value)
    if os.path.exists(cwd_relative):
        return cwd_relative

    # not found anywhere, keep the config-relative path
    return config_relative


def _type_name(types: tuple) -> str:
    return " or ".join(t.__name__ for t in types)


def _check_type(field: str, value: Any, types: tuple):
    # bool is an int subclass; only accept it where bool is listed
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{field} must be {_type_name(types)}, got {value!r}")
    if not isinstance(value, types):
        raise ConfigError(f"{field} must be {_type_name(types)}, got {value!r}")


def validate_config_keys(config_data: Dict[str, Any]) -> None:
    """
    Reject unknown keys and wrong value types.

    Raises:
        ConfigError naming the offending section.key
    """
    invalid = [key for key in config_data if key not in TOP_LEVEL_KEYS]
    if invalid:
        raise ConfigError(
            f"Invalid configuration options: {', '.join(map(str, invalid))}\n"
            f"Valid options are: {', '.join(TOP_LEVEL_KEYS)}"
        )

    for section, schema in CONFIG_SCHEMA.items():
        values = config_data.get(section) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{section} must be a mapping")
        for key, value in values.items():
            if key not in schema:
                raise ConfigError(
                    f"Unknown option {section}.{key}; valid options are "
                    f"{', '.join(sorted(schema))}"
                )
            _check_type(f"{section}.{key}", value, schema[key])


def _as_tuple(field: str, value: Any, item_types: tuple) -> tuple:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError(f"{field} must not be empty")
    for item in items:
        _check_type(field, item, item_types)
    return tuple(items)


def _choice(field: str, values: Sequence[str], allowed: Sequence[str]):
    for value in values:
        if value not in allowed:
            raise ConfigError(f"{field} must be one of {', '.join(allowed)}, got {value!r}")


def parse_seeds(value: Any) -> Tuple[int, ...]:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "count"}
        if unknown:
            raise ConfigError(f"Unknown option seeds.{sorted(unknown)[0]}")
        start = value.get("start", 0)
        count = value.get("count", 1)
        _check_type("seeds.start", start, (int,))
        _check_type("seeds.count", count, (int,))
        if count < 1:
            raise ConfigError(f"seeds.count must be >= 1, got {count}")
        return tuple(range(start, start + count))

    seeds = _as_tuple("seeds", value, (int,))
    for seed in seeds:
        if seed < 0:
            raise ConfigError(f"seeds must be non-negative, got {seed}")
    return seeds


def _positive(field: str, value: int, minimum: int = 1):
    if value < minimum:
        raise ConfigError(f"{field} must be >= {minimum}, got {value}")


def _data_config(task: str, raw: Dict[str, Any], config_dir: str, cwd: str) -> DataConfig:
    train_default, test_default = DEFAULT_SIZES[task]
    train_size = raw.get("train_size", train_default)
    test_size = raw.get("test_size", test_default)
    _positive("data.train_size", train_size, 2 if task == TASK_REGRESSION else 1)
    _positive("data.test_size", test_size)

    center = raw.get("center", [0.2, -0.1])
    if len(center) != 2 or not all(
        isinstance(c, (int, float)) and not isinstance(c, bool) and abs(c) <= 1 for c in center
    ):
        raise ConfigError(f"data.center must be two numbers in [-1, 1], got {center!r}")

    classes = raw.get("classes")
    random_count = raw.get("random_classes", 0)
    num_classes = raw.get("num_classes", DEFAULT_CLASSES.get(task, 0))
    digits_path = raw.get("digits_path")
    pca_dim = raw.get("pca_dim", 2)

    if task == TASK_DIGITS:
        if digits_path is None:
            raise ConfigError("data.digits_path is required for the digits task")
        digits_path = resolve_file_path(digits_path, config_dir, cwd)
        if not os.path.isfile(digits_path):
            raise ConfigError(f"data.digits_path: file not found: {digits_path}")
        if classes is not None and random_count:
            raise ConfigError("data.classes and data.random_classes are exclusive")
        if isinstance(classes, int):
            classes = tuple(range(classes))
        elif classes is not None:
            classes = _as_tuple("data.classes", classes, (int,))
        if classes is not None:
            if len(set(classes)) < 2 or min(classes) < 0 or max(classes) > 9:
                raise ConfigError(f"data.classes must list 2..10 digits, got {classes}")
            num_classes = len(set(classes))
        elif random_count:
            if not 2 <= random_count <= 10:
                raise ConfigError(f"data.random_classes must be in 2..10, got {random_count}")
            num_classes = random_count
        else:
            classes = tuple(range(num_classes))
        _positive("data.pca_dim", pca_dim)
        if pca_dim > 64:
            raise ConfigError(f"data.pca_dim must be <= 64, got {pca_dim}")

    if task != TASK_REGRESSION and num_classes < 2:
        raise ConfigError(f"data.num_classes must be >= 2, got {num_classes}")

    return DataConfig(
        train_size=train_size,
        test_size=test_size,
        num_classes=num_classes if task != TASK_REGRESSION else 0,
        angle=float(raw.get("angle", 0.0)),
        center=(float(center[0]), float(center[1])),
        digits_path=digits_path,
        classes=classes,
        random_classes=random_count,
        pca_dim=pca_dim,
    )


def _circuit_config(task: str, raw: Dict[str, Any], data: DataConfig) -> CircuitConfig:
    if "layers" not in raw:
        raise ConfigError("circuit.layers is required")
    layers = _as_tuple("circuit.layers", raw["layers"], (int,))
    for depth in layers:
        _positive("circuit.layers", depth)

    archs = _as_tuple("circuit.arch", raw.get("arch", "euler"), (str,))
    _choice("circuit.arch", archs, ARCHITECTURES)
    squeeze = _as_tuple("circuit.squeeze", raw.get("squeeze", True), (bool,))
    assignment = _as_tuple(
        "circuit.label_assignment", raw.get("label_assignment", ASSIGNMENT_ALIGNED), (str,)
    )
    _choice("circuit.label_assignment", assignment, (ASSIGNMENT_ALIGNED, ASSIGNMENT_RANDOMIZED))
    ladder = _as_tuple("circuit.ladder", raw.get("ladder", LADDER_STANDARD), (str,))
    _choice("circuit.ladder", ladder, (LADDER_STANDARD, LADDER_RANDOMIZED))
    qubit_baseline = raw.get("qubit_baseline", False)

    input_dim = {TASK_REGRESSION: 1, TASK_DIGITS: data.pca_dim}.get(task, 2)
    if task == TASK_REGRESSION:
        d = raw.get("d", DEFAULT_REGRESSION_DIMENSION)
    else:
        d = raw.get("d", data.num_classes)

    if qubit_baseline:
        if task == TASK_REGRESSION:
            raise ConfigError("circuit.qubit_baseline only applies to classification tasks")
        if data.num_classes not in QUBIT_LABEL_DIMENSIONS:
            raise ConfigError(
                f"circuit.qubit_baseline supports {QUBIT_LABEL_DIMENSIONS} classes, "
                f"got {data.num_classes}"
            )
        if "d" in raw and raw["d"] != 2:
            raise ConfigError("circuit.d must be 2 for the qubit baseline")
        if ASSIGNMENT_RANDOMIZED in assignment or LADDER_RANDOMIZED in ladder:
            raise ConfigError("The qubit baseline uses fixed label states and the standard ladder")
        d = 2
    elif task != TASK_REGRESSION and d < data.num_classes:
        raise ConfigError(
            f"circuit.d = {d} cannot hold {data.num_classes} classes"
        )
    if d < 2:
        raise ConfigError(f"circuit.d must be >= 2, got {d}")
    if task == TASK_REGRESSION and ASSIGNMENT_RANDOMIZED in assignment:
        raise ConfigError("circuit.label_assignment applies to classification tasks only")

    return CircuitConfig(
        d=d,
        input_dim=input_dim,
        layers=layers,
        archs=archs,
        squeeze=squeeze,
        label_assignment=assignment,
        ladder=ladder,
        qubit_baseline=qubit_baseline,
    )


def _train_config(task: str, raw: Dict[str, Any], circuit: CircuitConfig) -> TrainConfig:
    default_loss = LOSS_MSE if task == TASK_REGRESSION else LOSS_OVERLAP
    loss = raw.get("loss", default_loss)
    _choice("train.loss", [loss], LOSSES)
    if task == TASK_REGRESSION and loss != LOSS_MSE:
        raise ConfigError("train.loss must be mse for the regression task")
    if circuit.qubit_baseline and loss != LOSS_OVERLAP:
        raise ConfigError("train.loss must be overlap for the qubit baseline")

    init_range = raw.get("init_range", [-math.pi, math.pi])
    if len(init_range) != 2 or not init_range[0] < init_range[1]:
        raise ConfigError(f"train.init_range must be [low, high] with low < high, got {init_range!r}")

    default_shift = -(circuit.d - 1) / 2 if task == TASK_REGRESSION else 0.0
    config = TrainConfig(
        loss=loss,
        learning_rate=float(raw.get("learning_rate", 0.05)),
        adam_beta1=float(raw.get("adam_beta1", 0.9)),
        adam_beta2=float(raw.get("adam_beta2", 0.999)),
        adam_epsilon=float(raw.get("adam_epsilon", 1e-8)),
        epochs=raw.get("epochs", 2000),
        init_range=(float(init_range[0]), float(init_range[1])),
        output_shift=float(raw.get("output_shift", default_shift)),
        log_every=raw.get("log_every", 100),
    )
    _positive("train.epochs", config.epochs)
    if config.learning_rate <= 0:
        raise ConfigError(f"train.learning_rate must be > 0, got {config.learning_rate}")
    for name in ("adam_beta1", "adam_beta2"):
        if not 0 <= getattr(config, name) < 1:
            raise ConfigError(f"train.{name} must be in [0, 1), got {getattr(config, name)}")
    return config


def _evaluation_config(task: str, raw: Dict[str, Any], train_size: int) -> EvaluationConfig:
    config = EvaluationConfig(
        shots=raw.get("shots", 0),
        knn_k=raw.get("knn_k", 0),
        export_predictions=raw.get("export_predictions", True),
    )
    if config.shots < 0:
        raise ConfigError(f"evaluation.shots must be >= 0, got {config.shots}")
    if config.knn_k < 0 or config.knn_k > train_size:
        raise ConfigError(f"evaluation.knn_k must be in 0..{train_size}, got {config.knn_k}")
    if config.knn_k and task == TASK_REGRESSION:
        raise ConfigError("evaluation.knn_k applies to classification tasks only")
    return config


def _workers_from_env() -> Optional[int]:
    value = os.environ.get(ENV_WORKERS)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{ENV_WORKERS} must be an integer, got {value!r}") from None


def build_experiment_config(
    config_path: str,
    output_dir: Optional[str] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """
    Load, validate and resolve an experiment config.

    Precedence for output_dir and workers: command line, then environment,
    then config file, then defaults.
    """
    config_data = load_config_file(config_path)
    validate_config_keys(config_data)

    config_dir = os.path.dirname(os.path.abspath(config_path))
    cwd = os.getcwd()

    task = config_data.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}, got {task!r}")

    data = _data_config(task, config_data.get("data") or {}, config_dir, cwd)
    circuit = _circuit_config(task, config_data.get("circuit") or {}, data)
    train = _train_config(task, config_data.get("train") or {}, circuit)
    evaluation = _evaluation_config(task, config_data.get("evaluation") or {}, data.train_size)
    seeds = parse_seeds(config_data.get("seeds", [0]))

    if output_dir is None:
        output_dir = os.environ.get(ENV_OUTPUT_DIR)
    if output_dir is None:
        configured = config_data.get("output_dir", "output")
        _check_type("output_dir", configured, (str,))
        output_dir = os.path.join(config_dir, configured) if not os.path.isabs(configured) else configured

    if workers is None:
        workers = _workers_from_env()
    if workers is None:
        workers = config_data.get("workers", 1)
        _check_type("workers", workers, (int,))
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    with open(config_path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()

    return ExperimentConfig(
        path=os.path.abspath(config_path),
        digest=digest,
        task=task,
        data=data,
        circuit=circuit,
        train=train,
        evaluation=evaluation,
        seeds=seeds,
        output_dir=output_dir,
        workers=workers,
    )


def _numbers(field: str, text: str, count: int) -> List[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"{field}: expected numbers, got {text!r}") from None
    if len(values) != count:
        raise ConfigError(f"{field}: expected {count} values, got {len(values)}")
    return values


def parse_state_spec(text: str, d: int) -> QuditState:
    """
    Build a qudit state from a short description.

    Forms:
        basis:K
        coherent:POLAR,AZIMUTH
        squeezed:POLAR,AZIMUTH,TAU   (exp(-i TAU L_z^2) applied to the coherent state)
    """
    kind, _, arguments = text.partition(":")
    if kind == "basis":
        try:
            index = int(arguments)
        except ValueError:
            raise ConfigError(f"--state basis index must be an integer, got {arguments!r}") from None
        if not 0 <= index < d:
            raise ConfigError(f"--state basis index {index} out of range for d={d}")
        return basis_state(d, index)
    if kind == "coherent":
        polar, azimuth = _numbers("--state", arguments, 2)
        return spin_coherent_state(d, polar, azimuth)
    if kind == "squeezed":
        polar, azimuth, tau = _numbers("--state", arguments, 3)
        return apply(rotation(squeezing_generator(d), tau), spin_coherent_state(d, polar, azimuth))
    raise ConfigError(f"--state must start with basis:, coherent: or squeezed:, got {text!r}")


def _add_logging_arguments(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        default=False,
        help="Enable verbose (DEBUG level) output",
    )
    parser.add_argument(
        "--quiet",
        "-q",
        action="store_true",
        default=False,
        help="Suppress all output except errors",
    )
    parser.add_argument(
        "--log-file",
        type=str,
        default=None,
        help="Write detailed logs to file",
    )


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_logging_arguments(common)

    parser = argparse.ArgumentParser(
        description="Train and inspect single-qudit data re-uploading models."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common], help="Run an experiment config")
    run.add_argument("config", type=str, help="Path to experiment config (YAML)")
    run.add_argument(
        "--output-dir",
        type=str,
        default=None,
        help=f"Output directory, overrides {ENV_OUTPUT_DIR} and the config",
    )
    run.add_argument(
        "--workers",
        type=int,
        default=None,
        help=f"Worker processes, overrides {ENV_WORKERS} and the config",
    )

    validate = subparsers.add_parser(
        "validate", parents=[common], help="Check a config without running it"
    )
    validate.add_argument("config", type=str, help="Path to experiment config (YAML)")

    regions = subparsers.add_parser(
        "render-regions", parents=[common], help="Render decision regions of a 2-D checkpoint"
    )
    regions.add_argument("checkpoint", type=str, help="Checkpoint JSON file")
    regions.add_argument("--grid", type=int, default=256, help="Raster size in pixels")
    regions.add_argument(
        "--output", type=str, default=None, help="Output PPM, defaults next to the checkpoint"
    )

    husimi = subparsers.add_parser(
        "render-husimi", parents=[common], help="Render the Husimi Q distribution of a state"
    )
    husimi.add_argument(
        "--state",
        type=str,
        required=True,
        help="basis:K, coherent:POLAR,AZIMUTH or squeezed:POLAR,AZIMUTH,TAU",
    )
    husimi.add_argument("--dim", type=int, default=15, help="Qudit dimension d")
    husimi.add_argument("--resolution", type=int, default=128, help="Raster height")
    husimi.add_argument("--output", type=str, default="husimi.ppm", help="Output PPM")

    spectrum = subparsers.add_parser(
        "spectrum", parents=[common], help="Fourier spectrum of a 1-D checkpoint"
    )
    spectrum.add_argument("checkpoint", type=str, help="Checkpoint JSON file")
    spectrum.add_argument("--grid", type=int, default=256, help="Grid size, power of two >= 64")
    spectrum.add_argument(
        "--output", type=str, default=None, help="Output CSV, defaults next to the checkpoint"
    )

    return parser


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return create_parser().parse_args(argv)


def default_output(checkpoint_path: str, suffix: str) -> str:
    return os.path.splitext(checkpoint_path)[0] + suffix


def describe_config(config: ExperimentConfig) -> Dict[str, Union[str, int, list]]:
    """Plain summary used by the validate command and the report"""
    circuit = config.circuit
    return {
        "task": config.task,
        "d": circuit.d,
        "D": circuit.input_dim,
        "layers": list(circuit.layers),
        "arch": list(circuit.archs),
        "squeeze": list(circuit.squeeze),
        "label_assignment": list(circuit.label_assignment),
        "ladder": list(circuit.ladder),
        "qubit_baseline": circuit.qubit_baseline,
        "seeds": len(config.seeds),
        "epochs": config.train.epochs,
        "loss": config.train.loss,
        "output_dir": config.output_dir,
    }

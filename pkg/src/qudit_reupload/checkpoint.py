"""
JSON checkpoints of trained circuits.

Parameters are stored as decimal strings with 17 significant digits, which
round-trips every double exactly. Files are written to a temporary name in the
target directory and renamed into place.
"""

import json
import math
import os
import tempfile
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from qudit_reupload.circuit import CircuitSpec, check_params, validate_spec
from qudit_reupload.data import LabelAssignment
from qudit_reupload.errors import CheckpointError, QuditReuploadError
from qudit_reupload.learn import RunRecord
from qudit_reupload.logger import get_logger
from qudit_reupload.qubitmap import qubit_label_states

logger = get_logger()

CHECKPOINT_FORMAT = "qudit-reupload-checkpoint"
CHECKPOINT_VERSION = 1
METRIC_FIELDS = (
    "final_train_loss",
    "train_metric",
    "test_metric",
    "shot_test_metric",
    "knn_test_metric",
)


class Checkpoint(NamedTuple):
    spec: CircuitSpec
    params: np.ndarray
    seed: int
    setting: str = ""
    task: str = ""
    assignment: Tuple[int, ...] = ()
    output_shift: float = 0.0
    qubit_labels: int = 0
    metrics: Optional[Dict[str, float]] = None

    def inverse_assignment(self) -> Optional[Tuple[int, ...]]:
        if not self.assignment:
            return None
        return LabelAssignment(self.assignment).inverse()

    def label_states(self) -> Optional[np.ndarray]:
        """Qubit label states of a baseline checkpoint, None for basis-state labels"""
        if not self.qubit_labels:
            return None
        return qubit_label_states(self.qubit_labels).states


def from_record(
    record: RunRecord, task: str, output_shift: float = 0.0, qubit_labels: int = 0
) -> Checkpoint:
    return Checkpoint(
        spec=record.spec,
        params=np.asarray(record.params, dtype=float),
        seed=record.seed,
        setting=record.setting,
        task=task,
        assignment=tuple(record.assignment),
        output_shift=output_shift,
        qubit_labels=qubit_labels,
        metrics={name: getattr(record, name) for name in METRIC_FIELDS},
    )


def _metric_value(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def to_dict(checkpoint: Checkpoint) -> dict:
    spec = checkpoint.spec
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "d": spec.d,
            "input_dim": spec.input_dim,
            "layers": spec.layers,
            "arch": spec.arch,
            "squeeze_enabled": spec.squeeze_enabled,
            "encoding_permutation": (
                list(spec.encoding_permutation)
                if spec.encoding_permutation is not None
                else None
            ),
        },
        "params": [f"{p:.17g}" for p in checkpoint.params],
        "seed": checkpoint.seed,
        "setting": checkpoint.setting,
        "task": checkpoint.task,
        "assignment": list(checkpoint.assignment),
        "output_shift": checkpoint.output_shift,
        "qubit_labels": checkpoint.qubit_labels,
        "metrics": {k: _metric_value(v) for k, v in (checkpoint.metrics or {}).items()},
    }


def dumps(checkpoint: Checkpoint) -> str:
    return json.dumps(to_dict(checkpoint), indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=directory, suffix=".tmp", delete=False
    ) as f:
        temp_name = f.name
        try:
            f.write(text)
        except BaseException:
            f.close()
            os.unlink(temp_name)
            raise
    try:
        os.replace(temp_name, path)
    except BaseException:
        os.unlink(temp_name)
        raise


def save_checkpoint(path: str, checkpoint: Checkpoint):
    write_atomic(path, dumps(checkpoint))
    logger.debug(f"Checkpoint written to {path}")


def from_dict(data: dict) -> Checkpoint:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Not a checkpoint file (format {data.get('format')!r})")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {data.get('version')!r}")

    try:
        raw_spec = data["spec"]
        permutation = raw_spec["encoding_permutation"]
        spec = validate_spec(
            CircuitSpec(
                d=int(raw_spec["d"]),
                input_dim=int(raw_spec["input_dim"]),
                layers=int(raw_spec["layers"]),
                arch=str(raw_spec["arch"]),
                squeeze_enabled=bool(raw_spec["squeeze_enabled"]),
                encoding_permutation=(
                    tuple(int(p) for p in permutation) if permutation is not None else None
                ),
            )
        )
        params = check_params(spec, [float(p) for p in data["params"]])
        metrics = {
            k: (math.nan if v is None else float(v))
            for k, v in data.get("metrics", {}).items()
        }
        return Checkpoint(
            spec=spec,
            params=params,
            seed=int(data["seed"]),
            setting=str(data.get("setting", "")),
            task=str(data.get("task", "")),
            assignment=tuple(int(a) for a in data.get("assignment", [])),
            output_shift=float(data.get("output_shift", 0.0)),
            qubit_labels=int(data.get("qubit_labels", 0)),
            metrics=metrics,
        )
    except QuditReuploadError as e:
        raise CheckpointError(f"Malformed checkpoint: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Malformed checkpoint: missing or invalid {e}") from e


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: {e}") from e
    return from_dict(data)

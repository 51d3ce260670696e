"""
Experiment runner: turns a validated config into a sweep and writes its
artifacts.

Output directory layout:
    runs.csv                     one row per (setting, seed)
    summary.csv                  percentile rows per setting and metric
    checkpoints/<run>.json       trained parameters and metrics
    predictions/<run>.csv        regression curves (regression task only)
    manifest.json                config hash, artifact version, file list
    report.md                    human-readable summary
"""

import csv
import io
import json
import os
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader

from qudit_reupload import __version__
from qudit_reupload.checkpoint import from_record, save_checkpoint, write_atomic
from qudit_reupload.circuit import (
    ARCH_EXTENDED,
    CircuitSpec,
    forward_batch,
    param_count,
)
from qudit_reupload.cli_parser import (
    LADDER_RANDOMIZED,
    LADDER_STANDARD,
    TASK_DIGITS,
    TASK_REGRESSION,
    TASK_RINGS,
    TASK_STRIPES,
    DataConfig,
    describe_config,
    ExperimentConfig,
)
from qudit_reupload.data import (
    ASSIGNMENT_ALIGNED,
    ASSIGNMENT_RANDOMIZED,
    TASK_CLASSIFICATION,
    LabeledDataset,
    load_digits,
    make_dataset,
    random_classes,
    reduce_split,
    regression_grid,
    regression_target,
    rings,
    select_classes,
    split,
    stripes,
)
from qudit_reupload.learn import (
    STATUS_OK,
    RunRecord,
    Setting,
    SummaryRow,
    make_streams,
    sample_shots,
    sweep,
)
from qudit_reupload.logger import get_logger
from qudit_reupload.qubitmap import qubit_label_states
from qudit_reupload.utils import (
    REPORT_TEMPLATE_DIR,
    create_folder_if_not_exists,
    format_float,
    get_resource_path,
)

logger = get_logger()

REPORT_TEMPLATE = "report.md.j2"

RUNS_COLUMNS = [
    "setting",
    "seed",
    "status",
    "arch",
    "d",
    "input_dim",
    "layers",
    "squeeze",
    "label_assignment",
    "ladder",
    "param_count",
    "epochs",
    "final_train_loss",
    "train_metric",
    "test_metric",
    "shot_test_metric",
    "knn_test_metric",
    "checkpoint",
    "error",
]
SUMMARY_COLUMNS = ["setting", "metric", "runs", "min", "p25", "median", "p75", "max"]


class TaskSampler(NamedTuple):
    """Draws a fresh (train, test) pair for one run from its data stream"""

    task: str
    data: DataConfig
    digits: Optional[LabeledDataset] = None

    def __call__(self, rng: np.random.Generator) -> Tuple[LabeledDataset, LabeledDataset]:
        data = self.data
        total = data.train_size + data.test_size

        if self.task == TASK_REGRESSION:
            train = regression_grid(data.train_size)
            x = np.sort(rng.uniform(-np.pi, np.pi, size=data.test_size))
            return train, make_dataset(x[:, None], regression_target(x), train.task)

        if self.task == TASK_STRIPES:
            full = stripes(total, data.num_classes, data.angle, rng)
            return split(full, data.train_size, data.test_size, rng)

        if self.task == TASK_RINGS:
            full = rings(total, data.num_classes, data.center, rng)
            return split(full, data.train_size, data.test_size, rng)

        classes = data.classes
        if classes is None:
            classes = random_classes(rng, data.random_classes)
        digits = select_classes(self.digits, classes)
        train, test = split(digits, data.train_size, data.test_size, rng)
        return reduce_split(train, test, data.pca_dim)


def setting_name(spec: CircuitSpec, randomize_labels: bool, randomize_ladder: bool, qubit: bool) -> str:
    parts = ["qubit" if qubit else spec.arch, f"d{spec.d}", f"L{spec.layers}"]
    if spec.arch != ARCH_EXTENDED and not spec.squeeze_enabled:
        parts.append("nosqueeze")
    if randomize_labels:
        parts.append("randlabels")
    if randomize_ladder:
        parts.append("randladder")
    return "_".join(parts)


def build_settings(config: ExperimentConfig) -> List[Setting]:
    circuit = config.circuit
    settings = []
    for arch in circuit.archs:
        squeeze_options = (True,) if arch == ARCH_EXTENDED else circuit.squeeze
        for squeeze in squeeze_options:
            for assignment in circuit.label_assignment:
                for ladder in circuit.ladder:
                    for layers in circuit.layers:
                        spec = CircuitSpec(
                            d=circuit.d,
                            input_dim=circuit.input_dim,
                            layers=layers,
                            arch=arch,
                            squeeze_enabled=squeeze,
                        )
                        randomize_labels = assignment == ASSIGNMENT_RANDOMIZED
                        randomize_ladder = ladder == LADDER_RANDOMIZED
                        name = setting_name(
                            spec, randomize_labels, randomize_ladder, circuit.qubit_baseline
                        )
                        settings.append(Setting(name, spec, randomize_labels, randomize_ladder))
    return settings


def make_sampler(config: ExperimentConfig) -> TaskSampler:
    digits = None
    if config.task == TASK_DIGITS:
        digits = load_digits(config.data.digits_path)
    return TaskSampler(config.task, config.data, digits)


def run_file_stem(record: RunRecord) -> str:
    return f"{record.setting}_seed{record.seed}"


def _csv_text(columns: List[str], rows: List[list]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def runs_rows(
    records: List[RunRecord], settings: List[Setting], config: ExperimentConfig
) -> List[list]:
    by_name = {s.name: s for s in settings}
    rows = []
    for record in records:
        spec = record.spec
        setting = by_name[record.setting]
        rows.append(
            [
                record.setting,
                record.seed,
                record.status,
                spec.arch,
                spec.d,
                spec.input_dim,
                spec.layers,
                spec.squeeze_enabled,
                ASSIGNMENT_RANDOMIZED if setting.randomize_labels else ASSIGNMENT_ALIGNED,
                LADDER_RANDOMIZED if setting.randomize_ladder else LADDER_STANDARD,
                param_count(spec),
                config.train.epochs,
                format_float(record.final_train_loss),
                format_float(record.train_metric),
                format_float(record.test_metric),
                format_float(record.shot_test_metric),
                format_float(record.knn_test_metric),
                f"checkpoints/{run_file_stem(record)}.json" if record.status == STATUS_OK else "",
                record.error,
            ]
        )
    return rows


def summary_rows(rows: List[SummaryRow]) -> List[list]:
    return [
        [
            row.setting,
            row.metric,
            row.runs,
            format_float(row.minimum),
            format_float(row.p25),
            format_float(row.median),
            format_float(row.p75),
            format_float(row.maximum),
        ]
        for row in rows
    ]


def write_predictions(path: str, record: RunRecord, config: ExperimentConfig, test: LabeledDataset):
    """x, target, exact prediction and optional shot estimate for a regression run"""
    states, _ = forward_batch(record.spec, record.params, test.inputs)
    probs = np.abs(states) ** 2
    levels = np.arange(record.spec.d)
    shift = config.train.output_shift
    exact = probs @ levels + shift

    columns = ["x", "target", "prediction"]
    shot_estimate = None
    if config.evaluation.shots > 0:
        columns.append("shot_prediction")
        # separate stream from the one the runner used for the shot metric
        rng = make_streams(record.seed).shots.spawn(1)[0]
        shot_estimate = [
            sample_shots(p, config.evaluation.shots, rng) @ levels + shift for p in probs
        ]

    rows = []
    for i in range(test.size):
        row = [format_float(test.inputs[i, 0]), format_float(test.targets[i]), format_float(exact[i])]
        if shot_estimate is not None:
            row.append(format_float(shot_estimate[i]))
        rows.append(row)
    write_atomic(path, _csv_text(columns, rows))


def render_report(
    config: ExperimentConfig, records: List[RunRecord], summary: List[SummaryRow]
) -> str:
    template_dir = get_resource_path(REPORT_TEMPLATE_DIR)
    env = Environment(
        loader=FileSystemLoader(str(template_dir)), trim_blocks=True, lstrip_blocks=True
    )
    template = env.get_template(REPORT_TEMPLATE)
    metric_name = "MSE" if config.task == TASK_REGRESSION else "accuracy"
    namespace = {
        "config": config,
        "settings": {k: v for k, v in describe_config(config).items() if k != "output_dir"},
        "config_name": os.path.basename(config.path),
        "metric_name": metric_name,
        "summary": summary,
        "runs": len(records),
        "aborted": [r for r in records if r.status != STATUS_OK],
        "version": __version__,
        "fmt": lambda v: "n/a" if v != v else f"{v:.4f}",
    }
    return template.render(namespace)


def run_experiment(config: ExperimentConfig) -> Tuple[List[RunRecord], List[SummaryRow]]:
    """
    Run every setting and seed of a validated config and write the artifacts.

    Returns:
        (records, summary rows); aborted runs are included with status "aborted"
    """
    output_dir = config.output_dir
    checkpoint_dir = os.path.join(output_dir, "checkpoints")
    prediction_dir = os.path.join(output_dir, "predictions")
    create_folder_if_not_exists(output_dir)
    create_folder_if_not_exists(checkpoint_dir)
    if config.task == TASK_REGRESSION and config.evaluation.export_predictions:
        create_folder_if_not_exists(prediction_dir)

    settings = build_settings(config)
    sampler = make_sampler(config)
    label_states = None
    qubit_labels = 0
    if config.circuit.qubit_baseline:
        qubit_labels = config.data.num_classes
        label_states = qubit_label_states(qubit_labels).states
    task = TASK_REGRESSION if config.task == TASK_REGRESSION else TASK_CLASSIFICATION
    artifacts = []

    def on_record(record: RunRecord):
        if record.status != STATUS_OK:
            return
        stem = run_file_stem(record)
        save_checkpoint(
            os.path.join(checkpoint_dir, f"{stem}.json"),
            from_record(record, task, config.train.output_shift, qubit_labels),
        )
        artifacts.append(f"checkpoints/{stem}.json")
        if config.task == TASK_REGRESSION and config.evaluation.export_predictions:
            _, test = sampler(make_streams(record.seed).data)
            write_predictions(os.path.join(prediction_dir, f"{stem}.csv"), record, config, test)
            artifacts.append(f"predictions/{stem}.csv")

    records, summary = sweep(
        settings,
        config.seeds,
        sampler,
        config.train,
        workers=config.workers,
        shots=config.evaluation.shots,
        knn_k=config.evaluation.knn_k,
        label_states=label_states,
        on_record=on_record,
    )

    write_atomic(
        os.path.join(output_dir, "runs.csv"),
        _csv_text(RUNS_COLUMNS, runs_rows(records, settings, config)),
    )
    write_atomic(
        os.path.join(output_dir, "summary.csv"), _csv_text(SUMMARY_COLUMNS, summary_rows(summary))
    )
    write_atomic(os.path.join(output_dir, "report.md"), render_report(config, records, summary))

    manifest = {
        "artifact_version": __version__,
        "config": os.path.basename(config.path),
        "config_sha256": config.digest,
        "artifacts": ["runs.csv", "summary.csv", "report.md", *artifacts],
        "runs": len(records),
        "aborted": sum(1 for r in records if r.status != STATUS_OK),
    }
    write_atomic(
        os.path.join(output_dir, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )

    aborted = manifest["aborted"]
    if aborted:
        logger.warning(f"{aborted} of {len(records)} runs aborted")
    logger.success(f"Wrote {len(records)} runs to {output_dir}")
    return records, summary

"""
Losses, predictions, ADAM training and multi-seed sweeps.

Every run draws its randomness from three independent Philox streams spawned
from the run seed: parameter initialization, data sampling and shot sampling.
"""

import math
import multiprocessing
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from qudit_reupload.circuit import (
    CircuitSpec,
    build_program,
    forward_batch,
    loss_gradient_batch,
    param_count,
    qudit_operators,
)
from qudit_reupload.data import (
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    LabelAssignment,
    LabeledDataset,
    aligned_assignment,
    apply_assignment,
    knn_predict,
    random_assignment,
)
from qudit_reupload.errors import TrainingAbortedError
from qudit_reupload.logger import get_logger, init_worker
from qudit_reupload.qudit_core import QuditState

logger = get_logger()

LOSS_MSE = "mse"
LOSS_OVERLAP = "overlap"
LOSSES = (LOSS_MSE, LOSS_OVERLAP)

STATUS_OK = "ok"
STATUS_ABORTED = "aborted"

SUMMARY_PERCENTILES = (0, 25, 50, 75, 100)


class TrainConfig(NamedTuple):
    loss: str = LOSS_OVERLAP
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 2000
    seed: int = 0
    init_range: Tuple[float, float] = (-math.pi, math.pi)
    output_shift: float = 0.0
    log_every: int = 100


class RunRecord(NamedTuple):
    seed: int
    setting: str
    spec: CircuitSpec
    status: str
    final_train_loss: float
    train_metric: float
    test_metric: float
    params: np.ndarray
    loss_trace: List[float]
    assignment: Tuple[int, ...] = ()
    shot_test_metric: float = math.nan
    knn_test_metric: float = math.nan
    error: str = ""


class Setting(NamedTuple):
    """One point of a sweep: a circuit plus how labels and encoding are randomized"""

    name: str
    spec: CircuitSpec
    randomize_labels: bool = False
    randomize_ladder: bool = False


class SummaryRow(NamedTuple):
    setting: str
    metric: str
    runs: int
    minimum: float
    p25: float
    median: float
    p75: float
    maximum: float


class RunStreams(NamedTuple):
    init: np.random.Generator
    data: np.random.Generator
    shots: np.random.Generator


def make_streams(seed: int) -> RunStreams:
    children = np.random.SeedSequence(seed).spawn(3)
    init, data, shots = (np.random.Generator(np.random.Philox(child)) for child in children)
    return RunStreams(init, data, shots)


def validate_config(config: TrainConfig) -> TrainConfig:
    if config.loss not in LOSSES:
        raise ValueError(f"Unknown loss {config.loss!r}, expected one of {LOSSES}")
    if config.epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {config.epochs}")
    if config.learning_rate <= 0:
        raise ValueError(f"learning_rate must be > 0, got {config.learning_rate}")
    low, high = config.init_range
    if not low < high:
        raise ValueError(f"init_range must satisfy low < high, got {config.init_range}")
    return config


def class_probabilities(state: QuditState) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def expected_label(probs) -> float:
    probs = np.asarray(probs, dtype=float)
    return float(probs @ np.arange(probs.shape[-1]))


def mse_loss(outputs, targets) -> float:
    outputs = np.asarray(outputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if outputs.shape[0] == 0:
        raise ValueError("MSE of an empty batch is undefined")
    if outputs.shape != targets.shape:
        raise ValueError(f"Shape mismatch: {outputs.shape} vs {targets.shape}")
    return float(np.mean((outputs - targets) ** 2))


def overlap_loss(true_label_probs) -> float:
    """Sum over the batch of 1 - p(y_i | x_i)"""
    return float(np.sum(1.0 - np.asarray(true_label_probs, dtype=float)))


def predict_class(probs) -> int:
    return int(np.argmax(probs))


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError(
            f"Need equal non-empty lengths, got {predictions.shape} and {labels.shape}"
        )
    return float(np.mean(predictions == labels))


def predict_regression(probs, shift: float) -> float:
    return expected_label(probs) + shift


def sample_shots(probs, n_shots: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical label frequencies from n_shots measurements"""
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    return rng.multinomial(n_shots, probs) / n_shots


class Adam:
    """
    Adam optimizer over a flat parameter vector.

    Uses m_hat / (sqrt(v_hat) + eps); a zero gradient leaves parameters untouched.
    """

    def __init__(
        self,
        lr: float = 0.05,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1

        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads * grads

        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def label_overlaps(states: np.ndarray, label_states: np.ndarray) -> np.ndarray:
    """|<label_y|psi_i>|^2 for every sample and label, shape (N, n_labels)"""
    return np.abs(states @ label_states.conj().T) ** 2


def _mse_objective(targets: np.ndarray, shift: float):
    n = targets.shape[0]

    def evaluate(states: np.ndarray):
        probs = np.abs(states) ** 2
        levels = np.arange(states.shape[1])
        residual = probs @ levels + shift - targets
        loss = np.mean(residual**2)
        cotangents = (2.0 / n) * residual[:, None] * levels[None, :] * states
        return loss, cotangents

    return evaluate


def _overlap_objective(targets: np.ndarray):
    rows = np.arange(targets.shape[0])

    def evaluate(states: np.ndarray):
        true_amplitudes = states[rows, targets]
        loss = np.sum(1.0 - np.abs(true_amplitudes) ** 2)
        cotangents = np.zeros_like(states)
        cotangents[rows, targets] = -true_amplitudes
        return loss, cotangents

    return evaluate


def _label_state_objective(targets: np.ndarray, label_states: np.ndarray):
    chosen = label_states[targets]  # (N, 2)

    def evaluate(states: np.ndarray):
        overlaps = np.sum(chosen.conj() * states, axis=1)
        loss = np.sum(1.0 - np.abs(overlaps) ** 2)
        cotangents = -chosen * overlaps[:, None]
        return loss, cotangents

    return evaluate


def _objective(
    dataset: LabeledDataset, config: TrainConfig, label_states: Optional[np.ndarray]
):
    if label_states is not None:
        return _label_state_objective(dataset.targets, label_states)
    if config.loss == LOSS_MSE:
        return _mse_objective(dataset.targets.astype(float), config.output_shift)
    return _overlap_objective(dataset.targets)


def predict(
    spec: CircuitSpec,
    params,
    inputs,
    task: str,
    shift: float = 0.0,
    label_states: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Class labels (basis indices) or regression values for a batch of inputs"""
    states, _ = forward_batch(spec, params, inputs)
    if label_states is not None:
        return np.argmax(label_overlaps(states, label_states), axis=1)
    probs = np.abs(states) ** 2
    if task == TASK_CLASSIFICATION:
        return np.argmax(probs, axis=1)
    return probs @ np.arange(spec.d) + shift


def evaluate(
    spec: CircuitSpec,
    params,
    dataset: LabeledDataset,
    shift: float = 0.0,
    label_states: Optional[np.ndarray] = None,
) -> float:
    """Accuracy for classification, MSE for regression"""
    predictions = predict(spec, params, dataset.inputs, dataset.task, shift, label_states)
    if dataset.task == TASK_CLASSIFICATION:
        return accuracy(predictions, dataset.targets)
    return mse_loss(predictions, dataset.targets)


def shot_metric(
    spec: CircuitSpec,
    params,
    dataset: LabeledDataset,
    n_shots: int,
    rng: np.random.Generator,
    shift: float = 0.0,
) -> float:
    """Test metric with every sample's label distribution replaced by shot frequencies"""
    states, _ = forward_batch(spec, params, dataset.inputs)
    frequencies = np.array(
        [sample_shots(p, n_shots, rng) for p in np.abs(states) ** 2]
    )
    if dataset.task == TASK_CLASSIFICATION:
        return accuracy(np.argmax(frequencies, axis=1), dataset.targets)
    return mse_loss(frequencies @ np.arange(spec.d) + shift, dataset.targets)


def _check_task(spec: CircuitSpec, dataset: LabeledDataset, config: TrainConfig, label_states):
    if dataset.size < 1:
        raise ValueError("Training set is empty")
    if dataset.input_dim != spec.input_dim:
        raise ValueError(
            f"Dataset has D={dataset.input_dim} but the circuit expects D={spec.input_dim}"
        )
    if dataset.task == TASK_REGRESSION and config.loss != LOSS_MSE:
        raise ValueError("Regression tasks train with the mse loss")
    if label_states is not None:
        if spec.d != 2 or config.loss != LOSS_OVERLAP:
            raise ValueError("Qubit label states need d=2 and the overlap loss")
        if dataset.targets.max() >= label_states.shape[0]:
            raise ValueError(
                f"{label_states.shape[0]} label states cannot encode label "
                f"{dataset.targets.max()}"
            )
    elif dataset.task == TASK_CLASSIFICATION and dataset.targets.max() >= spec.d:
        raise ValueError(f"Label {dataset.targets.max()} has no basis state for d={spec.d}")


def train(
    spec: CircuitSpec,
    train_set: LabeledDataset,
    config: TrainConfig,
    test_set: Optional[LabeledDataset] = None,
    label_states: Optional[np.ndarray] = None,
    init_rng: Optional[np.random.Generator] = None,
    setting: str = "",
) -> RunRecord:
    """
    Full-batch ADAM training from a random initialization.

    Args:
        spec: Circuit to train
        train_set: Training data; classification labels are basis indices
        config: Optimizer and loss settings
        test_set: Optional held-out data for test_metric
        label_states: Optional (n_labels, 2) qubit label states; switches the
            loss to overlaps with these states instead of basis states
        init_rng: Stream for the initial parameters, defaults to the init
            stream of config.seed
        setting: Name stored in the record

    Returns:
        RunRecord holding the parameters with the lowest training loss seen
        after any ADAM step

    Raises:
        TrainingAbortedError: if the loss becomes non-finite
    """
    validate_config(config)
    _check_task(spec, train_set, config, label_states)
    if init_rng is None:
        init_rng = make_streams(config.seed).init

    low, high = config.init_range
    params = init_rng.uniform(low, high, size=param_count(spec))
    program = build_program(spec, qudit_operators(spec))
    objective = _objective(train_set, config, label_states)
    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon)

    _, grads = loss_gradient_batch(spec, params, train_set.inputs, objective, program)
    best_loss = math.inf
    best_params = params
    trace = []

    for epoch in range(1, config.epochs + 1):
        params = optimizer.step(params, grads)
        loss, grads = loss_gradient_batch(spec, params, train_set.inputs, objective, program)
        if not math.isfinite(loss):
            raise TrainingAbortedError(epoch, loss)
        trace.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = params
        if config.log_every and epoch % config.log_every == 0:
            logger.debug(f"seed {config.seed} epoch {epoch}: loss {loss:.6g} (best {best_loss:.6g})")

    shift = config.output_shift
    train_metric = evaluate(spec, best_params, train_set, shift, label_states)
    test_metric = (
        evaluate(spec, best_params, test_set, shift, label_states)
        if test_set is not None
        else math.nan
    )
    logger.info(
        f"seed {config.seed}: loss {best_loss:.6g}, train {train_metric:.4f}, "
        f"test {test_metric:.4f}"
    )
    return RunRecord(
        seed=config.seed,
        setting=setting,
        spec=spec,
        status=STATUS_OK,
        final_train_loss=best_loss,
        train_metric=train_metric,
        test_metric=test_metric,
        params=best_params,
        loss_trace=trace,
    )


class SweepJob(NamedTuple):
    setting: Setting
    seed: int
    sample_task: Callable[[np.random.Generator], Tuple[LabeledDataset, LabeledDataset]]
    config: TrainConfig
    shots: int = 0
    knn_k: int = 0
    label_states: Optional[np.ndarray] = None


def run_job(job: SweepJob) -> RunRecord:
    """
    One seed of one setting.

    Samples the data, then draws the label assignment and ladder permutation
    from the same data stream, trains, and adds the optional shot and kNN
    metrics. A training abort is returned as a record with status "aborted".
    """
    streams = make_streams(job.seed)
    config = job.config._replace(seed=job.seed)
    spec = job.setting.spec
    train_set, test_set = job.sample_task(streams.data)

    assignment: LabelAssignment = aligned_assignment(spec.d)
    if train_set.task == TASK_CLASSIFICATION and job.label_states is None:
        if job.setting.randomize_labels:
            assignment = random_assignment(spec.d, streams.data)
        train_set = apply_assignment(train_set, assignment)
        test_set = apply_assignment(test_set, assignment)
    if job.setting.randomize_ladder:
        spec = spec._replace(
            encoding_permutation=tuple(int(p) for p in streams.data.permutation(spec.d))
        )

    try:
        record = train(
            spec,
            train_set,
            config,
            test_set,
            job.label_states,
            streams.init,
            job.setting.name,
        )
    except TrainingAbortedError as e:
        logger.warning(f"{job.setting.name} seed {job.seed}: {e}")
        return RunRecord(
            seed=job.seed,
            setting=job.setting.name,
            spec=spec,
            status=STATUS_ABORTED,
            final_train_loss=math.nan,
            train_metric=math.nan,
            test_metric=math.nan,
            params=np.zeros(param_count(spec)),
            loss_trace=[],
            assignment=assignment.permutation,
            error=str(e),
        )

    extras: Dict[str, float] = {}
    if job.shots > 0 and job.label_states is None:
        extras["shot_test_metric"] = shot_metric(
            spec, record.params, test_set, job.shots, streams.shots, config.output_shift
        )
    if job.knn_k > 0 and train_set.task == TASK_CLASSIFICATION:
        extras["knn_test_metric"] = accuracy(
            knn_predict(train_set, test_set.inputs, job.knn_k), test_set.targets
        )
    return record._replace(assignment=assignment.permutation, **extras)


def sweep(
    settings: Sequence[Setting],
    seeds: Sequence[int],
    sample_task: Callable[[np.random.Generator], Tuple[LabeledDataset, LabeledDataset]],
    config: TrainConfig,
    workers: int = 1,
    shots: int = 0,
    knn_k: int = 0,
    label_states: Optional[np.ndarray] = None,
    on_record: Optional[Callable[[RunRecord], None]] = None,
) -> Tuple[List[RunRecord], List[SummaryRow]]:
    """
    Train every setting for every seed and summarize the test metrics.

    Records come back in (setting, seed) order regardless of worker count.
    sample_task must be picklable when workers > 1.
    """
    if not seeds:
        raise ValueError("A sweep needs at least one seed")
    validate_config(config)

    jobs = [
        SweepJob(setting, int(seed), sample_task, config, shots, knn_k, label_states)
        for setting in settings
        for seed in seeds
    ]
    logger.info(f"Running {len(jobs)} training runs on {workers} worker(s)")

    records = []
    if workers > 1:
        with multiprocessing.Pool(
            processes=workers, initializer=init_worker, initargs=(logger.console_level,)
        ) as pool:
            for record in pool.imap(run_job, jobs):
                _collect(record, records, on_record)
    else:
        for job in jobs:
            _collect(run_job(job), records, on_record)

    return records, summarize(records)


def _collect(record: RunRecord, records: List[RunRecord], on_record):
    records.append(record)
    if record.status == STATUS_OK:
        logger.success(
            f"{record.setting} seed {record.seed}: test metric {record.test_metric:.4f}"
        )
    if on_record is not None:
        on_record(record)


def summary_row(setting: str, metric: str, values: Sequence[float]) -> SummaryRow:
    values = np.asarray([v for v in values if math.isfinite(v)], dtype=float)
    if values.size == 0:
        return SummaryRow(setting, metric, 0, *([math.nan] * 5))
    stats = np.percentile(values, SUMMARY_PERCENTILES, method="linear")
    return SummaryRow(setting, metric, int(values.size), *(float(s) for s in stats))


def summarize(records: Sequence[RunRecord]) -> List[SummaryRow]:
    """
    Percentile rows of the test metric per setting, plus shot and kNN rows when
    those metrics were computed. Aborted runs are left out.
    """
    rows = []
    settings = list(dict.fromkeys(r.setting for r in records))
    for setting in settings:
        group = [r for r in records if r.setting == setting and r.status == STATUS_OK]
        rows.append(summary_row(setting, "test", [r.test_metric for r in group]))
        for metric in ("shot_test_metric", "knn_test_metric"):
            values = [getattr(r, metric) for r in group]
            if any(math.isfinite(v) for v in values):
                rows.append(summary_row(setting, metric.replace("_test_metric", ""), values))
    return rows


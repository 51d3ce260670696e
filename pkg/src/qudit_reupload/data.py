"""
Datasets for the re-uploading experiments: the two-frequency regression grid,
stripes and rings in the unit square, and 8x8 digits reduced by PCA.

Also owns train/test splitting, label-to-basis assignment and the
k-nearest-neighbor baseline.
"""

from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from qudit_reupload.errors import DatasetError, DatasetParseError, InvalidPermutationError
from qudit_reupload.logger import get_logger
from qudit_reupload.qudit_core import check_permutation

logger = get_logger()

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"

DIGIT_PIXELS = 64
DIGIT_MAX_INTENSITY = 16
DIGIT_CLASSES = 10

DEFAULT_RING_CENTER = (0.2, -0.1)
# relative eigenvalue floor below which a principal direction counts as empty
PCA_RANK_TOLERANCE = 1e-10

ASSIGNMENT_ALIGNED = "aligned"
ASSIGNMENT_RANDOMIZED = "randomized"


class LabeledDataset(NamedTuple):
    inputs: np.ndarray
    targets: np.ndarray
    task: str
    num_classes: int = 0

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]


class LabelAssignment(NamedTuple):
    """Maps class label c to qudit basis index permutation[c]"""

    permutation: Tuple[int, ...]
    mode: str = ASSIGNMENT_ALIGNED

    def inverse(self) -> Tuple[int, ...]:
        inverse = [0] * len(self.permutation)
        for label, index in enumerate(self.permutation):
            inverse[index] = label
        return tuple(inverse)


class PcaModel(NamedTuple):
    mean: np.ndarray
    components: np.ndarray  # (out_dim, features), rows sorted by variance
    column_min: np.ndarray
    column_max: np.ndarray
    explained_ratio: np.ndarray


def make_dataset(inputs, targets, task: str, num_classes: int = 0) -> LabeledDataset:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise DatasetError(f"Inputs must be a non-empty N x D matrix, got {inputs.shape}")
    if not np.all(np.isfinite(inputs)):
        raise DatasetError("Inputs contain non-finite entries")

    if task == TASK_CLASSIFICATION:
        targets = np.asarray(targets)
        if not np.all(np.equal(np.mod(targets, 1), 0)):
            raise DatasetError("Classification targets must be integers")
        targets = targets.astype(int)
        if num_classes < 2 or targets.min() < 0 or targets.max() >= num_classes:
            raise DatasetError(
                f"Classification targets must lie in 0..{num_classes - 1}, "
                f"got {targets.min()}..{targets.max()}"
            )
    elif task == TASK_REGRESSION:
        targets = np.asarray(targets, dtype=float)
        if not np.all(np.isfinite(targets)):
            raise DatasetError("Regression targets contain non-finite entries")
        num_classes = 0
    else:
        raise DatasetError(f"Unknown task {task!r}")

    if targets.shape != (inputs.shape[0],):
        raise DatasetError(
            f"Expected {inputs.shape[0]} targets, got shape {targets.shape}"
        )
    return LabeledDataset(inputs, targets, task, num_classes)


def subset(dataset: LabeledDataset, indices) -> LabeledDataset:
    indices = np.asarray(indices, dtype=int)
    return dataset._replace(
        inputs=dataset.inputs[indices], targets=dataset.targets[indices]
    )


def regression_target(x):
    return 0.5 * (np.cos(2 * x) + np.cos(3.5 * x))


def regression_grid(n: int) -> LabeledDataset:
    if n < 2:
        raise DatasetError(f"Regression grid needs at least 2 samples, got {n}")
    x = np.linspace(-np.pi, np.pi, n)
    return make_dataset(x[:, None], regression_target(x), TASK_REGRESSION)


def stripes_labels(inputs: np.ndarray, num_classes: int, angle: float = 0.0) -> np.ndarray:
    """
    Stripe index of each point, counted from the lowest stripe.

    The stripes run along the direction at `angle` degrees from the x1 axis. The
    coordinate along their normal is divided by the largest value it reaches on
    the square, so every stripe keeps the same width at any angle.
    """
    radians = np.deg2rad(np.mod(angle, 360.0))
    normal = np.array([-np.sin(radians), np.cos(radians)])
    reach = abs(normal[0]) + abs(normal[1])
    t = (inputs @ normal) / reach
    labels = np.floor(num_classes * (t + 1) / 2).astype(int)
    return np.clip(labels, 0, num_classes - 1)


def stripes(n: int, num_classes: int, angle: float, rng: np.random.Generator) -> LabeledDataset:
    if num_classes < 2:
        raise DatasetError(f"Stripes need at least 2 classes, got {num_classes}")
    inputs = rng.uniform(-1.0, 1.0, size=(n, 2))
    return make_dataset(
        inputs, stripes_labels(inputs, num_classes, angle), TASK_CLASSIFICATION, num_classes
    )


def rings_labels(inputs: np.ndarray, num_classes: int, center: Sequence[float]) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    corners = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    r_max = np.max(np.linalg.norm(corners - center, axis=1))
    radii = np.linalg.norm(inputs - center, axis=1)
    labels = np.floor(num_classes * radii / r_max).astype(int)
    return np.minimum(labels, num_classes - 1)


def rings(
    n: int,
    num_classes: int,
    center: Sequence[float],
    rng: np.random.Generator,
) -> LabeledDataset:
    if num_classes < 2:
        raise DatasetError(f"Rings need at least 2 classes, got {num_classes}")
    center = np.asarray(center, dtype=float)
    if center.shape != (2,) or np.any(np.abs(center) > 1.0):
        raise DatasetError(f"Ring center must be a point in [-1, 1]^2, got {center}")
    inputs = rng.uniform(-1.0, 1.0, size=(n, 2))
    return make_dataset(
        inputs, rings_labels(inputs, num_classes, center), TASK_CLASSIFICATION, num_classes
    )


def _parse_digit_row(line_number: int, line: str) -> List[int]:
    fields = line.split(",")
    if len(fields) != DIGIT_PIXELS + 1:
        raise DatasetParseError(
            line_number, f"expected {DIGIT_PIXELS + 1} fields, got {len(fields)}"
        )
    try:
        values = [int(field.strip()) for field in fields]
    except ValueError:
        raise DatasetParseError(line_number, "fields must be integers") from None

    for column, value in enumerate(values[:DIGIT_PIXELS]):
        if not 0 <= value <= DIGIT_MAX_INTENSITY:
            raise DatasetParseError(
                line_number,
                f"pixel {column} = {value} outside 0..{DIGIT_MAX_INTENSITY}",
            )
    if not 0 <= values[-1] < DIGIT_CLASSES:
        raise DatasetParseError(line_number, f"label {values[-1]} outside 0..9")
    return values


def load_digits(path: str) -> LabeledDataset:
    """
    Read 8x8 digits from a CSV file.

    Each line holds 64 pixel intensities (0..16) followed by the label (0..9).
    Blank lines are skipped.

    Args:
        path: Path to the CSV file

    Returns:
        Classification dataset with 64 real-valued input columns
    """
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rows.append(_parse_digit_row(line_number, line))

    if not rows:
        raise DatasetError(f"No digit rows found in {path}")

    table = np.array(rows, dtype=int)
    logger.debug(f"Loaded {len(rows)} digits from {path}")
    return make_dataset(
        table[:, :DIGIT_PIXELS].astype(float),
        table[:, DIGIT_PIXELS],
        TASK_CLASSIFICATION,
        DIGIT_CLASSES,
    )


def select_classes(dataset: LabeledDataset, classes: Union[int, Sequence[int]]) -> LabeledDataset:
    """
    Keep only some classes and relabel them 0..k-1 in ascending label order.

    Args:
        dataset: Classification dataset
        classes: Either a count n (keeps labels 0..n-1) or an explicit label list
    """
    if isinstance(classes, (int, np.integer)):
        classes = list(range(int(classes)))
    kept = sorted(set(int(c) for c in classes))
    if len(kept) < 2:
        raise DatasetError(f"Need at least 2 classes, got {kept}")
    if kept[0] < 0 or kept[-1] >= dataset.num_classes:
        raise DatasetError(f"Classes {kept} outside 0..{dataset.num_classes - 1}")

    mask = np.isin(dataset.targets, kept)
    if not np.any(mask):
        raise DatasetError(f"No samples with labels {kept}")
    relabel = np.full(dataset.num_classes, -1, dtype=int)
    relabel[kept] = np.arange(len(kept))
    return make_dataset(
        dataset.inputs[mask],
        relabel[dataset.targets[mask]],
        TASK_CLASSIFICATION,
        len(kept),
    )


def random_classes(
    rng: np.random.Generator, count: int, pool: Sequence[int] = tuple(range(DIGIT_CLASSES))
) -> Tuple[int, ...]:
    if not 2 <= count <= len(pool):
        raise DatasetError(f"Cannot draw {count} classes from a pool of {len(pool)}")
    chosen = rng.choice(np.asarray(pool), size=count, replace=False)
    return tuple(sorted(int(c) for c in chosen))


def pca_fit_transform(inputs, out_dim: int) -> Tuple[np.ndarray, PcaModel]:
    """
    Fit PCA on training inputs and return the reduced, rescaled inputs.

    Components are the leading eigenvectors of the sample covariance. Each one
    is signed so that its largest-magnitude entry is positive, and each
    projected column is mapped affinely onto [-1, 1] with the training min/max.
    """
    inputs = np.asarray(inputs, dtype=float)
    n_samples, n_features = inputs.shape
    if n_samples < 2:
        raise DatasetError(f"PCA needs at least 2 samples, got {n_samples}")
    if not 1 <= out_dim <= min(n_samples, n_features):
        raise DatasetError(
            f"PCA output dimension must be in 1..{min(n_samples, n_features)}, got {out_dim}"
        )

    mean = inputs.mean(axis=0)
    centered = inputs - mean
    covariance = centered.T @ centered / (n_samples - 1)
    values, vectors = np.linalg.eigh(covariance)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]

    rank = int(np.sum(values > PCA_RANK_TOLERANCE * max(values[0], np.finfo(float).tiny)))
    if out_dim > rank:
        raise DatasetError(
            f"Covariance has rank {rank}, cannot extract {out_dim} components"
        )

    components = vectors[:, :out_dim].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1

    projected = centered @ components.T
    column_min = projected.min(axis=0)
    column_max = projected.max(axis=0)
    model = PcaModel(
        mean=mean,
        components=components,
        column_min=column_min,
        column_max=column_max,
        explained_ratio=values[:out_dim] / values.sum(),
    )
    logger.debug(
        f"PCA kept {out_dim} components, explained variance "
        f"{model.explained_ratio.sum():.3f}"
    )
    return _rescale(projected, model), model


def _rescale(projected: np.ndarray, model: PcaModel) -> np.ndarray:
    span = model.column_max - model.column_min
    return 2.0 * (projected - model.column_min) / span - 1.0


def pca_transform(model: PcaModel, inputs) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.mean.shape[0]:
        raise DatasetError(
            f"Expected inputs with {model.mean.shape[0]} columns, got {inputs.shape}"
        )
    return _rescale((inputs - model.mean) @ model.components.T, model)


def reduce_split(
    train: LabeledDataset, test: LabeledDataset, out_dim: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Fit PCA on train only and apply the same model to test"""
    reduced, model = pca_fit_transform(train.inputs, out_dim)
    return (
        train._replace(inputs=reduced),
        test._replace(inputs=pca_transform(model, test.inputs)),
    )


def split(
    dataset: LabeledDataset, train_n: int, test_n: int, rng: np.random.Generator
) -> Tuple[LabeledDataset, LabeledDataset]:
    if train_n < 1 or test_n < 1:
        raise DatasetError(
            f"Train and test sets must both be non-empty, got {train_n}/{test_n}"
        )
    if train_n + test_n > dataset.size:
        raise DatasetError(
            f"Requested {train_n} + {test_n} samples but only {dataset.size} available"
        )
    order = rng.permutation(dataset.size)
    return subset(dataset, order[:train_n]), subset(dataset, order[train_n : train_n + test_n])


def aligned_assignment(d: int) -> LabelAssignment:
    return LabelAssignment(tuple(range(d)), ASSIGNMENT_ALIGNED)


def random_assignment(d: int, rng: np.random.Generator) -> LabelAssignment:
    return LabelAssignment(tuple(int(p) for p in rng.permutation(d)), ASSIGNMENT_RANDOMIZED)


def apply_assignment(dataset: LabeledDataset, assignment: LabelAssignment) -> LabeledDataset:
    if dataset.task != TASK_CLASSIFICATION:
        raise DatasetError("Label assignment only applies to classification datasets")
    try:
        permutation = np.array(
            check_permutation(assignment.permutation, len(assignment.permutation))
        )
    except InvalidPermutationError as e:
        raise DatasetError(f"Invalid label assignment: {e}") from e
    if dataset.targets.max() >= len(permutation):
        raise DatasetError(
            f"Label {dataset.targets.max()} has no basis state among {len(permutation)}"
        )
    return dataset._replace(
        targets=permutation[dataset.targets],
        num_classes=max(dataset.num_classes, len(permutation)),
    )


def knn_predict(train: LabeledDataset, queries, k: int) -> np.ndarray:
    """
    Majority vote among the k nearest training points (Euclidean).

    Ties go to the class with the smallest mean distance among its neighbors,
    then to the lowest label.
    """
    if not 1 <= k <= train.size:
        raise DatasetError(f"k must be in 1..{train.size}, got {k}")
    queries = np.asarray(queries, dtype=float)

    differences = train.inputs[None, ...] - queries[:, None, ...]
    distances = np.linalg.norm(differences, axis=2)
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]

    num_labels = int(train.targets.max()) + 1
    predictions = np.empty(queries.shape[0], dtype=int)
    for i, neighbors in enumerate(nearest):
        labels = train.targets[neighbors]
        votes = np.bincount(labels, minlength=num_labels)
        tied = np.flatnonzero(votes == votes.max())
        if len(tied) == 1:
            predictions[i] = tied[0]
            continue
        neighbor_distances = distances[i, neighbors]
        mean_distance = [neighbor_distances[labels == c].mean() for c in tied]
        # argmin picks the first minimum, i.e. the lowest tied label
        predictions[i] = tied[int(np.argmin(mean_distance))]
    return predictions


def describe(dataset: LabeledDataset, name: Optional[str] = None) -> str:
    label = f"{name}: " if name else ""
    if dataset.task == TASK_REGRESSION:
        return f"{label}{dataset.size} regression samples, D={dataset.input_dim}"
    counts = np.bincount(dataset.targets, minlength=dataset.num_classes)
    return (
        f"{label}{dataset.size} samples, D={dataset.input_dim}, "
        f"class counts {counts.tolist()}"
    )

"""
Long training sweeps checking the headline behaviour of the models.

Deselected by default; run with ``pytest -m slow``.
"""

import os

import numpy as np
import pytest

from qudit_reupload.circuit import ARCH_EULER, ARCH_EXTENDED, ARCH_SIMPLIFIED, CircuitSpec, param_count
from qudit_reupload.cli_parser import TASK_DIGITS, TASK_STRIPES, DataConfig
from qudit_reupload.data import load_digits, regression_grid
from qudit_reupload.experiment import TaskSampler
from qudit_reupload.learn import LOSS_MSE, Setting, TrainConfig, sweep, train

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1
SEEDS = list(range(20))
STRIPES = TaskSampler(TASK_STRIPES, DataConfig(750, 250, num_classes=7))


def medians(settings, sample_task, seeds=SEEDS, knn_k=0):
    records, summary = sweep(
        settings, seeds, sample_task, TrainConfig(), workers=WORKERS, knn_k=knn_k
    )
    return records, {(row.setting, row.metric): row for row in summary}


def stripes_setting(layers, squeeze=True, randomize_labels=False, randomize_ladder=False):
    spec = CircuitSpec(7, 2, layers, ARCH_EULER, squeeze_enabled=squeeze)
    name = f"L{layers}_{squeeze}_{randomize_labels}_{randomize_ladder}"
    return Setting(name, spec, randomize_labels, randomize_ladder)


@pytest.fixture(scope="module")
def squeezed_stripes():
    settings = [stripes_setting(layers) for layers in (3, 4)]
    return medians(settings, STRIPES, knn_k=3)


def test_single_layer_qutrit_cannot_fit_two_frequencies():
    grid = regression_grid(100)
    config = TrainConfig(loss=LOSS_MSE, output_shift=-1.0)
    shallow = [train(CircuitSpec(3, 1, 1), grid, config._replace(seed=s)) for s in range(10)]
    deep = [train(CircuitSpec(3, 1, 2), grid, config._replace(seed=s)) for s in range(10)]
    assert all(r.train_metric >= 5e-2 for r in shallow)
    assert sum(r.train_metric <= 1e-3 for r in deep) >= 5


def test_aligned_stripes_reach_high_accuracy(squeezed_stripes):
    _, summary = squeezed_stripes
    assert summary[(stripes_setting(4).name, "test")].median >= 0.90


def test_knn_baseline_and_qudit_agree(squeezed_stripes):
    records, summary = squeezed_stripes
    knn = [r.knn_test_metric for r in records]
    assert all(0.80 <= k <= 1.0 for k in knn)
    qudit = summary[(stripes_setting(4).name, "test")].median
    assert qudit >= np.median(knn) - 0.05


def test_squeezing_ablation(squeezed_stripes):
    _, summary = squeezed_stripes
    settings = [stripes_setting(layers, squeeze=False) for layers in range(1, 7)]
    _, ablated = medians(settings, STRIPES)
    for setting in settings:
        assert ablated[(setting.name, "test")].median <= 0.80
    squeezed = summary[(stripes_setting(4).name, "test")].median
    assert ablated[(stripes_setting(4, squeeze=False).name, "test")].median <= squeezed - 0.10


def test_label_alignment_bias(squeezed_stripes):
    _, summary = squeezed_stripes
    randomized_labels = stripes_setting(3, randomize_labels=True)
    randomized_ladder = stripes_setting(3, randomize_ladder=True)
    _, shuffled = medians([randomized_labels, randomized_ladder], STRIPES)
    aligned = summary[(stripes_setting(3).name, "test")].median
    label_median = shuffled[(randomized_labels.name, "test")].median
    ladder_median = shuffled[(randomized_ladder.name, "test")].median
    assert label_median <= aligned - 0.10
    assert abs(ladder_median - label_median) <= 0.05


def test_parameter_count_decides_performance(digits_path):
    sampler = TaskSampler(
        TASK_DIGITS,
        DataConfig(40, 20, num_classes=6, digits_path=digits_path, random_classes=6),
        load_digits(digits_path),
    )
    pairs = [
        (CircuitSpec(6, 2, 1, ARCH_EXTENDED), CircuitSpec(6, 2, 3, ARCH_SIMPLIFIED)),
        (CircuitSpec(6, 2, 2, ARCH_EXTENDED), CircuitSpec(6, 2, 6, ARCH_SIMPLIFIED)),
    ]
    for extended, simplified in pairs:
        assert abs(param_count(extended) - param_count(simplified)) <= 2
        settings = [Setting("extended", extended), Setting("simplified", simplified)]
        _, summary = medians(settings, sampler)
        a, b = summary[("extended", "test")], summary[("simplified", "test")]
        assert a.p25 <= b.p75 and b.p25 <= a.p75

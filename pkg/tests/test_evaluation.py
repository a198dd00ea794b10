import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomout.errors import DataError
from zoomout.evaluation import (
    ConfusionMatrix, confusion_from_superpixels, format_key_values, format_report,
    majority_labels, oracle_upper_bound, superpixel_label_counts,
)
from zoomout.imagecore import IGNORE


def brute_metrics(pairs, C):
    """Metrics from explicit sets of (image, pixel) coordinates."""
    truth_sets = [set() for _ in range(C)]
    pred_sets = [set() for _ in range(C)]
    valid = 0
    for i, (pred, truth) in enumerate(pairs):
        for idx in range(truth.size):
            t = int(truth.flat[idx])
            if t == IGNORE:
                continue
            valid += 1
            truth_sets[t].add((i, idx))
            pred_sets[int(pred.flat[idx])].add((i, idx))
    ious, accs = [], []
    correct = 0
    for c in range(C):
        inter = len(truth_sets[c] & pred_sets[c])
        union = len(truth_sets[c] | pred_sets[c])
        correct += inter
        if union:
            ious.append(inter / union)
        if truth_sets[c]:
            accs.append(inter / len(truth_sets[c]))
    return sum(ious) / len(ious), correct / valid, sum(accs) / len(accs)


# ----------------------------------------------------------- accumulate

def test_perfect_prediction_diagonal():
    t = np.array([[0, 1], [2, IGNORE]], np.uint8)
    cm = ConfusionMatrix(3).accumulate(t.copy(), t)
    assert np.trace(cm.counts) == 3 and cm.total == 3


def test_all_ignore_leaves_matrix_unchanged():
    cm = ConfusionMatrix(2).accumulate(np.zeros((2, 2), np.uint8), np.full((2, 2), IGNORE, np.uint8))
    assert cm.total == 0


def test_two_pixel_example():
    cm = ConfusionMatrix(2).accumulate(np.array([[1], [1]]), np.array([[0], [1]]))
    assert cm.counts.tolist() == [[0, 1], [0, 1]]


def test_shape_mismatch():
    with pytest.raises(DataError):
        ConfusionMatrix(2).accumulate(np.zeros((2, 2)), np.zeros((2, 3)))


def test_out_of_range_class():
    with pytest.raises(DataError):
        ConfusionMatrix(2).accumulate(np.array([2]), np.array([0]))


# -------------------------------------------------------------- metrics

def test_iou_equals_one_on_perfect_prediction():
    t = np.array([0, 0, 2, 2, 2])
    cm = ConfusionMatrix(3).accumulate(t, t)
    assert cm.class_iou(0) == 1.0 and cm.class_iou(2) == 1.0
    assert math.isnan(cm.class_iou(1))
    assert cm.mean_iou() == 1.0


def test_disjoint_prediction_iou_zero():
    cm = ConfusionMatrix(2).accumulate(np.array([1, 1]), np.array([0, 0]))
    assert cm.class_iou(0) == 0.0


def test_hand_iou_ten_of_fifteen():
    truth = np.array([0] * 15 + [1] * 5)
    pred = np.array([0] * 10 + [1] * 5 + [1] * 5)
    cm = ConfusionMatrix(2).accumulate(pred, truth)
    assert cm.class_iou(0) == pytest.approx(10 / 15)
    assert round(cm.class_iou(0), 3) == 0.667


def test_ninety_ten_accuracies():
    truth = np.array([0] * 90 + [1] * 10)
    pred = np.zeros(100, int)
    cm = ConfusionMatrix(2).accumulate(pred, truth)
    assert cm.pixel_accuracy() == pytest.approx(0.9)
    assert cm.mean_class_accuracy() == pytest.approx(0.5)


def test_perfect_accuracies():
    t = np.array([0, 1, 1, 3])
    cm = ConfusionMatrix(4).accumulate(t, t)
    assert cm.pixel_accuracy() == 1.0 and cm.mean_class_accuracy() == 1.0


def test_empty_matrix_errors():
    with pytest.raises(ValueError):
        ConfusionMatrix(2).pixel_accuracy()
    with pytest.raises(ValueError):
        ConfusionMatrix(2).mean_class_accuracy()
    assert math.isnan(ConfusionMatrix(2).mean_iou())


def random_pairs(seed, n_images, C):
    r = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_images):
        h, w = r.integers(1, 9, 2)
        truth = r.integers(0, C, (h, w)).astype(np.uint8)
        truth[r.random((h, w)) < 0.15] = IGNORE
        pred = r.integers(0, C, (h, w)).astype(np.uint8)
        pairs.append((pred, truth))
    return pairs


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(1, 6))
def test_metrics_match_brute_force(seed, n_images, C):
    pairs = random_pairs(seed, n_images, C)
    if all((t == IGNORE).all() for _, t in pairs):
        return
    cm = ConfusionMatrix(C)
    for p, t in pairs:
        cm.accumulate(p, t)
    miou, pix, cls = brute_metrics(pairs, C)
    assert cm.mean_iou() == pytest.approx(miou, abs=1e-12)
    assert cm.pixel_accuracy() == pytest.approx(pix, abs=1e-12)
    assert cm.mean_class_accuracy() == pytest.approx(cls, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.permutations(range(4)))
def test_order_of_accumulation_irrelevant(seed, order):
    pairs = random_pairs(seed, 4, 3)
    a, b = ConfusionMatrix(3), ConfusionMatrix(3)
    for p, t in pairs:
        a.accumulate(p, t)
    for i in order:
        b.accumulate(*pairs[i])
    assert np.array_equal(a.counts, b.counts)
    parts = [ConfusionMatrix(3).accumulate(*pairs[i]) for i in order]
    assert np.array_equal(sum(parts[1:], parts[0]).counts, a.counts)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_metrics_in_unit_interval(seed):
    pairs = random_pairs(seed, 3, 4)
    cm = ConfusionMatrix(4)
    for p, t in pairs:
        cm.accumulate(p, t)
    if cm.total == 0:
        return
    ious = cm.ious()
    assert ((ious[np.isfinite(ious)] >= 0) & (ious[np.isfinite(ious)] <= 1)).all()
    for v in (cm.mean_iou(), cm.pixel_accuracy(), cm.mean_class_accuracy()):
        assert 0.0 <= v <= 1.0


# --------------------------------------------------------------- oracle

def test_aligned_superpixels_give_one():
    truth = np.array([[0, 0, 1], [2, 2, 1]], np.uint8)
    sp = np.array([[0, 0, 1], [2, 2, 1]])
    assert oracle_upper_bound(sp, truth) == 1.0


def test_single_superpixel_sixty_forty():
    truth = np.array([0] * 6 + [1] * 4, np.uint8).reshape(2, 5)
    assert oracle_upper_bound(np.zeros((2, 5), int), truth) == pytest.approx(0.6)


def test_oracle_shape_mismatch():
    with pytest.raises(DataError):
        oracle_upper_bound(np.zeros((2, 2), int), np.zeros((3, 2), np.uint8))


def test_oracle_ignores_void():
    truth = np.array([[1, IGNORE, IGNORE, 0]], np.uint8)
    assert oracle_upper_bound(np.zeros((1, 4), int), truth) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_oracle_bounds_piecewise_constant_predictions(seed, n_sp):
    r = np.random.default_rng(seed)
    sp = r.integers(0, n_sp, (6, 7))
    sp = np.unique(sp, return_inverse=True)[1].reshape(sp.shape)
    truth = r.integers(0, 3, (6, 7)).astype(np.uint8)
    pred_sp = r.integers(0, 3, sp.max() + 1)
    cm = ConfusionMatrix(3).accumulate(pred_sp[sp], truth)
    assert oracle_upper_bound(sp, truth, 3) >= cm.pixel_accuracy()


def test_confusion_from_superpixels_matches_pixels(rng):
    sp = rng.integers(0, 5, (8, 8))
    sp = np.unique(sp, return_inverse=True)[1].reshape(sp.shape)
    truth = rng.integers(0, 3, (8, 8)).astype(np.uint8)
    truth[0, :3] = IGNORE
    counts, ignored = superpixel_label_counts(sp, truth, 3)
    assert counts.sum() + ignored.sum() == 64
    pred = rng.integers(0, 3, sp.max() + 1)
    a = confusion_from_superpixels(pred, counts, 3)
    b = ConfusionMatrix(3).accumulate(pred[sp], truth)
    assert np.array_equal(a.counts, b.counts)


def test_majority_ties_lowest_id():
    assert majority_labels([[2, 2, 1], [0, 0, 0], [0, 1, 3]]).tolist() == [0, -1, 2]


# -------------------------------------------------------------- reports

def test_reports():
    cm = ConfusionMatrix(2).accumulate(np.array([0, 1, 1]), np.array([0, 1, 0]))
    text = format_report(cm, ["bg", "cat"])
    assert "cat" in text and "mean IoU" in text and "66.7" in text
    kv = dict((line.rsplit("\t", 1)[0], float(line.rsplit("\t", 1)[1]))
              for line in format_key_values(cm, ["bg", "cat"]).splitlines())
    assert kv["pixel_accuracy"] == pytest.approx(2 / 3, abs=1e-6)
    assert kv["cat\tiou"] == pytest.approx(0.5, abs=1e-6)

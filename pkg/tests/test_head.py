import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diagnet.core.common import PoolMode
from diagnet.core.geometry import BBox
from diagnet.core.head import (
    BOX_FIELDS,
    Detection,
    DetectionLossWeights,
    HeadParams,
    decode,
    detection_loss,
    detection_loss_and_grad,
    encode_targets,
    head_backward,
    head_forward,
    nms,
    pool_backward,
    pool_diag_map,
    sigmoid,
    softmax,
)
from diagnet.evaluation.metrics import iou
from diagnet.exceptions import ConfigException, ShapeException


def zero_head(s, l, classes, hidden=4):
    p = HeadParams.init(s, l, classes, hidden, seed=0)
    for m in p.named_matrices().values():
        m[...] = 0.0
    return p


def numeric_gradient(f, x, step=1e-6):
    grad = np.zeros_like(x)
    for index in np.ndindex(*x.shape):
        original = x[index]
        x[index] = original + step
        plus = f()
        x[index] = original - step
        minus = f()
        x[index] = original
        grad[index] = (plus - minus) / (2 * step)
    return grad


# POOLING

def test_pool_identity_when_grids_match(rng):
    y_hat = rng.normal(size=(3, 16))
    pooled = pool_diag_map(y_hat, 4, 4)
    for node in range(16):
        assert_array_equal(pooled[node // 4, node % 4], y_hat[:, node])


def test_pool_constant_map():
    pooled = pool_diag_map(np.full((2, 64), 0.3), 8, 4)
    assert pooled.shape == (4, 4, 2)
    assert_allclose(pooled, 0.3, atol=1e-15)


def test_pool_block_means():
    y_hat = np.arange(16, dtype=np.float64).reshape(1, 16)
    pooled = pool_diag_map(y_hat, 4, 2)
    assert_array_equal(pooled[..., 0], [[2.5, 4.5], [10.5, 12.5]])
    assert_array_equal(pool_diag_map(y_hat, 4, 2, PoolMode.MAX)[..., 0], [[5, 7], [13, 15]])


def test_pool_rejects_indivisible_grid():
    with pytest.raises(ConfigException):
        pool_diag_map(np.zeros((1, 16)), 4, 3)


@pytest.mark.parametrize('mode', list(PoolMode))
def test_pool_backward_matches_finite_differences(rng, mode):
    y_hat = rng.normal(size=(2, 16))
    weights = rng.normal(size=(2, 2, 2))
    analytic = pool_backward(weights, y_hat, 4, 2, mode)
    numeric = numeric_gradient(lambda: float(np.sum(weights * pool_diag_map(y_hat, 4, 2, mode))), y_hat)
    assert_allclose(analytic, numeric, atol=1e-8)


# FORWARD / BACKWARD

def test_zero_head_predicts_midpoints():
    preds = head_forward(np.zeros((2, 2, 3)), zero_head(2, 3, 4)).preds
    assert_array_equal(preds[..., :BOX_FIELDS], 0.5)
    assert_allclose(preds[..., BOX_FIELDS:], 0.25, atol=1e-15)


def test_class_probabilities_sum_to_one(rng):
    p = HeadParams.init(2, 3, 3, 8, seed=1)
    preds = head_forward(rng.normal(size=(2, 2, 3)), p).preds
    assert_allclose(preds[..., BOX_FIELDS:].sum(axis=-1), 1.0, atol=1e-12)
    assert np.all((preds[..., :BOX_FIELDS] > 0) & (preds[..., :BOX_FIELDS] < 1))


def test_head_forward_matches_per_cell_oracle(rng):
    s, l, classes = 2, 3, 2
    p = HeadParams.init(s, l, classes, 5, seed=2)
    p.b1[...] = rng.normal(size=p.b1.shape)
    p.b2[...] = rng.normal(size=p.b2.shape)
    pooled = rng.normal(size=(s, s, l))

    hidden = pooled.reshape(-1) @ p.w1 + p.b1[0]
    hidden = np.where(hidden > 0, hidden, 0.1 * hidden)
    raw = (hidden @ p.w2 + p.b2[0]).reshape(s, s, -1)

    preds = head_forward(pooled, p).preds
    for row in range(s):
        for col in range(s):
            cell = raw[row, col]
            expected_box = 1 / (1 + np.exp(-cell[:BOX_FIELDS]))
            expected_cls = np.exp(cell[BOX_FIELDS:]) / np.exp(cell[BOX_FIELDS:]).sum()
            assert_allclose(preds[row, col, :BOX_FIELDS], expected_box, atol=1e-12)
            assert_allclose(preds[row, col, BOX_FIELDS:], expected_cls, atol=1e-12)


def test_head_forward_rejects_wrong_shape():
    with pytest.raises(ShapeException):
        head_forward(np.zeros((2, 2, 4)), zero_head(2, 3, 2))


def test_head_backward_matches_finite_differences(rng):
    s, l, classes = 2, 3, 2
    p = HeadParams.init(s, l, classes, 4, seed=3)
    p.b1[...] = rng.normal(scale=0.1, size=p.b1.shape)
    pooled = rng.normal(size=(s, s, l))
    weights = rng.normal(size=(s, s, BOX_FIELDS + classes))

    loss = lambda: float(np.sum(weights * head_forward(pooled, p).preds))
    grads, grad_pooled = head_backward(head_forward(pooled, p), p, weights)

    assert_allclose(grads.d_w1, numeric_gradient(loss, p.w1), atol=1e-7)
    assert_allclose(grads.d_b1, numeric_gradient(loss, p.b1), atol=1e-7)
    assert_allclose(grads.d_w2, numeric_gradient(loss, p.w2), atol=1e-7)
    assert_allclose(grads.d_b2, numeric_gradient(loss, p.b2), atol=1e-7)
    assert_allclose(grad_pooled, numeric_gradient(loss, pooled), atol=1e-7)


def test_sigmoid_and_softmax():
    assert sigmoid(0.0) == 0.5
    assert_allclose(softmax(np.array([[1000.0, 1000.0]])), [[0.5, 0.5]])


# TARGETS AND LOSS

def test_encode_targets_lowest_index_wins():
    first, second = BBox(0, 0, 20, 20, class_id=0), BBox(2, 2, 22, 22, class_id=1)
    encoded = encode_targets([first, second], 2, 64, 2)
    assert encoded.responsible.sum() == 1
    assert encoded.assigned[(0, 0)] == first
    assert_allclose(encoded.values[0, 0], [10 / 32, 10 / 32, 20 / 64, 20 / 64, 1.0, 1.0, 0.0])


def test_encode_targets_rejects_unknown_class():
    with pytest.raises(ConfigException):
        encode_targets([BBox(0, 0, 10, 10, class_id=3)], 2, 64, 2)


def test_perfect_predictions_have_no_loss():
    gts = [BBox(4, 6, 30, 28, class_id=1), BBox(36, 34, 60, 62, class_id=0)]
    preds = encode_targets(gts, 2, 64, 2).values.copy()
    assert detection_loss(preds, gts, DetectionLossWeights(), 64) < 1e-12


def test_background_only_has_no_loss():
    assert detection_loss(np.zeros((2, 2, 7)), [], DetectionLossWeights(), 64) == 0.0


def test_detection_loss_hand_computed():
    preds = np.zeros((2, 2, 7))
    preds[...] = [0.5, 0.5, 0.25, 0.25, 0.6, 0.5, 0.5]
    gt = BBox(0, 0, 32, 32, class_id=0)

    # responsible cell (0, 0) predicts (8, 8, 24, 24): IoU with the gt is 1/4
    coord = 5.0 * 2 * (0.5 - math.sqrt(0.5)) ** 2
    confidence = (0.6 - 0.25) ** 2
    classes = 0.5 ** 2 + 0.5 ** 2
    background = 0.5 * 3 * 0.6 ** 2

    loss = detection_loss(preds, [gt], DetectionLossWeights(coord=5.0, noobj=0.5), 64)
    assert abs(loss - (coord + confidence + classes + background)) < 1e-12


def test_detection_gradient_on_confidence_and_classes(rng):
    preds = rng.uniform(0.1, 0.9, size=(2, 2, 7))
    gts = [BBox(4, 6, 30, 28, class_id=1)]
    weights = DetectionLossWeights()

    _, analytic = detection_loss_and_grad(preds, gts, weights, 64)
    numeric = numeric_gradient(lambda: detection_loss(preds, gts, weights, 64), preds)

    # the IoU confidence target is a constant, so only channels that do not move the box are compared
    assert_allclose(analytic[..., 4:], numeric[..., 4:], atol=1e-6)
    assert_allclose(analytic[0, 1, :4], numeric[0, 1, :4], atol=1e-6)


def test_detection_loss_is_non_negative(rng):
    for _ in range(10):
        preds = rng.uniform(0.0, 1.0, size=(2, 2, 8))
        assert detection_loss(preds, [BBox(1, 2, 40, 50, class_id=2)], DetectionLossWeights(), 64) >= 0


# DECODING

def test_decode_thresholds():
    preds = head_forward(np.zeros((2, 2, 3)), zero_head(2, 3, 2)).preds
    assert len(decode(preds, 0.0, 64)) == 4
    assert decode(preds, 1.0 + 1e-9, 64) == []


def test_decode_single_hot_cell():
    preds = np.zeros((2, 2, 7))
    preds[...] = [0.5, 0.5, 0.25, 0.25, 0.1, 0.5, 0.5]
    preds[1, 0] = [0.5, 0.5, 0.25, 0.5, 0.9, 0.8, 0.2]

    detections = decode(preds, 0.2, 64)
    assert len(detections) == 1
    det = detections[0]
    assert det.box == BBox(8, 32, 24, 64, class_id=0)
    assert abs(det.score - 0.72) < 1e-12
    assert det.cell_index == 2


def test_decode_inverts_encode(rng):
    for _ in range(20):
        x1, y1 = rng.uniform(0, 40, size=2)
        box = BBox(x1, y1, x1 + rng.uniform(4, 24), y1 + rng.uniform(4, 24), class_id=1)
        preds = encode_targets([box], 4, 64, 3).values
        (det,) = decode(preds, 0.5, 64)
        assert det.class_id == 1
        assert_allclose(tuple(det.box), tuple(box), atol=1e-9)


def test_nms_suppresses_duplicates():
    box = BBox(0, 0, 10, 10)
    kept = nms([Detection(box, 0.4, 1), Detection(box, 0.9, 0)], 0.5)
    assert kept == [Detection(box, 0.9, 0)]


def test_nms_keeps_disjoint_and_other_classes():
    dets = [
        Detection(BBox(0, 0, 10, 10), 0.9, 0),
        Detection(BBox(20, 20, 30, 30), 0.8, 1),
        Detection(BBox(0, 0, 10, 10, class_id=1), 0.7, 2),
    ]
    assert len(nms(dets, 0.5)) == 3


def test_nms_tie_breaks_by_cell_index():
    box = BBox(0, 0, 10, 10)
    kept = nms([Detection(box, 0.5, 3), Detection(box, 0.5, 1)], 0.5)
    assert kept[0].cell_index == 1


def test_nms_matches_brute_force(rng):
    dets = []
    for i in range(10):
        x, y = rng.uniform(0, 20, size=2)
        dets.append(Detection(BBox(x, y, x + 15, y + 15, class_id=int(rng.integers(2))), float(rng.uniform()), i))

    kept = nms(dets, 0.3)

    expected = []
    remaining = sorted(dets, key=lambda d: (-d.score, d.cell_index))
    while remaining:
        best = remaining.pop(0)
        expected.append(best)
        remaining = [d for d in remaining if d.class_id != best.class_id or iou(d.box, best.box) < 0.3]
    assert kept == expected

    scores = [d.score for d in kept]
    assert scores == sorted(scores, reverse=True)
    for a in kept:
        for b in kept:
            if a is not b and a.class_id == b.class_id:
                assert iou(a.box, b.box) < 0.3

"""
Grid detection head fed by the pooled diagonalized map.

Each of the S x S cells predicts one box: (x, y, w, h, conf, p_0 .. p_C-1).
x, y are sigmoid offsets inside the cell, w, h sigmoid fractions of the
image side, conf a sigmoid, and the class probabilities a softmax.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from diagnet.core.common import PoolMode
from diagnet.core.geometry import BBox
from diagnet.core.linalg import Matrix, Seed, check_shape, matmul, rand_matrix
from diagnet.evaluation.metrics import iou, iou_corners
from diagnet.exceptions import ConfigException, ShapeException

LEAKY_SLOPE = 0.1
BOX_FIELDS = 5


# POOLING

def _window(h: int, s: int) -> int:
    if s < 1 or h % s != 0:
        raise ConfigException(f'Head grid S={s} does not divide the patch grid h={h}')
    return h // s

def _blocks(y_hat: Matrix, h: int, s: int) -> np.ndarray:
    l, n = y_hat.shape
    if n != h * h:
        raise ShapeException(f'Diagonal map has {n} nodes, expected h^2={h * h}')
    k = _window(h, s)
    grid = y_hat.T.reshape(h, h, l)
    return grid.reshape(s, k, s, k, l).transpose(0, 2, 1, 3, 4).reshape(s, s, k * k, l)

def pool_diag_map(y_hat: Matrix, h: int, s: int, mode: PoolMode = PoolMode.AVG) -> np.ndarray:
    """
    Reshape Ŷ's node columns back onto the h x h patch grid and pool
    non-overlapping (h/s) x (h/s) windows into an S x S x L map
    """
    blocks = _blocks(y_hat, h, s)
    match mode:
        case PoolMode.AVG:
            return blocks.mean(axis=2)
        case PoolMode.MAX:
            return blocks.max(axis=2)

    raise ConfigException(f'Unknown pooling mode: {mode}')

def pool_backward(grad_pooled: np.ndarray, y_hat: Matrix, h: int, s: int, mode: PoolMode = PoolMode.AVG) -> Matrix:
    blocks = _blocks(y_hat, h, s)
    l = y_hat.shape[0]
    k = h // s

    if mode == PoolMode.AVG:
        grad_blocks = np.repeat(grad_pooled[:, :, None, :] / (k * k), k * k, axis=2)
    else:
        grad_blocks = np.zeros_like(blocks)
        winners = blocks.argmax(axis=2)[:, :, None, :]
        np.put_along_axis(grad_blocks, winners, grad_pooled[:, :, None, :], axis=2)

    grid = grad_blocks.reshape(s, s, k, k, l).transpose(0, 2, 1, 3, 4).reshape(h * h, l)
    return np.ascontiguousarray(grid.T)


# PARAMETERS

class HeadParams:
    def __init__(self, w1: Matrix, b1: Matrix, w2: Matrix, b2: Matrix, s: int, classes: int):
        in_dim, hidden = w1.shape
        check_shape('b1', b1, 1, hidden)
        check_shape('w2', w2, hidden, s * s * (BOX_FIELDS + classes))
        check_shape('b2', b2, 1, s * s * (BOX_FIELDS + classes))
        if in_dim % (s * s) != 0:
            raise ShapeException(f'Head input width {in_dim} is not a multiple of S^2={s * s}')

        self._w1: Matrix = w1
        self._b1: Matrix = b1
        self._w2: Matrix = w2
        self._b2: Matrix = b2
        self._s: int = s
        self._classes: int = classes

    @staticmethod
    def init(s: int, l: int, classes: int, hidden: int, seed: Seed) -> "HeadParams":
        in_dim = s * s * l
        out_dim = s * s * (BOX_FIELDS + classes)
        seeds = np.random.SeedSequence(seed).spawn(2)
        w1 = rand_matrix(in_dim, hidden, seeds[0].generate_state(4), 1 / math.sqrt(in_dim))
        w2 = rand_matrix(hidden, out_dim, seeds[1].generate_state(4), 1 / math.sqrt(hidden))
        return HeadParams(w1, np.zeros((1, hidden)), w2, np.zeros((1, out_dim)), s, classes)

    @staticmethod
    def from_named_matrices(matrices: Dict[str, Matrix], s: int, classes: int) -> "HeadParams":
        return HeadParams(matrices['head.w1'], matrices['head.b1'], matrices['head.w2'], matrices['head.b2'], s, classes)

    @property
    def w1(self) -> Matrix:
        return self._w1

    @property
    def b1(self) -> Matrix:
        return self._b1

    @property
    def w2(self) -> Matrix:
        return self._w2

    @property
    def b2(self) -> Matrix:
        return self._b2

    @property
    def s(self) -> int:
        return self._s

    @property
    def classes(self) -> int:
        return self._classes

    @property
    def l(self) -> int:
        return self._w1.shape[0] // (self._s * self._s)

    def named_matrices(self) -> Dict[str, Matrix]:
        return {'head.w1': self._w1, 'head.b1': self._b1, 'head.w2': self._w2, 'head.b2': self._b2}

    def copy(self) -> "HeadParams":
        return HeadParams(self._w1.copy(), self._b1.copy(), self._w2.copy(), self._b2.copy(), self._s, self._classes)

    def __eq__(self, other):
        if isinstance(other, HeadParams):
            return all(
                np.array_equal(a, b) for a, b in zip(self.named_matrices().values(), other.named_matrices().values())
            )
        return False


@dataclass
class HeadGradients:
    d_w1: Matrix
    d_b1: Matrix
    d_w2: Matrix
    d_b2: Matrix

    def scaled(self, k: float) -> "HeadGradients":
        return HeadGradients(self.d_w1 * k, self.d_b1 * k, self.d_w2 * k, self.d_b2 * k)

    def __add__(self, other: "HeadGradients") -> "HeadGradients":
        return HeadGradients(
            self.d_w1 + other.d_w1, self.d_b1 + other.d_b1, self.d_w2 + other.d_w2, self.d_b2 + other.d_b2
        )


@dataclass
class HeadTrace:
    v: Matrix
    z1: Matrix
    a1: Matrix
    raw: np.ndarray
    preds: np.ndarray


# FORWARD / BACKWARD

def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))

def softmax(z, axis: int = -1):
    shifted = np.exp(z - z.max(axis=axis, keepdims=True))
    return shifted / shifted.sum(axis=axis, keepdims=True)

def head_forward(pooled: np.ndarray, p: HeadParams) -> HeadTrace:
    if pooled.shape != (p.s, p.s, p.l):
        raise ShapeException(f'Pooled map has shape {pooled.shape}, head expects {(p.s, p.s, p.l)}')

    v = pooled.reshape(1, -1)
    z1 = matmul(v, p.w1) + p.b1
    a1 = np.where(z1 > 0, z1, LEAKY_SLOPE * z1)
    raw = (matmul(a1, p.w2) + p.b2).reshape(p.s, p.s, BOX_FIELDS + p.classes)

    preds = np.empty_like(raw)
    preds[..., :BOX_FIELDS] = sigmoid(raw[..., :BOX_FIELDS])
    preds[..., BOX_FIELDS:] = softmax(raw[..., BOX_FIELDS:])

    return HeadTrace(v, z1, a1, raw, preds)

def head_backward(trace: HeadTrace, p: HeadParams, grad_preds: np.ndarray) -> Tuple[HeadGradients, np.ndarray]:
    """
    Returns the parameter gradients and dL/d(pooled map)
    """
    preds = trace.preds
    if grad_preds.shape != preds.shape:
        raise ShapeException(f'Prediction gradient {grad_preds.shape} does not match {preds.shape}')

    grad_raw = np.empty_like(grad_preds)
    box = preds[..., :BOX_FIELDS]
    grad_raw[..., :BOX_FIELDS] = grad_preds[..., :BOX_FIELDS] * box * (1.0 - box)
    probs = preds[..., BOX_FIELDS:]
    g = grad_preds[..., BOX_FIELDS:]
    grad_raw[..., BOX_FIELDS:] = probs * (g - np.sum(g * probs, axis=-1, keepdims=True))

    d_z2 = grad_raw.reshape(1, -1)
    d_w2 = matmul(trace.a1.T, d_z2)
    d_a1 = matmul(d_z2, p.w2.T)
    d_z1 = d_a1 * np.where(trace.z1 > 0, 1.0, LEAKY_SLOPE)
    d_w1 = matmul(trace.v.T, d_z1)
    d_v = matmul(d_z1, p.w1.T)

    return HeadGradients(d_w1, d_z1, d_w2, d_z2), d_v.reshape(p.s, p.s, p.l)


# TARGETS AND LOSS

@dataclass
class DetectionLossWeights:
    coord: float = 5.0
    noobj: float = 0.5


@dataclass
class EncodedTargets:
    values: np.ndarray          # S x S x (5 + C)
    responsible: np.ndarray     # S x S bool
    assigned: Dict[Tuple[int, int], BBox]


def responsible_cell(box: BBox, s: int, h_in: int) -> Tuple[int, int]:
    cell = h_in / s
    cx, cy = box.center
    col = min(int(cx // cell), s - 1)
    row = min(int(cy // cell), s - 1)
    return row, col

def encode_targets(boxes: List[BBox], s: int, h_in: int, classes: int) -> EncodedTargets:
    """
    The cell holding a box center is responsible for it; when two centers
    share a cell the lower box index wins.
    """
    cell = h_in / s
    values = np.zeros((s, s, BOX_FIELDS + classes))
    responsible = np.zeros((s, s), dtype=bool)
    assigned = {}

    for box in boxes:
        if not 0 <= box.class_id < classes:
            raise ConfigException(f'Box class {box.class_id} outside 0..{classes - 1}')
        row, col = responsible_cell(box, s, h_in)
        if responsible[row, col]:
            continue

        cx, cy = box.center
        values[row, col, 0] = cx / cell - col
        values[row, col, 1] = cy / cell - row
        values[row, col, 2] = box.width / h_in
        values[row, col, 3] = box.height / h_in
        values[row, col, 4] = 1.0
        values[row, col, BOX_FIELDS + box.class_id] = 1.0

        responsible[row, col] = True
        assigned[(row, col)] = box

    return EncodedTargets(values, responsible, assigned)

def cell_box_corners(cell_preds: np.ndarray, row: int, col: int, s: int, h_in: int) -> Tuple[float, float, float, float]:
    cell = h_in / s
    cx = (col + cell_preds[0]) * cell
    cy = (row + cell_preds[1]) * cell
    w = cell_preds[2] * h_in
    h = cell_preds[3] * h_in
    return (
        max(0.0, cx - w / 2),
        max(0.0, cy - h / 2),
        min(float(h_in), cx + w / 2),
        min(float(h_in), cy + h / 2),
    )

def detection_loss_and_grad(
    preds: np.ndarray,
    gt_boxes: List[BBox],
    weights: DetectionLossWeights,
    h_in: int
) -> Tuple[float, np.ndarray]:
    """
    Sum-squared loss with one predicted box per cell. The IoU used as the
    confidence target is treated as a constant.
    """
    s = preds.shape[0]
    classes = preds.shape[2] - BOX_FIELDS
    targets = encode_targets(gt_boxes, s, h_in, classes)

    loss = 0.0
    grad = np.zeros_like(preds)

    conf = preds[..., 4]
    noobj = ~targets.responsible
    loss += weights.noobj * float(np.sum(conf[noobj] ** 2))
    grad[..., 4][noobj] = 2.0 * weights.noobj * conf[noobj]

    for (row, col), gt in targets.assigned.items():
        p = preds[row, col]
        t = targets.values[row, col]

        d_xy = p[0:2] - t[0:2]
        sqrt_p = np.sqrt(np.maximum(p[2:4], 1e-12))
        d_wh = sqrt_p - np.sqrt(t[2:4])
        loss += weights.coord * float(np.sum(d_xy ** 2) + np.sum(d_wh ** 2))
        grad[row, col, 0:2] = 2.0 * weights.coord * d_xy
        grad[row, col, 2:4] = weights.coord * d_wh / sqrt_p

        overlap = iou_corners(cell_box_corners(p, row, col, s, h_in), tuple(gt))
        loss += float((p[4] - overlap) ** 2)
        grad[row, col, 4] = 2.0 * (p[4] - overlap)

        d_cls = p[BOX_FIELDS:] - t[BOX_FIELDS:]
        loss += float(np.sum(d_cls ** 2))
        grad[row, col, BOX_FIELDS:] = 2.0 * d_cls

    return loss, grad

def detection_loss(preds: np.ndarray, gt_boxes: List[BBox], weights: DetectionLossWeights, h_in: int) -> float:
    return detection_loss_and_grad(preds, gt_boxes, weights, h_in)[0]


# DECODING

class Detection:
    def __init__(self, box: BBox, score: float, cell_index: int = 0):
        self._box: BBox = box
        self._score: float = float(score)
        self._cell_index: int = cell_index

    @property
    def box(self) -> BBox:
        return self._box

    @property
    def score(self) -> float:
        return self._score

    @property
    def class_id(self) -> int:
        return self._box.class_id

    @property
    def cell_index(self) -> int:
        return self._cell_index

    def __eq__(self, other):
        if isinstance(other, Detection):
            return self.box == other.box and self.score == other.score and self.cell_index == other.cell_index
        return False

    def __repr__(self):
        return f'Detection({self.box!r}, score={self.score:.4f}, cell={self.cell_index})'


def decode(preds: np.ndarray, score_threshold: float, h_in: int) -> List[Detection]:
    s = preds.shape[0]
    detections = []

    for row in range(s):
        for col in range(s):
            cell_preds = preds[row, col]
            probs = cell_preds[BOX_FIELDS:]
            class_id = int(np.argmax(probs))
            score = float(cell_preds[4] * probs[class_id])
            if score < score_threshold:
                continue

            x1, y1, x2, y2 = cell_box_corners(cell_preds, row, col, s, h_in)
            if x2 <= x1 or y2 <= y1:
                continue
            detections.append(Detection(BBox(x1, y1, x2, y2, class_id), score, row * s + col))

    return detections

def nms(dets: List[Detection], iou_threshold: float) -> List[Detection]:
    """
    Greedy per-class suppression; ties in score go to the lower cell index
    """
    ordered = sorted(dets, key=lambda d: (-d.score, d.cell_index))

    kept: List[Detection] = []
    for det in ordered:
        if all(k.class_id != det.class_id or iou(k.box, det.box) < iou_threshold for k in kept):
            kept.append(det)
    return kept

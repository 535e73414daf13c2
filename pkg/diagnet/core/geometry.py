import math
from typing import List, Optional, Tuple

import numpy as np

from diagnet.core.common import Diagonal, TargetMode
from diagnet.core.linalg import Matrix
from diagnet.exceptions import ConfigException, ShapeException, TargetException


class PatchGrid:
    def __init__(self, h_in: int, h: int):
        if h < 1 or h_in < 1:
            raise ConfigException(f'Grid sizes must be positive, got h_in={h_in}, h={h}')
        if h_in % h != 0:
            raise ConfigException(f'h_in={h_in} is not divisible by h={h}')

        self._h_in: int = h_in
        self._h: int = h

    @property
    def h_in(self) -> int:
        return self._h_in

    @property
    def h(self) -> int:
        return self._h

    @property
    def patch_size(self) -> int:
        return self._h_in // self._h

    @property
    def n(self) -> int:
        return self._h * self._h

    def node_center(self, i: int) -> Tuple[float, float]:
        """
        Nodes are indexed row-major: column = i mod h, row = i div h
        """
        if not 0 <= i < self.n:
            raise ShapeException(f'Node index {i} outside grid of {self.n} nodes')
        row, col = divmod(i, self._h)
        return ((col + 0.5) * self.patch_size, (row + 0.5) * self.patch_size)

    def node_centers(self) -> np.ndarray:
        idx = np.arange(self.n)
        cols = (idx % self._h + 0.5) * self.patch_size
        rows = (idx // self._h + 0.5) * self.patch_size
        return np.stack([cols, rows], axis=1).astype(np.float64)

    def __eq__(self, other):
        if isinstance(other, PatchGrid):
            return self.h_in == other.h_in and self.h == other.h
        return False

    def __str__(self):
        return f'PatchGrid(h_in={self.h_in}, h={self.h})'


class BBox:
    def __init__(self, x1: float, y1: float, x2: float, y2: float, class_id: int = 0):
        if not (x1 < x2 and y1 < y2):
            raise ShapeException(f'Degenerate box ({x1}, {y1}, {x2}, {y2})')

        self._x1: float = float(x1)
        self._y1: float = float(y1)
        self._x2: float = float(x2)
        self._y2: float = float(y2)
        self._class_id: int = int(class_id)

    @property
    def x1(self) -> float:
        return self._x1

    @property
    def y1(self) -> float:
        return self._y1

    @property
    def x2(self) -> float:
        return self._x2

    @property
    def y2(self) -> float:
        return self._y2

    @property
    def class_id(self) -> int:
        return self._class_id

    @property
    def width(self) -> float:
        return self._x2 - self._x1

    @property
    def height(self) -> float:
        return self._y2 - self._y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self._x1 + self._x2) / 2, (self._y1 + self._y2) / 2)

    def diagonal_segment(self, diagonal: Diagonal) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        match diagonal:
            case Diagonal.MAIN:
                return (self._x1, self._y1), (self._x2, self._y2)
            case Diagonal.ANTI:
                return (self._x2, self._y1), (self._x1, self._y2)

        raise ConfigException(f'A single segment is needed, got diagonal={diagonal}')

    def __iter__(self):
        return iter((self._x1, self._y1, self._x2, self._y2))

    def __eq__(self, other):
        if isinstance(other, BBox):
            return tuple(self) == tuple(other) and self.class_id == other.class_id
        return False

    def __hash__(self):
        return hash((*self, self.class_id))

    def __repr__(self):
        return f'BBox({self.x1}, {self.y1}, {self.x2}, {self.y2}, class_id={self.class_id})'


class DiagTargets:
    def __init__(self, a_diag: Matrix, a_perp: Matrix, mode: TargetMode, alpha: Optional[float] = None):
        if a_diag.shape != a_perp.shape or a_diag.shape[0] != a_diag.shape[1]:
            raise ShapeException(f'Target matrices must be square and equal, got {a_diag.shape} and {a_perp.shape}')

        self._a_diag: Matrix = a_diag
        self._a_perp: Matrix = a_perp
        self._mode: TargetMode = mode
        self._alpha: Optional[float] = alpha

    @property
    def a_diag(self) -> Matrix:
        return self._a_diag

    @property
    def a_perp(self) -> Matrix:
        return self._a_perp

    @property
    def mode(self) -> TargetMode:
        return self._mode

    @property
    def alpha(self) -> Optional[float]:
        return self._alpha

    @property
    def n(self) -> int:
        return self._a_diag.shape[0]


def threshold_delta(grid: PatchGrid) -> float:
    """
    Half of a patch's diagonal length: a node whose center lies within delta
    of a segment has a patch the segment passes through.
    """
    return (grid.h_in / (2 * grid.h)) * math.sqrt(2)

def point_segment_distance(points: np.ndarray, a: Tuple[float, float], b: Tuple[float, float]) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    ab = b - a
    t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.hypot(points[:, 0] - closest[:, 0], points[:, 1] - closest[:, 1])

def diag_distance(grid: PatchGrid, box: BBox, node_index: int, diagonal: Diagonal) -> float:
    a, b = box.diagonal_segment(diagonal)
    return float(point_segment_distance(grid.node_center(node_index), a, b)[0])

def node_distances(grid: PatchGrid, box: BBox, diagonal: Diagonal) -> np.ndarray:
    """
    Distance from every node center to the box diagonal; BOTH takes the
    nearer of the two segments, i.e. the union of memberships.
    """
    centers = grid.node_centers()
    if diagonal == Diagonal.BOTH:
        return np.minimum(
            point_segment_distance(centers, *box.diagonal_segment(Diagonal.MAIN)),
            point_segment_distance(centers, *box.diagonal_segment(Diagonal.ANTI)),
        )
    return point_segment_distance(centers, *box.diagonal_segment(diagonal))

def soft_membership(d, delta: float, alpha: float):
    # d enters unsquared, exactly as the membership is defined
    if alpha <= 0:
        raise ConfigException(f'Relaxation parameter alpha must be positive, got {alpha}')
    if delta <= 0:
        raise ConfigException(f'Threshold delta must be positive, got {delta}')

    sigma = alpha * delta / math.sqrt(2)
    return np.exp(-np.asarray(d, dtype=np.float64) / (2 * sigma * sigma))

def _compose(grid: PatchGrid, memberships: List[np.ndarray], mode: TargetMode, alpha: Optional[float]) -> DiagTargets:
    a_diag = np.zeros((grid.n, grid.n))
    a_perp = np.ones((grid.n, grid.n))

    for m in memberships:
        np.maximum(a_diag, np.outer(m, m), out=a_diag)
        np.minimum(a_perp, np.outer(1.0 - m, 1.0 - m), out=a_perp)

    return DiagTargets(a_diag, a_perp, mode, alpha)

def _check_boxes(boxes: List[BBox]):
    if not boxes:
        raise TargetException('A scene without boxes has no diagonal supervision')

def build_hard_targets(grid: PatchGrid, boxes: List[BBox], diagonal: Diagonal = Diagonal.MAIN) -> DiagTargets:
    _check_boxes(boxes)
    delta = threshold_delta(grid)

    memberships = [(node_distances(grid, box, diagonal) <= delta).astype(np.float64) for box in boxes]
    return _compose(grid, memberships, TargetMode.HARD, None)

def build_soft_targets(grid: PatchGrid, boxes: List[BBox], alpha: float, diagonal: Diagonal = Diagonal.MAIN) -> DiagTargets:
    _check_boxes(boxes)
    delta = threshold_delta(grid)

    memberships = [soft_membership(node_distances(grid, box, diagonal), delta, alpha) for box in boxes]
    return _compose(grid, memberships, TargetMode.SOFT, alpha)

def build_targets(
    grid: PatchGrid,
    boxes: List[BBox],
    mode: TargetMode,
    alpha: float = 1.0,
    diagonal: Diagonal = Diagonal.MAIN
) -> DiagTargets:
    match mode:
        case TargetMode.HARD:
            return build_hard_targets(grid, boxes, diagonal)
        case TargetMode.SOFT:
            return build_soft_targets(grid, boxes, alpha, diagonal)

    raise ConfigException(f'Unknown target mode: {mode}')

def degree_normalize(a: Matrix) -> Matrix:
    degrees = a.sum(axis=1)
    out = np.zeros_like(a, dtype=np.float64)
    nonzero = degrees != 0
    out[nonzero] = a[nonzero] / degrees[nonzero, None]
    return out

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from PIL import Image, ImageDraw

from diagnet.core.geometry import BBox, PatchGrid
from diagnet.core.graph import FeatureMap
from diagnet.core.linalg import make_rng, rand_matrix
from diagnet.evaluation.metrics import iou
from diagnet.exceptions import ConfigException, ShapeException

logger = logging.getLogger(__name__)

# Class 0: rectangle, 1: ellipse, 2: triangle
SHAPE_NAMES = ['rectangle', 'ellipse', 'triangle']
FEATURE_STATISTICS = 8
PLACEMENT_ATTEMPTS = 100


class Scene:
    def __init__(self, image: np.ndarray, boxes: List[BBox]):
        if image.ndim != 2 or image.shape[0] != image.shape[1]:
            raise ShapeException(f'Scene image must be square, got {image.shape}')

        self._image: np.ndarray = image
        self._boxes: List[BBox] = list(boxes)

    @property
    def image(self) -> np.ndarray:
        return self._image

    @property
    def boxes(self) -> List[BBox]:
        return list(self._boxes)

    @property
    def h_in(self) -> int:
        return self._image.shape[0]

    def __eq__(self, other):
        if isinstance(other, Scene):
            return np.array_equal(self.image, other.image) and self.boxes == other.boxes
        return False


@dataclass
class SynthSpec:
    h_in: int = 64
    classes: int = 3
    max_objects: int = 2
    overlap_allowed: bool = True
    min_side: Optional[int] = None
    max_side: Optional[int] = None
    noise: float = 0.02

    @property
    def side_range(self):
        """
        Boxes default to at least a quarter of the image, which is two patches
        of the default 8 x 8 grid
        """
        low = self.min_side if self.min_side is not None else self.h_in // 4
        high = self.max_side if self.max_side is not None else (self.h_in * 5) // 8
        return low, high

    def validate(self):
        low, high = self.side_range
        if self.h_in < 8:
            raise ConfigException(f'h_in must be at least 8, got {self.h_in}')
        if not 1 <= self.classes <= len(SHAPE_NAMES):
            raise ConfigException(f'classes must be within 1..{len(SHAPE_NAMES)}, got {self.classes}')
        if self.max_objects < 1:
            raise ConfigException(f'max_objects must be at least 1, got {self.max_objects}')
        if not 1 <= low <= high <= self.h_in:
            raise ConfigException(f'Invalid box side range [{low}, {high}] for h_in={self.h_in}')
        if self.noise < 0:
            raise ConfigException(f'noise must be non-negative, got {self.noise}')


def _texture(class_id: int, h_in: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h_in, 0:h_in]
    match class_id:
        case 0:
            return np.full((h_in, h_in), 0.9)
        case 1:
            return np.where((yy // 2) % 2 == 0, 0.9, 0.45)
        case 2:
            return np.where((yy // 4 + xx // 4) % 2 == 0, 0.9, 0.3)

    raise ConfigException(f'No texture for class {class_id}')

def _shape_mask(class_id: int, box: BBox, h_in: int) -> np.ndarray:
    canvas = Image.new('L', (h_in, h_in), 0)
    draw = ImageDraw.Draw(canvas)
    x1, y1, x2, y2 = int(box.x1), int(box.y1), int(box.x2) - 1, int(box.y2) - 1

    match class_id:
        case 0:
            draw.rectangle([x1, y1, x2, y2], fill=1)
        case 1:
            draw.ellipse([x1, y1, x2, y2], fill=1)
        case 2:
            draw.polygon([(x1, y2), (x2, y2), ((x1 + x2) / 2, y1)], fill=1)

    return np.asarray(canvas, dtype=bool)

def _place_box(rng: np.random.Generator, spec: SynthSpec, class_id: int, existing: List[BBox]) -> Optional[BBox]:
    low, high = spec.side_range
    for _ in range(PLACEMENT_ATTEMPTS):
        w, h = rng.integers(low, high + 1, size=2)
        x1 = int(rng.integers(0, spec.h_in - w + 1))
        y1 = int(rng.integers(0, spec.h_in - h + 1))
        box = BBox(x1, y1, x1 + int(w), y1 + int(h), class_id)

        overlaps = [iou(box, other) for other in existing]
        if spec.overlap_allowed:
            # At most one other box may be touched, by IoU <= 0.5
            touched = [o for o in overlaps if o > 0]
            if len(touched) <= 1 and all(o <= 0.5 for o in touched):
                return box
        elif all(o == 0 for o in overlaps):
            return box

    return None

def gen_scene(rng: np.random.Generator, spec: SynthSpec) -> Scene:
    image = np.zeros((spec.h_in, spec.h_in))
    boxes: List[BBox] = []

    for _ in range(int(rng.integers(1, spec.max_objects + 1))):
        class_id = int(rng.integers(spec.classes))
        box = _place_box(rng, spec, class_id, boxes)
        if box is None:
            logger.debug('Skipped a class %d object after %d placement attempts', class_id, PLACEMENT_ATTEMPTS)
            continue

        mask = _shape_mask(class_id, box, spec.h_in)
        image[mask] = _texture(class_id, spec.h_in)[mask]
        boxes.append(box)

    image += rng.normal(0.0, spec.noise, size=image.shape)
    return Scene(np.clip(image, 0.0, 1.0), boxes)

def gen_dataset(seed: int, count: int, spec: SynthSpec) -> List[Scene]:
    if count < 1:
        raise ConfigException(f'Scene count must be at least 1, got {count}')
    spec.validate()

    rng = make_rng(seed)
    return [gen_scene(rng, spec) for _ in range(count)]


def patch_statistics(image: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """
    Eight statistics per patch: mean, std, min, max, mean |horizontal
    gradient|, mean |vertical gradient|, and the two diagonal quadrant
    contrasts (top-left minus bottom-right, top-right minus bottom-left).
    """
    h, p = grid.h, grid.patch_size
    patches = image.reshape(h, p, h, p).transpose(0, 2, 1, 3)
    half = p // 2 if p > 1 else 1

    stats = np.zeros((h, h, FEATURE_STATISTICS))
    stats[..., 0] = patches.mean(axis=(2, 3))
    stats[..., 1] = patches.std(axis=(2, 3))
    stats[..., 2] = patches.min(axis=(2, 3))
    stats[..., 3] = patches.max(axis=(2, 3))
    if p > 1:
        stats[..., 4] = np.abs(np.diff(patches, axis=3)).mean(axis=(2, 3))
        stats[..., 5] = np.abs(np.diff(patches, axis=2)).mean(axis=(2, 3))

    top_left = patches[:, :, :half, :half].mean(axis=(2, 3))
    top_right = patches[:, :, :half, -half:].mean(axis=(2, 3))
    bottom_left = patches[:, :, -half:, :half].mean(axis=(2, 3))
    bottom_right = patches[:, :, -half:, -half:].mean(axis=(2, 3))
    stats[..., 6] = top_left - bottom_right
    stats[..., 7] = top_right - bottom_left
    return stats

def featurize(image: np.ndarray, grid: PatchGrid, c: int, seed: int) -> FeatureMap:
    """
    Fixed stand-in for a pretrained backbone: per-patch statistics lifted to c
    channels by a seeded random affine projection and a tanh, then divided
    by N. Every entry lies in (-1/N, 1/N), so X^T A stays inside (-1, 1) for
    any adjacency A with entries in [0, 1] and the targets are reachable by
    the tanh output of the neck.
    """
    if c < FEATURE_STATISTICS:
        raise ConfigException(f'Feature channels c={c} must be at least {FEATURE_STATISTICS}')
    if image.shape != (grid.h_in, grid.h_in):
        raise ShapeException(f'Image of shape {image.shape} does not match {grid}')

    projection = rand_matrix(FEATURE_STATISTICS, c, [seed, 0], 1.0)
    bias = rand_matrix(1, c, [seed, 1], 0.5)

    stats = patch_statistics(image, grid).reshape(grid.n, FEATURE_STATISTICS)
    features = np.tanh(stats @ projection + bias) / grid.n
    return FeatureMap(features.reshape(grid.h, grid.h, c))

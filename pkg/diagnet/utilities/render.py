"""
Grayscale renderings of target matrices and diagonal maps, written as binary
PGM (P5, maxval 255).
"""
import numpy as np
from PIL import Image

from diagnet.core.geometry import DiagTargets, degree_normalize
from diagnet.core.linalg import Matrix
from diagnet.exceptions import ShapeException


def rescale_to_bytes(values: np.ndarray) -> np.ndarray:
    """
    Linear min-max rescale to [0, 255]. A constant image is black when it is
    all zero and white otherwise.
    """
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high == low:
        fill = 0 if high == 0 else 255
        return np.full(values.shape, fill, dtype=np.uint8)

    scaled = (values - low) / (high - low) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)

def write_pgm(values: np.ndarray, path: str):
    if values.ndim != 2:
        raise ShapeException(f'Only 2D images can be rendered, got shape {values.shape}')
    Image.fromarray(rescale_to_bytes(values)).save(path, format='PPM')

def node_image(per_node: np.ndarray, h: int) -> np.ndarray:
    if per_node.shape != (h * h,):
        raise ShapeException(f'Expected {h * h} node values, got shape {per_node.shape}')
    return per_node.reshape(h, h)

def targets_image(targets: DiagTargets, h: int) -> np.ndarray:
    """
    Row sums of the degree-normalized A_diag: 1 on diagonal members, 0 elsewhere
    """
    return node_image(degree_normalize(targets.a_diag).sum(axis=1), h)

def targets_full_image(targets: DiagTargets) -> np.ndarray:
    return degree_normalize(targets.a_diag)

def diagmap_image(y_hat: Matrix, h: int) -> np.ndarray:
    return node_image(np.linalg.norm(y_hat, axis=0), h)

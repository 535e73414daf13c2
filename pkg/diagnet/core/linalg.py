"""
Dense float64 kernels shared by every other module.

A Matrix is a 2-D, C-contiguous numpy array of float64. Randomness always
comes from numpy's PCG64 bit generator so seeded results reproduce across
platforms.
"""
from typing import Sequence, Union

import numpy as np
import numpy.typing as npt

from diagnet.exceptions import ShapeException

Matrix = npt.NDArray[np.float64]
Seed = Union[int, Sequence[int]]


def as_matrix(values) -> Matrix:
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeException(f'Expected a 2-D matrix, got shape {m.shape}')
    return m

def make_rng(seed: Seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))

def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeException(f'Cannot multiply {a.shape} by {b.shape}')
    return a @ b

def frobenius_norm(a: Matrix) -> float:
    return float(np.linalg.norm(a))

def tanh_map(a: Matrix) -> Matrix:
    return np.tanh(a)

def rand_matrix(rows: int, cols: int, seed: Seed, scale: float) -> Matrix:
    """
    Uniform entries in [-scale, +scale] drawn from PCG64(seed)
    """
    if rows < 1 or cols < 1:
        raise ShapeException(f'Random matrix needs positive dimensions, got {rows}x{cols}')
    rng = make_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale

def check_shape(name: str, a: Matrix, rows: int, cols: int):
    if a.shape != (rows, cols):
        raise ShapeException(f'{name} has shape {a.shape}, expected {(rows, cols)}')

def is_finite(a: Matrix) -> bool:
    return bool(np.all(np.isfinite(a)))

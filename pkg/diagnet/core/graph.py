import numpy as np

from diagnet.core.linalg import Matrix, is_finite
from diagnet.exceptions import ShapeException


class FeatureMap:
    def __init__(self, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] != data.shape[1]:
            raise ShapeException(f'Feature map must be h x h x c, got {data.shape}')
        if data.shape[0] < 2 or data.shape[2] < 1:
            raise ShapeException(f'Feature map needs h >= 2 and c >= 1, got {data.shape}')
        if not is_finite(data):
            raise ShapeException('Feature map contains non-finite entries')

        self._data: np.ndarray = data

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def h(self) -> int:
        return self._data.shape[0]

    @property
    def c(self) -> int:
        return self._data.shape[2]

    def __eq__(self, other):
        if isinstance(other, FeatureMap):
            return np.array_equal(self.data, other.data)
        return False


class Graph:
    def __init__(self, x: Matrix, a: Matrix, a_norm: Matrix):
        self._x: Matrix = x
        self._a: Matrix = a
        self._a_norm: Matrix = a_norm

    @property
    def x(self) -> Matrix:
        """
        Node matrix X (N x L), one row per patch in row-major order
        """
        return self._x

    @property
    def a(self) -> Matrix:
        return self._a

    @property
    def a_norm(self) -> Matrix:
        return self._a_norm

    @property
    def n(self) -> int:
        return self._x.shape[0]

    @property
    def l(self) -> int:
        return self._x.shape[1]

    def to_feature_map(self) -> FeatureMap:
        h = int(round(np.sqrt(self.n)))
        return FeatureMap(self._x.reshape(h, h, self.l))


def cosine_adjacency(x: Matrix) -> Matrix:
    norms = np.linalg.norm(x, axis=1)
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)

    unit = x / safe[:, None]
    cos = unit @ unit.T
    cos = 0.5 * (cos + cos.T)

    a = np.clip(cos, 0.0, 1.0)
    a[~nonzero, :] = 0.0
    a[:, ~nonzero] = 0.0
    a[np.diag_indices_from(a)] = np.where(nonzero, 1.0, 0.0)
    return a

def normalize_adjacency(a: Matrix) -> Matrix:
    """
    D^-1/2 (A + I) D^-1/2 with D the degrees of A + I
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeException(f'Adjacency must be square, got {a.shape}')

    a_hat = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    a_norm = inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]
    return 0.5 * (a_norm + a_norm.T)

def to_graph(fm: FeatureMap) -> Graph:
    x = fm.data.reshape(fm.h * fm.h, fm.c).copy()
    a = cosine_adjacency(x)
    return Graph(x, a, normalize_adjacency(a))

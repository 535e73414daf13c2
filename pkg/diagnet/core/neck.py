"""
GCN neck: node embedding, edge prediction, the two diagonal losses and their
hand-derived gradients.

    H  = tanh(Ã X W_emb)          N x L'
    Â  = H Hᵀ                     N x N
    Ŷ  = tanh(Xᵀ Â W_pred)        L x N

Both losses use the smoothed norm sqrt(‖R‖² + ε²) so the gradient exists at
zero residual.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from diagnet.core.common import LossKind, TargetMode
from diagnet.core.geometry import BBox, DiagTargets, PatchGrid, build_targets
from diagnet.core.graph import FeatureMap, Graph, to_graph
from diagnet.core.linalg import Matrix, Seed, check_shape, make_rng, matmul, rand_matrix, tanh_map
from diagnet.exceptions import ShapeException
from diagnet.utilities.definitions import NORM_EPSILON

logger = logging.getLogger(__name__)

DEFAULT_SENTINEL_LOSS = 1e6


class DiagNetParams:
    def __init__(self, w_emb: Matrix, w_pred: Matrix):
        if w_pred.shape[0] != w_pred.shape[1]:
            raise ShapeException(f'W_pred must be N x N, got {w_pred.shape}')

        self._w_emb: Matrix = w_emb
        self._w_pred: Matrix = w_pred

    @staticmethod
    def init(n: int, l: int, l_reduced: int, seed: Seed) -> "DiagNetParams":
        """
        Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]
        """
        seeds = np.random.SeedSequence(seed).spawn(2)
        w_emb = rand_matrix(l, l_reduced, seeds[0].generate_state(4), 1 / math.sqrt(l))
        w_pred = rand_matrix(n, n, seeds[1].generate_state(4), 1 / math.sqrt(n))
        return DiagNetParams(w_emb, w_pred)

    @property
    def w_emb(self) -> Matrix:
        return self._w_emb

    @property
    def w_pred(self) -> Matrix:
        return self._w_pred

    @property
    def n(self) -> int:
        return self._w_pred.shape[0]

    @property
    def l(self) -> int:
        return self._w_emb.shape[0]

    @property
    def l_reduced(self) -> int:
        return self._w_emb.shape[1]

    def named_matrices(self) -> Dict[str, Matrix]:
        return {'neck.w_emb': self._w_emb, 'neck.w_pred': self._w_pred}

    def copy(self) -> "DiagNetParams":
        return DiagNetParams(self._w_emb.copy(), self._w_pred.copy())

    def check_compatible(self, g: Graph):
        if g.n != self.n:
            raise ShapeException(f'Graph has N={g.n} nodes but W_pred is bound to N={self.n}')
        if g.l != self.l:
            raise ShapeException(f'Graph has L={g.l} features but W_emb expects L={self.l}')

    def __eq__(self, other):
        if isinstance(other, DiagNetParams):
            return np.array_equal(self.w_emb, other.w_emb) and np.array_equal(self.w_pred, other.w_pred)
        return False


@dataclass
class NeckGradients:
    d_w_emb: Matrix
    d_w_pred: Matrix

    def scaled(self, k: float) -> "NeckGradients":
        return NeckGradients(self.d_w_emb * k, self.d_w_pred * k)

    def __add__(self, other: "NeckGradients") -> "NeckGradients":
        return NeckGradients(self.d_w_emb + other.d_w_emb, self.d_w_pred + other.d_w_pred)


@dataclass
class ForwardTrace:
    params: DiagNetParams
    ax: Matrix          # Ã X
    z_emb: Matrix       # Ã X W_emb
    h_emb: Matrix       # H
    a_hat: Matrix       # H Hᵀ
    m: Matrix           # Xᵀ Â
    z_pred: Matrix      # Xᵀ Â W_pred
    y_hat: Matrix       # Ŷ


def forward(g: Graph, p: DiagNetParams) -> ForwardTrace:
    p.check_compatible(g)

    ax = matmul(g.a_norm, g.x)
    z_emb = matmul(ax, p.w_emb)
    h_emb = tanh_map(z_emb)
    a_hat = matmul(h_emb, h_emb.T)
    m = matmul(g.x.T, a_hat)
    z_pred = matmul(m, p.w_pred)
    y_hat = tanh_map(z_pred)

    return ForwardTrace(p, ax, z_emb, h_emb, a_hat, m, z_pred, y_hat)

def smoothed_norm(r: Matrix) -> float:
    return math.sqrt(float(np.sum(r * r)) + NORM_EPSILON ** 2)

def _residuals(trace: ForwardTrace, g: Graph, t: DiagTargets) -> Tuple[Matrix, Matrix]:
    if t.n != g.n:
        raise ShapeException(f'Targets are {t.n} x {t.n} but the graph has N={g.n}')
    xt = g.x.T
    return trace.y_hat - matmul(xt, t.a_diag), trace.y_hat - matmul(xt, t.a_perp)

def loss_min(trace: ForwardTrace, g: Graph, t: DiagTargets) -> float:
    r_diag, _ = _residuals(trace, g, t)
    return smoothed_norm(r_diag)

def loss_comp(trace: ForwardTrace, g: Graph, t: DiagTargets, sentinel: float = DEFAULT_SENTINEL_LOSS) -> float:
    r_diag, r_perp = _residuals(trace, g, t)
    denominator = smoothed_norm(r_perp)
    if denominator < NORM_EPSILON * math.sqrt(2):
        logger.warning('Complementary residual vanished, returning sentinel loss %g', sentinel)
        return sentinel
    return smoothed_norm(r_diag) / denominator

def diagonal_loss(trace: ForwardTrace, g: Graph, t: DiagTargets, loss_kind: LossKind, sentinel: float = DEFAULT_SENTINEL_LOSS) -> float:
    match loss_kind:
        case LossKind.MIN:
            return loss_min(trace, g, t)
        case LossKind.COMP:
            return loss_comp(trace, g, t, sentinel)

    raise ShapeException(f'Unknown loss kind: {loss_kind}')

def loss_output_gradient(trace: ForwardTrace, g: Graph, t: DiagTargets, loss_kind: LossKind) -> Matrix:
    """
    dL/dŶ for the selected loss
    """
    r_diag, r_perp = _residuals(trace, g, t)
    n_diag = smoothed_norm(r_diag)

    if loss_kind == LossKind.MIN:
        return r_diag / n_diag

    n_perp = smoothed_norm(r_perp)
    if n_perp < NORM_EPSILON * math.sqrt(2):
        return np.zeros_like(trace.y_hat)
    return r_diag / (n_diag * n_perp) - n_diag * r_perp / n_perp ** 3

def backward_from_output(trace: ForwardTrace, g: Graph, grad_y: Matrix) -> NeckGradients:
    """
    Chain rule from dL/dŶ back to both weight matrices. The Ŷ gradient reaches
    W_emb through Â = H Hᵀ.
    """
    p = trace.params
    if trace.y_hat.shape != (g.l, g.n):
        raise ShapeException(f'Trace output {trace.y_hat.shape} does not match graph (L={g.l}, N={g.n})')
    check_shape('dL/dY', grad_y, g.l, g.n)

    d_z_pred = grad_y * (1.0 - trace.y_hat ** 2)
    d_w_pred = matmul(trace.m.T, d_z_pred)
    d_m = matmul(d_z_pred, p.w_pred.T)
    d_a_hat = matmul(g.x, d_m)
    d_h = matmul(d_a_hat + d_a_hat.T, trace.h_emb)
    d_z_emb = d_h * (1.0 - trace.h_emb ** 2)
    d_w_emb = matmul(trace.ax.T, d_z_emb)

    return NeckGradients(d_w_emb, d_w_pred)

def backward(trace: ForwardTrace, g: Graph, t: DiagTargets, loss_kind: LossKind) -> NeckGradients:
    return backward_from_output(trace, g, loss_output_gradient(trace, g, t, loss_kind))


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    combinations: Dict[str, float] = field(default_factory=dict)


def compare_gradients(
    g: Graph,
    p: DiagNetParams,
    t: DiagTargets,
    loss_kind: LossKind,
    step: float = 1e-6,
    floor: float = 1e-4,
    corrupt: bool = False
) -> float:
    """
    Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
    parameter entry, numeric gradients by central differences. Entries smaller
    than `floor` are therefore compared on an absolute scale.

    The default floor is 1e-4 rather than 1e-8. Central differences at step
    1e-6 carry round-off of about eps * |L| / step, which for losses of order
    one to a few hundred is 1e-10 to 1e-8; a tighter floor would report that
    noise as relative error on near-zero entries.
    """
    analytic = backward(forward(g, p), g, t, loss_kind)
    if corrupt:
        flat = analytic.d_w_pred.reshape(-1)
        flat[np.argmax(np.abs(flat))] *= 2.0

    worst = 0.0
    for name, grad in (('w_emb', analytic.d_w_emb), ('w_pred', analytic.d_w_pred)):
        shifted = p.copy()
        weights = shifted.w_emb if name == 'w_emb' else shifted.w_pred

        for index in np.ndindex(*weights.shape):
            original = weights[index]
            weights[index] = original + step
            plus = diagonal_loss(forward(g, shifted), g, t, loss_kind)
            weights[index] = original - step
            minus = diagonal_loss(forward(g, shifted), g, t, loss_kind)
            weights[index] = original

            numeric = (plus - minus) / (2 * step)
            scale = max(abs(grad[index]), abs(numeric), floor)
            worst = max(worst, abs(grad[index] - numeric) / scale)

    return worst

def random_instance(
    rng: np.random.Generator,
    dims: Tuple[int, int, int],
    mode: TargetMode,
    alpha: float = 1.0
) -> Tuple[Graph, DiagNetParams, DiagTargets]:
    n, l, l_reduced = dims
    h = math.isqrt(n)
    if h * h != n or h < 2:
        raise ShapeException(f'Node count N={n} must be a square of at least 4')

    grid = PatchGrid(8 * h, h)
    fm = FeatureMap(rng.uniform(-0.5, 0.5, size=(h, h, l)))
    g = to_graph(fm)
    p = DiagNetParams.init(n, l, l_reduced, int(rng.integers(2 ** 32)))

    x1, y1 = rng.uniform(0, grid.h_in / 2, size=2)
    x2 = rng.uniform(x1 + grid.patch_size, grid.h_in)
    y2 = rng.uniform(y1 + grid.patch_size, grid.h_in)
    t = build_targets(grid, [BBox(x1, y1, x2, y2)], mode, alpha)

    return g, p, t

def grad_check(
    seed: int,
    n_trials: int,
    dims: Tuple[int, int, int] = (16, 8, 4),
    loss_kind: Optional[LossKind] = None,
    mode: Optional[TargetMode] = None,
    tolerance: float = 1e-4,
    corrupt: bool = False
) -> GradCheckReport:
    """
    Analytic vs. central-difference gradients on random instances for every
    requested (loss, target mode) combination.
    """
    loss_kinds = [loss_kind] if loss_kind else list(LossKind)
    modes = [mode] if mode else list(TargetMode)

    combinations = {}
    for kind in loss_kinds:
        for target_mode in modes:
            rng = make_rng([seed, list(LossKind).index(kind), list(TargetMode).index(target_mode)])
            worst = 0.0
            for _ in range(n_trials):
                g, p, t = random_instance(rng, dims, target_mode)
                worst = max(worst, compare_gradients(g, p, t, kind, corrupt=corrupt))

            combinations[f'{kind}/{target_mode}'] = worst
            logger.info('Gradient check %s/%s: max relative error %.3e', kind, target_mode, worst)

    max_rel_error = max(combinations.values())
    return GradCheckReport(max_rel_error, max_rel_error <= tolerance, combinations)

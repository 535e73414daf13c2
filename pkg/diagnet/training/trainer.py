"""
Alternating trainer. Each epoch runs two passes over the shuffled batches:

    phase A  neck only, on the diagonal loss
    phase B  head on the detection loss, optionally fine-tuning the neck
             through the pooled diagonal map

Gradients are averaged over the batch before a single optimizer step.
Fine-tuning has its own optimizer and rate (lr_finetune), so its steps and
moment estimates never mix with the phase A ones.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Tuple

import numpy as np

from diagnet.core.geometry import BBox, DiagTargets, build_targets
from diagnet.core.graph import Graph, to_graph
from diagnet.core.head import HeadGradients, HeadParams, head_backward, head_forward, pool_backward, pool_diag_map, detection_loss_and_grad
from diagnet.core.linalg import Matrix, is_finite, make_rng
from diagnet.core.neck import DiagNetParams, NeckGradients, backward, backward_from_output, diagonal_loss, forward
from diagnet.data.synth import Scene, featurize
from diagnet.exceptions import ConfigException, DivergenceException, ShapeException
from diagnet.training.checkpoint import Checkpoint
from diagnet.training.config import TrainConfig
from diagnet.training.optimizers import Optimizer, make_optimizer
from diagnet.utilities.parallel import WorkerPool

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    graph: Graph
    targets: DiagTargets
    boxes: List[BBox]


@dataclass
class LossRecord:
    epoch: int
    diag_loss: float
    det_loss: float


@dataclass
class LossLog:
    records: List[LossRecord] = field(default_factory=list)

    def append(self, record: LossRecord):
        self.records.append(record)

    @property
    def diag_losses(self) -> List[float]:
        return [r.diag_loss for r in self.records]

    @property
    def det_losses(self) -> List[float]:
        return [r.det_loss for r in self.records]

    def to_csv(self) -> str:
        lines = ['epoch,diag_loss,det_loss']
        lines += [f'{r.epoch},{r.diag_loss!r},{r.det_loss!r}' for r in self.records]
        return '\n'.join(lines) + '\n'


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_log: LossLog


def prepare_sample(scene: Scene, config: TrainConfig) -> Sample:
    grid = config.grid
    if scene.h_in != grid.h_in:
        raise ShapeException(f'Scene is {scene.h_in} px but the config expects h_in={grid.h_in}')

    fm = featurize(scene.image, grid, config.channels, config.feature_seed)
    targets = build_targets(grid, scene.boxes, config.mode, config.alpha, config.diagonal)
    return Sample(to_graph(fm), targets, list(scene.boxes))


def _mean(grads: list):
    return reduce(lambda a, b: a + b, grads).scaled(1.0 / len(grads))

def _neck_grad_dict(grads: NeckGradients) -> Dict[str, Matrix]:
    return {'neck.w_emb': grads.d_w_emb, 'neck.w_pred': grads.d_w_pred}

def _head_grad_dict(grads: HeadGradients) -> Dict[str, Matrix]:
    return {'head.w1': grads.d_w1, 'head.b1': grads.d_b1, 'head.w2': grads.d_w2, 'head.b2': grads.d_b2}

def _strip_prefix(state: Dict[str, Matrix], prefix: str) -> Dict[str, Matrix]:
    return {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}


class Trainer:
    def __init__(self, config: TrainConfig, checkpoint: Optional[Checkpoint] = None):
        self._config: TrainConfig = config.validate()
        grid = config.grid

        self._neck_optimizer: Optimizer = make_optimizer(config.optimizer, config.lr_diag, config.momentum)
        self._head_optimizer: Optimizer = make_optimizer(config.optimizer, config.lr_head, config.momentum)
        self._finetune_optimizer: Optimizer = make_optimizer(config.optimizer, config.lr_finetune, config.momentum)

        if checkpoint is None:
            self._neck: DiagNetParams = DiagNetParams.init(grid.n, config.channels, config.reduced, [config.seed, 2])
            self._head: HeadParams = HeadParams.init(config.s, config.channels, config.classes, config.head_hidden, [config.seed, 3])
            self._rng: np.random.Generator = make_rng([config.seed, 1])
            self._epoch: int = 0
        else:
            self._resume(checkpoint)

    def _resume(self, checkpoint: Checkpoint):
        config = self._config
        neck, head = checkpoint.neck, checkpoint.head
        if neck.n != config.grid.n or neck.l != config.channels:
            raise ConfigException(
                f'Checkpoint neck has N={neck.n}, L={neck.l} but the config needs N={config.grid.n}, L={config.channels}'
            )
        if head.s != config.s or head.classes != config.classes:
            raise ConfigException(
                f'Checkpoint head has S={head.s}, C={head.classes} but the config needs S={config.s}, C={config.classes}'
            )

        self._neck = neck.copy()
        self._head = head.copy()
        self._rng = make_rng(0)
        self._rng.bit_generator.state = checkpoint.rng_state
        self._epoch = checkpoint.epoch

        state = checkpoint.optimizer_state
        self._neck_optimizer.load_state(_strip_prefix(state, 'neck.'))
        self._head_optimizer.load_state(_strip_prefix(state, 'head.'))
        self._finetune_optimizer.load_state(_strip_prefix(state, 'finetune.'))

    @property
    def config(self) -> TrainConfig:
        return self._config

    @property
    def neck(self) -> DiagNetParams:
        return self._neck

    @property
    def head(self) -> HeadParams:
        return self._head

    @property
    def epoch(self) -> int:
        return self._epoch

    def checkpoint(self) -> Checkpoint:
        optimizer_state = {}
        for prefix, optimizer in (
            ('neck', self._neck_optimizer),
            ('head', self._head_optimizer),
            ('finetune', self._finetune_optimizer)
        ):
            optimizer_state.update({f'{prefix}.{k}': v.copy() for k, v in optimizer.state().items()})
        return Checkpoint(
            self._neck.copy(),
            self._head.copy(),
            self._config,
            self._epoch,
            self._rng.bit_generator.state,
            optimizer_state
        )

    # PHASES

    def _diag_step(self, sample: Sample) -> Tuple[float, NeckGradients]:
        config = self._config
        trace = forward(sample.graph, self._neck)
        loss = diagonal_loss(trace, sample.graph, sample.targets, config.loss_kind, config.sentinel_loss)
        return loss, backward(trace, sample.graph, sample.targets, config.loss_kind)

    def _det_step(self, sample: Sample) -> Tuple[float, HeadGradients, Optional[NeckGradients]]:
        config = self._config
        h = config.h

        trace = forward(sample.graph, self._neck)
        pooled = pool_diag_map(trace.y_hat, h, config.s, config.pool_mode)
        head_trace = head_forward(pooled, self._head)
        loss, grad_preds = detection_loss_and_grad(head_trace.preds, sample.boxes, config.loss_weights, config.h_in)
        head_grads, grad_pooled = head_backward(head_trace, self._head, grad_preds)

        neck_grads = None
        if config.finetune_neck:
            grad_y = pool_backward(grad_pooled, trace.y_hat, h, config.s, config.pool_mode)
            neck_grads = backward_from_output(trace, sample.graph, grad_y)
        return loss, head_grads, neck_grads

    def _check(self, losses: List[float], batch: int, loss_name: str):
        for loss in losses:
            if not math.isfinite(loss):
                raise DivergenceException(self._epoch + 1, batch, loss_name, loss)

    def _check_params(self, batch: int):
        matrices = {**self._neck.named_matrices(), **self._head.named_matrices()}
        for name, matrix in matrices.items():
            if not is_finite(matrix):
                raise DivergenceException(self._epoch + 1, batch, name, float('nan'))

    def run_epoch(self, samples: List[Sample], pool: WorkerPool) -> LossRecord:
        config = self._config
        order = self._rng.permutation(len(samples))
        batches = [
            [samples[i] for i in order[start:start + config.batch_size]]
            for start in range(0, len(samples), config.batch_size)
        ]
        neck_params = self._neck.named_matrices()
        head_params = self._head.named_matrices()

        diag_losses = []
        for index, batch in enumerate(batches):
            results = pool.map(self._diag_step, batch)
            losses = [loss for loss, _ in results]
            self._check(losses, index, 'diagonal loss')
            self._neck_optimizer.step(neck_params, _neck_grad_dict(_mean([g for _, g in results])))
            self._check_params(index)
            diag_losses += losses

        det_losses = []
        for index, batch in enumerate(batches):
            results = pool.map(self._det_step, batch)
            losses = [loss for loss, _, _ in results]
            self._check(losses, index, 'detection loss')
            self._head_optimizer.step(head_params, _head_grad_dict(_mean([g for _, g, _ in results])))
            if config.finetune_neck:
                self._finetune_optimizer.step(neck_params, _neck_grad_dict(_mean([g for _, _, g in results])))
            self._check_params(index)
            det_losses += losses

        self._epoch += 1
        return LossRecord(self._epoch, float(np.mean(diag_losses)), float(np.mean(det_losses)))

    def train(self, scenes: List[Scene]) -> TrainResult:
        if not scenes:
            raise ConfigException('Cannot train on an empty dataset')
        config = self._config

        log = LossLog()
        with WorkerPool() as pool:
            samples = pool.map(lambda scene: prepare_sample(scene, config), scenes)
            logger.info('Prepared %d scenes on %s, %d worker(s)', len(samples), config.grid, pool.workers)

            while self._epoch < config.epochs:
                record = self.run_epoch(samples, pool)
                log.append(record)
                logger.info('epoch %d: diag_loss=%.6g det_loss=%.6g', record.epoch, record.diag_loss, record.det_loss)

        return TrainResult(self.checkpoint(), log)


def train(scenes: List[Scene], config: TrainConfig, checkpoint: Optional[Checkpoint] = None) -> TrainResult:
    return Trainer(config, checkpoint).train(scenes)

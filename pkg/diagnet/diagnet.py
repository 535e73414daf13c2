import logging
from typing import List

from diagnet.core.geometry import BBox
from diagnet.core.head import Detection, HeadParams, decode, head_forward, nms, pool_diag_map
from diagnet.core.neck import DiagNetParams, ForwardTrace, forward
from diagnet.core.graph import to_graph
from diagnet.data.synth import Scene, featurize
from diagnet.evaluation.metrics import EvalResult, map_metrics
from diagnet.exceptions import ShapeException
from diagnet.training.checkpoint import Checkpoint
from diagnet.training.config import TrainConfig
from diagnet.training.trainer import train
from diagnet.utilities.definitions import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD
from diagnet.utilities.parallel import WorkerPool

logger = logging.getLogger(__name__)


class DiagNet:
    """
    Inference pipeline: featurize -> graph -> neck -> pool -> head -> decode -> NMS
    """
    def __init__(self, neck: DiagNetParams, head: HeadParams, config: TrainConfig):
        self._neck: DiagNetParams = neck
        self._head: HeadParams = head
        self._config: TrainConfig = config

        if neck.n != config.grid.n or neck.l != config.channels:
            raise ShapeException(
                f'Neck weights (N={neck.n}, L={neck.l}) do not match {config.grid} with c={config.channels}'
            )
        if head.s != config.s or head.l != neck.l:
            raise ShapeException(f'Head weights (S={head.s}, L={head.l}) do not match S={config.s}, L={neck.l}')

    @staticmethod
    def from_checkpoint(checkpoint: Checkpoint) -> "DiagNet":
        return DiagNet(checkpoint.neck, checkpoint.head, checkpoint.config)

    @property
    def config(self) -> TrainConfig:
        return self._config

    @property
    def neck(self) -> DiagNetParams:
        return self._neck

    @property
    def head(self) -> HeadParams:
        return self._head

    def check_scene(self, scene: Scene):
        if scene.h_in != self._config.h_in:
            raise ShapeException(
                f'Scene is {scene.h_in}x{scene.h_in} but the checkpoint was trained on {self._config.grid}'
            )

    def diag_map(self, scene: Scene) -> ForwardTrace:
        self.check_scene(scene)
        config = self._config
        fm = featurize(scene.image, config.grid, config.channels, config.feature_seed)
        return forward(to_graph(fm), self._neck)

    def detect(
        self,
        scene: Scene,
        score_threshold: float = DEFAULT_SCORE_THRESHOLD,
        nms_iou: float = DEFAULT_NMS_IOU
    ) -> List[Detection]:
        config = self._config
        trace = self.diag_map(scene)
        pooled = pool_diag_map(trace.y_hat, config.h, config.s, config.pool_mode)
        preds = head_forward(pooled, self._head).preds
        return nms(decode(preds, score_threshold, config.h_in), nms_iou)

    def evaluate(
        self,
        scenes: List[Scene],
        score_threshold: float = DEFAULT_SCORE_THRESHOLD,
        nms_iou: float = DEFAULT_NMS_IOU
    ) -> EvalResult:
        for scene in scenes:
            self.check_scene(scene)

        with WorkerPool() as pool:
            detections = pool.map(lambda scene: self.detect(scene, score_threshold, nms_iou), scenes)

        gts: List[List[BBox]] = [scene.boxes for scene in scenes]
        logger.info('Evaluated %d scenes, %d detections', len(scenes), sum(len(d) for d in detections))
        return map_metrics(detections, gts, self._config.classes)


def fit_and_evaluate(
    train_scenes: List[Scene],
    val_scenes: List[Scene],
    config: TrainConfig,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU
) -> EvalResult:
    """
    Trains from scratch and evaluates on the validation scenes
    """
    result = train(train_scenes, config)
    return DiagNet.from_checkpoint(result.checkpoint).evaluate(val_scenes, score_threshold, nms_iou)

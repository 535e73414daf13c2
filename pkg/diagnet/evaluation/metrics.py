from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from diagnet.core.geometry import BBox
from diagnet.exceptions import MetricException
from diagnet.utilities.definitions import COCO_IOU_THRESHOLDS


def iou_corners(a: Sequence[float], b: Sequence[float]) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b

    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    intersection = iw * ih
    union = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1) + max(0.0, bx2 - bx1) * max(0.0, by2 - by1) - intersection
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, intersection / union))

def iou(a: BBox, b: BBox) -> float:
    return iou_corners(tuple(a), tuple(b))


def match_detections(dets: List, gts: List[BBox], iou_threshold: float) -> List[Tuple[float, bool]]:
    """
    Greedy matching in descending score order (stable for equal scores). Each
    detection takes the unmatched ground truth with the best IoU, ties to the
    lowest index, and is a true positive iff that IoU reaches the threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    matched = [False] * len(gts)

    flags = []
    for i in order:
        det = dets[i]
        best, best_iou = -1, -1.0
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            overlap = iou(det.box, gt)
            if overlap > best_iou:
                best, best_iou = j, overlap

        is_tp = best >= 0 and best_iou >= iou_threshold
        if is_tp:
            matched[best] = True
        flags.append((det.score, is_tp))

    return flags

def precision_envelope_ap(flags: Iterable[Tuple[float, bool]], n_gt: int) -> float:
    """
    All-point interpolated area under the monotone precision envelope
    """
    if n_gt == 0:
        return 0.0

    flags = sorted(flags, key=lambda f: -f[0])
    if not flags:
        return 0.0

    tp = np.cumsum([1.0 if is_tp else 0.0 for _, is_tp in flags])
    fp = np.cumsum([0.0 if is_tp else 1.0 for _, is_tp in flags])
    recall = tp / n_gt
    precision = tp / (tp + fp)

    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]

    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))

def average_precision(dets: List, gts: List[BBox], iou_threshold: float) -> float:
    return precision_envelope_ap(match_detections(dets, gts, iou_threshold), len(gts))


@dataclass
class EvalResult:
    per_class_ap: Dict[int, Dict[float, float]] = field(default_factory=dict)
    map50: float = 0.0
    map75: float = 0.0
    map_coco: float = 0.0

    def to_report(self) -> Dict[str, str]:
        report = {
            'map50': f'{self.map50:.6f}',
            'map75': f'{self.map75:.6f}',
            'map': f'{self.map_coco:.6f}',
        }
        for class_id, aps in sorted(self.per_class_ap.items()):
            report[f'ap50.class{class_id}'] = f'{aps[0.5]:.6f}'
        return report


def map_metrics(per_image_dets: List[List], per_image_gts: List[List[BBox]], classes: int) -> EvalResult:
    if len(per_image_dets) != len(per_image_gts):
        raise MetricException(f'{len(per_image_dets)} detection lists for {len(per_image_gts)} images')

    gt_counts = defaultdict(int)
    for gts in per_image_gts:
        for gt in gts:
            gt_counts[gt.class_id] += 1

    present = [c for c in range(classes) if gt_counts[c] > 0]
    if not present:
        raise MetricException('No class has any ground truth box, mAP is undefined')

    per_class_ap: Dict[int, Dict[float, float]] = {}
    for class_id in present:
        per_class_ap[class_id] = {}
        for threshold in COCO_IOU_THRESHOLDS:
            flags = []
            for dets, gts in zip(per_image_dets, per_image_gts):
                class_dets = [d for d in dets if d.class_id == class_id]
                class_gts = [g for g in gts if g.class_id == class_id]
                flags.extend(match_detections(class_dets, class_gts, threshold))
            per_class_ap[class_id][threshold] = precision_envelope_ap(flags, gt_counts[class_id])

    def mean_ap(threshold: float) -> float:
        return float(np.mean([per_class_ap[c][threshold] for c in present]))

    return EvalResult(
        per_class_ap=per_class_ap,
        map50=mean_ap(0.5),
        map75=mean_ap(0.75),
        map_coco=float(np.mean([mean_ap(t) for t in COCO_IOU_THRESHOLDS])),
    )

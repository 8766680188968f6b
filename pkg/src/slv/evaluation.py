"""Detection quality metrics: VOC-style average precision and CorLoc."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation
from .geometry import Box, iou

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    box: Box
    score: float


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: Box
    difficult: bool = False  # reserved; matching currently ignores it


@dataclass
class ApResult:
    ap: float
    num_gt: int
    num_det: int

    @property
    def no_positives(self) -> bool:
        return self.num_gt == 0


def _integrate_pr(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-points PR integration: area under the monotone precision envelope."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def average_precision(
    dets: Iterable[Detection],
    gts: Iterable[GroundTruth],
    class_id: int,
    iou_thresh: float = 0.5,
) -> ApResult:
    """AP of one class by greedy score-descending matching.

    Each ground-truth box can absorb at most one detection at IoU at or
    above the threshold; score ties keep input order. With no ground
    truth for the class, AP is defined as 0 and flagged.
    """
    cls_dets = [d for d in dets if d.class_id == class_id]
    gt_by_image: dict[str, list[GroundTruth]] = defaultdict(list)
    n_gt = 0
    for g in gts:
        if g.class_id == class_id:
            gt_by_image[g.image_id].append(g)
            n_gt += 1
    if n_gt == 0:
        return ApResult(0.0, 0, len(cls_dets))
    matched: dict[str, list[bool]] = {k: [False] * len(v) for k, v in gt_by_image.items()}
    order = sorted(range(len(cls_dets)), key=lambda i: -cls_dets[i].score)
    tp = np.zeros(len(cls_dets))
    fp = np.zeros(len(cls_dets))
    for rank, i in enumerate(order):
        d = cls_dets[i]
        candidates = gt_by_image.get(d.image_id, [])
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(candidates):
            v = iou(d.box, g.box)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_thresh and not matched[d.image_id][best_j]:
            matched[d.image_id][best_j] = True
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0
    if len(cls_dets) == 0:
        return ApResult(0.0, n_gt, 0)
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    return ApResult(_integrate_pr(recall, precision), n_gt, len(cls_dets))


def per_class_ap(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thresholds: Sequence[float],
) -> dict[int, float]:
    """AP per ground-truth class, averaged over the given IoU thresholds."""
    if not iou_thresholds:
        raise ContractViolation("need at least one IoU threshold")
    classes = sorted({g.class_id for g in gts})
    return {
        c: float(
            np.mean([average_precision(dets, gts, c, t).ap for t in iou_thresholds])
        )
        for c in classes
    }


def mean_ap(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_thresholds: Sequence[float] = (0.5,),
) -> float:
    """Mean over ground-truth classes of threshold-averaged AP."""
    table = per_class_ap(dets, gts, iou_thresholds)
    if not table:
        return 0.0
    return float(np.mean(list(table.values())))


@dataclass
class CorLocResult:
    per_class: dict[int, float] = field(default_factory=dict)
    mean: float = 0.0


def corloc(dets: Sequence[Detection], gts: Sequence[GroundTruth]) -> CorLocResult:
    """Correct-localization rate on positive images.

    For every class, over the images whose ground truth contains that
    class: the image counts as correct when the top-scoring detection of
    the class overlaps some ground-truth instance at IoU >= 0.5. Images
    without any detection of the class count as misses.
    """
    gt_index: dict[tuple[int, str], list[Box]] = defaultdict(list)
    for g in gts:
        gt_index[(g.class_id, g.image_id)].append(g.box)
    det_index: dict[tuple[int, str], Detection] = {}
    for d in dets:
        key = (d.class_id, d.image_id)
        cur = det_index.get(key)
        if cur is None or d.score > cur.score:
            det_index[key] = d
    per_class: dict[int, float] = {}
    hits: dict[int, int] = defaultdict(int)
    totals: dict[int, int] = defaultdict(int)
    for (c, image_id), boxes in gt_index.items():
        totals[c] += 1
        top = det_index.get((c, image_id))
        if top is not None and any(iou(top.box, b) >= 0.5 for b in boxes):
            hits[c] += 1
    for c in sorted(totals):
        per_class[c] = hits[c] / totals[c]
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return CorLocResult(per_class, mean)

"""Scoring and loss formulas as pure numerical functions.

Everything here is forward-only numpy over plain arrays: two-stream
proposal scoring, the image-level classification loss, the cluster
refinement loss, the re-classification/re-localization multi-task loss,
the feature distillation loss, and the schedule weight that blends them.
No autodiff; tests probe gradients by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .geometry import Box, iou
from .voting import Supervision

PROB_FLOOR = 1e-8


@dataclass(frozen=True)
class Cluster:
    """One foreground proposal cluster: a center plus spatial neighbors."""

    label: int
    confidence: float
    members: tuple[int, ...]


@dataclass
class ClusterAssignment:
    """Partition of all proposals into foreground clusters plus background.

    Background proposals carry per-proposal loss weights; the background
    acts as the implicit final cluster of the partition.
    """

    clusters: list[Cluster]
    background: tuple[int, ...]
    background_weights: np.ndarray

    def __post_init__(self) -> None:
        self.background_weights = np.asarray(self.background_weights, dtype=np.float64)
        if self.background_weights.shape != (len(self.background),):
            raise ContractViolation("background weights do not match background indices")
        for cl in self.clusters:
            if len(cl.members) < 1:
                raise ContractViolation("empty foreground cluster")

    def covered_indices(self) -> list[int]:
        out = [r for cl in self.clusters for r in cl.members]
        out.extend(self.background)
        return out


@dataclass(frozen=True)
class Schedule:
    """Training progress: current iteration out of a fixed total."""

    current: int
    total: int

    def __post_init__(self) -> None:
        if self.total < 1 or not 0 <= self.current <= self.total:
            raise ContractViolation(f"bad schedule {self.current}/{self.total}")


def softmax_over_classes(x: np.ndarray) -> np.ndarray:
    """Column-wise softmax (each proposal's class scores sum to 1)."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def softmax_over_proposals(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax (each class's proposal scores sum to 1)."""
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def wsddn_scores(x_cls: np.ndarray, x_det: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-stream proposal scores and the per-class image score.

    The element-wise product of the class softmax and the proposal
    softmax gives the proposal score matrix; summing it over proposals
    gives the image-level class scores, each in [0, 1].
    """
    x_cls = np.asarray(x_cls, dtype=np.float64)
    x_det = np.asarray(x_det, dtype=np.float64)
    if x_cls.shape != x_det.shape:
        raise ContractViolation(
            f"stream shapes differ: {x_cls.shape} vs {x_det.shape}"
        )
    phi0 = softmax_over_classes(x_cls) * softmax_over_proposals(x_det)
    return phi0, phi0.sum(axis=1)


def mil_loss(phi: np.ndarray, label: Sequence[int]) -> float:
    """Binary cross-entropy between image scores and the image label, summed
    over classes. Scores are clamped away from {0, 1} to stay finite."""
    phi = np.clip(np.asarray(phi, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = np.asarray(label, dtype=np.float64)
    return float(-np.sum(y * np.log(phi) + (1.0 - y) * np.log(1.0 - phi)))


def build_clusters(
    phi_k: np.ndarray,
    boxes: list[Box],
    label: Sequence[int],
    iou_fg: float = 0.5,
) -> ClusterAssignment:
    """Group proposals around one top-scoring center per positive class.

    Simplified center selection: the highest-scoring proposal of each
    positive class becomes a center (distinct proposals; next-best on
    collision) with confidence equal to its score. Every other proposal
    joins the center of highest overlap when that overlap reaches
    `iou_fg`, otherwise it goes to background weighted by the confidence
    of its best-overlapping center (1.0 when there are no centers).
    """
    phi_k = np.asarray(phi_k, dtype=np.float64)
    y = np.asarray(label)
    r_total = phi_k.shape[1]
    if phi_k.shape[0] != y.shape[0] + 1:
        raise ContractViolation(
            f"expected {y.shape[0] + 1} score rows (classes + background), got {phi_k.shape[0]}"
        )
    if r_total != len(boxes):
        raise ContractViolation(f"{r_total} score columns vs {len(boxes)} boxes")

    centers: list[tuple[int, int, float]] = []  # (class, proposal, confidence)
    taken: set[int] = set()
    for c in np.flatnonzero(y):
        order = np.argsort(-phi_k[c])
        pick = next((int(r) for r in order if int(r) not in taken), None)
        if pick is None:
            break
        taken.add(pick)
        centers.append((int(c), pick, float(phi_k[c, pick])))

    members: list[list[int]] = [[r] for _, r, _ in centers]
    background: list[int] = []
    bg_weights: list[float] = []
    for r in range(r_total):
        if r in taken:
            continue
        if not centers:
            background.append(r)
            bg_weights.append(1.0)
            continue
        overlaps = [iou(boxes[r], boxes[rc]) for _, rc, _ in centers]
        best = int(np.argmax(overlaps))
        if overlaps[best] >= iou_fg:
            members[best].append(r)
        else:
            background.append(r)
            bg_weights.append(centers[best][2])

    clusters = [
        Cluster(c, conf, tuple(mem))
        for (c, _, conf), mem in zip(centers, members)
    ]
    return ClusterAssignment(clusters, tuple(background), np.asarray(bg_weights))


def cluster_loss(phi_k: np.ndarray, assignment: ClusterAssignment) -> float:
    """Weighted cross-entropy over proposal clusters.

    Foreground clusters contribute confidence * size * log(mean member
    probability of the cluster label); background proposals contribute
    their weight times log of their background probability. The sum is
    negated and averaged over all proposals.
    """
    phi_k = np.asarray(phi_k, dtype=np.float64)
    n_rows, r_total = phi_k.shape
    covered = assignment.covered_indices()
    if sorted(covered) != list(range(r_total)):
        raise ContractViolation("cluster assignment is not a partition of proposals")
    bg_row = n_rows - 1
    total = 0.0
    for cl in assignment.clusters:
        mean_prob = float(phi_k[cl.label, list(cl.members)].mean())
        total += cl.confidence * len(cl.members) * math.log(max(mean_prob, PROB_FLOOR))
    for r, lam in zip(assignment.background, assignment.background_weights):
        total += float(lam) * math.log(max(float(phi_k[bg_row, r]), PROB_FLOOR))
    return -total / r_total


def encode_box_deltas(anchor: Box, target: Box) -> np.ndarray:
    """Center/size offsets (dx, dy, dw, dh) mapping `anchor` onto `target`,
    normalized by the anchor size, log-space for the scales."""
    aw, ah = anchor.width, anchor.height
    if aw <= 0 or ah <= 0:
        raise ContractViolation("cannot encode deltas against a degenerate anchor")
    acx = anchor.x_min + 0.5 * aw
    acy = anchor.y_min + 0.5 * ah
    tw, th = target.width, target.height
    tcx = target.x_min + 0.5 * tw
    tcy = target.y_min + 0.5 * th
    return np.array(
        [(tcx - acx) / aw, (tcy - acy) / ah, math.log(tw / aw), math.log(th / ah)]
    )


@dataclass
class SlvTargets:
    """Per-proposal supervision derived from pseudo ground truth.

    `labels[r]` is a class index or `num_classes` for background;
    `deltas[r]` holds regression offsets for foreground proposals.
    """

    labels: np.ndarray
    deltas: np.ndarray
    foreground: np.ndarray
    num_classes: int


def assign_slv_targets(
    sup: Supervision,
    boxes: list[Box],
    num_classes: int,
    iou_fg: float = 0.5,
) -> SlvTargets:
    """Match each proposal to its best-overlapping pseudo box.

    Overlap at or above `iou_fg` makes the proposal foreground with that
    box's class and standard center/log-size regression deltas; anything
    else is background with no regression target.
    """
    pseudo = [(e.class_id, b) for e in sup.entries for b in e.boxes]
    r_total = len(boxes)
    labels = np.full(r_total, num_classes, dtype=np.int64)
    deltas = np.zeros((r_total, 4), dtype=np.float64)
    fg = np.zeros(r_total, dtype=bool)
    for r, prop in enumerate(boxes):
        best_iou = 0.0
        best = -1
        for k, (_, pb) in enumerate(pseudo):
            v = iou(prop, pb)
            if v > best_iou:
                best_iou = v
                best = k
        if best >= 0 and best_iou >= iou_fg:
            cls, pb = pseudo[best]
            labels[r] = cls
            deltas[r] = encode_box_deltas(prop, pb)
            fg[r] = True
    return SlvTargets(labels, deltas, fg, num_classes)


def smooth_l1(x: np.ndarray) -> np.ndarray:
    """Quadratic below unit error, linear above: 0.5 x^2 or |x| - 0.5."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(x < 1.0, 0.5 * x * x, x - 0.5)


def slv_loss(phi_s: np.ndarray, t_s: np.ndarray, targets: SlvTargets) -> float:
    """Multi-task refinement loss: cross-entropy averaged over all
    proposals plus smooth-L1 on the 4 regression deltas averaged over
    foreground proposals (regression targets do not exist for background)."""
    phi_s = np.asarray(phi_s, dtype=np.float64)
    t_s = np.asarray(t_s, dtype=np.float64)
    n_rows, r_total = phi_s.shape
    if n_rows != targets.num_classes + 1:
        raise ContractViolation(
            f"expected {targets.num_classes + 1} class rows, got {n_rows}"
        )
    if t_s.shape != (4 * n_rows, r_total):
        raise ContractViolation(f"regression output shape {t_s.shape} is inconsistent")
    if targets.labels.shape[0] != r_total:
        raise ContractViolation("targets do not match proposal count")
    probs = phi_s[targets.labels, np.arange(r_total)]
    cls_term = float(-np.log(np.clip(probs, PROB_FLOOR, None)).mean()) if r_total else 0.0
    fg = np.flatnonzero(targets.foreground)
    if fg.size == 0:
        return cls_term
    loc = 0.0
    for r in fg:
        c = int(targets.labels[r])
        pred = t_s[4 * c : 4 * c + 4, r]
        loc += float(smooth_l1(pred - targets.deltas[r]).sum())
    return cls_term + loc / fg.size


def sd_loss(merged_map: np.ndarray, pooled_features: np.ndarray) -> float:
    """Frobenius norm of the difference between the merged likelihood map
    and the channel-pooled feature map (both h x w)."""
    merged_map = np.asarray(merged_map, dtype=np.float64)
    pooled_features = np.asarray(pooled_features, dtype=np.float64)
    if merged_map.shape != pooled_features.shape:
        raise ContractViolation(
            f"map shapes differ: {merged_map.shape} vs {pooled_features.shape}"
        )
    return float(np.linalg.norm(merged_map - pooled_features))


def ws_weight(sched: Schedule) -> float:
    """Sigmoid ramp for the refinement loss: near 0 early, 0.5 at the
    halfway iteration, saturating toward 1."""
    z = (sched.current - sched.total / 2.0) / 1000.0
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def overall_loss(
    l_mil: float,
    refine_losses: Sequence[float],
    l_slv: float,
    l_sd: float,
    sched: Schedule,
) -> float:
    """Total training loss: image loss + refinement branch losses +
    schedule-weighted multi-task loss + distillation loss."""
    parts = [l_mil, *refine_losses, l_slv, l_sd]
    if not all(math.isfinite(p) and p >= 0 for p in parts):
        raise ContractViolation("component losses must be finite and non-negative")
    return l_mil + float(sum(refine_losses)) + ws_weight(sched) * l_slv + l_sd

"""Pseudo ground-truth extraction from likelihood maps.

Two extraction strategies: an adaptive ridge search that grows a box
outward from the map maximum (the production method), and the older
fixed-threshold baseline that takes bounding rectangles of connected
regions. Plus the per-image supervision builder that ties filtering,
accumulation, scaling, and search together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContractViolation
from .geometry import Box, ImageDims
from .likelihood import ScoredProposals, accumulate, scale_unit, search_threshold

_SCALE_SLACK = 1e-9


@dataclass(frozen=True)
class SearchParams:
    """Knobs for proposal filtering and the adaptive box search."""

    step: int = 5
    tolerance: float = 0.05
    score_threshold: float = 0.001

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ContractViolation(f"step must be >= 1, got {self.step}")
        if self.tolerance < 0:
            raise ContractViolation(f"tolerance must be >= 0, got {self.tolerance}")
        if not 0.0 <= self.score_threshold < 1.0:
            raise ContractViolation(
                f"score_threshold must be in [0, 1), got {self.score_threshold}"
            )


@dataclass
class SupervisionEntry:
    class_id: int
    boxes: list[Box]
    scores: list[float] | None = None


@dataclass
class Supervision:
    """Pseudo ground-truth boxes with class labels for one image."""

    image_id: str
    entries: list[SupervisionEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = [e.class_id for e in self.entries]
        if len(seen) != len(set(seen)):
            raise ContractViolation("duplicate class in supervision entries")

    def boxes_for(self, class_id: int) -> list[Box]:
        for e in self.entries:
            if e.class_id == class_id:
                return e.boxes
        return []


def filter_proposals(
    scores: np.ndarray,
    boxes: list[Box],
    score_threshold: float,
    class_id: int = 0,
) -> ScoredProposals:
    """Keep proposals scoring strictly above the threshold, in order."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(boxes),):
        raise ContractViolation(
            f"score row shape {scores.shape} does not match {len(boxes)} boxes"
        )
    keep = scores > score_threshold
    kept_boxes = [b for b, k in zip(boxes, keep) if k]
    return ScoredProposals(kept_boxes, scores[keep], class_id)


def _expand_ray(profile: np.ndarray, start: int, step: int, t_search: float, tol: float) -> int:
    """Walk from `start` in signed `step` increments while the profile value
    stays within [t_search, running_min + tol]; rays stop at the image border.

    Returns the last accepted index (the overshooting probe is rolled back).
    """
    n = profile.shape[0]
    p_min = 1.0
    last = start
    pos = start
    while 0 <= pos < n:
        v = profile[pos]
        if not (t_search <= v <= p_min + tol):
            break
        p_min = min(p_min, v)
        last = pos
        pos += step
    return last


def adaptive_search(m: np.ndarray, params: SearchParams) -> list[Box]:
    """Extract boxes by repeated peak-seeded ray expansion.

    `m` must be scaled to [0, 1] and is treated as a private working
    copy: found regions are zeroed in place. Each round seeds at the
    global maximum (row-major tie-break), expands left/up/right/down in
    steps of `params.step` while values stay within the acceptance band,
    emits the box, and zeroes it. Stops once the maximum no longer
    exceeds the mean of the initially positive elements.
    """
    if m.size == 0:
        return []
    if float(m.max()) > 1.0 + _SCALE_SLACK:
        raise ContractViolation("adaptive_search expects a map scaled to [0, 1]")
    t_search = search_threshold(m)
    h, w = m.shape
    boxes: list[Box] = []
    while True:
        flat = int(m.argmax())
        if not m.flat[flat] > t_search:
            break
        sy, sx = divmod(flat, w)
        row = m[sy, :]
        col = m[:, sx]
        x_l = _expand_ray(row, sx, -params.step, t_search, params.tolerance)
        x_r = _expand_ray(row, sx, params.step, t_search, params.tolerance)
        y_t = _expand_ray(col, sy, -params.step, t_search, params.tolerance)
        y_b = _expand_ray(col, sy, params.step, t_search, params.tolerance)
        m[y_t : y_b + 1, x_l : x_r + 1] = 0.0
        boxes.append(Box(float(x_l), float(y_t), float(x_r + 1), float(y_b + 1)))
        if len(boxes) > h * w:
            raise RuntimeError("adaptive_search failed to make progress")
    return boxes


def threshold_baseline(m: np.ndarray, tau: float) -> list[Box]:
    """Bounding rectangles of the connected regions above a fixed threshold.

    4-connectivity; components are returned in raster order of first
    occurrence. This is the method the adaptive search replaces: it merges
    adjacent objects bridged above `tau` and misses weak ones below it.
    """
    mask = m > tau
    labels, count = ndimage.label(mask)
    boxes: list[Box] = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        ys, xs = sl
        boxes.append(Box(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)))
    assert len(boxes) == count
    return boxes


def generate_supervision(
    boxes: list[Box],
    avg_scores: np.ndarray,
    label: np.ndarray,
    dims: ImageDims,
    params: SearchParams,
    image_id: str = "",
) -> Supervision:
    """Build the per-image supervision set.

    For each positive class: filter proposals by score, accumulate the
    survivors into a likelihood map, scale it, and run the adaptive
    search. Classes whose search comes back empty are still recorded,
    with an empty box list.
    """
    avg_scores = np.asarray(avg_scores, dtype=np.float64)
    label = np.asarray(label)
    if avg_scores.ndim != 2 or avg_scores.shape[0] != label.shape[0]:
        raise ContractViolation(
            f"avg_scores shape {avg_scores.shape} does not match {label.shape[0]} classes"
        )
    if avg_scores.shape[1] != len(boxes):
        raise ContractViolation(
            f"avg_scores shape {avg_scores.shape} does not match {len(boxes)} proposals"
        )
    entries: list[SupervisionEntry] = []
    for c in np.flatnonzero(label):
        kept = filter_proposals(avg_scores[c], boxes, params.score_threshold, int(c))
        if len(kept) == 0:
            entries.append(SupervisionEntry(int(c), []))
            continue
        scaled = scale_unit(accumulate(kept, dims))
        found = adaptive_search(scaled, params)
        entries.append(SupervisionEntry(int(c), found))
    return Supervision(image_id, entries)

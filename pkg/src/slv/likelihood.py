"""Spatial likelihood maps: accumulation, scaling, merging, resizing.

A likelihood map is an H x W float64 array of non-negative values. The
value at pixel (i, j) is the summed score of every proposal covering
that pixel, so the map encodes where an object of one class is likely
to sit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .geometry import Box, ImageDims, pixel_bounds

NO_SEARCH = math.inf


@dataclass
class ScoredProposals:
    """Proposals that survived score filtering for one class."""

    boxes: list[Box]
    scores: np.ndarray
    class_id: int = field(default=0)

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or len(self.boxes) != self.scores.shape[0]:
            raise ContractViolation(
                f"boxes/scores length mismatch: {len(self.boxes)} vs {self.scores.shape}"
            )

    def __len__(self) -> int:
        return len(self.boxes)


def accumulate(proposals: ScoredProposals, dims: ImageDims) -> np.ndarray:
    """Sum proposal scores into an H x W map.

    Fast path: a 2D difference array is scattered per box corner, then
    integrated by prefix sums along rows and then columns.
    """
    h, w = dims.height, dims.width
    diff = np.zeros((h + 1, w + 1), dtype=np.float64)
    n = len(proposals)
    if n:
        xs0 = np.empty(n, dtype=np.intp)
        ys0 = np.empty(n, dtype=np.intp)
        xs1 = np.empty(n, dtype=np.intp)
        ys1 = np.empty(n, dtype=np.intp)
        for k, b in enumerate(proposals.boxes):
            xs0[k], ys0[k], xs1[k], ys1[k] = pixel_bounds(b, dims)
        s = proposals.scores
        np.add.at(diff, (ys0, xs0), s)
        np.add.at(diff, (ys0, xs1), -s)
        np.add.at(diff, (ys1, xs0), -s)
        np.add.at(diff, (ys1, xs1), s)
    np.cumsum(diff, axis=1, out=diff)
    np.cumsum(diff, axis=0, out=diff)
    return diff[:h, :w]


def accumulate_naive(proposals: ScoredProposals, dims: ImageDims) -> np.ndarray:
    """Reference accumulation: one slice-add per box. Used by `slv bench`."""
    m = np.zeros((dims.height, dims.width), dtype=np.float64)
    for b, s in zip(proposals.boxes, proposals.scores):
        x0, y0, x1, y1 = pixel_bounds(b, dims)
        m[y0:y1, x0:x1] += s
    return m


def scale_unit(m: np.ndarray) -> np.ndarray:
    """Divide by the map maximum so values land in [0, 1].

    An identically-zero map is returned unchanged (a copy); the minimum
    of an accumulated map is 0 by construction, so dividing by the max
    is a full min-max scale.
    """
    peak = float(m.max()) if m.size else 0.0
    if peak <= 0.0:
        return m.copy()
    return m / peak


def search_threshold(m: np.ndarray) -> float:
    """Mean of the strictly positive map elements.

    Returns the NO_SEARCH sentinel (+inf) for an all-zero map: there is
    nothing to search.
    """
    positive = m[m > 0.0]
    if positive.size == 0:
        return NO_SEARCH
    return float(positive.mean())


def channel_average(f: np.ndarray) -> np.ndarray:
    """Collapse an h x w x d feature tensor to h x w by averaging channels."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] < 1:
        raise ContractViolation(f"expected h x w x d tensor, got shape {f.shape}")
    return f.mean(axis=2)


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix for exact area-average resampling."""
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    ratio = n_in / n_out
    for i in range(n_out):
        lo = i * ratio
        hi = (i + 1) * ratio
        j0 = int(math.floor(lo))
        j1 = min(int(math.ceil(hi)), n_in)
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / ratio
    return weights


def resize_area(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter (area-average) resample to out_h x out_w.

    Each output pixel is the mean of the source region it covers, with
    fractional edge pixels weighted by overlap; constants are preserved
    and so is total mean when the target dims divide the source dims.
    """
    if out_h < 1 or out_w < 1:
        raise ContractViolation(f"bad target dims {out_h}x{out_w}")
    h, w = m.shape
    if (out_h, out_w) == (h, w):
        return m.copy()
    rows = _axis_weights(h, out_h)
    cols = _axis_weights(w, out_w)
    return rows @ m @ cols.T


def merge_maps(
    maps: Sequence[np.ndarray], label: Sequence[int], out_hw: tuple[int, int]
) -> np.ndarray:
    """Average one map per positive class, then area-resample to out_hw."""
    y = np.asarray(label)
    n_pos = int(np.count_nonzero(y))
    if n_pos == 0:
        raise ContractViolation("merge_maps needs at least one positive class")
    if len(maps) != n_pos:
        raise ContractViolation(
            f"expected {n_pos} maps (one per positive class), got {len(maps)}"
        )
    shape = maps[0].shape
    for m in maps:
        if m.shape != shape:
            raise ContractViolation("maps passed to merge_maps differ in shape")
    merged = np.mean(np.stack(maps, axis=0), axis=0)
    return resize_area(merged, out_hw[0], out_hw[1])

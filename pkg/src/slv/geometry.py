"""Axis-aligned boxes and overlap arithmetic.

Coordinates are continuous, in the image frame: origin top-left, x grows
rightward, y grows downward. Pixel (i, j) of a raster map is the unit
square [j, j+1) x [i, i+1), so a box covers pixel (i, j) exactly when
x_min <= j < x_max and y_min <= i < y_max after rounding the box to the
integer grid (ties round half up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ContractViolation


class ImageDims(NamedTuple):
    width: int
    height: int


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ContractViolation(f"inverted box: {self}")

    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


def area(b: Box) -> float:
    return b.area()


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        inter = 0.0
    else:
        inter = iw * ih
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def clip(b: Box, dims: ImageDims) -> Box:
    """Clamp a box to [0, W] x [0, H]."""
    w, h = float(dims.width), float(dims.height)
    return Box(
        min(max(b.x_min, 0.0), w),
        min(max(b.y_min, 0.0), h),
        min(max(b.x_max, 0.0), w),
        min(max(b.y_max, 0.0), h),
    )


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def pixel_bounds(b: Box, dims: ImageDims) -> tuple[int, int, int, int]:
    """Integer pixel range (x0, y0, x1, y1) covered by a box.

    The box is rounded to the nearest integer grid (half up) and clamped
    to the image; covered pixels are x0 <= j < x1, y0 <= i < y1. The
    range may be empty (x0 == x1 or y0 == y1).
    """
    x0 = min(max(_round_half_up(b.x_min), 0), dims.width)
    x1 = min(max(_round_half_up(b.x_max), 0), dims.width)
    y0 = min(max(_round_half_up(b.y_min), 0), dims.height)
    y1 = min(max(_round_half_up(b.y_max), 0), dims.height)
    return x0, y0, max(x1, x0), max(y1, y0)

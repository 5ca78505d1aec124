from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

Point = Tuple[float, float]


@dataclass(frozen=True)
class BoundingBox:
    """Прямоугольник x, y, w, h в пикселях кадра (левый верхний угол, 0-based)."""

    x: float
    y: float
    w: float
    h: float

    @classmethod
    def from_center(cls, center: Point, w: float, h: float) -> "BoundingBox":
        cx, cy = center
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def center(self) -> Point:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h))

    def contains(self, x: float, y: float) -> bool:
        return self.x <= x < self.x + self.w and self.y <= y < self.y + self.h

    def intersects(self, width: int, height: int) -> bool:
        return (
            self.w > 0
            and self.h > 0
            and self.x < width
            and self.y < height
            and self.x + self.w > 0
            and self.y + self.h > 0
        )

    def rounded_dims(self) -> Tuple[int, int]:
        return int(math.floor(self.w + 0.5)), int(math.floor(self.h + 0.5))

    def scaled(self, factor: float) -> "BoundingBox":
        """Масштаб относительно центра."""
        return BoundingBox.from_center(self.center, self.w * factor, self.h * factor)

    def shifted_into(self, width: int, height: int) -> "BoundingBox":
        """Сдвигает рамку так, чтобы её центр лежал внутри кадра."""
        cx, cy = self.center
        cx = min(max(cx, 0.0), float(width - 1))
        cy = min(max(cy, 0.0), float(height - 1))
        return BoundingBox.from_center((cx, cy), self.w, self.h)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float


def round_half_up(v: float) -> int:
    # без банковского округления: 2.5 -> 3
    return int(math.floor(v + 0.5))


def dims_close(a: Tuple[int, int], b: Tuple[int, int], tol: int) -> bool:
    return abs(a[0] - b[0]) <= tol and abs(a[1] - b[1]) <= tol

"""
Примитивы изображений для всех моделей внешнего вида: буфер кадра,
перевод в оттенки серого, вырезка с билинейным ресемплингом и
изотропная гауссова маска весов.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError
from scipy.ndimage import map_coordinates

from utils import BoundingBox

logger = logging.getLogger(__name__)

# ---------- Константы ----------
LUMA = np.array([0.299, 0.587, 0.114])  # BT.601, порядок каналов R, G, B


class ImageError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Image:
    """Кадр: массив (height, width, channels) uint8, каналы R, G, B или один серый."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ImageError(f"expected (H, W, 1|3) samples, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageError(f"empty image {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self) -> np.ndarray:
        """Серый канал как (H, W)."""
        if self.channels != 1:
            raise ImageError("plane() needs a 1-channel image")
        return self.data[:, :, 0]


@dataclass(frozen=True, eq=False)
class WeightMask:
    weights: np.ndarray  # (height, width), сумма = 1

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def height(self) -> int:
        return self.weights.shape[0]


def load_image(path: str | Path) -> Image:
    path = Path(path)
    if not path.is_file():
        raise ImageError(f"image not found: {path}")
    try:
        with PILImage.open(path) as pil:
            rgb = pil.convert("RGB")
            return Image(np.asarray(rgb))
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"cannot decode image {path}: {exc}") from exc


def save_image(img: Image, path: str | Path) -> None:
    data = img.data if img.channels == 3 else img.data[:, :, 0]
    PILImage.fromarray(np.ascontiguousarray(data)).save(path, format="PNG")


def to_grayscale(img: Image) -> Image:
    if img.channels == 1:
        return img
    luma = img.data.astype(np.float64) @ LUMA
    # round half up, чтобы (255, 0, 0) -> 76
    gray = np.floor(luma + 0.5)
    return Image(np.clip(gray, 0, 255).astype(np.uint8))


def crop_resize(img: Image, box: BoundingBox, tw: int, th: int) -> Image:
    """Билинейная вырезка tw x th; за краем кадра повторяются крайние пиксели."""
    if tw <= 0 or th <= 0:
        raise ImageError(f"target size must be positive, got {tw}x{th}")
    if not box.intersects(img.width, img.height):
        raise ImageError(f"box {box} lies outside {img.width}x{img.height} frame")

    xs = box.x + (np.arange(tw) + 0.5) * (box.w / tw) - 0.5
    ys = box.y + (np.arange(th) + 0.5) * (box.h / th) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([yy.ravel(), xx.ravel()])

    out = np.empty((th, tw, img.channels), dtype=np.float64)
    for c in range(img.channels):
        plane = img.data[:, :, c].astype(np.float64)
        out[:, :, c] = map_coordinates(plane, coords, order=1, mode="nearest").reshape(th, tw)
    return Image(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def gaussian_weight_mask(w: int, h: int, sigma_frac: float = 0.5) -> WeightMask:
    if w < 1 or h < 1:
        raise ImageError(f"mask size must be >= 1, got {w}x{h}")
    if sigma_frac <= 0:
        raise ImageError(f"sigma_frac must be positive, got {sigma_frac}")
    sigma = sigma_frac * min(w, h)
    ys = np.arange(h) - (h - 1) / 2.0
    xs = np.arange(w) - (w - 1) / 2.0
    r2 = ys[:, None] ** 2 + xs[None, :] ** 2
    weights = np.exp(-r2 / (2.0 * sigma * sigma))
    weights /= weights.sum()
    weights.flags.writeable = False
    return WeightMask(weights)

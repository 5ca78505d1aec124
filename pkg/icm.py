"""
Isotropic Color Model: цветовая гистограмма по трём каналам RGB,
пиксели взвешены гауссовой маской с пиком в центре рамки.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from imaging import Image, WeightMask, crop_resize, gaussian_weight_mask
from utils import BoundingBox

# ---------- Константы ----------
DEFAULT_BINS = 16
PATCH = 32
PARTIAL_RHO = 0.125
MAX_DIST = math.sqrt(6.0)  # sqrt(2) на канал


class HistogramError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class IcmHistogram:
    bins_per_channel: int
    values: np.ndarray  # (3 * bins,), каналы подряд
    template_dims: Tuple[int, int]

    def channel(self, c: int) -> np.ndarray:
        b = self.bins_per_channel
        return self.values[c * b : (c + 1) * b]


def _per_channel_normalize(values: np.ndarray, bins: int) -> np.ndarray:
    v = values.reshape(3, bins)
    sums = v.sum(axis=1, keepdims=True)
    v = np.where(sums > 0, v / np.where(sums > 0, sums, 1.0), 1.0 / bins)
    return v.ravel()


def histogram_from_patch(patch: Image, bins: int, mask: WeightMask, template_dims: Tuple[int, int]) -> IcmHistogram:
    if patch.channels != 3:
        raise HistogramError("color model needs an RGB patch")
    if (mask.width, mask.height) != (patch.width, patch.height):
        raise HistogramError(
            f"mask {mask.width}x{mask.height} does not match patch {patch.width}x{patch.height}"
        )
    idx = patch.data.astype(np.int64) * bins // 256  # (H, W, 3)
    offsets = np.arange(3) * bins
    flat = (idx + offsets[None, None, :]).reshape(-1)
    wts = np.repeat(mask.weights.reshape(-1), 3)
    values = np.bincount(flat, weights=wts, minlength=3 * bins)
    return IcmHistogram(bins, _per_channel_normalize(values, bins), template_dims)


def build_icm(
    img: Image,
    box: BoundingBox,
    bins: int = DEFAULT_BINS,
    mask: Optional[WeightMask] = None,
    patch_size: int = PATCH,
) -> IcmHistogram:
    if box.w < 1 or box.h < 1:
        raise HistogramError(f"degenerate box {box}")
    mask = mask if mask is not None else gaussian_weight_mask(patch_size, patch_size, 0.5)
    patch = crop_resize(img, box, mask.width, mask.height)
    return histogram_from_patch(patch, bins, mask, box.rounded_dims())


def _check_bins(a: IcmHistogram, b: IcmHistogram) -> None:
    if a.bins_per_channel != b.bins_per_channel:
        raise HistogramError(f"bin count mismatch: {a.bins_per_channel} vs {b.bins_per_channel}")


def color_score(model: IcmHistogram, cand: IcmHistogram) -> float:
    _check_bins(model, cand)
    dist = float(np.sqrt(np.sum((model.values - cand.values) ** 2)))
    return min(max(1.0 - dist / MAX_DIST, 0.0), 1.0)


def update_icm(model: IcmHistogram, fresh: IcmHistogram, mode: str, rho: float = PARTIAL_RHO) -> IcmHistogram:
    _check_bins(model, fresh)
    if mode == "full":
        return fresh
    if mode != "partial":
        raise HistogramError(f"unknown update mode {mode!r}")
    blended = (1.0 - rho) * model.values + rho * fresh.values
    return IcmHistogram(
        model.bins_per_channel,
        _per_channel_normalize(blended, model.bins_per_channel),
        model.template_dims,
    )

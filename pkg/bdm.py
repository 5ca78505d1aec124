"""
Binary Descriptor Model: 16-битные коды LBSP на нормализованном патче,
сравнение по Хэммингу, частичное и полное обновление.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from imaging import Image

# ---------- Константы ----------
# 16 отсчётов в окрестности 5x5, бит i соответствует i-й паре (dy, dx)
LBSP_PATTERN = (
    (-2, -2), (-2, 0), (-2, 2),
    (-1, -1), (-1, 0), (-1, 1),
    (0, -2), (0, -1), (0, 1), (0, 2),
    (1, -1), (1, 0), (1, 1),
    (2, -2), (2, 0), (2, 2),
)
BITS = 16
DEFAULT_T = 30


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BdmGrid:
    width: int
    height: int
    codes: np.ndarray  # (height, width) uint16
    threshold: int
    partial_offset: int = 0


def compute_lbsp(gray_patch: Image, threshold: int = DEFAULT_T, size: int = 32) -> BdmGrid:
    """Бит = 1, если |отсчёт - центр| <= T; края дополняются повтором."""
    if gray_patch.channels != 1:
        raise GridError("LBSP needs a 1-channel patch")
    if (gray_patch.width, gray_patch.height) != (size, size):
        raise GridError(f"expected {size}x{size} patch, got {gray_patch.width}x{gray_patch.height}")
    if threshold <= 0:
        raise GridError(f"threshold must be positive, got {threshold}")

    plane = gray_patch.plane().astype(np.int32)
    h, w = plane.shape
    padded = np.pad(plane, 2, mode="edge")
    codes = np.zeros((h, w), dtype=np.uint16)
    for bit, (dy, dx) in enumerate(LBSP_PATTERN):
        sample = padded[2 + dy : 2 + dy + h, 2 + dx : 2 + dx + w]
        similar = np.abs(sample - plane) <= threshold
        codes |= similar.astype(np.uint16) << np.uint16(bit)
    return BdmGrid(w, h, codes, threshold)


def _check_dims(a: BdmGrid, b: BdmGrid) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise GridError(f"grid size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")


def differing_bits(a: BdmGrid, b: BdmGrid) -> int:
    _check_dims(a, b)
    xor = np.bitwise_xor(a.codes.astype(np.uint16), b.codes.astype(np.uint16))
    return int(np.unpackbits(xor.view(np.uint8)).sum())


def binary_score(model: BdmGrid, cand: BdmGrid) -> float:
    total = BITS * model.width * model.height
    return 1.0 - differing_bits(model, cand) / total


def update_bdm(model: BdmGrid, fresh: BdmGrid, mode: str, fraction: float = 0.1) -> BdmGrid:
    """Частичное обновление заменяет каждую round(1/fraction)-ю ячейку, смещаясь от вызова к вызову."""
    _check_dims(model, fresh)
    if mode == "full":
        return fresh
    if mode != "partial":
        raise GridError(f"unknown update mode {mode!r}")
    if not 0 < fraction <= 1:
        raise GridError(f"partial fraction must lie in (0, 1], got {fraction}")
    stride = max(int(round(1.0 / fraction)), 1)
    codes = model.codes.copy().reshape(-1)
    cells = np.arange(codes.size)
    pick = cells % stride == model.partial_offset % stride
    codes[pick] = fresh.codes.reshape(-1)[pick]
    return BdmGrid(
        model.width,
        model.height,
        codes.reshape(model.height, model.width),
        model.threshold,
        (model.partial_offset + 1) % stride,
    )

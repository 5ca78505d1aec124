"""
Graph Relational Model: долговременная память трекера: звезда из узлов
{FDL, дескриптор, вес}, привязанных к центру рамки. Голосование за центр
через карту откликов ядер, поиск пика и динамика весов узлов.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from keypoints import DESCRIPTOR_SIZE, Keypoint, Match, descriptor_matrix
from utils import BoundingBox, Point

logger = logging.getLogger(__name__)

# ---------- Константы ----------
MIN_WEIGHT = 0.5  # нижняя граница веса при построении


class NoCenterError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GraphNode:
    fdl: np.ndarray  # (dx, dy): позиция + fdl = центр, в опорном масштабе
    descriptor: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class GraphRelationalModel:
    """Узлы хранятся столбцами: fdl (N, 2), descriptors (N, D), weights (N,)."""

    fdl: np.ndarray
    descriptors: np.ndarray
    weights: np.ndarray

    @classmethod
    def empty(cls) -> "GraphRelationalModel":
        return cls(np.zeros((0, 2)), np.zeros((0, DESCRIPTOR_SIZE)), np.zeros(0))

    def __len__(self) -> int:
        return int(self.weights.size)

    def node(self, i: int) -> GraphNode:
        return GraphNode(self.fdl[i], self.descriptors[i], float(self.weights[i]))

    def subset(self, keep: np.ndarray) -> "GraphRelationalModel":
        return GraphRelationalModel(self.fdl[keep], self.descriptors[keep], self.weights[keep])

    def with_weights(self, weights: np.ndarray) -> "GraphRelationalModel":
        return GraphRelationalModel(self.fdl, self.descriptors, weights)


@dataclass(frozen=True, eq=False)
class KernelResponseMap:
    values: np.ndarray  # (height, width)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------- Построение ----------
def isotropic_weight(fdl, eta: float) -> float:
    return max(1.0 - eta * float(np.linalg.norm(fdl)), MIN_WEIGHT)


def _isotropic_weights(fdl: np.ndarray, eta: float) -> np.ndarray:
    return np.maximum(1.0 - eta * np.linalg.norm(fdl, axis=1), MIN_WEIGHT)


def _positions(kps: Sequence[Keypoint]) -> np.ndarray:
    return np.array([(kp.x, kp.y) for kp in kps], dtype=np.float64).reshape(-1, 2)


def build_grm(kps: Sequence[Keypoint], box: BoundingBox, eta: float = 0.005) -> GraphRelationalModel:
    if not kps:
        raise ValueError("cannot build a graph model from zero keypoints")
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    pos = _positions(kps)
    fdl = np.asarray(box.center, dtype=np.float64)[None, :] - pos
    return GraphRelationalModel(fdl, descriptor_matrix(kps), _isotropic_weights(fdl, eta))


def predict_center(node: GraphNode, matched_pos: Point, scale: float) -> Point:
    return (matched_pos[0] + scale * float(node.fdl[0]), matched_pos[1] + scale * float(node.fdl[1]))


def _predicted(matches: Sequence[Match], grm: GraphRelationalModel, scale: float) -> np.ndarray:
    idx = np.array([m.model_index for m in matches], dtype=np.int64)
    pos = np.array([(m.frame_keypoint.x, m.frame_keypoint.y) for m in matches], dtype=np.float64)
    return pos + scale * grm.fdl[idx]


# ---------- Карта откликов ----------
def gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    r = np.arange(-half, half + 1, dtype=np.float64)
    win = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma * sigma))
    return win / win.sum()


def accumulate_responses(
    matches: Sequence[Match],
    grm: GraphRelationalModel,
    prev_center: Point,
    scale: float,
    width: int,
    height: int,
    sigma: float = 6.0,
    window: int = 5,
    theta: float = 8000.0,
) -> KernelResponseMap:
    """Каждое совпадение ставит окно Гаусса в предсказанный центр, умноженное на Phi2 * w."""
    values = np.zeros((height, width), dtype=np.float64)
    if not matches:
        return KernelResponseMap(values)

    win = gaussian_window(window, sigma)
    half = window // 2
    centers = _predicted(matches, grm, scale)
    idx = np.array([m.model_index for m in matches], dtype=np.int64)
    phi2 = np.exp(-np.linalg.norm(centers - np.asarray(prev_center, dtype=np.float64), axis=1) / theta)
    amp = phi2 * grm.weights[idx]
    cells = np.floor(centers + 0.5).astype(np.int64)

    # порядок суммирования фиксирован: по ячейке, затем по амплитуде
    order = np.lexsort((amp, cells[:, 0], cells[:, 1]))
    for k in order:
        cx, cy = cells[k]
        if not (0 <= cx < width and 0 <= cy < height):
            continue
        x0, x1 = max(cx - half, 0), min(cx + half + 1, width)
        y0, y1 = max(cy - half, 0), min(cy + half + 1, height)
        values[y0:y1, x0:x1] += amp[k] * win[y0 - cy + half : y1 - cy + half, x0 - cx + half : x1 - cx + half]
    return KernelResponseMap(values)


def localize_center(response: KernelResponseMap, prev_center: Point) -> Point:
    values = response.values
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0.0:
        raise NoCenterError("kernel response map is empty")
    ys, xs = np.nonzero(values == peak)
    d2 = (xs - prev_center[0]) ** 2 + (ys - prev_center[1]) ** 2
    # ближе к прошлому центру, затем построчный порядок
    best = np.lexsort((xs, ys, d2))[0]
    return (float(xs[best]), float(ys[best]))


def supporting_votes(
    matches: Sequence[Match], grm: GraphRelationalModel, scale: float, center: Point, radius: float
) -> int:
    """Сколько совпадений предсказывают центр не дальше radius от найденного пика."""
    if not matches:
        return 0
    d = np.linalg.norm(_predicted(matches, grm, scale) - np.asarray(center, dtype=np.float64), axis=1)
    return int(np.count_nonzero(d <= radius))


# ---------- Динамика весов ----------
def theta_weight(l, eta: float):
    """Theta(l) = max(1 - eta*|l|, 0); скаляр или массив расстояний."""
    return np.maximum(1.0 - eta * np.abs(l), 0.0)


def update_weights(
    grm: GraphRelationalModel,
    matches: Sequence[Match],
    center: Point,
    scale: float,
    tau: float = 0.9,
    eta: float = 0.005,
    gamma: float = 0.1,
    unmatched_decay: Optional[float] = None,
    prune: bool = True,
) -> GraphRelationalModel:
    decay = tau if unmatched_decay is None else unmatched_decay
    weights = (1.0 - decay) * grm.weights
    if matches:
        idx = np.array([m.model_index for m in matches], dtype=np.int64)
        l = np.linalg.norm(_predicted(matches, grm, scale) - np.asarray(center, dtype=np.float64), axis=1)
        weights[idx] = (1.0 - tau) * grm.weights[idx] + tau * theta_weight(l, eta)
    weights = np.clip(weights, 0.0, 1.0)
    updated = grm.with_weights(weights)
    if not prune:
        return updated
    keep = weights >= gamma
    if not keep.all():
        logger.debug("removing %d of %d graph nodes below gamma", int((~keep).sum()), len(grm))
    return updated.subset(keep)


def add_keypoints(
    grm: GraphRelationalModel,
    kps: Sequence[Keypoint],
    box: BoundingBox,
    scale: float,
    eta: float = 0.005,
    max_nodes: int = 400,
) -> GraphRelationalModel:
    if not kps:
        return grm
    pos = _positions(kps)
    fdl = (np.asarray(box.center, dtype=np.float64)[None, :] - pos) / scale
    fdl_all = np.vstack([grm.fdl, fdl])
    desc_all = np.vstack([grm.descriptors, descriptor_matrix(kps)])
    w_all = np.concatenate([grm.weights, _isotropic_weights(fdl, eta)])

    if w_all.size > max_nodes:
        # вытесняем самые лёгкие; при равенстве более старые
        order = np.lexsort((np.arange(w_all.size), w_all))
        keep = np.sort(order[w_all.size - max_nodes :])
        fdl_all, desc_all, w_all = fdl_all[keep], desc_all[keep], w_all[keep]
    return GraphRelationalModel(fdl_all, desc_all, w_all)


def model_positions(grm: GraphRelationalModel, scale: float) -> np.ndarray:
    """Положения узлов относительно центра в текущем масштабе (для оценки масштаба)."""
    return -scale * grm.fdl

"""
Ключевые точки: DoG-детектор с дескриптором из гистограмм ориентаций
градиента (4x4 ячейки x 8 направлений = 128), сопоставление по тесту
отношения расстояний и оценка изменения масштаба по попарным расстояниям.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, maximum_filter, minimum_filter
from scipy.spatial.distance import cdist, pdist

from config import TrackerConfig
from imaging import Image

logger = logging.getLogger(__name__)

# ---------- Константы ----------
DESCRIPTOR_SIZE = 128
GRID_CELLS = 4  # 4x4 пространственных ячейки
ORI_BINS = 8
SAMPLES = 16  # 16x16 отсчётов, по 4x4 на ячейку
WINDOW_SIGMAS = 12.0  # ширина окна дескриптора в единицах sigma слоя
DESC_CLIP = 0.2
MIN_SIDE = 16


class KeypointError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Keypoint:
    x: float
    y: float
    scale: float
    descriptor: np.ndarray
    response: float = 0.0


@dataclass(frozen=True)
class Match:
    model_index: int
    frame_keypoint: Keypoint = field(compare=False)
    distance: float


# ---------- Детектор ----------
def _octave_count(h: int, w: int, cfg: TrackerConfig) -> int:
    return max(1, min(cfg.n_octaves, int(np.log2(min(h, w))) - 3))


def _build_octave(current: np.ndarray, sigmas: List[float], first: bool, sigma0: float) -> List[np.ndarray]:
    base = gaussian_filter(current, sigma0) if first else current
    gaussians = [base]
    for i in range(1, len(sigmas)):
        step = np.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
        gaussians.append(gaussian_filter(gaussians[-1], step))
    return gaussians


def _find_extrema(dogs: np.ndarray, cfg: TrackerConfig):
    """Экстремумы по 26 соседям с порогами контраста и краевого отклика."""
    mx = maximum_filter(dogs, size=3, mode="nearest")
    mn = minimum_filter(dogs, size=3, mode="nearest")
    cand = ((dogs == mx) | (dogs == mn)) & (np.abs(dogs) >= cfg.contrast_threshold)
    cand[0] = cand[-1] = False
    cand[:, :1, :] = cand[:, -1:, :] = False
    cand[:, :, :1] = cand[:, :, -1:] = False
    lv, ys, xs = np.nonzero(cand)
    if lv.size == 0:
        return lv, ys, xs, np.zeros(0), np.zeros(0)

    d = dogs
    c = d[lv, ys, xs]
    dxx = d[lv, ys, xs + 1] + d[lv, ys, xs - 1] - 2 * c
    dyy = d[lv, ys + 1, xs] + d[lv, ys - 1, xs] - 2 * c
    dxy = (d[lv, ys + 1, xs + 1] - d[lv, ys + 1, xs - 1] - d[lv, ys - 1, xs + 1] + d[lv, ys - 1, xs - 1]) / 4.0
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    r = cfg.edge_threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = (det > 0) & (tr * tr * r < (r + 1) ** 2 * det)
    lv, ys, xs, dxx, dyy = lv[keep], ys[keep], xs[keep], dxx[keep], dyy[keep]

    # параболическое уточнение по каждой оси
    gx = (d[lv, ys, xs + 1] - d[lv, ys, xs - 1]) / 2.0
    gy = (d[lv, ys + 1, xs] - d[lv, ys - 1, xs]) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ox = np.where(dxx != 0, -gx / dxx, 0.0)
        oy = np.where(dyy != 0, -gy / dyy, 0.0)
    return lv, ys, xs, np.clip(ox, -0.5, 0.5), np.clip(oy, -0.5, 0.5)


def _describe(gauss: np.ndarray, xs: np.ndarray, ys: np.ndarray, sigma: float) -> np.ndarray:
    """Дескрипторы для точек одного слоя; координаты в системе октавы."""
    k = xs.size
    step = WINDOW_SIGMAS * sigma / SAMPLES
    offs = (np.arange(SAMPLES + 2) - (SAMPLES + 1) / 2.0) * step
    gy_, gx_ = np.meshgrid(offs, offs, indexing="ij")
    sy = ys[:, None, None] + gy_[None]
    sx = xs[:, None, None] + gx_[None]
    grid = map_coordinates(gauss, [sy.ravel(), sx.ravel()], order=1, mode="nearest")
    grid = grid.reshape(k, SAMPLES + 2, SAMPLES + 2)

    gx = grid[:, 1:-1, 2:] - grid[:, 1:-1, :-2]
    gy = grid[:, 2:, 1:-1] - grid[:, :-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2 * np.pi)

    inner = offs[1:-1] / step
    wy, wx = np.meshgrid(inner, inner, indexing="ij")
    half = SAMPLES / 2.0
    mag = mag * np.exp(-(wx ** 2 + wy ** 2) / (2 * half * half))[None]

    binf = ang * (ORI_BINS / (2 * np.pi))
    b0 = np.floor(binf).astype(np.int64) % ORI_BINS
    frac = binf - np.floor(binf)
    b1 = (b0 + 1) % ORI_BINS

    rows = np.arange(SAMPLES) // (SAMPLES // GRID_CELLS)
    cell = (rows[:, None] * GRID_CELLS + rows[None, :])[None]
    base = np.arange(k)[:, None, None] * DESCRIPTOR_SIZE + cell * ORI_BINS
    idx = np.concatenate([(base + b0).ravel(), (base + b1).ravel()])
    wts = np.concatenate([(mag * (1 - frac)).ravel(), (mag * frac).ravel()])
    return np.bincount(idx, weights=wts, minlength=k * DESCRIPTOR_SIZE).reshape(k, DESCRIPTOR_SIZE)


def _normalize(desc: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    ok = norms[:, 0] > 1e-12
    desc = np.where(ok[:, None], desc / np.where(norms > 0, norms, 1.0), 0.0)
    desc = np.minimum(desc, DESC_CLIP)
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    return np.where(ok[:, None], desc / np.where(norms > 0, norms, 1.0), 0.0), ok


def detect_and_describe(gray: Image, cfg: TrackerConfig) -> List[Keypoint]:
    if gray.channels != 1:
        raise KeypointError("detector expects a 1-channel image")
    h, w = gray.height, gray.width
    if min(h, w) < MIN_SIDE:
        raise KeypointError(f"image too small for detection: {w}x{h}, need >= {MIN_SIDE}")

    layers = cfg.octave_layers
    kf = 2.0 ** (1.0 / layers)
    sigmas = [cfg.detector_sigma * kf ** i for i in range(layers + 3)]

    current = gray.plane().astype(np.float64) / 255.0
    pyramid = []
    found = []  # (octave, level, y, x, oy, ox, response)
    for octave in range(_octave_count(h, w, cfg)):
        if min(current.shape) < 3:
            break
        gaussians = _build_octave(current, sigmas, octave == 0, cfg.detector_sigma)
        dogs = np.stack([gaussians[i + 1] - gaussians[i] for i in range(len(gaussians) - 1)])
        lv, ys, xs, ox, oy = _find_extrema(dogs, cfg)
        pyramid.append(gaussians)
        resp = np.abs(dogs[lv, ys, xs])
        found.append(np.column_stack([np.full(lv.size, octave), lv, ys, xs, oy, ox, resp]))
        current = gaussians[layers][::2, ::2]

    table = np.concatenate(found) if found else np.zeros((0, 7))
    if table.shape[0] == 0:
        logger.debug("no extrema found in %dx%d frame", w, h)
        return []

    octv = table[:, 0].astype(int)
    factor = 2.0 ** octv
    fx = (table[:, 3] + table[:, 5]) * factor
    fy = (table[:, 2] + table[:, 4]) * factor
    fscale = np.array(sigmas)[table[:, 1].astype(int)] * factor

    # сила отклика по убыванию, затем y, x, масштаб: порядок детерминирован
    order = np.lexsort((fscale, fx, fy, -table[:, 6]))[: cfg.max_keypoints]
    table, fx, fy, fscale = table[order], fx[order], fy[order], fscale[order]

    descriptors = np.zeros((table.shape[0], DESCRIPTOR_SIZE))
    groups = table[:, 0].astype(int) * 100 + table[:, 1].astype(int)
    for g in np.unique(groups):
        sel = np.nonzero(groups == g)[0]
        octave, level = divmod(int(g), 100)
        descriptors[sel] = _describe(
            pyramid[octave][level],
            table[sel, 3] + table[sel, 5],
            table[sel, 2] + table[sel, 4],
            sigmas[level],
        )
    descriptors, ok = _normalize(descriptors)

    keypoints = [
        Keypoint(float(fx[i]), float(fy[i]), float(fscale[i]), descriptors[i], float(table[i, 6]))
        for i in range(table.shape[0])
        if ok[i]
    ]
    logger.debug("detected %d keypoints in %dx%d frame", len(keypoints), w, h)
    return keypoints


# ---------- Загрузка готовых точек ----------
def load_keypoints(path: str | Path, descriptor_size: int = DESCRIPTOR_SIZE) -> Dict[int, List[Keypoint]]:
    """CSV `frame,x,y,scale,d0..d127`; ключи словаря: номера кадров с 1."""
    path = Path(path)
    if not path.is_file():
        raise KeypointError(f"keypoint file not found: {path}")
    frames: Dict[int, List[Keypoint]] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "frame":
                continue
            if len(row) != 4 + descriptor_size:
                raise KeypointError(
                    f"{path}:{lineno}: expected {descriptor_size} descriptor values, got {len(row) - 4}"
                )
            try:
                frame = int(row[0])
                x, y, scale = (float(v) for v in row[1:4])
                desc = np.array([float(v) for v in row[4:]])
            except ValueError as exc:
                raise KeypointError(f"{path}:{lineno}: malformed row: {exc}") from exc
            norm = np.linalg.norm(desc)
            if frame < 1 or not np.isfinite(norm) or norm <= 0:
                raise KeypointError(f"{path}:{lineno}: bad frame number or zero descriptor")
            frames.setdefault(frame, []).append(Keypoint(x, y, scale, desc / norm))
    return frames


# ---------- Сопоставление ----------
def descriptor_matrix(kps: Sequence[Keypoint]) -> np.ndarray:
    if not kps:
        return np.zeros((0, DESCRIPTOR_SIZE))
    return np.stack([kp.descriptor for kp in kps])


def match_descriptors(
    frame_kps: Sequence[Keypoint], model_descs: np.ndarray, ratio: float = 0.75
) -> List[Match]:
    """Тест отношения + взаимно однозначное жадное разрешение по возрастанию расстояния."""
    if not 0 < ratio <= 1:
        raise KeypointError(f"ratio must lie in (0, 1], got {ratio}")
    model_descs = np.asarray(model_descs, dtype=np.float64)
    if len(frame_kps) == 0 or model_descs.size == 0:
        return []

    dist = cdist(model_descs, descriptor_matrix(frame_kps))
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(dist.shape[0])
    nearest = order[:, 0]
    d1 = dist[rows, nearest]
    # единственная точка в кадре: второго соседа нет, тест проходит
    d2 = dist[rows, order[:, 1]] if dist.shape[1] > 1 else np.full(d1.shape, np.inf)
    accepted = np.nonzero(d1 < ratio * d2)[0]

    used = set()
    matches = []
    for m in sorted(accepted, key=lambda i: (d1[i], i)):
        f = int(nearest[m])
        if f in used:
            continue
        used.add(f)
        matches.append(Match(int(m), frame_kps[f], float(d1[m])))
    matches.sort(key=lambda mt: mt.model_index)
    return matches


def estimate_scale(matches: Sequence[Match], model_positions: np.ndarray) -> float:
    """Медиана отношений попарных расстояний (текущие / опорные)."""
    if len(matches) < 2:
        return 1.0
    model_positions = np.asarray(model_positions, dtype=np.float64)
    ref = model_positions[[m.model_index for m in matches]]
    cur = np.array([(m.frame_keypoint.x, m.frame_keypoint.y) for m in matches])
    ref_d = pdist(ref)
    cur_d = pdist(cur)
    # совпавшие в одну точку пары масштаба не несут
    valid = (ref_d >= 1.0) & (cur_d >= 1.0)
    if not valid.any():
        return 1.0
    scale = float(np.median(cur_d[valid] / ref_d[valid]))
    return scale if np.isfinite(scale) and scale > 0 else 1.0

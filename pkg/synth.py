"""
Синтетические последовательности вместо видео OTB: текстурная цель на
текстурном фоне, сценарии сдвига, изменения масштаба, окклюзии и
отвлекающих объектов, плюс имитация внешнего детектора лиц.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.ndimage import gaussian_filter, map_coordinates

from imaging import Image, save_image
from utils import BoundingBox, Detection

logger = logging.getLogger(__name__)

# ---------- Константы ----------
TEXTURE_CELL = 8  # размер клетки текстуры цели, пиксели
OCCLUDER_COLOR = (128, 128, 128)
ATTRIBUTE_OF = {"translation": "FM", "scale_ramp": "SV", "occlusion": "OCC", "clutter": "BC"}


class ScenarioError(ValueError):
    pass


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["translation", "scale_ramp", "occlusion", "clutter"]
    frames: int = Field(100, ge=2)
    seed: int = 0
    width: int = Field(320, ge=32)
    height: int = Field(240, ge=32)
    target_size: int = Field(64, ge=16)
    start: Optional[Tuple[float, float]] = None  # левый верхний угол цели в кадре 1
    velocity: Tuple[float, float] = (0.0, 0.0)
    scale_start: float = Field(1.0, gt=0)
    scale_end: float = Field(1.0, gt=0)
    occlusion_start: int = Field(40, ge=1)
    occlusion_end: int = Field(60, ge=1)
    coverage: float = Field(1.0, gt=0, le=1)
    distractor_count: int = Field(0, ge=0)
    detections: bool = True
    det_noise: float = Field(1.0, ge=0)
    det_dropout: float = Field(0.0, ge=0, lt=1)
    det_score: float = Field(0.9, ge=0, le=1)
    false_positives: bool = False
    fp_score: float = Field(0.95, ge=0, le=1)

    @model_validator(mode="after")
    def _check(self) -> "Scenario":
        if self.kind == "occlusion" and not (self.occlusion_start <= self.occlusion_end <= self.frames):
            raise ValueError(
                f"occlusion window {self.occlusion_start}..{self.occlusion_end} must lie in 1..{self.frames}"
            )
        if self.kind == "clutter" and self.distractor_count < 1:
            raise ValueError("clutter scenario needs at least one distractor")
        if self.false_positives and self.distractor_count < 1:
            raise ValueError("false positives are placed on distractors; distractor_count must be >= 1")
        return self

    @classmethod
    def parse(cls, **values) -> "Scenario":
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ScenarioError(f"invalid scenario parameters: {exc}") from exc


@dataclass(frozen=True, eq=False)
class SynthSequence:
    scenario: Scenario
    frames: List[Image]
    ground_truth: List[BoundingBox]
    detections: Dict[int, List[Detection]] = field(default_factory=dict)
    distractors: List[BoundingBox] = field(default_factory=list)

    @property
    def attributes(self) -> Tuple[str, ...]:
        return (ATTRIBUTE_OF[self.scenario.kind],)


# ---------- текстуры ----------
def block_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Контрастная мозаика из клеток 8x8 со случайными цветами, (size, size, 3) float."""
    cells = -(-size // TEXTURE_CELL)
    colors = rng.integers(0, 256, size=(cells, cells, 3)).astype(np.float64)
    tex = np.repeat(np.repeat(colors, TEXTURE_CELL, axis=0), TEXTURE_CELL, axis=1)
    return tex[:size, :size]


def background_texture(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    noise = rng.normal(size=(height, width, 3))
    smooth = np.stack([gaussian_filter(noise[:, :, c], 6.0) for c in range(3)], axis=2)
    smooth = (smooth - smooth.min()) / max(np.ptp(smooth), 1e-9)
    return 70.0 + 80.0 * smooth


def _paste(canvas: np.ndarray, tex: np.ndarray, box: BoundingBox) -> None:
    """Вклеивает текстуру, растянутую в рамку box (билинейно, по центрам пикселей)."""
    h, w = canvas.shape[:2]
    x0, y0 = max(int(np.floor(box.x)), 0), max(int(np.floor(box.y)), 0)
    x1, y1 = min(int(np.ceil(box.x + box.w)), w), min(int(np.ceil(box.y + box.h)), h)
    if x1 <= x0 or y1 <= y0:
        return
    px = np.arange(x0, x1) + 0.5
    py = np.arange(y0, y1) + 0.5
    inside_x = (px >= box.x) & (px < box.x + box.w)
    inside_y = (py >= box.y) & (py < box.y + box.h)
    sx = tex.shape[1] / box.w
    sy = tex.shape[0] / box.h
    u = (px - box.x) * sx - 0.5
    v = (py - box.y) * sy - 0.5
    vv, uu = np.meshgrid(v, u, indexing="ij")
    region = canvas[y0:y1, x0:x1]
    sel = inside_y[:, None] & inside_x[None, :]
    for c in range(3):
        sampled = map_coordinates(tex[:, :, c], [vv.ravel(), uu.ravel()], order=1, mode="nearest")
        region[:, :, c] = np.where(sel, sampled.reshape(vv.shape), region[:, :, c])


# ---------- траектория ----------
def _ground_truth(sc: Scenario) -> List[BoundingBox]:
    size = float(sc.target_size)
    if sc.start is not None:
        x0, y0 = sc.start
    elif sc.kind == "translation":
        x0, y0 = 16.0, (sc.height - size) / 2.0
    else:
        x0, y0 = (sc.width - size) / 2.0, (sc.height - size) / 2.0
    cx0, cy0 = x0 + size / 2.0, y0 + size / 2.0

    boxes = []
    for t in range(sc.frames):
        frac = t / (sc.frames - 1)
        s = sc.scale_start + (sc.scale_end - sc.scale_start) * frac if sc.kind == "scale_ramp" else 1.0
        cx = cx0 + sc.velocity[0] * t
        cy = cy0 + sc.velocity[1] * t
        boxes.append(BoundingBox.from_center((cx, cy), size * s, size * s))
    for i, b in enumerate(boxes):
        if b.x < 0 or b.y < 0 or b.x + b.w > sc.width or b.y + b.h > sc.height:
            raise ScenarioError(f"target leaves the {sc.width}x{sc.height} frame at frame {i + 1}: {b}")
    return boxes


def _place_distractors(sc: Scenario, rng: np.random.Generator, gt: List[BoundingBox]) -> List[BoundingBox]:
    size = float(sc.target_size)
    margin = 8.0
    xs = [b.x for b in gt] + [b.x + b.w for b in gt]
    ys = [b.y for b in gt] + [b.y + b.h for b in gt]
    swept = BoundingBox(min(xs) - margin, min(ys) - margin, max(xs) - min(xs) + 2 * margin, max(ys) - min(ys) + 2 * margin)

    def overlaps(a: BoundingBox, b: BoundingBox) -> bool:
        return a.x < b.x + b.w and b.x < a.x + a.w and a.y < b.y + b.h and b.y < a.y + a.h

    placed: List[BoundingBox] = []
    for _ in range(2000):
        if len(placed) == sc.distractor_count:
            break
        x = float(rng.integers(0, sc.width - sc.target_size + 1))
        y = float(rng.integers(0, sc.height - sc.target_size + 1))
        cand = BoundingBox(x, y, size, size)
        if overlaps(cand, swept) or any(overlaps(cand, BoundingBox(p.x - margin, p.y - margin, p.w + 2 * margin, p.h + 2 * margin)) for p in placed):
            continue
        placed.append(cand)
    if len(placed) < sc.distractor_count:
        raise ScenarioError(f"cannot fit {sc.distractor_count} distractors beside the target path")
    return placed


def _occluded(sc: Scenario, frame_no: int) -> bool:
    return sc.kind == "occlusion" and sc.occlusion_start <= frame_no <= sc.occlusion_end


def _occluder(sc: Scenario, box: BoundingBox) -> BoundingBox:
    # слева направо на долю coverage; при полном перекрытии с запасом в 2 px
    pad = 2.0 if sc.coverage >= 1.0 else 0.0
    return BoundingBox(box.x - pad, box.y - pad, box.w * sc.coverage + 2 * pad, box.h + 2 * pad)


# ---------- генерация ----------
def synth_sequence(scenario: Scenario) -> SynthSequence:
    sc = scenario
    rng = np.random.default_rng(sc.seed)
    det_rng = np.random.default_rng([sc.seed, 1])

    gt = _ground_truth(sc)
    target = block_texture(rng, sc.target_size)
    background = background_texture(rng, sc.width, sc.height)
    distractors = _place_distractors(sc, rng, gt) if sc.distractor_count else []
    distractor_tex = [block_texture(rng, sc.target_size) for _ in distractors]

    frames: List[Image] = []
    detections: Dict[int, List[Detection]] = {}
    for t, box in enumerate(gt):
        frame_no = t + 1
        canvas = background.copy()
        for dbox, dtex in zip(distractors, distractor_tex):
            _paste(canvas, dtex, dbox)
        _paste(canvas, target, box)
        if _occluded(sc, frame_no):
            occ = _occluder(sc, box)
            x0, y0 = max(int(np.floor(occ.x)), 0), max(int(np.floor(occ.y)), 0)
            x1, y1 = min(int(np.ceil(occ.x + occ.w)), sc.width), min(int(np.ceil(occ.y + occ.h)), sc.height)
            canvas[y0:y1, x0:x1] = OCCLUDER_COLOR
        frames.append(Image(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)))

        if not sc.detections:
            continue
        dets: List[Detection] = []
        jitter = (det_rng.normal(0.0, sc.det_noise, size=4) if sc.det_noise > 0 else np.zeros(4)).tolist()
        dropped = det_rng.random() < sc.det_dropout
        if not dropped and not _occluded(sc, frame_no):
            dets.append(
                Detection(
                    BoundingBox(box.x + jitter[0], box.y + jitter[1], max(box.w + jitter[2], 1.0), max(box.h + jitter[3], 1.0)),
                    sc.det_score,
                )
            )
        if sc.false_positives:
            dets.append(Detection(distractors[0], sc.fp_score))
        if dets:
            detections[t] = sorted(dets, key=lambda d: -d.score)

    logger.info("synthesised %s scenario: %d frames, seed %d", sc.kind, sc.frames, sc.seed)
    return SynthSequence(sc, frames, gt, detections, distractors)


def write_sequence(seq: SynthSequence, out_dir: str | Path) -> Path:
    """Раскладка OTB: img/0001.png, groundtruth_rect.txt, detections.csv, attributes.txt."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        save_image(frame, img_dir / f"{i + 1:04d}.png")
    (out_dir / "groundtruth_rect.txt").write_text(
        "".join(",".join(repr(float(v)) for v in (b.x, b.y, b.w, b.h)) + "\n" for b in seq.ground_truth)
    )
    if seq.scenario.detections:
        with (out_dir / "detections.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "x", "y", "w", "h", "score"])
            for t in sorted(seq.detections):
                for d in seq.detections[t]:
                    values = (d.box.x, d.box.y, d.box.w, d.box.h, d.score)
                    writer.writerow([t + 1] + [repr(float(v)) for v in values])
    (out_dir / "attributes.txt").write_text(",".join(seq.attributes) + "\n")
    return out_dir

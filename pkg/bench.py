"""
Бенчмарк: чтение последовательностей в формате OTB и детекций,
метрики One-Pass Evaluation (precision / success), запись результатов,
кривых и оверлеев, прогон трекера по последовательности.
"""
from __future__ import annotations

import csv
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image as PILImage, ImageDraw

import tracker
from config import TrackerConfig
from fusion import CandidateOrigin, SimilarityScores
from imaging import Image, load_image
from keypoints import Keypoint
from tracker import TrackResult, TrackerInitError
from utils import BoundingBox, Detection

logger = logging.getLogger(__name__)

# ---------- Константы ----------
PRECISION_THRESHOLDS = np.arange(0, 51, 1, dtype=np.float64)  # пиксели
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PRECISION_AT = 20
FRAME_EXTS = (".png", ".jpg", ".jpeg")
GT_FILE = "groundtruth_rect.txt"
DETECTIONS_FILE = "detections.csv"
ATTRIBUTES_FILE = "attributes.txt"
RESULTS_HEADER = ["frame", "x", "y", "w", "h", "score", "occluded"]

_SPLIT_RX = re.compile(r"[,\t ]+")


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class LoadedSequence:
    name: str
    frame_paths: List[Path]
    ground_truth: List[BoundingBox]
    detections: Dict[int, List[Detection]] = field(default_factory=dict)
    attributes: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.frame_paths)


@dataclass(frozen=True, eq=False)
class EvalCurves:
    precision: np.ndarray
    success: np.ndarray
    precision_at_20: float
    success_auc: float


# ---------- чтение ----------
def _parse_box_line(line: str, where: str) -> BoundingBox:
    parts = [p for p in _SPLIT_RX.split(line.strip()) if p]
    if len(parts) != 4:
        raise SequenceError(f"{where}: expected 4 values x,y,w,h, got {len(parts)}")
    try:
        box = BoundingBox(*(float(p) for p in parts))
    except ValueError as exc:
        raise SequenceError(f"{where}: unparsable box: {exc}") from exc
    if not box.is_finite():
        raise SequenceError(f"{where}: non-finite box")
    return box


def load_ground_truth(path: str | Path) -> List[BoundingBox]:
    path = Path(path)
    if not path.is_file():
        raise SequenceError(f"ground truth not found: {path}")
    boxes = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        boxes.append(_parse_box_line(line, f"{path}:{lineno}"))
    return boxes


def _frame_number(p: Path) -> int:
    digits = re.findall(r"\d+", p.stem)
    if not digits:
        raise SequenceError(f"frame file without a number: {p}")
    return int(digits[-1])


def load_attributes(seq_dir: str | Path) -> Tuple[str, ...]:
    path = Path(seq_dir) / ATTRIBUTES_FILE
    if not path.is_file():
        return ()
    tags = (t.strip().upper() for t in _SPLIT_RX.split(path.read_text()))
    return tuple(t for t in tags if t)


def load_sequence(seq_dir: str | Path) -> LoadedSequence:
    seq_dir = Path(seq_dir)
    img_dir = seq_dir / "img"
    if not img_dir.is_dir():
        raise SequenceError(f"sequence has no img/ directory: {seq_dir}")
    frames = sorted((p for p in img_dir.iterdir() if p.suffix.lower() in FRAME_EXTS), key=_frame_number)
    if not frames:
        raise SequenceError(f"no PNG/JPEG frames in {img_dir}")
    gt = load_ground_truth(seq_dir / GT_FILE)
    if len(gt) != len(frames):
        raise SequenceError(f"{seq_dir}: {len(frames)} frames but {len(gt)} ground-truth boxes")

    det_path = seq_dir / DETECTIONS_FILE
    detections = load_detections(det_path) if det_path.is_file() else {}
    return LoadedSequence(seq_dir.name, frames, gt, detections, load_attributes(seq_dir))


def load_detections(path: str | Path) -> Dict[int, List[Detection]]:
    """CSV `frame,x,y,w,h,score` (кадры с 1) -> словарь с ключами от 0."""
    path = Path(path)
    if not path.is_file():
        raise SequenceError(f"detections not found: {path}")
    per_frame: Dict[int, List[Detection]] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "frame":
                continue
            where = f"{path}:{lineno}"
            if len(row) != 6:
                raise SequenceError(f"{where}: expected frame,x,y,w,h,score")
            try:
                frame = int(row[0])
                x, y, w, h, score = (float(v) for v in row[1:])
            except ValueError as exc:
                raise SequenceError(f"{where}: malformed detection row: {exc}") from exc
            if frame < 1:
                raise SequenceError(f"{where}: frame numbers start at 1")
            if w <= 0 or h <= 0:
                raise SequenceError(f"{where}: detection with non-positive size {w}x{h}")
            per_frame.setdefault(frame - 1, []).append(Detection(BoundingBox(x, y, w, h), score))
    for dets in per_frame.values():
        dets.sort(key=lambda d: -d.score)
    return per_frame


# ---------- метрики ----------
def iou(a: BoundingBox, b: BoundingBox) -> float:
    if a.area <= 0 or b.area <= 0:
        return 0.0
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(max(inter / (a.area + b.area - inter), 0.0), 1.0)


def center_error(a: BoundingBox, b: BoundingBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return float(np.hypot(ax - bx, ay - by))


def evaluate(results: Sequence[BoundingBox], gt: Sequence[BoundingBox]) -> EvalCurves:
    if len(results) != len(gt):
        raise SequenceError(f"{len(results)} result boxes but {len(gt)} ground-truth boxes")
    if not gt:
        raise SequenceError("nothing to evaluate")
    errors = np.array([center_error(r, g) for r, g in zip(results, gt)])
    overlaps = np.array([iou(r, g) for r, g in zip(results, gt)])
    precision = (errors[None, :] <= PRECISION_THRESHOLDS[:, None]).mean(axis=1)
    # ">= t", чтобы идеальное сопровождение давало 1 при t = 1
    success = (overlaps[None, :] >= SUCCESS_THRESHOLDS[:, None]).mean(axis=1)
    return EvalCurves(precision, success, float(precision[PRECISION_AT]), float(success.mean()))


def mean_curves(curves: Sequence[EvalCurves]) -> EvalCurves:
    precision = np.mean([c.precision for c in curves], axis=0)
    success = np.mean([c.success for c in curves], axis=0)
    return EvalCurves(precision, success, float(precision[PRECISION_AT]), float(success.mean()))


# ---------- запись ----------
def write_results(results: Sequence[TrackResult], path: str | Path) -> None:
    if not results:
        raise SequenceError("no results to write")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in results:
            b = r.box
            values = (b.x, b.y, b.w, b.h, r.fusion_score)
            writer.writerow([r.frame_index + 1] + [repr(float(v)) for v in values] + [int(r.occluded)])


def parse_results(path: str | Path) -> List[TrackResult]:
    path = Path(path)
    if not path.is_file():
        raise SequenceError(f"results not found: {path}")
    out = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0] == "frame"):
                continue
            if len(row) != len(RESULTS_HEADER):
                raise SequenceError(f"{path}:{lineno}: expected {len(RESULTS_HEADER)} columns")
            try:
                frame = int(row[0])
                x, y, w, h, score = (float(v) for v in row[1:6])
                occluded = bool(int(row[6]))
            except ValueError as exc:
                raise SequenceError(f"{path}:{lineno}: malformed result row: {exc}") from exc
            out.append(
                TrackResult(frame - 1, BoundingBox(x, y, w, h), score, occluded, 0, SimilarityScores(0.0, 0.0, 0.0))
            )
    return out


def write_curves(curves: EvalCurves, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve", "threshold", "value"])
        for t, v in zip(PRECISION_THRESHOLDS, curves.precision):
            writer.writerow(["precision", f"{t:g}", f"{v:.6f}"])
        for t, v in zip(SUCCESS_THRESHOLDS, curves.success):
            writer.writerow(["success", f"{t:.2f}", f"{v:.6f}"])


def _xyxy(b: BoundingBox) -> Tuple[float, float, float, float]:
    return (b.x, b.y, b.x + b.w - 1, b.y + b.h - 1)


def write_overlays(
    frames: Sequence[Image],
    results: Sequence[TrackResult],
    gt: Sequence[BoundingBox],
    out_dir: str | Path,
) -> List[Path]:
    """Кадры с рамками: результат красная, эталон зелёная."""
    if not results:
        raise SequenceError("no results to draw")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        pil = PILImage.fromarray(np.array(frame.data if frame.channels == 3 else np.repeat(frame.data, 3, axis=2)))
        draw = ImageDraw.Draw(pil)
        if i < len(gt):
            draw.rectangle(_xyxy(gt[i]), outline=(0, 255, 0), width=2)
        if i < len(results):
            draw.rectangle(_xyxy(results[i].box), outline=(255, 0, 0), width=2)
        path = out_dir / f"{i + 1:04d}.png"
        pil.save(path, format="PNG")
        paths.append(path)
    return paths


# ---------- прогон ----------
def initial_box(seq: LoadedSequence, init_mode: str) -> BoundingBox:
    if init_mode == "gt":
        return seq.ground_truth[0]
    if init_mode == "detections":
        first = seq.detections.get(0, [])
        if not first:
            raise TrackerInitError(f"{seq.name}: no detection in the first frame to initialise from")
        return first[0].box
    raise SequenceError(f"unknown init mode {init_mode!r}")


def run_sequence(
    seq: LoadedSequence,
    cfg: Optional[TrackerConfig] = None,
    init_mode: str = "gt",
    keypoints: Optional[Dict[int, List[Keypoint]]] = None,
    frames: Optional[Sequence[Image]] = None,
) -> Tuple[List[TrackResult], float]:
    """Один проход (OPE) от первого кадра; возвращает результаты по кадрам и fps."""
    cfg = cfg or TrackerConfig()
    box = initial_box(seq, init_mode)

    def frame_at(i: int) -> Image:
        return frames[i] if frames is not None else load_image(seq.frame_paths[i])

    def kps_at(i: int) -> Optional[List[Keypoint]]:
        return None if keypoints is None else keypoints.get(i + 1, [])

    started = time.perf_counter()
    state = tracker.init(frame_at(0), box, cfg, kps_at(0))
    results = [
        TrackResult(0, box, 0.0, False, 0, SimilarityScores(1.0, 1.0, 1.0), CandidateOrigin.GRM_GRID)
    ]
    for i in range(1, len(seq)):
        boxes = [d.box for d in seq.detections.get(i, [])]
        state, result = tracker.step(state, frame_at(i), boxes, cfg, kps_at(i))
        results.append(result)
    elapsed = time.perf_counter() - started
    fps = len(seq) / elapsed if elapsed > 0 else float("inf")
    logger.info("%s: tracked %d frames at %.1f fps", seq.name, len(seq), fps)
    return results, fps

"""
Кандидаты лица, три оценки сходства и взвешенное слияние оценок:
вес p достаётся оценке с наибольшей дисперсией между соседними кадрами.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

from bdm import BdmGrid, binary_score, compute_lbsp
from icm import IcmHistogram, build_icm, color_score
from imaging import Image, WeightMask, crop_resize
from keypoints import Match
from utils import BoundingBox, Point

logger = logging.getLogger(__name__)

SCORE_NAMES = ("k", "c", "b")  # фиксированный порядок при равенстве


class FusionError(ValueError):
    pass


class CandidateOrigin(str, Enum):
    GRM_GRID = "grm_grid"
    DETECTOR = "detector"


@dataclass(frozen=True)
class Candidate:
    box: BoundingBox
    origin: CandidateOrigin = CandidateOrigin.GRM_GRID


class SimilarityScores(NamedTuple):
    k: float
    c: float
    b: float


class FusionWeights(NamedTuple):
    p: float = 0.15
    q: float = 0.10
    r: float = 0.10


class WeightAssignment(NamedTuple):
    """Вес, приписанный каждой оценке."""

    k: float
    c: float
    b: float


@dataclass(frozen=True)
class ScoreHistory:
    previous: Optional[SimilarityScores] = None


# ---------- Кандидаты ----------
def generate_candidates(
    center: Point,
    box_dims: Tuple[float, float],
    scale: float,
    detector_boxes: Sequence[BoundingBox] = (),
    frame_size: Optional[Tuple[int, int]] = None,
    offset_frac: float = 0.15,
    grid: bool = True,
) -> List[Candidate]:
    """Сетка 3x3 вокруг центра (центральная первой) плюс рамки детектора."""
    w, h = scale * box_dims[0], scale * box_dims[1]
    if w <= 0 or h <= 0:
        raise FusionError(f"candidate dims must be positive, got {w}x{h}")
    s = offset_frac * min(w, h)
    steps = [(0.0, 0.0)]
    if grid:
        steps += [(dx, dy) for dy in (-s, 0.0, s) for dx in (-s, 0.0, s) if (dx, dy) != (0.0, 0.0)]

    candidates = [
        Candidate(BoundingBox.from_center((center[0] + dx, center[1] + dy), w, h)) for dx, dy in steps
    ]
    candidates += [Candidate(b, CandidateOrigin.DETECTOR) for b in detector_boxes if b.w > 0 and b.h > 0]

    if frame_size is not None:
        fw, fh = frame_size
        candidates = [
            c if c.box.intersects(fw, fh) else Candidate(c.box.shifted_into(fw, fh), c.origin) for c in candidates
        ]
    return candidates


# ---------- Оценки ----------
def keypoint_score(box: BoundingBox, matches: Sequence[Match], n_total: int) -> float:
    if n_total <= 0:
        return 0.0
    n = sum(1 for m in matches if box.contains(m.frame_keypoint.x, m.frame_keypoint.y))
    return n / n_total


def describe_candidate(
    box: BoundingBox,
    frame: Image,
    gray: Image,
    bins: int,
    mask: WeightMask,
    lbsp_T: int,
) -> Tuple[IcmHistogram, BdmGrid]:
    """Шаблоны ICM и BDM для рамки; ими же обновляется модель."""
    if box.w < 1 or box.h < 1:
        raise FusionError(f"degenerate candidate box {box}")
    icm = build_icm(frame, box, bins, mask, mask.width)
    patch = crop_resize(gray, box, mask.width, mask.height)
    return icm, compute_lbsp(patch, lbsp_T, mask.width)


def score_candidate(
    cand: Candidate,
    frame: Image,
    gray: Image,
    matches: Sequence[Match],
    n_total: int,
    icm_model: IcmHistogram,
    bdm_model: BdmGrid,
    mask: WeightMask,
) -> SimilarityScores:
    icm, bdm = describe_candidate(cand.box, frame, gray, icm_model.bins_per_channel, mask, bdm_model.threshold)
    return SimilarityScores(
        keypoint_score(cand.box, matches, n_total),
        color_score(icm_model, icm),
        binary_score(bdm_model, bdm),
    )


# ---------- Слияние ----------
def _two_frame_variance(a: float, b: float) -> float:
    return ((a - b) / 2.0) ** 2


def rank_weights(current: SimilarityScores, history: ScoreHistory, weights: FusionWeights) -> WeightAssignment:
    if history.previous is None:
        return WeightAssignment(weights.p, weights.q, weights.r)
    var = {
        name: _two_frame_variance(getattr(current, name), getattr(history.previous, name)) for name in SCORE_NAMES
    }
    # sorted устойчив: при равных дисперсиях остаётся порядок k, c, b
    ranked = sorted(SCORE_NAMES, key=lambda name: -var[name])
    given = dict(zip(ranked, (weights.p, weights.q, weights.r)))
    return WeightAssignment(given["k"], given["c"], given["b"])


def fusion_score(scores: SimilarityScores, assignment: WeightAssignment) -> float:
    return assignment.k * scores.k + assignment.c * scores.c + assignment.b * scores.b


def select_best(
    candidates: Sequence[Candidate],
    scores: Sequence[SimilarityScores],
    assignment: WeightAssignment,
) -> Tuple[Candidate, float, SimilarityScores]:
    if not candidates:
        raise FusionError("no candidates to select from")
    if len(candidates) != len(scores):
        raise FusionError(f"{len(candidates)} candidates but {len(scores)} score sets")
    best_i, best_fs = 0, fusion_score(scores[0], assignment)
    for i in range(1, len(candidates)):
        fs = fusion_score(scores[i], assignment)
        if fs > best_fs:
            best_i, best_fs = i, fs
    logger.debug("selected candidate %d (%s) with FS %.4f", best_i, candidates[best_i].origin.value, best_fs)
    return candidates[best_i], best_fs, scores[best_i]

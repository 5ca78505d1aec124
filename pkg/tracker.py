"""
Покадровый цикл трекера: сопоставление с GRM -> голосование -> пик ->
кандидаты -> слияние оценок -> выбор -> контроль и обновление моделей
(в том числе обнаружение окклюзии при N == 0).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

from bdm import BdmGrid, update_bdm
from config import TrackerConfig
from fusion import (
    Candidate,
    CandidateOrigin,
    FusionWeights,
    ScoreHistory,
    SimilarityScores,
    describe_candidate,
    fusion_score,
    generate_candidates,
    rank_weights,
    score_candidate,
    select_best,
)
from grm import (
    GraphRelationalModel,
    NoCenterError,
    accumulate_responses,
    add_keypoints,
    build_grm,
    localize_center,
    model_positions,
    supporting_votes,
    update_weights,
)
from icm import IcmHistogram, update_icm
from imaging import Image, WeightMask, gaussian_weight_mask, to_grayscale
from keypoints import Keypoint, Match, detect_and_describe, estimate_scale, match_descriptors
from utils import BoundingBox, Point, dims_close

logger = logging.getLogger(__name__)


class TrackerInitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TrackerState:
    box: BoundingBox
    prev_center: Point
    scale: float
    occluded: bool
    grm: GraphRelationalModel
    icm: IcmHistogram
    bdm: BdmGrid
    score_history: ScoreHistory
    frame_index: int
    init_dims: Tuple[float, float]
    mask: WeightMask


@dataclass(frozen=True)
class TrackResult:
    frame_index: int
    box: BoundingBox
    fusion_score: float
    occluded: bool
    n_matches: int
    scores: SimilarityScores
    origin: CandidateOrigin = CandidateOrigin.GRM_GRID


def _inside(kps: Sequence[Keypoint], box: BoundingBox) -> List[Keypoint]:
    return [kp for kp in kps if box.contains(kp.x, kp.y)]


# ---------- инициализация ----------
def init(
    frame: Image,
    init_box: BoundingBox,
    cfg: Optional[TrackerConfig] = None,
    keypoints: Optional[Sequence[Keypoint]] = None,
) -> TrackerState:
    cfg = cfg or TrackerConfig()
    if not init_box.is_finite() or not init_box.intersects(frame.width, frame.height):
        raise TrackerInitError(f"init box {init_box} does not lie in the {frame.width}x{frame.height} frame")

    gray = to_grayscale(frame)
    kps = detect_and_describe(gray, cfg) if keypoints is None else keypoints
    inside = _inside(kps, init_box)
    if not inside:
        raise TrackerInitError(f"no keypoints detected inside init box {init_box}")

    mask = gaussian_weight_mask(cfg.patch_size, cfg.patch_size, cfg.icm_sigma_frac)
    icm, bdm = describe_candidate(init_box, frame, gray, cfg.bins, mask, cfg.lbsp_T)
    grm = build_grm(inside, init_box, cfg.eta)
    logger.info("tracker initialised with %d graph nodes at %s", len(grm), init_box)
    return TrackerState(
        box=init_box,
        prev_center=init_box.center,
        scale=1.0,
        occluded=False,
        grm=grm,
        icm=icm,
        bdm=bdm,
        score_history=ScoreHistory(),
        frame_index=0,
        init_dims=(init_box.w, init_box.h),
        mask=mask,
    )


# ---------- шаг ----------
def _detector_pick(candidates: Sequence[Candidate]) -> Optional[int]:
    return next((i for i, c in enumerate(candidates) if c.origin is CandidateOrigin.DETECTOR), None)


def step(
    state: TrackerState,
    frame: Image,
    detections: Sequence[BoundingBox] = (),
    cfg: Optional[TrackerConfig] = None,
    keypoints: Optional[Sequence[Keypoint]] = None,
) -> Tuple[TrackerState, TrackResult]:
    cfg = cfg or TrackerConfig()
    gray = to_grayscale(frame)
    kps = detect_and_describe(gray, cfg) if keypoints is None else list(keypoints)
    frame_no = state.frame_index + 1

    grm = state.grm
    lost = len(grm) == 0
    matches = match_descriptors(kps, grm.descriptors, cfg.ratio) if not lost else []
    n = len(matches)

    scale = state.scale
    if n >= 2:
        scale *= estimate_scale(matches, model_positions(grm, scale))

    center = state.prev_center
    if n >= 1:
        response = accumulate_responses(
            matches, grm, state.prev_center, scale, frame.width, frame.height,
            cfg.sigma, cfg.window, cfg.theta_denom,
        )
        try:
            center = localize_center(response, state.prev_center)
            support = supporting_votes(matches, grm, scale, center, cfg.consensus_radius)
        except NoCenterError:
            logger.warning("frame %d: %d matches but every vote fell outside the frame", frame_no, n)
            support = 0
        if support < cfg.min_matches:
            # одиночные случайные совпадения не подтверждают цель
            logger.debug("frame %d: %d matches, %d agree on the peak; treated as no match", frame_no, n, support)
            matches, n, center, scale = [], 0, state.prev_center, state.scale

    if n == 0 and not state.occluded:
        logger.info("frame %d: no graph matches, occlusion detected", frame_no)
    if state.occluded and n > 0:
        logger.info("frame %d: graph matched again (%d matches)", frame_no, n)

    dets = [] if cfg.disable_detector else list(detections)
    if cfg.disable_candidates:
        det_boxes = []
    else:
        det_boxes = dets if cfg.use_all_detections else dets[:1]
    if n == 0 and not det_boxes:
        # ни совпадений, ни детекций: положение не меняем
        candidates = [Candidate(state.box)]
    else:
        candidates = generate_candidates(
            center,
            state.init_dims,
            scale,
            det_boxes,
            (frame.width, frame.height),
            cfg.candidate_offset_frac,
            grid=not cfg.disable_candidates,
        )

    scores = [
        score_candidate(c, frame, gray, matches, n, state.icm, state.bdm, state.mask) for c in candidates
    ]
    assignment = rank_weights(scores[0], state.score_history, FusionWeights(cfg.p, cfg.q, cfg.r))
    best, fs, best_scores = select_best(candidates, scores, assignment)

    if lost and cfg.reinit_from_detector and not cfg.disable_grm_add_delete:
        # граф пуст: сравнивать не с чем, верим детектору
        i = _detector_pick(candidates)
        if i is not None and best.origin is not CandidateOrigin.DETECTOR:
            best, best_scores = candidates[i], scores[i]
            fs = fusion_score(best_scores, assignment)

    scaled = replace(state, scale=scale)
    new_state = control_and_update(
        scaled, best, best_scores, matches, frame, cfg,
        gray=gray, keypoints=kps, grm_center=center,
    )
    result = TrackResult(
        frame_index=new_state.frame_index,
        box=new_state.box,
        fusion_score=max(fs, 0.0),
        occluded=n == 0,
        n_matches=n,
        scores=best_scores,
        origin=best.origin,
    )
    logger.debug(
        "frame %d: N=%d scale=%.3f box=%s FS=%.4f", result.frame_index, n, scale, result.box, result.fusion_score
    )
    return new_state, result


# ---------- контроль и обновление ----------
def control_and_update(
    state: TrackerState,
    best: Candidate,
    best_scores: SimilarityScores,
    matches: Sequence[Match],
    frame: Image,
    cfg: Optional[TrackerConfig] = None,
    *,
    gray: Optional[Image] = None,
    keypoints: Sequence[Keypoint] = (),
    grm_center: Optional[Point] = None,
) -> TrackerState:
    cfg = cfg or TrackerConfig()
    gray = gray if gray is not None else to_grayscale(frame)
    n = len(matches)
    grm_edit = not cfg.disable_grm_add_delete
    templates = not cfg.disable_template_updates

    # долгосрочное обновление весов (уравнения адаптации и theta)
    grm = state.grm
    if len(grm):
        grm = update_weights(
            grm,
            matches,
            grm_center if grm_center is not None else best.box.center,
            state.scale,
            cfg.tau,
            cfg.eta,
            cfg.gamma,
            cfg.unmatched_decay,
            prune=grm_edit,
        )

    icm, bdm = state.icm, state.bdm
    fresh = None
    if n == 0 and templates:
        fresh = describe_candidate(best.box, frame, gray, cfg.bins, state.mask, cfg.lbsp_T)
        if dims_close(icm.template_dims, best.box.rounded_dims(), cfg.dims_tolerance):
            icm, bdm = update_icm(icm, fresh[0], "full"), update_bdm(bdm, fresh[1], "full")
            logger.debug("occlusion: full template update")
        else:
            icm = update_icm(icm, fresh[0], "partial", cfg.rho_icm)
            bdm = update_bdm(bdm, fresh[1], "partial", cfg.rho_bdm)
            logger.debug("occlusion: partial template update")

    if best_scores.k > cfg.alpha and best_scores.b > cfg.beta:
        if grm_edit:
            grm = add_keypoints(grm, _inside(keypoints, best.box), best.box, state.scale, cfg.eta, cfg.max_nodes)
        if templates:
            fresh = fresh or describe_candidate(best.box, frame, gray, cfg.bins, state.mask, cfg.lbsp_T)
            icm, bdm = update_icm(icm, fresh[0], "full"), update_bdm(bdm, fresh[1], "full")

    if cfg.reinit_from_detector and grm_edit and len(grm) == 0 and best.origin is CandidateOrigin.DETECTOR:
        inside = _inside(keypoints, best.box)
        if inside:
            grm = add_keypoints(grm, inside, best.box, state.scale, cfg.eta, cfg.max_nodes)
            if templates:
                fresh = fresh or describe_candidate(best.box, frame, gray, cfg.bins, state.mask, cfg.lbsp_T)
                icm, bdm = update_icm(icm, fresh[0], "full"), update_bdm(bdm, fresh[1], "full")
            logger.info("graph model re-seeded from detector-confirmed box with %d nodes", len(grm))

    return replace(
        state,
        box=best.box,
        prev_center=best.box.center,
        occluded=n == 0,
        grm=grm,
        icm=icm,
        bdm=bdm,
        score_history=ScoreHistory(best_scores),
        frame_index=state.frame_index + 1,
    )


# cli.py  (запуск трекера, генерация сцен, оценка и абляция из командной строки)
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from bdm import GridError
from bench import (
    DETECTIONS_FILE,
    EvalCurves,
    SequenceError,
    evaluate,
    load_detections,
    load_ground_truth,
    load_sequence,
    mean_curves,
    parse_results,
    run_sequence,
    write_curves,
    write_overlays,
    write_results,
)
from build_report import ablation_table, build_report_structure, init_comparison_lines
from config import ConfigError, TrackerConfig, load_config
from fusion import FusionError
from grm import NoCenterError
from icm import HistogramError
from imaging import ImageError, load_image
from keypoints import KeypointError, load_keypoints
from synth import Scenario, ScenarioError, synth_sequence, write_sequence
from tracker import TrackerInitError

logger = logging.getLogger(__name__)

TRACKING_ERRORS = (
    ConfigError,
    ImageError,
    KeypointError,
    NoCenterError,
    HistogramError,
    GridError,
    FusionError,
    TrackerInitError,
    SequenceError,
    ScenarioError,
    OSError,
)

ABLATIONS = {
    "no-detector": "disable_detector",
    "no-candidates": "disable_candidates",
    "no-updates": "disable_template_updates",
    "no-grm-edit": "disable_grm_add_delete",
}


# ---------- манифест прогона ----------
class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sequences: List[Path]
    init_mode: Literal["gt", "detections", "both"] = "gt"
    detections: Optional[Path] = None
    config: Optional[Path] = None
    keypoints: Optional[Path] = None
    out_dir: Path
    jobs: int = 1
    overlays: bool = False

    @model_validator(mode="after")
    def _check(self) -> "RunManifest":
        if not self.sequences:
            raise ValueError("at least one sequence directory is required")
        if (self.detections is not None or self.keypoints is not None) and len(self.sequences) > 1:
            raise ValueError("--detections/--keypoints apply to a single sequence only")
        if self.init_mode in ("detections", "both") and self.detections is None:
            missing = [str(s) for s in self.sequences if not (s / DETECTIONS_FILE).is_file()]
            if missing:
                raise ValueError(f"init mode {self.init_mode!r} needs a detections path; none for {', '.join(missing)}")
        if self.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        return self


@dataclass(frozen=True)
class SequenceOutcome:
    name: str
    curves: EvalCurves
    fps: float
    attributes: Tuple[str, ...]


# ---------- рабочая функция (выполняется и в дочерних процессах) ----------
def _track_one(
    seq_dir: Path,
    cfg_values: Dict,
    init_mode: str,
    out_dir: Path,
    detections: Optional[Path] = None,
    keypoints: Optional[Path] = None,
    overlays: bool = False,
) -> SequenceOutcome:
    cfg = TrackerConfig(**cfg_values)
    seq = load_sequence(seq_dir)
    if detections is not None:
        seq = replace(seq, detections=load_detections(detections))
    kps = load_keypoints(keypoints) if keypoints is not None else None

    results, fps = run_sequence(seq, cfg, init_mode, kps)
    curves = evaluate([r.box for r in results], seq.ground_truth)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_results(results, out_dir / "results.csv")
    write_curves(curves, out_dir / "curves.csv")
    (out_dir / "summary.txt").write_text(
        f"precision@20: {curves.precision_at_20:.3f}\nsuccess AUC: {curves.success_auc:.3f}\nfps: {fps:.1f}\n"
    )
    if overlays:
        frames = [load_image(p) for p in seq.frame_paths]
        write_overlays(frames, results, seq.ground_truth, out_dir / "overlays")
    return SequenceOutcome(seq.name, curves, fps, seq.attributes)


def _track_all(
    seq_dirs: Sequence[Path],
    cfg: TrackerConfig,
    init_mode: str,
    out_dirs: Sequence[Path],
    jobs: int,
    detections: Optional[Path] = None,
    keypoints: Optional[Path] = None,
    overlays: bool = False,
) -> List[SequenceOutcome]:
    values = cfg.model_dump()
    args = [(s, values, init_mode, o, detections, keypoints, overlays) for s, o in zip(seq_dirs, out_dirs)]
    if jobs == 1 or len(args) == 1:
        return [_track_one(*a) for a in args]
    # один трекер на процесс, выходы разнесены по каталогам
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_track_one, *a) for a in args]
        return [f.result() for f in futures]


# ---------- команды ----------
def _run_mode(
    manifest: RunManifest, cfg: TrackerConfig, init_mode: str, out_root: Path
) -> Tuple[EvalCurves, List[str]]:
    single = len(manifest.sequences) == 1
    out_dirs = [out_root if single else out_root / s.name for s in manifest.sequences]
    outcomes = _track_all(
        manifest.sequences,
        cfg,
        init_mode,
        out_dirs,
        manifest.jobs,
        manifest.detections,
        manifest.keypoints,
        manifest.overlays,
    )

    per_seq = {o.name: o.curves for o in outcomes}
    lines = build_report_structure(
        per_seq, {o.name: o.fps for o in outcomes}, {o.name: o.attributes for o in outcomes}, init_mode
    )
    overall = mean_curves([o.curves for o in outcomes])
    out_root.mkdir(parents=True, exist_ok=True)
    if not single:
        write_curves(overall, out_root / "curves.csv")
        (out_root / "summary.txt").write_text("\n".join(lines) + "\n")
    logger.info("%s-init run finished: %d sequence(s), outputs in %s", init_mode, len(outcomes), out_root)
    return overall, lines


def cmd_run(manifest: RunManifest, overrides: Optional[Dict[str, bool]] = None) -> int:
    cfg = load_config(manifest.config, **(overrides or {}))
    if manifest.init_mode != "both":
        _, lines = _run_mode(manifest, cfg, manifest.init_mode, manifest.out_dir)
        print("\n".join(lines))
        return 0

    # оба способа инициализации, каждый в свой подкаталог
    gt_curves, gt_lines = _run_mode(manifest, cfg, "gt", manifest.out_dir / "gt")
    det_curves, det_lines = _run_mode(manifest, cfg, "detections", manifest.out_dir / "detections")
    lines = gt_lines + [""] + det_lines + [""] + init_comparison_lines(gt_curves, det_curves)
    (manifest.out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_synth(scenario: Scenario, out_dir: Path) -> int:
    seq = synth_sequence(scenario)
    write_sequence(seq, out_dir)
    logger.info("wrote %d frames to %s", len(seq.frames), out_dir)
    return 0


def cmd_eval(results_path: Path, gt_path: Path, curves_path: Optional[Path] = None) -> int:
    if gt_path.is_dir():
        gt_path = gt_path / "groundtruth_rect.txt"
    results = parse_results(results_path)
    gt = load_ground_truth(gt_path)
    curves = evaluate([r.box for r in results], gt)
    write_curves(curves, curves_path or results_path.with_name("curves.csv"))
    print(f"precision@20: {curves.precision_at_20:.3f}")
    print(f"success AUC: {curves.success_auc:.3f}")
    return 0


def cmd_ablate(
    seq_dir: Path,
    out_dir: Path,
    config: Optional[Path] = None,
    init_mode: str = "gt",
    jobs: int = 1,
) -> int:
    """Полная система и по одному отключённому компоненту на одной последовательности."""
    variants = ["full"] + list(ABLATIONS)
    outcomes = []
    base = load_config(config)
    cfgs = [base] + [base.model_copy(update={field: True}) for field in ABLATIONS.values()]
    if jobs == 1:
        for name, cfg in zip(variants, cfgs):
            outcomes += _track_all([seq_dir], cfg, init_mode, [out_dir / name], 1)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_track_one, seq_dir, cfg.model_dump(), init_mode, out_dir / name)
                for name, cfg in zip(variants, cfgs)
            ]
            outcomes = [f.result() for f in futures]

    lines = ablation_table([(name, o.curves) for name, o in zip(variants, outcomes)])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# ---------- разбор аргументов ----------
def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facetrack", description="Face tracker benchmark harness")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="track one or more OTB-layout sequences")
    run.add_argument("sequences", nargs="+", type=Path)
    run.add_argument("--init", dest="init_mode", choices=["gt", "detections", "both"], default="gt")
    run.add_argument("--detections", type=Path)
    run.add_argument("--keypoints", type=Path)
    run.add_argument("--config", type=Path)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--overlays", action="store_true")
    for flag in ABLATIONS:
        run.add_argument(f"--{flag}", action="store_true")

    synth = sub.add_parser("synth", help="generate a synthetic sequence")
    synth.add_argument("--kind", choices=["translation", "scale_ramp", "occlusion", "clutter"], required=True)
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--frames", type=int, default=100)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--width", type=int, default=320)
    synth.add_argument("--height", type=int, default=240)
    synth.add_argument("--target-size", type=int, default=64)
    synth.add_argument("--velocity", type=float, nargs=2, metavar=("VX", "VY"), default=(0.0, 0.0))
    synth.add_argument("--scale-start", type=float, default=1.0)
    synth.add_argument("--scale-end", type=float, default=1.0)
    synth.add_argument("--occlusion-start", type=int, default=40)
    synth.add_argument("--occlusion-end", type=int, default=60)
    synth.add_argument("--coverage", type=float, default=1.0)
    synth.add_argument("--distractors", type=int, default=0)
    synth.add_argument("--det-noise", type=float, default=1.0)
    synth.add_argument("--det-dropout", type=float, default=0.0)
    synth.add_argument("--false-positives", action="store_true")
    synth.add_argument("--no-detections", action="store_true")

    ev = sub.add_parser("eval", help="score a results CSV against ground truth")
    ev.add_argument("results", type=Path)
    ev.add_argument("ground_truth", type=Path)
    ev.add_argument("--curves", type=Path)

    ab = sub.add_parser("ablate", help="compare the full tracker with each component disabled")
    ab.add_argument("sequence", type=Path)
    ab.add_argument("--out", type=Path, required=True)
    ab.add_argument("--config", type=Path)
    ab.add_argument("--init", dest="init_mode", choices=["gt", "detections"], default="gt")
    ab.add_argument("--jobs", type=int, default=1)
    return parser


def _scenario(args: argparse.Namespace) -> Scenario:
    return Scenario.parse(
        kind=args.kind,
        frames=args.frames,
        seed=args.seed,
        width=args.width,
        height=args.height,
        target_size=args.target_size,
        velocity=tuple(args.velocity),
        scale_start=args.scale_start,
        scale_end=args.scale_end,
        occlusion_start=args.occlusion_start,
        occlusion_end=args.occlusion_end,
        coverage=args.coverage,
        distractor_count=args.distractors,
        detections=not args.no_detections,
        det_noise=args.det_noise,
        det_dropout=args.det_dropout,
        false_positives=args.false_positives,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    if args.command == "synth":
        try:
            scenario = _scenario(args)
        except ScenarioError as exc:
            parser.error(str(exc))

    try:
        if args.command == "run":
            try:
                manifest = RunManifest(
                    sequences=args.sequences,
                    init_mode=args.init_mode,
                    detections=args.detections,
                    config=args.config,
                    keypoints=args.keypoints,
                    out_dir=args.out,
                    jobs=args.jobs,
                    overlays=args.overlays,
                )
            except ValidationError as exc:
                raise SequenceError(f"invalid run arguments: {exc}") from exc
            overrides = {field: True for flag, field in ABLATIONS.items() if getattr(args, flag.replace("-", "_"))}
            return cmd_run(manifest, overrides)
        if args.command == "synth":
            return cmd_synth(scenario, args.out)
        if args.command == "eval":
            return cmd_eval(args.results, args.ground_truth, args.curves)
        return cmd_ablate(args.sequence, args.out, args.config, args.init_mode, args.jobs)
    except TRACKING_ERRORS as exc:
        logger.exception("%s failed", args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

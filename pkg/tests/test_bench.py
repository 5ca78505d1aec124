import csv

import numpy as np
import pytest
from PIL import Image as PILImage

from bench import (
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    SequenceError,
    center_error,
    evaluate,
    initial_box,
    iou,
    load_attributes,
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
from fusion import SimilarityScores
from imaging import Image
from tracker import TrackerInitError, TrackResult
from utils import BoundingBox


def _make_seq(root, n_frames, gt_lines):
    (root / "img").mkdir(parents=True)
    for i in range(n_frames):
        PILImage.fromarray(np.zeros((24, 32, 3), dtype=np.uint8)).save(root / "img" / f"{i + 1:04d}.png")
    (root / "groundtruth_rect.txt").write_text("".join(l + "\n" for l in gt_lines))
    return root


def _result(i, box, score=0.5, occluded=False):
    return TrackResult(i, box, score, occluded, 3, SimilarityScores(0.1, 0.2, 0.3))


# ---------- чтение ----------
def test_load_sequence(tmp_path):
    seq = load_sequence(_make_seq(tmp_path / "s", 3, ["10,20,30,40", "1\t2\t3\t4", "5 6 7 8"]))
    assert len(seq) == 3
    assert seq.ground_truth[0] == BoundingBox(10, 20, 30, 40)
    assert seq.ground_truth[1] == BoundingBox(1, 2, 3, 4)
    assert seq.detections == {}
    assert seq.attributes == ()


def test_frames_sorted_numerically(tmp_path):
    root = tmp_path / "s"
    (root / "img").mkdir(parents=True)
    for n in (10, 2, 1):
        PILImage.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(root / "img" / f"{n}.png")
    (root / "groundtruth_rect.txt").write_text("0,0,1,1\n" * 3)
    assert [p.name for p in load_sequence(root).frame_paths] == ["1.png", "2.png", "10.png"]


def test_count_mismatch(tmp_path):
    with pytest.raises(SequenceError, match="3 frames but 2"):
        load_sequence(_make_seq(tmp_path / "s", 3, ["0,0,1,1", "0,0,1,1"]))


def test_missing_sequence_dir(tmp_path):
    with pytest.raises(SequenceError):
        load_sequence(tmp_path / "nothing")


def test_bad_gt_line(tmp_path):
    path = tmp_path / "gt.txt"
    path.write_text("1,2,3\n")
    with pytest.raises(SequenceError, match="gt.txt:1"):
        load_ground_truth(path)


def test_attributes(tmp_path):
    (tmp_path / "attributes.txt").write_text("occ, sv\n")
    assert load_attributes(tmp_path) == ("OCC", "SV")


def test_empty_detections(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("")
    assert load_detections(path) == {}


def test_detections_sorted_by_score(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("frame,x,y,w,h,score\n2,0,0,5,5,0.5\n2,1,1,5,5,0.9\n")
    dets = load_detections(path)
    assert list(dets) == [1]
    assert [d.score for d in dets[1]] == [0.9, 0.5]


def test_negative_width_rejected(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0,0,-5,5,0.5\n")
    with pytest.raises(SequenceError):
        load_detections(path)


# ---------- метрики ----------
def test_iou_values():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3)
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert iou(a, BoundingBox(0, 0, 0, 10)) == 0.0


def test_center_error():
    assert center_error(BoundingBox(0, 0, 10, 10), BoundingBox(3, 4, 10, 10)) == pytest.approx(5.0)


def test_perfect_tracking():
    gt = [BoundingBox(i, 2 * i, 20, 30) for i in range(10)]
    curves = evaluate(gt, gt)
    assert curves.precision_at_20 == 1.0
    assert curves.success_auc == 1.0
    assert curves.precision.shape == PRECISION_THRESHOLDS.shape
    assert curves.success.shape == SUCCESS_THRESHOLDS.shape


def test_constant_center_error():
    gt = [BoundingBox(0, 0, 10, 10)] * 4
    res = [BoundingBox(25, 0, 10, 10)] * 4
    curves = evaluate(res, gt)
    assert curves.precision[20] == 0.0
    assert curves.precision[30] == 1.0


def test_half_success():
    gt = [BoundingBox(0, 0, 10, 10)] * 4
    res = [gt[0], gt[0], BoundingBox(50, 50, 10, 10), BoundingBox(50, 50, 10, 10)]
    assert evaluate(res, gt).success[10] == 0.5


def test_curves_monotone():
    rng = np.random.default_rng(3)
    gt = [BoundingBox(*rng.uniform(0, 50, 2), 20, 20) for _ in range(30)]
    res = [BoundingBox(b.x + rng.normal(0, 10), b.y + rng.normal(0, 10), 20, 20) for b in gt]
    curves = evaluate(res, gt)
    assert np.all(np.diff(curves.precision) >= 0)
    assert np.all(np.diff(curves.success) <= 0)


def test_evaluate_length_mismatch():
    with pytest.raises(SequenceError):
        evaluate([BoundingBox(0, 0, 1, 1)], [])


def test_mean_curves():
    gt = [BoundingBox(0, 0, 10, 10)] * 2
    perfect = evaluate(gt, gt)
    lost = evaluate([BoundingBox(90, 90, 10, 10)] * 2, gt)
    avg = mean_curves([perfect, lost])
    assert avg.precision_at_20 == 0.5


# ---------- запись ----------
def test_write_results_rows(tmp_path):
    path = tmp_path / "r.csv"
    write_results([_result(0, BoundingBox(1, 2, 3, 4)), _result(1, BoundingBox(1.5, 2, 3, 4), 0.25, True)], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["frame", "x", "y", "w", "h", "score", "occluded"]
    assert len(rows) == 3
    assert rows[2][0] == "2" and rows[2][-1] == "1"


def test_results_parse_back_exactly(tmp_path):
    path = tmp_path / "r.csv"
    written = [_result(0, BoundingBox(0.1, 1 / 3, 10.0, 7.25), 0.123456789), _result(1, BoundingBox(2, 3, 4, 5), 0.0, True)]
    write_results(written, path)
    parsed = parse_results(path)
    assert [(r.frame_index, r.box, r.fusion_score, r.occluded) for r in parsed] == [
        (r.frame_index, r.box, r.fusion_score, r.occluded) for r in written
    ]


def test_results_with_numpy_scalars_parse_back(tmp_path):
    path = tmp_path / "r.csv"
    box = BoundingBox(np.float64(1.25), np.float64(2.5), np.float64(10.0), np.float64(12.0))
    write_results([_result(0, box, np.float64(0.75))], path)
    assert "np." not in path.read_text()
    (parsed,) = parse_results(path)
    assert parsed.box == BoundingBox(1.25, 2.5, 10.0, 12.0)
    assert parsed.fusion_score == 0.75


def test_write_curves_rows(tmp_path):
    gt = [BoundingBox(0, 0, 10, 10)] * 3
    path = tmp_path / "c.csv"
    write_curves(evaluate(gt, gt), path)
    rows = list(csv.reader(path.open()))[1:]
    assert sum(r[0] == "precision" for r in rows) == 51
    assert sum(r[0] == "success" for r in rows) == 21


def test_overlays(tmp_path):
    frames = [Image(np.zeros((20, 30, 3), dtype=np.uint8))] * 2
    gt = [BoundingBox(2, 2, 10, 10)] * 2
    paths = write_overlays(frames, [_result(0, gt[0]), _result(1, BoundingBox(10, 5, 8, 8))], gt, tmp_path / "ov")
    assert len(paths) == 2
    drawn = np.asarray(PILImage.open(paths[1]))
    assert drawn[2, 2].tolist() == [0, 255, 0]
    assert drawn[5, 10].tolist() == [255, 0, 0]


# ---------- прогон ----------
def test_initial_box_from_detections_requires_first_frame(tmp_path):
    seq = load_sequence(_make_seq(tmp_path / "s", 2, ["0,0,4,4", "0,0,4,4"]))
    with pytest.raises(TrackerInitError):
        initial_box(seq, "detections")
    assert initial_box(seq, "gt") == BoundingBox(0, 0, 4, 4)


def test_run_sequence_on_synthetic(translation_dir):
    seq = load_sequence(translation_dir)
    results, fps = run_sequence(seq)
    assert len(results) == len(seq)
    assert results[0].box == seq.ground_truth[0]
    assert results[0].n_matches == 0
    assert fps > 0
    assert evaluate([r.box for r in results], seq.ground_truth).precision_at_20 == 1.0

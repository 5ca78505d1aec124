import shutil

import pytest

from bench import load_ground_truth, write_results
from cli import main
from fusion import SimilarityScores
from tracker import TrackResult


def test_run_writes_outputs(translation_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(translation_dir), "--out", str(out)]) == 0
    for name in ("results.csv", "curves.csv", "summary.txt"):
        assert (out / name).is_file()
    summary = (out / "summary.txt").read_text()
    assert "precision@20:" in summary and "success AUC:" in summary and "fps:" in summary
    assert "precision@20:" in capsys.readouterr().out


def test_run_missing_sequence(tmp_path):
    assert main(["run", str(tmp_path / "nope"), "--out", str(tmp_path / "out")]) == 1


def test_run_detection_init_without_first_detection(translation_dir, tmp_path, capsys):
    (translation_dir / "detections.csv").write_text("frame,x,y,w,h,score\n2,16,36,48,48,0.9\n")
    code = main(["run", str(translation_dir), "--init", "detections", "--out", str(tmp_path / "out")])
    assert code == 1
    assert "first frame" in capsys.readouterr().err


def test_run_detection_init_needs_detections(translation_dir, tmp_path):
    (translation_dir / "detections.csv").unlink()
    assert main(["run", str(translation_dir), "--init", "detections", "--out", str(tmp_path / "out")]) == 1


def test_run_both_init_modes_reports_drop(translation_dir, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(translation_dir), "--init", "both", "--out", str(out)]) == 0
    for mode in ("gt", "detections"):
        assert (out / mode / "results.csv").is_file()
        assert (out / mode / "curves.csv").is_file()
    summary = (out / "summary.txt").read_text()
    assert "init: gt" in summary and "init: detections" in summary
    assert "init drop: precision" in summary
    assert "init drop: precision" in capsys.readouterr().out


def test_run_both_init_modes_needs_detections(translation_dir, tmp_path):
    (translation_dir / "detections.csv").unlink()
    assert main(["run", str(translation_dir), "--init", "both", "--out", str(tmp_path / "out")]) == 1


def test_run_bad_config_key(translation_dir, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("not_a_field = 1\n")
    assert main(["run", str(translation_dir), "--config", str(conf), "--out", str(tmp_path / "out")]) == 1


def test_run_several_sequences_in_parallel(translation_dir, tmp_path):
    other = tmp_path / "second"
    shutil.copytree(translation_dir, other)
    out = tmp_path / "out"
    assert main(["run", str(translation_dir), str(other), "--jobs", "2", "--out", str(out)]) == 0
    assert (out / translation_dir.name / "results.csv").is_file()
    assert (out / "second" / "results.csv").is_file()
    assert "FM (fast motion)" in (out / "summary.txt").read_text()


def test_synth_then_load(tmp_path):
    out = tmp_path / "seq"
    assert main(["synth", "--kind", "translation", "--frames", "5", "--velocity", "2", "0", "--out", str(out)]) == 0
    assert len(load_ground_truth(out / "groundtruth_rect.txt")) == 5


def test_synth_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--kind", "clutter", "--distractors", "1", "--frames", "3", "--seed", "4", "--out", str(tmp_path / name)])
    for rel in ("img/0001.png", "img/0003.png", "groundtruth_rect.txt", "detections.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--kind", "spin", "--out", "x"],
        ["synth", "--kind", "translation", "--frames", "many", "--out", "x"],
        ["synth", "--kind", "occlusion", "--coverage", "2.0", "--out", "x"],
    ],
)
def test_synth_bad_flags_are_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def _gt_results(gt, path):
    write_results([TrackResult(i, b, 1.0, False, 0, SimilarityScores(1.0, 1.0, 1.0)) for i, b in enumerate(gt)], path)


def test_eval_perfect(translation_dir, tmp_path, capsys):
    gt = load_ground_truth(translation_dir / "groundtruth_rect.txt")
    results = tmp_path / "results.csv"
    _gt_results(gt, results)
    assert main(["eval", str(results), str(translation_dir)]) == 0
    out = capsys.readouterr().out
    assert "precision@20: 1.000" in out
    assert "success AUC: 1.000" in out
    rows = (tmp_path / "curves.csv").read_text().splitlines()[1:]
    assert sum(r.startswith("precision") for r in rows) == 51
    assert sum(r.startswith("success") for r in rows) == 21


def test_eval_length_mismatch(translation_dir, tmp_path):
    gt = load_ground_truth(translation_dir / "groundtruth_rect.txt")
    results = tmp_path / "results.csv"
    _gt_results(gt[:-1], results)
    assert main(["eval", str(results), str(translation_dir / "groundtruth_rect.txt")]) == 1


def test_ablate_table(translation_dir, tmp_path):
    out = tmp_path / "ablation"
    assert main(["ablate", str(translation_dir), "--out", str(out)]) == 0
    lines = (out / "ablation.txt").read_text().splitlines()
    assert [l.split()[0] for l in lines[1:]] == ["full", "no-detector", "no-candidates", "no-updates", "no-grm-edit"]
    assert (out / "no-detector" / "results.csv").is_file()

import pytest

from bench import evaluate
from build_report import (
    ablation_table,
    attribute_table,
    build_report_structure,
    init_comparison_lines,
    init_drop,
    summary_lines,
)
from utils import BoundingBox

GT = [BoundingBox(0, 0, 10, 10)] * 4
PERFECT = evaluate(GT, GT)
HALF = evaluate([GT[0], GT[0], BoundingBox(80, 80, 10, 10), BoundingBox(80, 80, 10, 10)], GT)


def test_summary_contains_overall_metrics():
    lines = summary_lines({"a": PERFECT, "b": HALF}, {"a": 10.0, "b": 20.0})
    assert "precision@20: 0.750" in lines
    assert f"success AUC: {(PERFECT.success_auc + HALF.success_auc) / 2:.3f}" in lines
    assert "fps: 15.0" in lines
    assert lines[1].startswith("a:")


def test_summary_empty():
    assert summary_lines({}, {}) == ["no sequences evaluated"]


def test_attribute_table_groups_sequences():
    lines = attribute_table({"a": PERFECT, "b": HALF}, {"a": ("OCC", "SV"), "b": ("OCC",)})
    assert lines[1].startswith("OCC (occlusion)  2  0.750")
    assert lines[2].startswith("SV (scale variation)  1  1.000")


def test_attribute_table_without_tags():
    assert attribute_table({"a": PERFECT}, {}) == []


def test_ablation_deltas():
    lines = ablation_table([("full", PERFECT), ("no-detector", HALF)])
    assert lines[1].endswith("+0.000  +0.000")
    assert lines[2].endswith(f"-0.500  {HALF.success_auc - 1.0:+.3f}")


def test_init_drop_percentages():
    drop = init_drop(PERFECT, HALF)
    assert drop["precision"] == pytest.approx(50.0)
    # при t = 0 непересекающиеся рамки тоже засчитываются
    assert drop["success"] == pytest.approx(100.0 * (1.0 - 11.0 / 21.0))


def test_init_comparison_lines():
    lines = init_comparison_lines(PERFECT, HALF)
    assert lines[1] == "gt  1.000  1.000"
    assert lines[2].startswith("detections  0.500")
    assert lines[-1].startswith("init drop: precision 50.0%  success ")


def test_report_structure_appends_attributes():
    lines = build_report_structure({"a": PERFECT}, {"a": 5.0}, {"a": ("BC",)})
    assert "" in lines
    assert any(l.startswith("BC (background clutter)") for l in lines)

import math

import numpy as np
import pytest

from icm import HistogramError, IcmHistogram, build_icm, color_score, histogram_from_patch, update_icm
from imaging import Image, gaussian_weight_mask
from utils import BoundingBox

from conftest import checkerboard


def _hist(per_channel):
    """Гистограмма с одинаковым распределением в каждом из трёх каналов."""
    v = np.asarray(per_channel, dtype=float)
    return IcmHistogram(v.size, np.tile(v, 3), (32, 32))


def test_uniform_gray_patch_fills_bin_8():
    patch = Image(np.full((32, 32, 3), 128, dtype=np.uint8))
    hist = histogram_from_patch(patch, 16, gaussian_weight_mask(32, 32), (32, 32))
    for c in range(3):
        ch = hist.channel(c)
        assert ch[8] == pytest.approx(1.0)
        assert ch.sum() == pytest.approx(1.0)


def test_channel_sums_are_one():
    img = Image(checkerboard(40, 30, seed=5))
    hist = build_icm(img, BoundingBox(2.5, 1.0, 33.0, 25.0))
    for c in range(3):
        assert hist.channel(c).sum() == pytest.approx(1.0)
    assert hist.template_dims == (33, 25)


def test_flip_invariance():
    data = checkerboard(32, 32, cell=4, seed=9)
    mask = gaussian_weight_mask(32, 32)
    a = histogram_from_patch(Image(data), 16, mask, (32, 32))
    b = histogram_from_patch(Image(data[:, ::-1]), 16, mask, (32, 32))
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_mask_size_mismatch():
    with pytest.raises(HistogramError):
        histogram_from_patch(Image(np.zeros((8, 8, 3), dtype=np.uint8)), 16, gaussian_weight_mask(4, 4), (8, 8))


def test_identical_histograms_score_one():
    h = _hist([0.25, 0.25, 0.5, 0.0])
    assert color_score(h, h) == pytest.approx(1.0)


def test_disjoint_histograms_score_zero():
    assert color_score(_hist([1.0, 0.0]), _hist([0.0, 1.0])) == pytest.approx(0.0, abs=1e-12)


def test_half_overlap_scores_half():
    score = color_score(_hist([0.5, 0.5, 0.0]), _hist([1.0, 0.0, 0.0]))
    assert score == pytest.approx(1.0 - math.sqrt(1.5) / math.sqrt(6.0))
    assert score == pytest.approx(0.5)


def test_bin_count_mismatch():
    with pytest.raises(HistogramError):
        color_score(_hist([1.0, 0.0]), _hist([1.0, 0.0, 0.0]))


def test_full_update_replaces():
    fresh = IcmHistogram(2, np.tile([0.0, 1.0], 3), (40, 40))
    assert update_icm(_hist([1.0, 0.0]), fresh, "full") is fresh


def test_partial_update_fixed_point():
    model = _hist([0.3, 0.7])
    out = update_icm(model, _hist([0.3, 0.7]), "partial")
    np.testing.assert_allclose(out.values, model.values)


def test_partial_update_blend():
    model = IcmHistogram(3, np.tile([1.0, 0.0, 0.0], 3), (20, 20))
    fresh = IcmHistogram(3, np.tile([0.0, 1.0, 0.0], 3), (30, 30))
    out = update_icm(model, fresh, "partial")
    np.testing.assert_allclose(out.channel(1), [0.875, 0.125, 0.0])
    assert out.template_dims == (20, 20)


def test_unknown_mode():
    with pytest.raises(HistogramError):
        update_icm(_hist([1.0]), _hist([1.0]), "sideways")

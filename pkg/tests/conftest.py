import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from imaging import Image  # noqa: E402
from synth import Scenario, synth_sequence, write_sequence  # noqa: E402
from utils import BoundingBox  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long end-to-end tracking scenarios")


def checkerboard(width: int, height: int, cell: int = 8, seed: int = 0) -> np.ndarray:
    """Случайная цветная мозаика (height, width, 3) uint8."""
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, 256, size=(-(-height // cell), -(-width // cell), 3))
    tex = np.repeat(np.repeat(cells, cell, axis=0), cell, axis=1)
    return tex[:height, :width].astype(np.uint8)


@pytest.fixture
def textured_scene():
    """Кадр 160x120: серый фон и текстурная цель 48x48 в рамке (56, 36, 48, 48)."""
    data = np.full((120, 160, 3), 100, dtype=np.uint8)
    box = BoundingBox(56.0, 36.0, 48.0, 48.0)
    data[36:84, 56:104] = checkerboard(48, 48, seed=3)
    return Image(data), box


@pytest.fixture
def translation_dir(tmp_path):
    seq = synth_sequence(Scenario(kind="translation", frames=6, velocity=(2.0, 0.0), width=160, height=120, target_size=48))
    return write_sequence(seq, tmp_path / "translation")

# tests/conftest.py
from __future__ import annotations

import numpy as np
import pytest

from mesh import build_level_mesh, build_rect_mesh
from problems import PAPER_BBOX, UNIT_BBOX


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def paper_mesh():
    """The 32-triangle level-1 mesh of [-1,1]^2."""
    return build_rect_mesh(PAPER_BBOX, 4)


@pytest.fixture
def unit_mesh():
    return build_rect_mesh(UNIT_BBOX, 4)


@pytest.fixture
def paper_level():
    def _make(level: int, diagonal: str = "sw_ne"):
        return build_level_mesh(PAPER_BBOX, 4, level, diagonal=diagonal)

    return _make

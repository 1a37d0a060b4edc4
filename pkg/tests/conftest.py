"""Shared fixtures."""

from typing import Callable, Optional

import numpy as np
import pytest

from vacufix.core.candidates import Stage, StageSet


def _make_points(
    positions: np.ndarray,
    normals: Optional[np.ndarray] = None,
    stage: Stage = Stage.P4,
) -> StageSet:
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    if normals is None:
        normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    return StageSet(
        stage=stage,
        positions=positions,
        normals=np.asarray(normals, dtype=np.float64).reshape(-1, 3),
        ray_cells=np.column_stack([np.arange(n), np.zeros(n, dtype=np.int64)]),
        hit_ranks=np.zeros(n, dtype=np.int64),
        point_ids=np.arange(n),
    )


@pytest.fixture
def make_points() -> Callable[..., StageSet]:
    """Factory building a StageSet from explicit positions (normals default to +Z)."""
    return _make_points

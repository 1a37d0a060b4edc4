"""Planar (XY) nearest-neighbour and radius search."""

from typing import List, Sequence

import numpy as np
from scipy.spatial import cKDTree

from vacufix.core.errors import EmptyPointSetError

_SLACK = 1e-9


class PlanarPointIndex:
    """kd-tree over the (x, y) coordinates of a point set.

    Queries widen the tree search slightly and then filter with the exact
    squared distance, so results agree with a linear scan.
    """

    def __init__(self, points: np.ndarray):
        """
        Build the index.

        Args:
            points: (n, 2) or (n, 3) coordinates; only x and y are used

        Raises:
            EmptyPointSetError: If ``points`` is empty
        """
        xy = np.asarray(points, dtype=np.float64)
        if xy.size == 0:
            raise EmptyPointSetError("Cannot index an empty point set")
        self.xy = np.ascontiguousarray(xy.reshape(len(xy), -1)[:, :2])
        self._tree = cKDTree(self.xy)

    def __len__(self) -> int:
        return int(len(self.xy))

    def radius(self, center: Sequence[float], radius: float) -> np.ndarray:
        """Sorted indices of points with planar distance <= ``radius``."""
        if not radius > 0:
            raise ValueError(f"radius must be > 0, got {radius}")
        c = np.asarray(center, dtype=np.float64)[:2]
        candidates = np.asarray(
            self._tree.query_ball_point(c, radius * (1 + _SLACK)), dtype=np.int64
        )
        return self._exact(c, candidates, radius)

    def radius_many(self, centers: np.ndarray, radius: float) -> List[np.ndarray]:
        """Radius query for every row of ``centers``."""
        if not radius > 0:
            raise ValueError(f"radius must be > 0, got {radius}")
        c = np.asarray(centers, dtype=np.float64).reshape(len(centers), -1)[:, :2]
        batches = self._tree.query_ball_point(c, radius * (1 + _SLACK))
        return [self._exact(ci, np.asarray(b, dtype=np.int64), radius) for ci, b in zip(c, batches)]

    def knn(self, center: Sequence[float], k: int) -> np.ndarray:
        """
        The ``k`` nearest points (all of them if fewer), nearest first.

        Equal distances are ordered by index.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        c = np.asarray(center, dtype=np.float64)[:2]
        k = min(int(k), len(self))
        distances, _ = self._tree.query(c, k=k)
        kth = float(np.max(distances))
        candidates = np.asarray(
            self._tree.query_ball_point(c, kth * (1 + _SLACK) + _SLACK), dtype=np.int64
        )
        d2 = ((self.xy[candidates] - c) ** 2).sum(axis=1)
        order = np.lexsort((candidates, d2))
        return candidates[order[:k]]

    def _exact(self, c: np.ndarray, candidates: np.ndarray, radius: float) -> np.ndarray:
        if not candidates.size:
            return candidates
        d2 = ((self.xy[candidates] - c) ** 2).sum(axis=1)
        return np.sort(candidates[d2 <= radius * radius])


def build_point_index(points: np.ndarray) -> PlanarPointIndex:
    """Build a PlanarPointIndex over ``points``."""
    return PlanarPointIndex(points)


def radius_query(index: PlanarPointIndex, center: Sequence[float], radius: float) -> np.ndarray:
    """All indexed points within planar distance ``radius`` of ``center``, sorted."""
    return index.radius(center, radius)


def knn_query(index: PlanarPointIndex, center: Sequence[float], k: int) -> np.ndarray:
    """The ``k`` planar nearest neighbours of ``center``."""
    return index.knn(center, k)

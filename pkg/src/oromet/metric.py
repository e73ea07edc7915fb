"""Finite metric datasets with a height function.

A :class:`MetricDataset` is an ordered, immutable collection of
:class:`PointRecord` objects plus a way to measure distances between them:
either an explicit symmetric matrix or great-circle distances on the points'
coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidDatasetError, ValidationError

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class PointRecord:
    id: str
    name: str
    height: float
    coordinates: Optional[tuple[float, float]] = None
    label: Optional[int] = None

    def __post_init__(self):
        if not (self.height >= 0 and math.isfinite(self.height)):
            raise ValidationError(f"point {self.id!r}: height must be finite and >= 0, got {self.height!r}")
        if self.coordinates is not None:
            _check_coordinates(self.coordinates)
        if self.label not in (None, 0, 1):
            raise ValidationError(f"point {self.id!r}: label must be 0, 1 or None, got {self.label!r}")


def _check_coordinates(c):
    lat, lon = c
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise ValidationError(f"coordinates out of range: lat={lat!r}, lon={lon!r}")


def geodesic_distance(a, b) -> float:
    """Great-circle distance in kilometres between two ``(lat, lon)`` pairs (haversine)."""
    _check_coordinates(a)
    _check_coordinates(b)
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    s = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, s)))


def haversine_matrix(lat, lon) -> np.ndarray:
    """All pairwise great-circle distances in km; exactly symmetric with zero diagonal."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    cos_lat = np.cos(lat)
    s = np.sin(dlat / 2) ** 2 + np.outer(cos_lat, cos_lat) * np.sin(dlon / 2) ** 2
    d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(s, 1.0)))
    # mirror the upper triangle so symmetry does not depend on libm details
    d = np.triu(d, 1)
    return d + d.T


class MetricDataset:
    """Immutable finite metric space whose points carry a height.

    Use :meth:`from_matrix` for an explicit distance matrix or :meth:`geodesic`
    for points with coordinates.
    """

    def __init__(self, points: Sequence[PointRecord], matrix=None, *, validate=False):
        points = tuple(points)
        if len(points) < 2:
            raise InvalidDatasetError(f"a dataset needs at least 2 points, got {len(points)}")
        seen = set()
        for p in points:
            if p.id in seen:
                raise InvalidDatasetError(f"duplicate point id {p.id!r}")
            seen.add(p.id)
        self.points = points
        self.heights = np.array([p.height for p in points], dtype=float)
        self.heights.flags.writeable = False
        if matrix is None:
            missing = [p.id for p in points if p.coordinates is None]
            if missing:
                raise InvalidDatasetError(f"geodesic dataset has points without coordinates: {missing[:5]}")
            self._matrix = None
        else:
            m = np.array(matrix, dtype=float)
            _check_matrix(m, len(points))
            if validate:
                _check_triangle(m)
            m.flags.writeable = False
            self._matrix = m

    @classmethod
    def from_matrix(cls, heights, matrix, *, ids=None, labels=None, validate=False) -> "MetricDataset":
        n = len(heights)
        ids = ids if ids is not None else [str(i) for i in range(n)]
        labels = labels if labels is not None else [None] * n
        points = [PointRecord(str(i), str(i), float(h), None, lab) for i, h, lab in zip(ids, heights, labels)]
        return cls(points, matrix, validate=validate)

    @classmethod
    def geodesic(cls, points: Sequence[PointRecord]) -> "MetricDataset":
        return cls(points, None)

    @property
    def is_geodesic(self) -> bool:
        return self._matrix is None

    def __len__(self):
        return len(self.points)

    @property
    def labels(self) -> np.ndarray:
        if any(p.label is None for p in self.points):
            raise ValidationError("dataset is not fully labelled")
        return np.array([p.label for p in self.points], dtype=int)

    @cached_property
    def matrix(self) -> np.ndarray:
        """The full n x n distance matrix, materialized once for geodesic data."""
        if self._matrix is not None:
            return self._matrix
        coords = np.array([p.coordinates for p in self.points], dtype=float)
        m = haversine_matrix(coords[:, 0], coords[:, 1])
        m.flags.writeable = False
        return m

    def distance(self, i: int, j: int) -> float:
        n = len(self.points)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError(f"point index out of range: ({i}, {j}) for {n} points")
        if self._matrix is not None:
            return float(self._matrix[i, j])
        if i == j:
            return 0.0
        a, b = (i, j) if i < j else (j, i)
        return geodesic_distance(self.points[a].coordinates, self.points[b].coordinates)


def _check_matrix(m, n):
    if m.shape != (n, n):
        raise InvalidDatasetError(f"distance matrix must be {n}x{n}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidDatasetError("distance matrix has non-finite entries")
    if np.any(m < 0):
        raise InvalidDatasetError("distance matrix has negative entries")
    if np.any(np.diag(m) != 0):
        raise InvalidDatasetError("distance matrix must have a zero diagonal")
    if not np.array_equal(m, m.T):
        raise InvalidDatasetError("distance matrix is not symmetric")


def _check_triangle(m):
    # O(n^3); only on request
    for k in range(len(m)):
        if np.any(m > m[:, k : k + 1] + m[k : k + 1, :] + 1e-12 * (1 + m)):
            raise InvalidDatasetError("distance matrix violates the triangle inequality")


def nearest_neighbor_distances(ds: MetricDataset) -> np.ndarray:
    d = np.array(ds.matrix)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def minimal_threshold(ds: MetricDataset) -> float:
    """Largest nearest-neighbour distance: the smallest threshold leaving no point isolated."""
    return float(nearest_neighbor_distances(ds).max())


def minimal_threshold_pair(ds: MetricDataset) -> tuple[float, int, int]:
    """Minimal threshold together with the pair of points realizing it.

    The first index is the point whose nearest neighbour is farthest away,
    the second is that neighbour.
    """
    d = np.array(ds.matrix)
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    i = int(np.argmax(nn))
    j = int(np.argmin(d[i]))
    return float(nn[i]), i, j


def max_distance_from(ds: MetricDataset, m: int) -> float:
    if not 0 <= m < len(ds):
        raise IndexError(f"point index {m} out of range for {len(ds)} points")
    return float(ds.matrix[m].max())

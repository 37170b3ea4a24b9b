"""Planar projection, distances and 200 m grid arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoordinate

EARTH_RADIUS = 6_371_000.0
CELL_SIZE = 200.0


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise InvalidCoordinate(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise InvalidCoordinate(f"coordinate out of range ({self.lon}, {self.lat})")


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float


@dataclass(frozen=True, order=True)
class GridCell:
    ix: int
    iy: int

    @property
    def center(self) -> PlanePoint:
        return PlanePoint((self.ix + 0.5) * CELL_SIZE, (self.iy + 0.5) * CELL_SIZE)


def project(p: GeoPoint, center: GeoPoint) -> PlanePoint:
    """Equirectangular projection about ``center`` in metres."""
    x, y = project_arrays(p.lon, p.lat, center)
    return PlanePoint(float(x), float(y))


def project_arrays(lon, lat, center: GeoPoint):
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
        raise InvalidCoordinate("non-finite coordinate")
    coslat = math.cos(math.radians(center.lat))
    x = EARTH_RADIUS * np.radians(lon - center.lon) * coslat
    y = EARTH_RADIUS * np.radians(lat - center.lat)
    return x, y


def unproject(p: PlanePoint, center: GeoPoint) -> GeoPoint:
    lon, lat = unproject_arrays(p.x, p.y, center)
    return GeoPoint(float(lon), float(lat))


def unproject_arrays(x, y, center: GeoPoint):
    coslat = math.cos(math.radians(center.lat))
    lon = center.lon + np.degrees(np.asarray(x, dtype=float) / (EARTH_RADIUS * coslat))
    lat = center.lat + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS)
    return lon, lat


def cell_of(p: PlanePoint) -> GridCell:
    return GridCell(math.floor(p.x / CELL_SIZE), math.floor(p.y / CELL_SIZE))


def cells_of(x, y):
    """Vectorised ``cell_of``; returns integer (ix, iy) arrays."""
    ix = np.floor(np.asarray(x, dtype=float) / CELL_SIZE).astype(np.int64)
    iy = np.floor(np.asarray(y, dtype=float) / CELL_SIZE).astype(np.int64)
    return ix, iy


def euclid(a: PlanePoint, b: PlanePoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)

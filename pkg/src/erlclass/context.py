"""Land-cover raster sampling and POI radius counts around ERLs."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .geo import CELL_SIZE, GeoPoint, PlanePoint, project_arrays
from .trajectory import Erl

LAND_COVER_CLASSES = (
    "traffic_route",
    "tree_cover",
    "grassland",
    "cropland",
    "building",
    "barren_S_V",
    "water",
    "moss_lichen",
)
NODATA = "nodata"
DEFAULT_CLASS_CODES = {name: i + 1 for i, name in enumerate(LAND_COVER_CLASSES)} | {NODATA: 255}

# Table order. trans_facility and trans_F carry identical descriptions in
# the source taxonomy; both are kept as separate categories.
POI_CATEGORIES = (
    "food",
    "road_fac",
    "scenic_spots",
    "public",
    "enterprise",
    "shopping",
    "trans_facility",
    "financial",
    "science_E",
    "trans_F",
    "car_S",
    "car_R",
    "business",
    "subsistence",
    "sports",
    "health",
    "government",
    "accom",
)
POI_INDEX_BUCKET = 1000.0


@dataclass
class LandCoverRaster:
    """Pre-classified land cover grid.

    ``codes[r, c]`` covers x in ``[origin_x + c*res, origin_x + (c+1)*res)``
    and y in ``[origin_y + r*res, origin_y + (r+1)*res)``: row 0 is the
    southern edge.
    """

    origin: PlanePoint
    resolution: float
    codes: np.ndarray
    class_codes: dict

    def __post_init__(self):
        if self.resolution <= 0:
            raise DataError("raster resolution must be positive")
        if self.codes.ndim != 2:
            raise DataError("raster must be two-dimensional")
        unknown = set(LAND_COVER_CLASSES) - set(self.class_codes)
        if unknown:
            raise DataError(f"raster class_codes missing {sorted(unknown)}")

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    def _pixel_range(self, lo: float, hi: float, origin: float) -> tuple[int, int]:
        # pixels whose centres fall in [lo, hi)
        first = math.ceil((lo - origin) / self.resolution - 0.5)
        stop = math.ceil((hi - origin) / self.resolution - 0.5)
        return first, stop

    def cell_counts(self, ix: int, iy: int) -> tuple[np.ndarray, int]:
        """Per-class pixel counts inside one grid cell plus the total pixel count."""
        c0, c1 = self._pixel_range(ix * CELL_SIZE, (ix + 1) * CELL_SIZE, self.origin.x)
        r0, r1 = self._pixel_range(iy * CELL_SIZE, (iy + 1) * CELL_SIZE, self.origin.y)
        total = max(c1 - c0, 0) * max(r1 - r0, 0)
        counts = np.zeros(len(LAND_COVER_CLASSES), dtype=np.int64)
        cc0, cc1 = max(c0, 0), min(c1, self.width)
        rr0, rr1 = max(r0, 0), min(r1, self.height)
        if cc1 > cc0 and rr1 > rr0:
            block = self.codes[rr0:rr1, cc0:cc1]
            hist = np.bincount(block.ravel(), minlength=256)
            for k, name in enumerate(LAND_COVER_CLASSES):
                counts[k] = hist[self.class_codes[name]]
        return counts, total


@dataclass(frozen=True)
class CoverRatios:
    ratios: np.ndarray  # ordered as LAND_COVER_CLASSES
    all_nodata: bool

    def as_dict(self) -> dict:
        return dict(zip(LAND_COVER_CLASSES, self.ratios.tolist()))


def cover_ratios(erl: Erl, raster: LandCoverRaster) -> CoverRatios:
    """Area share of each land cover class over the ERL's cells.

    Nodata and off-raster pixels stay in the denominator, so the shares sum
    to less than one wherever coverage is missing.
    """
    counts = np.zeros(len(LAND_COVER_CLASSES), dtype=np.int64)
    total = 0
    for cell in erl.cells:
        c, n = raster.cell_counts(cell.ix, cell.iy)
        counts += c
        total += n
    if total == 0 or counts.sum() == 0:
        return CoverRatios(np.zeros(len(LAND_COVER_CLASSES)), True)
    return CoverRatios(counts / total, False)


def write_raster(raster: LandCoverRaster, stem, fmt: str = "binary") -> tuple[Path, Path]:
    """Write ``<stem>.bin`` (or ``.asc``) plus the ``<stem>.json`` sidecar."""
    stem = Path(stem)
    sidecar = {
        "origin_x": raster.origin.x,
        "origin_y": raster.origin.y,
        "resolution": raster.resolution,
        "width": raster.width,
        "height": raster.height,
        "class_codes": raster.class_codes,
        "format": fmt,
    }
    if fmt == "binary":
        data_path = stem.with_suffix(".bin")
        raster.codes.astype(np.uint8).tofile(data_path)
    elif fmt == "ascii":
        data_path = stem.with_suffix(".asc")
        np.savetxt(data_path, raster.codes, fmt="%d")
    else:
        raise ValueError(f"unknown raster format {fmt!r}")
    meta_path = stem.with_suffix(".json")
    with open(meta_path, "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
    return data_path, meta_path


def read_raster(meta_path) -> LandCoverRaster:
    meta_path = Path(meta_path)
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
        fmt = meta.get("format", "binary")
        shape = (int(meta["height"]), int(meta["width"]))
        if fmt == "binary":
            codes = np.fromfile(meta_path.with_suffix(".bin"), dtype=np.uint8)
            codes = codes.reshape(shape)
        else:
            codes = np.loadtxt(meta_path.with_suffix(".asc"), dtype=np.int64, ndmin=2).astype(np.uint8)
            if codes.shape != shape:
                raise ValueError(f"raster shape {codes.shape} != sidecar {shape}")
        return LandCoverRaster(
            PlanePoint(float(meta["origin_x"]), float(meta["origin_y"])),
            float(meta["resolution"]),
            codes,
            {k: int(v) for k, v in meta["class_codes"].items()},
        )
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read raster {meta_path}: {exc}") from exc


# -- POIs ------------------------------------------------------------------


@dataclass(frozen=True)
class PoiRecord:
    pos: PlanePoint
    category: str

    def __post_init__(self):
        if self.category not in POI_CATEGORIES:
            raise DataError(f"unknown POI category {self.category!r}")


class PoiIndex:
    """POIs bucketed on a 1 km grid for radius queries."""

    def __init__(self, x=(), y=(), category=(), bucket: float = POI_INDEX_BUCKET):
        self.bucket = bucket
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        cat = np.asarray(category, dtype=np.int64)
        if not (len(x) == len(y) == len(cat)):
            raise ValueError("x, y and category must have equal length")
        bx = np.floor(x / bucket).astype(np.int64)
        by = np.floor(y / bucket).astype(np.int64)
        # lexsort makes the bucket contents independent of insertion order
        order = np.lexsort((cat, y, x, by, bx))
        self._buckets: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        if len(order):
            bx, by, x, y, cat = bx[order], by[order], x[order], y[order], cat[order]
            keys = np.stack([bx, by], axis=1)
            starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)])
            ends = np.r_[starts[1:], len(order)]
            for s, e in zip(starts, ends):
                self._buckets[(int(bx[s]), int(by[s]))] = (x[s:e], y[s:e], cat[s:e])
        self.size = int(len(order))

    @classmethod
    def from_records(cls, records, bucket: float = POI_INDEX_BUCKET) -> "PoiIndex":
        records = list(records)
        return cls(
            [r.pos.x for r in records],
            [r.pos.y for r in records],
            [POI_CATEGORIES.index(r.category) for r in records],
            bucket,
        )

    def query(self, center: PlanePoint, radius: float) -> np.ndarray:
        """Category codes of all POIs with distance <= radius."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        b = self.bucket
        bx0, bx1 = math.floor((center.x - radius) / b), math.floor((center.x + radius) / b)
        by0, by1 = math.floor((center.y - radius) / b), math.floor((center.y + radius) / b)
        found = []
        r2 = radius * radius
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                hit = self._buckets.get((bx, by))
                if hit is None:
                    continue
                x, y, cat = hit
                inside = (x - center.x) ** 2 + (y - center.y) ** 2 <= r2
                found.append(cat[inside])
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(found)


def poi_counts(center: PlanePoint, index: PoiIndex, radius: float = 1000.0) -> np.ndarray:
    """18 per-category counts followed by their total (``all_poi``)."""
    cats = index.query(center, radius)
    counts = np.bincount(cats, minlength=len(POI_CATEGORIES)).astype(float)
    return np.append(counts, counts.sum())


def read_pois(path, center: GeoPoint) -> tuple[PoiIndex, int]:
    """Load a ``lon,lat,category`` CSV; returns the index and the reject count."""
    lon, lat, cat = [], [], []
    rejected = 0
    codes = {c: i for i, c in enumerate(POI_CATEGORIES)}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                lo, la = float(row["lon"]), float(row["lat"])
                code = codes[row["category"].strip()]
            except (KeyError, TypeError, ValueError):
                rejected += 1
                continue
            if not (-180 <= lo <= 180 and -90 <= la <= 90):
                rejected += 1
                continue
            lon.append(lo)
            lat.append(la)
            cat.append(code)
    x, y = project_arrays(lon, lat, center)
    return PoiIndex(x, y, cat), rejected


def write_pois(path, lon, lat, categories) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lon", "lat", "category"])
        for lo, la, c in zip(lon, lat, categories):
            w.writerow([f"{lo:.7f}", f"{la:.7f}", c])

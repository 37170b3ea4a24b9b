"""Per (ERL, shift) feature vectors."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .context import (
    LAND_COVER_CLASSES,
    POI_CATEGORIES,
    LandCoverRaster,
    PoiIndex,
    cover_ratios,
    poi_counts,
)
from .errors import DataError
from .geo import CELL_SIZE, PlanePoint, euclid
from .trajectory import Erl, OdNetwork, Shift, StayPoint, build_od, shifts_overlapping

CLASSES = ("ER", "MR", "PM")

GEOGRAPHIC_FEATURES = ("num_grid", "distance_LR", "distance_UL", "distance_center")
LAND_COVER_FEATURES = LAND_COVER_CLASSES
POI_FEATURES = POI_CATEGORIES + ("all_poi",)
TRANSPORT_FEATURES = (
    tuple(f"stay_{t}" for t in range(1, 13))
    + ("all_stay",)
    + tuple(f"flow_{t}" for t in range(1, 13))
    + ("all_flow", "degree", "stay_time")
)
FEATURE_NAMES = GEOGRAPHIC_FEATURES + LAND_COVER_FEATURES + POI_FEATURES + TRANSPORT_FEATURES
N_FEATURES = len(FEATURE_NAMES)
HOUR = 3600.0


@dataclass
class Sample:
    erl_id: str
    shift: Shift
    features: np.ndarray
    label: str | None = None
    warnings: tuple[str, ...] = ()


@dataclass
class FeatureTable:
    """Samples in row order, with the feature matrix alongside."""

    erl_ids: list[str]
    shifts: list[Shift]
    X: np.ndarray
    labels: list[str | None]
    names: tuple[str, ...] = FEATURE_NAMES

    def __len__(self):
        return len(self.erl_ids)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "FeatureTable":
        X = np.array([s.features for s in samples], dtype=float).reshape(len(samples), N_FEATURES)
        return cls([s.erl_id for s in samples], [s.shift for s in samples], X, [s.label for s in samples])

    def labeled(self) -> "FeatureTable":
        keep = [i for i, lab in enumerate(self.labels) if lab is not None]
        return self.subset(keep)

    def subset(self, rows) -> "FeatureTable":
        rows = list(rows)
        return FeatureTable(
            [self.erl_ids[i] for i in rows],
            [self.shifts[i] for i in rows],
            self.X[rows],
            [self.labels[i] for i in rows],
            self.names,
        )

    def rows_for(self, erl_ids) -> list[int]:
        wanted = set(erl_ids)
        return [i for i, e in enumerate(self.erl_ids) if e in wanted]

    def y(self) -> np.ndarray:
        return np.array([CLASSES.index(lab) for lab in self.labels], dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


def geographic_features(erl: Erl, center: PlanePoint = PlanePoint(0.0, 0.0)) -> np.ndarray:
    ix = [c.ix for c in erl.cells]
    iy = [c.iy for c in erl.cells]
    return np.array(
        [
            len(erl.cells),
            CELL_SIZE * (max(ix) - min(ix) + 1),
            CELL_SIZE * (max(iy) - min(iy) + 1),
            euclid(erl.centroid, center),
        ],
        dtype=float,
    )


def transport_features(
    stays: Sequence[StayPoint],
    entries: Sequence[float],
    degree: int,
    shift_start: float,
) -> np.ndarray:
    """The 28 transport features for one ERL in one shift.

    ``stays`` are the ERL's stays overlapping the shift; ``entries`` are
    the arrival times of trucks into the ERL. ``stay_t`` counts stays
    overlapping hour slot t, ``flow_t`` counts arrivals inside slot t.
    """
    stay = np.zeros(12)
    for s in stays:
        for t in range(12):
            lo = shift_start + t * HOUR
            if s.t_start < lo + HOUR and s.t_end > lo:
                stay[t] += 1
    flow = np.zeros(12)
    for t_in in entries:
        slot = int(np.floor((t_in - shift_start) / HOUR))
        if 0 <= slot < 12:
            flow[slot] += 1
    stay_time = float(np.mean([s.duration for s in stays])) if stays else 0.0
    return np.concatenate([stay, [stay.sum()], flow, [flow.sum(), float(degree), stay_time]])


def entry_times(stays: Sequence[StayPoint], erl_ids: Sequence[str | None]) -> list[bool]:
    """Flag stays that are arrivals: the truck's previous stay was elsewhere."""
    order = sorted(range(len(stays)), key=lambda i: (stays[i].truck_id, stays[i].t_start))
    is_entry = [False] * len(stays)
    prev_truck, prev_erl = None, None
    for i in order:
        s, eid = stays[i], erl_ids[i]
        if s.truck_id != prev_truck:
            prev_erl = None
        if eid is not None and eid != prev_erl:
            is_entry[i] = True
        prev_truck, prev_erl = s.truck_id, eid
    return is_entry


@dataclass
class StaticFeatures:
    geographic: np.ndarray
    cover: np.ndarray
    poi: np.ndarray
    warnings: tuple[str, ...] = ()


def static_features(
    erl: Erl, raster: LandCoverRaster, poi_index: PoiIndex, center: PlanePoint = PlanePoint(0.0, 0.0),
    poi_radius: float = 1000.0,
) -> StaticFeatures:
    cover = cover_ratios(erl, raster)
    return StaticFeatures(
        geographic_features(erl, center),
        cover.ratios,
        poi_counts(erl.centroid, poi_index, poi_radius),
        ("no_land_cover",) if cover.all_nodata else (),
    )


def assemble(
    erl: Erl,
    shift: Shift,
    raster: LandCoverRaster,
    poi_index: PoiIndex,
    od: OdNetwork,
    stays: Sequence[StayPoint],
    registry: dict,
    center: PlanePoint = PlanePoint(0.0, 0.0),
    entries: Sequence[float] | None = None,
    tz_offset: float = 8.0,
) -> Sample:
    """One sample from scratch. ``stays`` are the ERL's stays in the shift.

    Without explicit ``entries`` every stay counts as an arrival.
    """
    static = static_features(erl, raster, poi_index, center)
    if entries is None:
        entries = [s.t_start for s in stays]
    transport = transport_features(stays, entries, od.degree(erl.erl_id), shift.start(tz_offset))
    return Sample(
        erl.erl_id,
        shift,
        np.concatenate([static.geographic, static.cover, static.poi, transport]),
        registry.get(erl.erl_id),
        static.warnings,
    )


def build_samples(
    erls: Sequence[Erl],
    stays: Sequence[StayPoint],
    erl_ids: Sequence[str | None],
    raster: LandCoverRaster,
    poi_index: PoiIndex,
    registry: dict,
    tz_offset: float = 8.0,
    poi_radius: float = 1000.0,
) -> list[Sample]:
    """Featurise every (ERL, shift) pair with at least one overlapping stay.

    Samples come out sorted by (shift, erl_id).
    """
    by_id = {e.erl_id: e for e in erls}
    is_entry = entry_times(stays, erl_ids)
    groups: dict[tuple[Shift, str], list[int]] = defaultdict(list)
    for i, (s, eid) in enumerate(zip(stays, erl_ids)):
        if eid is None:
            continue
        for sh in shifts_overlapping(s.t_start, s.t_end, tz_offset):
            groups[(sh, eid)].append(i)
    per_shift: dict[Shift, list[int]] = defaultdict(list)
    for (sh, _), idx in groups.items():
        per_shift[sh].extend(idx)

    statics = {eid: static_features(e, raster, poi_index, poi_radius=poi_radius) for eid, e in by_id.items()}
    samples = []
    for sh in sorted(per_shift):
        idx = sorted(set(per_shift[sh]))
        degrees = build_od([stays[i] for i in idx], [erl_ids[i] for i in idx]).degrees()
        for eid in sorted(e for (s, e) in groups if s == sh):
            members = groups[(sh, eid)]
            st = [stays[i] for i in members]
            entries = [stays[i].t_start for i in members if is_entry[i]]
            transport = transport_features(st, entries, degrees.get(eid, 0), sh.start(tz_offset))
            stat = statics[eid]
            samples.append(
                Sample(
                    eid,
                    sh,
                    np.concatenate([stat.geographic, stat.cover, stat.poi, transport]),
                    registry.get(eid),
                    stat.warnings,
                )
            )
    return samples


# -- serialisation ---------------------------------------------------------


def write_feature_table(table: FeatureTable, path, with_labels: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["erl_id", "shift", *table.names] + (["label"] if with_labels else []))
        for eid, sh, row, lab in zip(table.erl_ids, table.shifts, table.X, table.labels):
            out = [eid, str(sh), *(repr(float(v)) for v in row)]
            if with_labels:
                out.append(lab or "")
            w.writerow(out)


def read_feature_table(path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = tuple(header[2:-1] if header[-1] == "label" else header[2:])
        if names != FEATURE_NAMES:
            raise DataError("feature table header does not match the canonical feature order")
        has_label = header[-1] == "label"
        erl_ids, shifts, rows, labels = [], [], [], []
        for rec in reader:
            erl_ids.append(rec[0])
            shifts.append(Shift.parse(rec[1]))
            rows.append([float(v) for v in rec[2 : 2 + N_FEATURES]])
            lab = rec[-1] if has_label else ""
            if lab and lab not in CLASSES:
                raise DataError(f"unknown label {lab!r}")
            labels.append(lab or None)
    X = np.array(rows, dtype=float).reshape(len(rows), N_FEATURES)
    return FeatureTable(erl_ids, shifts, X, labels)


def read_registry(path) -> dict:
    with open(path) as fh:
        reg = json.load(fh)
    bad = {k: v for k, v in reg.items() if v not in CLASSES}
    if bad:
        raise DataError(f"registry has unknown labels: {sorted(set(bad.values()))}")
    return reg

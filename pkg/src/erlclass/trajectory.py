"""Truck trace ingestion, stay points, ERL extraction, shifts and OD networks."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geo import GeoPoint, GridCell, PlanePoint, cell_of, project_arrays

TRACE_COLUMNS = ("truck_id", "unix_time", "lon", "lat")
SHIFT_HOURS = 12
DAY_START_HOUR = 8


@dataclass(frozen=True)
class GpsPoint:
    truck_id: str
    t: float
    pos: GeoPoint


@dataclass
class Trace:
    """Time-ordered positions of one truck, stored column-wise."""

    truck_id: str
    t: np.ndarray
    lon: np.ndarray
    lat: np.ndarray

    def __len__(self):
        return len(self.t)

    def points(self) -> Iterator[GpsPoint]:
        for t, lon, lat in zip(self.t, self.lon, self.lat):
            yield GpsPoint(self.truck_id, float(t), GeoPoint(float(lon), float(lat)))


@dataclass
class IngestResult:
    traces: dict[str, Trace]
    n_rows: int = 0
    n_duplicates: int = 0
    n_out_of_range: int = 0
    rejects: list[tuple[int, str]] = field(default_factory=list)

    @property
    def reject_count(self) -> int:
        return len(self.rejects)

    @property
    def n_points(self) -> int:
        return sum(len(tr) for tr in self.traces.values())

    def report(self) -> dict:
        return {
            "rows": self.n_rows,
            "points": self.n_points,
            "trucks": len(self.traces),
            "duplicates_dropped": self.n_duplicates,
            "out_of_range": self.n_out_of_range,
            "reject_count": self.reject_count,
            "rejects": [{"line": line, "reason": reason} for line, reason in self.rejects],
        }


def ingest_traces(rows: Iterable) -> IngestResult:
    """Parse trace records into per-truck, time-sorted traces.

    ``rows`` yields mappings with the four trace columns (e.g. a
    ``csv.DictReader``) or plain sequences in column order. Bad rows are
    recorded in ``rejects`` with their 1-based record number; they never
    stop the stream. Out-of-range coordinates are also rejected and counted
    separately. Of several rows sharing ``(truck_id, t)`` the first is kept.
    """
    buf: dict[str, tuple[list, list, list]] = {}
    seen: dict[str, set] = defaultdict(set)
    res = IngestResult(traces={})
    for n, row in enumerate(rows, start=1):
        res.n_rows += 1
        try:
            if isinstance(row, dict):
                tid, t, lon, lat = (row[c] for c in TRACE_COLUMNS)
            else:
                tid, t, lon, lat = row
            tid = str(tid).strip()
            if not tid:
                raise ValueError("empty truck_id")
            t, lon, lat = float(t), float(lon), float(lat)
            if not (math.isfinite(t) and math.isfinite(lon) and math.isfinite(lat)):
                raise ValueError("non-finite value")
        except (KeyError, TypeError, ValueError) as exc:
            res.rejects.append((n, f"malformed: {exc}"))
            continue
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            res.n_out_of_range += 1
            res.rejects.append((n, "coordinate out of range"))
            continue
        if t in seen[tid]:
            res.n_duplicates += 1
            continue
        seen[tid].add(t)
        cols = buf.setdefault(tid, ([], [], []))
        cols[0].append(t)
        cols[1].append(lon)
        cols[2].append(lat)
    for tid in sorted(buf):
        t, lon, lat = (np.asarray(c, dtype=float) for c in buf[tid])
        order = np.argsort(t, kind="stable")
        res.traces[tid] = Trace(tid, t[order], lon[order], lat[order])
    return res


def read_traces(path) -> IngestResult:
    with open(path, newline="", encoding="utf-8") as fh:
        return ingest_traces(csv.DictReader(fh))


# -- stay points -----------------------------------------------------------


@dataclass(frozen=True)
class StayPoint:
    truck_id: str
    t_start: float
    t_end: float
    pos: PlanePoint
    n_points: int = 0

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def stay_windows(t, x, y, d_max: float = 200.0, t_min: float = 1800.0) -> list[tuple[int, int]]:
    """Greedy anchor scan; returns half-open index windows ``[i, j)``.

    From anchor ``i`` the window grows while each next point lies within
    ``d_max`` of the anchor. A window lasting at least ``t_min`` becomes a
    stay and scanning resumes at ``j``; otherwise the anchor advances by one.
    """
    t = np.asarray(t, dtype=float).tolist()
    x = np.asarray(x, dtype=float).tolist()
    y = np.asarray(y, dtype=float).tolist()
    n = len(t)
    out = []
    d2 = d_max * d_max
    i = 0
    while i < n:
        ax, ay = x[i], y[i]
        j = i + 1
        while j < n and (x[j] - ax) ** 2 + (y[j] - ay) ** 2 <= d2:
            j += 1
        if t[j - 1] - t[i] >= t_min:
            out.append((i, j))
            i = j
        else:
            i += 1
    return out


def detect_stay_points(
    trace: Trace, center: GeoPoint, d_max: float = 200.0, t_min: float = 1800.0
) -> list[StayPoint]:
    if d_max <= 0 or t_min <= 0:
        raise ValueError("d_max and t_min must be positive")
    if len(trace) == 0:
        return []
    x, y = project_arrays(trace.lon, trace.lat, center)
    stays = []
    for i, j in stay_windows(trace.t, x, y, d_max, t_min):
        stays.append(
            StayPoint(
                trace.truck_id,
                float(trace.t[i]),
                float(trace.t[j - 1]),
                PlanePoint(float(np.mean(x[i:j])), float(np.mean(y[i:j]))),
                j - i,
            )
        )
    return stays


def write_stays(stays: Sequence[StayPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truck_id", "t_start", "t_end", "x", "y", "n_points"])
        for s in stays:
            w.writerow([s.truck_id, repr(s.t_start), repr(s.t_end), repr(s.pos.x), repr(s.pos.y), s.n_points])


def read_stays(path) -> list[StayPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            StayPoint(r["truck_id"], float(r["t_start"]), float(r["t_end"]),
                      PlanePoint(float(r["x"]), float(r["y"])), int(r["n_points"]))
            for r in csv.DictReader(fh)
        ]


# -- shifts ----------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Shift:
    date: dt.date
    half: str  # "D" (08:00-20:00) or "N" (20:00-08:00 next day)

    def __str__(self):
        return f"{self.date.isoformat()}{self.half}"

    @classmethod
    def parse(cls, s: str) -> "Shift":
        return cls(dt.date.fromisoformat(s[:-1]), s[-1])

    def start(self, tz_offset: float = 8.0) -> float:
        """Shift start as UTC seconds."""
        hour = DAY_START_HOUR if self.half == "D" else DAY_START_HOUR + SHIFT_HOURS
        local = dt.datetime(self.date.year, self.date.month, self.date.day, hour, tzinfo=dt.timezone.utc)
        return local.timestamp() - tz_offset * 3600.0

    def end(self, tz_offset: float = 8.0) -> float:
        return self.start(tz_offset) + SHIFT_HOURS * 3600.0


def shift_of(t: float, tz_offset: float = 8.0) -> Shift:
    local = dt.datetime.fromtimestamp(t + tz_offset * 3600.0, tz=dt.timezone.utc)
    if local.hour < DAY_START_HOUR:
        return Shift(local.date() - dt.timedelta(days=1), "N")
    if local.hour < DAY_START_HOUR + SHIFT_HOURS:
        return Shift(local.date(), "D")
    return Shift(local.date(), "N")


def local_date(t: float, tz_offset: float = 8.0) -> dt.date:
    return dt.datetime.fromtimestamp(t + tz_offset * 3600.0, tz=dt.timezone.utc).date()


def shifts_overlapping(t_start: float, t_end: float, tz_offset: float = 8.0) -> list[Shift]:
    """All shifts whose interval has positive overlap with ``[t_start, t_end]``.

    A zero-length interval belongs to the shift containing it.
    """
    first = shift_of(t_start, tz_offset)
    out = [first]
    cur = first
    while True:
        nxt = next_shift(cur)
        if nxt.start(tz_offset) >= t_end:
            break
        out.append(nxt)
        cur = nxt
    return out


def next_shift(s: Shift) -> Shift:
    if s.half == "D":
        return Shift(s.date, "N")
    return Shift(s.date + dt.timedelta(days=1), "D")


# -- ERLs ------------------------------------------------------------------


@dataclass(frozen=True)
class Erl:
    erl_id: str
    cells: tuple[GridCell, ...]
    centroid: PlanePoint

    @classmethod
    def from_cells(cls, cells: Iterable[GridCell]) -> "Erl":
        cells = tuple(sorted(set(cells)))
        if not cells:
            raise ValueError("an ERL needs at least one cell")
        cx = sum(c.center.x for c in cells) / len(cells)
        cy = sum(c.center.y for c in cells) / len(cells)
        return cls(erl_id_for(cells), cells, PlanePoint(cx, cy))

    def to_json(self) -> dict:
        return {
            "erl_id": self.erl_id,
            "cells": [[c.ix, c.iy] for c in self.cells],
            "centroid": [self.centroid.x, self.centroid.y],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Erl":
        erl = cls.from_cells(GridCell(int(ix), int(iy)) for ix, iy in d["cells"])
        if d.get("erl_id", erl.erl_id) != erl.erl_id:
            raise ValueError(f"erl_id {d['erl_id']} does not match its cells")
        return erl


def erl_id_for(cells: Iterable[GridCell]) -> str:
    key = ";".join(f"{c.ix},{c.iy}" for c in sorted(set(cells)))
    return hashlib.sha1(key.encode()).hexdigest()[:12]


NEIGHBOURS_8 = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


def connected_components(cells: Iterable[GridCell]) -> list[list[GridCell]]:
    """8-connected components by breadth-first flood fill."""
    remaining = set(cells)
    comps = []
    for seed in sorted(remaining):
        if seed not in remaining:
            continue
        remaining.discard(seed)
        comp = [seed]
        queue = deque([seed])
        while queue:
            c = queue.popleft()
            for dx, dy in NEIGHBOURS_8:
                nb = GridCell(c.ix + dx, c.iy + dy)
                if nb in remaining:
                    remaining.discard(nb)
                    comp.append(nb)
                    queue.append(nb)
        comps.append(sorted(comp))
    return comps


def active_cells(
    stays: Iterable[StayPoint], min_days: int = 10, min_stays_per_day: int = 1, tz_offset: float = 8.0
) -> set[GridCell]:
    per_day: Counter = Counter()
    for s in stays:
        per_day[(cell_of(s.pos), local_date(s.t_start, tz_offset))] += 1
    days: Counter = Counter()
    for (cell, _), n in per_day.items():
        if n >= min_stays_per_day:
            days[cell] += 1
    return {c for c, n in days.items() if n >= min_days}


def extract_erls(
    stays: Iterable[StayPoint], min_days: int = 10, min_stays_per_day: int = 1, tz_offset: float = 8.0
) -> list[Erl]:
    kept = active_cells(stays, min_days, min_stays_per_day, tz_offset)
    return [Erl.from_cells(comp) for comp in connected_components(kept)]


def assign_erls(stays: Sequence[StayPoint], erls: Iterable[Erl]) -> list[str | None]:
    lookup = {c: e.erl_id for e in erls for c in e.cells}
    return [lookup.get(cell_of(s.pos)) for s in stays]


# -- OD network ------------------------------------------------------------


@dataclass
class OdNetwork:
    shift: Shift | None
    nodes: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    def degree(self, erl_id: str) -> int:
        ins = {a for a, b in self.edges if b == erl_id}
        outs = {b for a, b in self.edges if a == erl_id}
        return len(ins) + len(outs)

    def degrees(self) -> dict[str, int]:
        deg: Counter = Counter()
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return {n: deg.get(n, 0) for n in self.nodes}


def build_od(
    stays: Sequence[StayPoint], erl_ids: Sequence[str | None], shift: Shift | None = None, tz_offset: float = 8.0
) -> OdNetwork:
    """Directed trip network between ERLs for one shift.

    Stays are those overlapping the shift (all of them when ``shift`` is
    None). Per truck, stays outside every ERL are skipped, repeated stays in
    the same ERL collapse, and each remaining hop A -> B adds one trip.
    """
    if shift is not None:
        s0, s1 = shift.start(tz_offset), shift.end(tz_offset)
    per_truck = defaultdict(list)
    for s, eid in zip(stays, erl_ids):
        if eid is None:
            continue
        if shift is not None and not (s.t_start < s1 and s.t_end > s0):
            continue
        per_truck[s.truck_id].append((s.t_start, eid))
    od = OdNetwork(shift)
    for tid in sorted(per_truck):
        prev = None
        for _, eid in sorted(per_truck[tid]):
            od.nodes.add(eid)
            if prev is not None and eid != prev:
                od.edges[(prev, eid)] = od.edges.get((prev, eid), 0) + 1
            prev = eid
    return od

"""Seeded synthetic city: planted ERLs, truck traces, POIs, land cover, registry.

Each category is a mix of subtypes (``PATTERNS``); magnitudes are free
parameters and can be overridden per subtype through ``SynthConfig.patterns``.

* ER: urban construction sites with dense business POIs and short stays,
  and dumping grounds far out on grassy land. A minority of both sits in
  the mid band, where only land cover and stay length tell them apart
  from MR.
* MR: mixing plants in the mid band on partly grassed land with sparse
  POIs and medium loading stays.
* PM: parking yards that hold their trucks overnight, plus repair
  stations with long daytime stays; both carry car-service POI clusters.

Every cell of every non-parking site is visited at least once per day,
so each site stays active on every day of the window.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SynthConfig
from .context import (
    DEFAULT_CLASS_CODES,
    LAND_COVER_CLASSES,
    POI_CATEGORIES,
    LandCoverRaster,
    write_pois,
    write_raster,
)
from .errors import ConfigError, GenerationFailed
from .geo import CELL_SIZE, GeoPoint, GridCell, PlanePoint, unproject_arrays
from .trajectory import NEIGHBOURS_8, erl_id_for


@dataclass(frozen=True)
class Pattern:
    """How one site subtype looks. Each planted site draws its own values
    from these ranges, so classes overlap."""

    category: str
    share: float  # of its category
    distance_km: tuple
    cells: tuple
    grassland: tuple
    stay_min: tuple | None  # per-site mean stay in minutes; None means overnight parking
    poi_thin: tuple = (0.0, 0.0)  # share of background POIs missing around the site
    poi_cluster: tuple = (0, 0)  # extra POIs clustered around the site
    cluster_mix: tuple = ()
    barren: tuple | None = None  # bare-soil share of the non-grass land; random if None


PATTERNS = {
    "construction": Pattern("ER", 0.6, (0.5, 15.0), (1, 4), (0.0, 0.1), (85, 140), (0.0, 0.3), (0, 30),
                            (("business", 0.6), ("food", 0.2), ("shopping", 0.2)), (0.65, 0.9)),
    "dumping": Pattern("ER", 0.24, (10.0, 29.0), (1, 5), (0.42, 0.8), (31, 42), barren=(0.0, 0.2)),
    # urban-fringe earthworks share the surroundings of mixing stations and
    # differ from them in how long trucks stay and how much soil is bare
    "fringe_construction": Pattern("ER", 0.08, (8.0, 20.0), (1, 4), (0.15, 0.35), (85, 140), (0.3, 0.9),
                                   barren=(0.65, 0.9)),
    "fringe_dumping": Pattern("ER", 0.08, (8.0, 20.0), (1, 4), (0.15, 0.35), (31, 42), (0.3, 0.9),
                              barren=(0.0, 0.2)),
    "mixing": Pattern("MR", 1.0, (8.0, 20.0), (1, 4), (0.15, 0.35), (50, 68), (0.3, 0.9), barren=(0.3, 0.5)),
    "parking": Pattern("PM", 2 / 3, (5.0, 28.0), (1, 3), (0.0, 0.2), None, (0.0, 0.3), (3, 20),
                       (("road_fac", 0.5), ("car_R", 0.3), ("car_S", 0.2))),
    "repair": Pattern("PM", 1 / 3, (3.0, 20.0), (1, 2), (0.0, 0.2), (180, 300), (0.0, 0.3), (15, 40),
                      (("road_fac", 0.6), ("car_R", 0.25), ("car_S", 0.15))),
}
CATEGORY_SHARES = {"ER": 0.67, "MR": 0.13, "PM": 0.20}

# background land cover: urban core and rural ring, blended by distance
URBAN_MIX = {"building": 0.55, "traffic_route": 0.25, "tree_cover": 0.10, "grassland": 0.04,
             "water": 0.03, "barren_S_V": 0.02, "cropland": 0.009, "moss_lichen": 0.001}
RURAL_MIX = {"cropland": 0.45, "tree_cover": 0.20, "building": 0.15, "grassland": 0.08,
             "traffic_route": 0.07, "water": 0.03, "barren_S_V": 0.019, "moss_lichen": 0.001}
# site land cover apart from grassland is a random blend of these
SITE_COVER = ("barren_S_V", "building", "traffic_route", "tree_cover", "cropland")

# background POI category mix
POI_MIX = {
    "food": 0.20, "shopping": 0.18, "subsistence": 0.10, "enterprise": 0.08, "business": 0.07,
    "public": 0.05, "financial": 0.04, "science_E": 0.04, "health": 0.04, "accom": 0.04,
    "sports": 0.03, "government": 0.02, "road_fac": 0.03, "trans_facility": 0.02, "trans_F": 0.02,
    "car_S": 0.02, "car_R": 0.01, "scenic_spots": 0.01,
}
NIGHT_SHARE = 0.25  # trucks working night shifts
POI_DENSITY_CORE = 200.0  # per km^2 at the centre
POI_DECAY_KM = 5.0


@dataclass
class PlantedErl:
    erl_id: str
    category: str
    subtype: str
    cells: list
    labeled: bool
    grassland: float
    stay_mean: float | None  # minutes
    poi_thin: float
    poi_cluster: int
    cover_mix: np.ndarray  # shares over SITE_COVER
    intensity: float = 1.0

    def to_json(self) -> dict:
        return {
            "erl_id": self.erl_id,
            "category": self.category,
            "subtype": self.subtype,
            "labeled": self.labeled,
            "cells": [[c.ix, c.iy] for c in self.cells],
        }


def patterns_for(cfg: SynthConfig) -> dict:
    """Default patterns with any per-subtype overrides from the config."""
    out = dict(PATTERNS)
    for name, over in (cfg.patterns or {}).items():
        if name not in out:
            raise ConfigError(f"unknown site pattern {name!r}")
        fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in over.items()}
        try:
            out[name] = dataclasses.replace(out[name], **fixed)
        except TypeError as exc:
            raise ConfigError(f"bad override for pattern {name!r}: {exc}") from exc
    return out


@dataclass
class SynthOutput:
    erls: list
    traces: dict  # truck_id -> (t, x, y) arrays
    poi_xy: np.ndarray
    poi_cat: list
    raster: LandCoverRaster
    center: GeoPoint
    config: SynthConfig
    files: dict = field(default_factory=dict)

    @property
    def registry(self) -> dict:
        return {e.erl_id: e.category for e in self.erls if e.labeled}

    @property
    def ground_truth(self) -> list:
        return [e.to_json() for e in self.erls]


def _grow_blob(rng, start: GridCell, n: int) -> list:
    cells = [start]
    have = {start}
    while len(cells) < n:
        base = cells[rng.integers(len(cells))]
        dx, dy = [(1, 0), (-1, 0), (0, 1), (0, -1)][rng.integers(4)]
        c = GridCell(base.ix + dx, base.iy + dy)
        if c not in have:
            have.add(c)
            cells.append(c)
    return sorted(cells)


def _cover_mix(rng, pat: Pattern) -> np.ndarray:
    """Shares over SITE_COVER for the non-grass part of a site."""
    mix = rng.dirichlet(np.full(len(SITE_COVER), 2.0))
    if pat.barren is not None:
        b = rng.uniform(*pat.barren)
        rest = np.delete(mix, 0)
        mix = np.concatenate([[b], (1.0 - b) * rest / rest.sum()])
    return mix


def _subtype_plan(patterns: dict, category: str, n: int) -> list[str]:
    """Subtypes for ``n`` sites of a category, split by largest remainder."""
    names = [k for k, p in patterns.items() if p.category == category]
    quotas = [n * patterns[k].share for k in names]
    counts = [int(math.floor(q)) for q in quotas]
    for i in sorted(range(len(names)), key=lambda i: counts[i] - quotas[i])[: n - sum(counts)]:
        counts[i] += 1
    return [k for k, c in zip(names, counts) for _ in range(c)]


def plant_erls(cfg: SynthConfig, rng, patterns: dict | None = None) -> list:
    patterns = patterns or patterns_for(cfg)
    plan = [(k, True) for cat, n in (("ER", cfg.n_er), ("MR", cfg.n_mr), ("PM", cfg.n_pm))
            for k in _subtype_plan(patterns, cat, n)]
    for _ in range(cfg.n_unlabeled):
        cat = rng.choice(list(CATEGORY_SHARES), p=list(CATEGORY_SHARES.values()))
        names = [k for k, p in patterns.items() if p.category == cat]
        shares = np.array([patterns[k].share for k in names])
        plan.append((names[rng.choice(len(names), p=shares / shares.sum())], False))
    reserved: set = set()
    erls = []
    tries = 0
    for subtype, labeled in plan:
        pat = patterns[subtype]
        r_lo, r_hi = pat.distance_km
        while True:
            tries += 1
            if tries > cfg.max_retries:
                raise GenerationFailed(
                    f"could not place {len(plan)} non-overlapping ERLs within {cfg.max_retries} attempts"
                )
            r = 1000.0 * rng.uniform(r_lo, min(r_hi, cfg.city_radius / 1000.0 - 1.0))
            a = rng.uniform(0, 2 * math.pi)
            start = GridCell(math.floor(r * math.cos(a) / CELL_SIZE), math.floor(r * math.sin(a) / CELL_SIZE))
            cells = _grow_blob(rng, start, int(rng.integers(pat.cells[0], pat.cells[1] + 1)))
            halo = {GridCell(c.ix + dx, c.iy + dy) for c in cells for dx, dy in NEIGHBOURS_8 + [(0, 0)]}
            if halo & reserved:
                continue
            reserved |= halo
            break
        erls.append(
            PlantedErl(
                erl_id_for(cells), pat.category, subtype, cells, labeled,
                grassland=float(rng.uniform(*pat.grassland)),
                stay_mean=None if pat.stay_min is None else float(rng.uniform(*pat.stay_min)),
                poi_thin=float(rng.uniform(*pat.poi_thin)),
                poi_cluster=int(rng.integers(pat.poi_cluster[0], pat.poi_cluster[1] + 1)),
                cover_mix=_cover_mix(rng, pat),
                intensity=float(rng.lognormal(0.0, 0.4)),
            )
        )
    return erls


# -- traces ----------------------------------------------------------------


def _site_point(rng, cell: GridCell) -> tuple[float, float]:
    margin = 40.0
    return (
        cell.ix * CELL_SIZE + rng.uniform(margin, CELL_SIZE - margin),
        cell.iy * CELL_SIZE + rng.uniform(margin, CELL_SIZE - margin),
    )


class _TraceWriter:
    def __init__(self, rng, cfg: SynthConfig):
        self.rng, self.cfg = rng, cfg
        self.t, self.x, self.y = [], [], []

    def stay(self, t0, t1, px, py):
        n = max(int((t1 - t0) // self.cfg.sample_interval_stay), 1)
        ts = np.append(t0 + np.arange(n) * self.cfg.sample_interval_stay, t1)
        jitter = np.clip(self.rng.normal(0.0, 5.0, size=(len(ts), 2)), -15.0, 15.0)
        self.t.extend(ts.tolist())
        self.x.extend((px + jitter[:, 0]).tolist())
        self.y.extend((py + jitter[:, 1]).tolist())

    def point(self, t, px, py):
        self.t.append(t)
        self.x.append(px)
        self.y.append(py)

    def move(self, t0, ax, ay, bx, by) -> float:
        """Drive from a to b starting at t0; returns the arrival time."""
        dist = math.hypot(bx - ax, by - ay)
        dur = max(dist / self.cfg.truck_speed, 60.0)
        ts = t0 + np.arange(1, int(dur // self.cfg.sample_interval_move) + 1) * self.cfg.sample_interval_move
        ts = ts[ts < t0 + dur]
        frac = (ts - t0) / dur
        self.t.extend(ts.tolist())
        self.x.extend((ax + frac * (bx - ax)).tolist())
        self.y.extend((ay + frac * (by - ay)).tolist())
        return t0 + dur

    def arrays(self):
        t = np.round(np.asarray(self.t))
        keep = np.r_[True, t[1:] > t[:-1]]
        return t[keep], np.asarray(self.x)[keep], np.asarray(self.y)[keep]


def _spread(rng, stops: list) -> list:
    """Shuffle stops so the same site is never visited twice in a row.

    Back-to-back stays in neighbouring cells of one site would merge into a
    single stay point.
    """
    order = [stops[i] for i in rng.permutation(len(stops))]
    for i in range(1, len(order)):
        if order[i][0] is order[i - 1][0]:
            for j in range(i + 1, len(order)):
                if order[j][0] is not order[i - 1][0]:
                    order[i], order[j] = order[j], order[i]
                    break
    return order


def simulate_traces(cfg: SynthConfig, erls: list, rng, t_origin: float) -> dict:
    """Truck itineraries over the study window, sampled as GPS points.

    ``t_origin`` is 08:00 local on the first day in UTC seconds; the window
    ends 08:00 local after the last day, i.e. exactly 2*n_days shifts.
    """
    hour = 3600.0
    t_end = t_origin + cfg.n_days * 24 * hour
    parks = [e for e in erls if e.stay_mean is None]
    sites = [e for e in erls if e.stay_mean is not None]
    if not parks:
        raise GenerationFailed("at least one parking ERL is needed to home the trucks")

    trucks = []  # (truck_id, home erl, home cell, is_night)
    for p in parks:
        n = max(int(rng.integers(cfg.trucks_per_pm[0], cfg.trucks_per_pm[1] + 1)), len(p.cells))
        for j in range(n):
            trucks.append((f"T{len(trucks):04d}", p, p.cells[j % len(p.cells)], bool(rng.random() < NIGHT_SHARE)))
    intensity = np.array([s.intensity for s in sites])
    intensity = intensity / intensity.sum() if len(sites) else intensity
    writers = {tid: _TraceWriter(rng, cfg) for tid, *_ in trucks}
    home_xy = {tid: _site_point(rng, cell) for tid, _, cell, _ in trucks}
    free_at = {tid: t_origin for tid, *_ in trucks}

    for day in range(cfg.n_days):
        day0 = t_origin + day * 24 * hour  # 08:00 local
        # every cell of every site gets at least one day-shift visit per
        # day, so its stays fall on every local date of the window
        mandatory = [(s, c) for s in sites for c in s.cells]
        order = rng.permutation(len(mandatory))
        stops = {tid: [] for tid, *_ in trucks}
        n_stops = {tid: int(rng.integers(2, 6)) for tid, *_ in trucks}
        tids = [tid for tid, *_ in trucks]
        day_tids = [tid for tid, _, _, night in trucks if not night] or tids
        for k, mi in enumerate(order):
            stops[day_tids[k % len(day_tids)]].append((*mandatory[mi], True))
        for tid in tids:
            while len(stops[tid]) < n_stops[tid] and len(sites):
                s = sites[rng.choice(len(sites), p=intensity)]
                stops[tid].append((s, s.cells[rng.integers(len(s.cells))], False))
        noise = set(rng.choice(len(tids), size=min(cfg.noise_stays_per_day, len(tids)), replace=False).tolist())
        for ti, (tid, home, _, night) in enumerate(trucks):
            w = writers[tid]
            hx, hy = home_xy[tid]
            # night trucks leave after midnight so every return lands on a new date
            depart = day0 + (16.5 * hour if night else 0.0) + rng.uniform(0.0, 1.0) * hour
            # parked at home until departure
            w.stay(free_at[tid], depart, hx, hy)
            t, cx, cy = depart, hx, hy
            # required visits first; optional ones are dropped once the shift runs late
            itinerary = _spread(rng, [st for st in stops[tid] if st[2]])
            itinerary += _spread(rng, [st for st in stops[tid] if not st[2]])
            late = day0 + (22.5 if night else 11.0) * hour
            if ti in noise:
                itinerary.insert(int(rng.integers(len(itinerary) + 1)), None)
            prev_site = None
            for stop in itinerary:
                if stop is None:
                    # one-off roadside wait somewhere off-site
                    ang, rad = rng.uniform(0, 2 * math.pi), rng.uniform(0, cfg.city_radius * 0.9)
                    sx, sy = rad * math.cos(ang), rad * math.sin(ang)
                    dur = rng.uniform(32, 50) * 60.0
                else:
                    site, cell, required = stop
                    if not required and t > late:
                        continue
                    sx, sy = _site_point(rng, cell)
                    dur = max(site.stay_mean * rng.uniform(0.85, 1.15), 31.0) * 60.0
                if stop is not None and stop[0] is prev_site:
                    # leave the site between two back-to-back visits so
                    # the two stays are not merged into one
                    ang = rng.uniform(0, 2 * math.pi)
                    wx, wy = cx + 1000.0 * math.cos(ang), cy + 1000.0 * math.sin(ang)
                    t = w.move(t, cx, cy, wx, wy)
                    w.point(t, wx, wy)
                    cx, cy = wx, wy
                prev_site = None if stop is None else stop[0]
                t = w.move(t, cx, cy, sx, sy)
                w.stay(t, t + dur, sx, sy)
                t += dur
                cx, cy = sx, sy
            t = w.move(t, cx, cy, hx, hy)
            free_at[tid] = t
    for tid, *_ in trucks:
        hx, hy = home_xy[tid]
        writers[tid].stay(free_at[tid], max(t_end, free_at[tid] + 60.0), hx, hy)
    out = {}
    for tid, *_ in trucks:
        t, x, y = writers[tid].arrays()
        keep = t <= t_end
        out[tid] = (t[keep], x[keep], y[keep])
    return out


# -- POIs and land cover ---------------------------------------------------


def _centroid(e: PlantedErl) -> tuple[float, float]:
    return float(np.mean([c.center.x for c in e.cells])), float(np.mean([c.center.y for c in e.cells]))


def generate_pois(cfg: SynthConfig, erls: list, rng, patterns: dict) -> tuple[np.ndarray, list]:
    r_km = cfg.city_radius / 1000.0
    expected = 2 * math.pi * POI_DENSITY_CORE * POI_DECAY_KM**2 * (
        1 - math.exp(-r_km / POI_DECAY_KM) * (1 + r_km / POI_DECAY_KM)
    )
    n = int(rng.poisson(expected))
    # radius density proportional to r * exp(-r / decay): Gamma(2, decay), truncated
    r = rng.gamma(2.0, POI_DECAY_KM, size=3 * n)
    r = r[r < r_km][:n] * 1000.0
    a = rng.uniform(0, 2 * math.pi, size=len(r))
    xy = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    names = list(POI_MIX)
    probs = np.array(list(POI_MIX.values()))
    cats = [names[i] for i in rng.choice(len(names), size=len(xy), p=probs / probs.sum())]
    # some sites (quarries, mixing stations) sit in sparsely developed land
    keep = np.ones(len(xy), dtype=bool)
    for e in erls:
        if e.poi_thin <= 0:
            continue
        cx, cy = _centroid(e)
        near = np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) < 1300.0
        keep &= ~(near & (rng.random(len(xy)) < e.poi_thin))
    xy = xy[keep]
    cats = [c for c, k in zip(cats, keep) if k]
    extra_xy, extra_cat = [], []
    for e in erls:
        mix = patterns[e.subtype].cluster_mix
        k = e.poi_cluster
        if not mix or k == 0:
            continue
        cx, cy = _centroid(e)
        rr = 700.0 * np.sqrt(rng.random(k))
        aa = rng.uniform(0, 2 * math.pi, size=k)
        extra_xy.append(np.stack([cx + rr * np.cos(aa), cy + rr * np.sin(aa)], axis=1))
        mn, mp = [m[0] for m in mix], np.array([m[1] for m in mix])
        extra_cat += [mn[i] for i in rng.choice(len(mn), size=k, p=mp / mp.sum())]
    if extra_xy:
        xy = np.concatenate([xy] + extra_xy)
        cats = cats + extra_cat
    assert all(c in POI_CATEGORIES for c in cats)
    return xy, cats


def _draw_classes(rng, probs: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """One class per row of ``probs`` (rows sum to 1)."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(probs))[:, None]
    idx = np.minimum((u > cum).sum(axis=1), probs.shape[1] - 1)
    return codes[idx]


def generate_raster(cfg: SynthConfig, erls: list, rng) -> LandCoverRaster:
    res = cfg.raster_resolution
    half = cfg.city_radius + 1000.0
    n = int(math.ceil(2 * half / res))
    origin = PlanePoint(-half, -half)
    codes = np.array([DEFAULT_CLASS_CODES[c] for c in LAND_COVER_CLASSES], dtype=np.uint8)
    urban = np.array([URBAN_MIX.get(c, 0.0) for c in LAND_COVER_CLASSES])
    rural = np.array([RURAL_MIX.get(c, 0.0) for c in LAND_COVER_CLASSES])
    grid = np.empty((n, n), dtype=np.uint8)
    xs = origin.x + (np.arange(n) + 0.5) * res
    for r0 in range(0, n, 256):
        ys = origin.y + (np.arange(r0, min(r0 + 256, n)) + 0.5) * res
        rad = np.hypot(xs[None, :], ys[:, None]).ravel()
        u = np.clip((rad - 6000.0) / 8000.0, 0.0, 1.0)[:, None]
        probs = (1 - u) * urban + u * rural
        grid[r0 : r0 + len(ys)] = _draw_classes(rng, probs / probs.sum(axis=1, keepdims=True), codes).reshape(
            len(ys), n
        )
    per_cell = int(round(CELL_SIZE / res))
    for e in erls:
        probs = np.zeros(len(LAND_COVER_CLASSES))
        for share, name in zip(e.cover_mix, SITE_COVER):
            probs[LAND_COVER_CLASSES.index(name)] = share * (1.0 - e.grassland)
        probs[LAND_COVER_CLASSES.index("grassland")] += e.grassland
        probs = probs / probs.sum()
        for c in e.cells:
            col0 = int(round((c.ix * CELL_SIZE - origin.x) / res))
            row0 = int(round((c.iy * CELL_SIZE - origin.y) / res))
            block = _draw_classes(rng, np.tile(probs, (per_cell * per_cell, 1)), codes)
            grid[row0 : row0 + per_cell, col0 : col0 + per_cell] = block.reshape(per_cell, per_cell)
    return LandCoverRaster(origin, res, grid, dict(DEFAULT_CLASS_CODES))


# -- entry point -----------------------------------------------------------


def generate(cfg: SynthConfig = SynthConfig(), center: GeoPoint = GeoPoint(104.0657, 30.6570),
             tz_offset: float = 8.0) -> SynthOutput:
    rng = np.random.default_rng(cfg.seed)
    patterns = patterns_for(cfg)
    erls = plant_erls(cfg, rng, patterns)
    start = dt.date.fromisoformat(cfg.start_date)
    t_origin = dt.datetime(start.year, start.month, start.day, 8, tzinfo=dt.timezone.utc).timestamp()
    t_origin -= tz_offset * 3600.0
    traces = simulate_traces(cfg, erls, rng, t_origin)
    poi_xy, poi_cat = generate_pois(cfg, erls, rng, patterns)
    raster = generate_raster(cfg, erls, rng)
    return SynthOutput(erls, traces, poi_xy, poi_cat, raster, center, cfg)


def write_outputs(out: SynthOutput, out_dir) -> dict:
    """Write every artefact in the formats the pipeline reads."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "traces": out_dir / "traces.csv",
        "pois": out_dir / "pois.csv",
        "raster": out_dir / "landcover.json",
        "registry": out_dir / "registry.json",
        "ground_truth": out_dir / "ground_truth.json",
    }
    with open(files["traces"], "w", encoding="utf-8", newline="") as fh:
        fh.write("truck_id,unix_time,lon,lat\n")
        for tid in sorted(out.traces):
            t, x, y = out.traces[tid]
            lon, lat = unproject_arrays(x, y, out.center)
            fh.writelines(f"{tid},{int(ti)},{lo:.7f},{la:.7f}\n" for ti, lo, la in zip(t, lon, lat))
    lon, lat = unproject_arrays(out.poi_xy[:, 0], out.poi_xy[:, 1], out.center)
    write_pois(files["pois"], lon, lat, out.poi_cat)
    write_raster(out.raster, out_dir / "landcover")
    with open(files["registry"], "w") as fh:
        json.dump(out.registry, fh, indent=1, sort_keys=True)
    with open(files["ground_truth"], "w") as fh:
        json.dump(out.ground_truth, fh, indent=1)
    out.files = {k: str(v) for k, v in files.items()}
    return out.files

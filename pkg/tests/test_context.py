import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erlclass.context import (
    DEFAULT_CLASS_CODES,
    LAND_COVER_CLASSES,
    POI_CATEGORIES,
    LandCoverRaster,
    PoiIndex,
    PoiRecord,
    cover_ratios,
    poi_counts,
    read_pois,
    read_raster,
    write_pois,
    write_raster,
)
from erlclass.errors import DataError
from erlclass.geo import CELL_SIZE, GeoPoint, GridCell, PlanePoint, project_arrays
from erlclass.trajectory import Erl

CODES = DEFAULT_CLASS_CODES


def filled(name, shape=(20, 20), origin=(0.0, 0.0), res=20.0):
    return LandCoverRaster(PlanePoint(*origin), res, np.full(shape, CODES[name], np.uint8), dict(CODES))


def test_all_tree_cover():
    r = cover_ratios(Erl.from_cells([GridCell(0, 0)]), filled("tree_cover"))
    assert r.as_dict()["tree_cover"] == 1.0
    assert sum(r.ratios) == 1.0 and not r.all_nodata


def test_half_grassland_half_water():
    codes = np.full((10, 20), CODES["grassland"], np.uint8)
    codes[:, 10:] = CODES["water"]
    raster = LandCoverRaster(PlanePoint(0, 0), 20.0, codes, dict(CODES))
    r = cover_ratios(Erl.from_cells([GridCell(0, 0), GridCell(1, 0)]), raster).as_dict()
    assert r["grassland"] == pytest.approx(0.5, abs=1e-12)
    assert r["water"] == pytest.approx(0.5, abs=1e-12)


def test_outside_raster_is_all_nodata():
    r = cover_ratios(Erl.from_cells([GridCell(50, 50)]), filled("building"))
    assert r.all_nodata and not r.ratios.any()


def test_partial_coverage_keeps_missing_in_denominator():
    # raster covers the western half of cell (0, 0) only
    r = cover_ratios(Erl.from_cells([GridCell(0, 0)]), filled("cropland", shape=(10, 5)))
    assert r.as_dict()["cropland"] == pytest.approx(0.5)


def pixel_scan(erl, raster):
    """Visit every pixel, locate its centre, and tally the ones inside the ERL."""
    cells = set(erl.cells)
    inv = {v: k for k, v in raster.class_codes.items()}
    counts = dict.fromkeys(LAND_COVER_CLASSES, 0)
    inside = 0
    for r in range(raster.height):
        for c in range(raster.width):
            cx = raster.origin.x + (c + 0.5) * raster.resolution
            cy = raster.origin.y + (r + 0.5) * raster.resolution
            if GridCell(math.floor(cx / CELL_SIZE), math.floor(cy / CELL_SIZE)) in cells:
                inside += 1
                name = inv.get(int(raster.codes[r, c]))
                if name in counts:
                    counts[name] += 1
    return np.array([counts[n] / inside for n in LAND_COVER_CLASSES])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([10.0, 20.0, 25.0, 40.0]))
def test_ratios_match_pixel_scan(seed, res):
    rng = np.random.default_rng(seed)
    palette = np.array(list(CODES.values()), dtype=np.uint8)
    n = int(round(800 / res))
    codes = palette[rng.integers(len(palette), size=(n, n))]
    raster = LandCoverRaster(PlanePoint(-200.0, -200.0), res, codes, dict(CODES))
    start = GridCell(int(rng.integers(-1, 2)), int(rng.integers(-1, 2)))
    cells = {start}
    while len(cells) < 3:
        c = list(cells)[int(rng.integers(len(cells)))]
        dx, dy = [(1, 0), (-1, 0), (0, 1), (0, -1)][int(rng.integers(4))]
        cells.add(GridCell(max(-1, min(1, c.ix + dx)), max(-1, min(1, c.iy + dy))))
    erl = Erl.from_cells(cells)
    np.testing.assert_allclose(cover_ratios(erl, raster).ratios, pixel_scan(erl, raster), atol=1e-12)


@pytest.mark.parametrize("fmt", ["binary", "ascii"])
def test_raster_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(0)
    raster = LandCoverRaster(PlanePoint(-10.0, 5.0), 20.0, rng.integers(1, 9, size=(7, 9)).astype(np.uint8),
                             dict(CODES))
    _, meta = write_raster(raster, tmp_path / "lc", fmt)
    back = read_raster(meta)
    np.testing.assert_array_equal(back.codes, raster.codes)
    assert (back.origin, back.resolution, back.class_codes) == (raster.origin, raster.resolution, raster.class_codes)


def test_raster_bad_sidecar(tmp_path):
    (tmp_path / "lc.json").write_text("{}")
    with pytest.raises(DataError):
        read_raster(tmp_path / "lc.json")


# -- POIs ------------------------------------------------------------------


def test_radius_boundary():
    recs = [PoiRecord(PlanePoint(500.0 * math.cos(a), 500.0 * math.sin(a)), "food") for a in (0.0, 1.0, 2.0)]
    recs.append(PoiRecord(PlanePoint(1500.0, 0.0), "food"))
    counts = poi_counts(PlanePoint(0, 0), PoiIndex.from_records(recs))
    assert counts[POI_CATEGORIES.index("food")] == 3
    assert counts[-1] == 3


def test_empty_index():
    counts = poi_counts(PlanePoint(0, 0), PoiIndex())
    assert len(counts) == len(POI_CATEGORIES) + 1 and not counts.any()


def test_unknown_category_rejected():
    with pytest.raises(DataError):
        PoiRecord(PlanePoint(0, 0), "casino")


def test_counts_match_linear_scan():
    rng = np.random.default_rng(7)
    x, y = rng.uniform(-8000, 8000, 10_000), rng.uniform(-8000, 8000, 10_000)
    cat = rng.integers(len(POI_CATEGORIES), size=10_000)
    index = PoiIndex(x, y, cat)
    for _ in range(50):
        c = PlanePoint(*rng.uniform(-9000, 9000, 2))
        radius = float(rng.choice([250.0, 1000.0, 2500.0]))
        inside = (x - c.x) ** 2 + (y - c.y) ** 2 <= radius**2
        want = np.bincount(cat[inside], minlength=len(POI_CATEGORIES))
        got = poi_counts(c, index, radius)
        np.testing.assert_array_equal(got[:-1], want)
        assert got[-1] == inside.sum()


def test_poi_csv_round_trip(tmp_path):
    center = GeoPoint(104.0657, 30.6570)
    lon = [104.07, 104.06, 200.0]
    lat = [30.66, 30.65, 30.0]
    write_pois(tmp_path / "p.csv", lon, lat, ["food", "car_R", "food"])
    with open(tmp_path / "p.csv", "a") as fh:
        fh.write("104.0,30.0,casino\n")
    index, rejected = read_pois(tmp_path / "p.csv", center)
    assert index.size == 2 and rejected == 2
    x, y = project_arrays(lon[0], lat[0], center)
    assert poi_counts(PlanePoint(float(x), float(y)), index, 1.0)[POI_CATEGORIES.index("food")] == 1

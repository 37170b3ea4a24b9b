import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from erlclass.errors import InvalidCoordinate
from erlclass.geo import (
    CELL_SIZE,
    GeoPoint,
    GridCell,
    PlanePoint,
    cell_of,
    cells_of,
    euclid,
    project,
    unproject,
)

CENTER = GeoPoint(104.0657, 30.6570)


def test_center_projects_to_origin():
    p = project(CENTER, CENTER)
    assert (p.x, p.y) == (0.0, 0.0)


def test_east_offset():
    # R * radians(0.01) * cos(30.657 deg), evaluated by hand
    p = project(GeoPoint(CENTER.lon + 0.01, CENTER.lat), CENTER)
    assert p.x == pytest.approx(956.6, abs=0.1)
    assert p.y == 0.0


@pytest.mark.parametrize("center", [CENTER, GeoPoint(0.0, 0.0), GeoPoint(-70.0, -45.0)])
def test_north_offset_independent_of_center(center):
    p = project(GeoPoint(center.lon, center.lat + 0.01), center)
    assert p.x == 0.0
    assert p.y == pytest.approx(1111.95, abs=0.1)


@pytest.mark.parametrize("lon,lat", [(math.nan, 0.0), (0.0, math.inf), (181.0, 0.0), (0.0, -90.5)])
def test_bad_coordinates_rejected(lon, lat):
    with pytest.raises(InvalidCoordinate):
        GeoPoint(lon, lat)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_unproject_inverts_project(dlon, dlat):
    g = GeoPoint(CENTER.lon + dlon, CENTER.lat + dlat)
    back = unproject(project(g, CENTER), CENTER)
    assert back.lon == pytest.approx(g.lon, abs=1e-9)
    assert back.lat == pytest.approx(g.lat, abs=1e-9)


@pytest.mark.parametrize(
    "x,y,cell",
    [(0, 0, (0, 0)), (450, -130, (2, -1)), (199.999, 199.999, (0, 0)), (200, 200, (1, 1))],
)
def test_cell_of(x, y, cell):
    assert cell_of(PlanePoint(x, y)) == GridCell(*cell)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_cell_contains_point(x, y):
    c = cell_of(PlanePoint(x, y))
    assert c.ix * CELL_SIZE <= x < (c.ix + 1) * CELL_SIZE
    assert c.iy * CELL_SIZE <= y < (c.iy + 1) * CELL_SIZE
    ix, iy = cells_of(np.array([x]), np.array([y]))
    assert (ix[0], iy[0]) == (c.ix, c.iy)


@pytest.mark.parametrize(
    "a,b,d", [((0, 0), (0, 0), 0.0), ((300, 100), (0, 0), 316.2278), ((-3, 4), (0, 0), 5.0)]
)
def test_euclid(a, b, d):
    assert euclid(PlanePoint(*a), PlanePoint(*b)) == pytest.approx(d, abs=1e-3)


@given(*(st.floats(-1e5, 1e5) for _ in range(6)))
def test_euclid_triangle_inequality(ax, ay, bx, by, cx, cy):
    a, b, c = PlanePoint(ax, ay), PlanePoint(bx, by), PlanePoint(cx, cy)
    assert euclid(a, c) <= euclid(a, b) + euclid(b, c) + 1e-6
    assert euclid(a, b) == euclid(b, a)

import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erlclass.context import DEFAULT_CLASS_CODES, LandCoverRaster, PoiIndex
from erlclass.errors import DataError
from erlclass.features import (
    FEATURE_NAMES,
    N_FEATURES,
    TRANSPORT_FEATURES,
    FeatureTable,
    assemble,
    build_samples,
    entry_times,
    geographic_features,
    read_feature_table,
    read_registry,
    transport_features,
    write_feature_table,
)
from erlclass.geo import GridCell, PlanePoint
from erlclass.trajectory import Erl, OdNetwork, Shift, StayPoint, assign_erls

H = 3600.0
SHIFT = Shift(dt.date(2023, 5, 1), "D")
S0 = SHIFT.start()


def test_feature_count_and_names():
    assert N_FEATURES == 4 + 8 + 19 + 28 == len(FEATURE_NAMES)
    assert len(set(FEATURE_NAMES)) == N_FEATURES
    for name in ("distance_center", "stay_time", "all_poi", "grassland", "business", "road_fac"):
        assert name in FEATURE_NAMES


def test_bounding_box_row():
    g = geographic_features(Erl.from_cells([GridCell(0, 0), GridCell(1, 0), GridCell(2, 0)]))
    assert g[:3].tolist() == [3, 600, 200]


def test_distance_center_single_cell():
    g = geographic_features(Erl.from_cells([GridCell(0, 0)]), PlanePoint(0, 0))
    assert g[3] == pytest.approx(141.42, abs=0.01)


@given(st.sets(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=30))
def test_bounding_box_holds_all_cells(cells):
    g = geographic_features(Erl.from_cells(GridCell(*c) for c in cells))
    assert g[0] == len(cells) >= 1
    assert g[1] * g[2] >= 200.0**2 * g[0]


def idx(name):
    return TRANSPORT_FEATURES.index(name)


def test_single_visit_overlap_semantics():
    stay = StayPoint("a", S0 + 1.5 * H, S0 + 4.5 * H, PlanePoint(0, 0))
    v = transport_features([stay], [stay.t_start], 0, S0)
    assert v[idx("flow_2")] == 1 and v[idx("all_flow")] == 1
    assert v[idx("stay_time")] == 10800
    assert [v[idx(f"stay_{t}")] for t in range(1, 13)] == [0, 1, 1, 1, 1] + [0] * 7
    assert v[idx("all_stay")] == 4


def test_no_activity_is_zero():
    v = transport_features([], [], 0, S0)
    assert v.shape == (28,) and not v.any()


def replay(stays, entries, degree, s0):
    """Event-log replay: each stay marks the slots it touches, each arrival its slot."""
    log = {}
    for s in stays:
        first = max(0, math.floor((s.t_start - s0) / H))
        last = min(11, math.ceil((s.t_end - s0) / H) - 1)
        for slot in range(first, last + 1):
            log[f"stay_{slot + 1}"] = log.get(f"stay_{slot + 1}", 0) + 1
    for t in entries:
        slot = math.floor((t - s0) / H)
        if 0 <= slot < 12:
            log[f"flow_{slot + 1}"] = log.get(f"flow_{slot + 1}", 0) + 1
    out = dict.fromkeys(TRANSPORT_FEATURES, 0.0)
    out.update(log)
    out["all_stay"] = sum(log.get(f"stay_{t}", 0) for t in range(1, 13))
    out["all_flow"] = sum(log.get(f"flow_{t}", 0) for t in range(1, 13))
    out["degree"] = degree
    out["stay_time"] = sum(s.t_end - s.t_start for s in stays) / len(stays) if stays else 0.0
    return np.array([out[n] for n in TRANSPORT_FEATURES])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_transport_matches_replay(seed):
    rng = np.random.default_rng(seed)
    stays = []
    for _ in range(int(rng.integers(0, 8))):
        a = S0 + rng.uniform(-3, 12) * H
        stays.append(StayPoint("a", a, a + rng.uniform(0.5, 6) * H, PlanePoint(0, 0)))
    entries = [s.t_start for s in stays if rng.random() < 0.7]
    deg = int(rng.integers(0, 5))
    np.testing.assert_allclose(transport_features(stays, entries, deg, S0), replay(stays, entries, deg, S0))


def test_entries_need_a_change_of_erl():
    p = PlanePoint(0, 0)
    stays = [StayPoint("a", 0, 1, p), StayPoint("a", 10, 11, p), StayPoint("a", 20, 21, p), StayPoint("b", 5, 6, p)]
    assert entry_times(stays, ["A", "A", "B", "A"]) == [True, False, True, True]


def _world():
    codes = np.full((40, 40), DEFAULT_CLASS_CODES["grassland"], np.uint8)
    raster = LandCoverRaster(PlanePoint(0, 0), 20.0, codes, dict(DEFAULT_CLASS_CODES))
    erls = [Erl.from_cells([GridCell(0, 0)]), Erl.from_cells([GridCell(3, 3)])]
    stays = []
    for d in range(3):
        for k, e in enumerate(erls):
            t = S0 + d * 86400 + (1 + 3 * k) * H
            stays.append(StayPoint("a", t, t + H, e.centroid))
    index = PoiIndex([100.0, 700.0], [100.0, 700.0], [0, 1])
    return erls, stays, raster, index


def test_assemble_unregistered_is_unlabeled():
    erls, stays, raster, index = _world()
    s = assemble(erls[0], SHIFT, raster, index, OdNetwork(SHIFT), stays[:1], {})
    assert s.label is None and s.features.shape == (N_FEATURES,)
    assert s.features[FEATURE_NAMES.index("grassland")] == 1.0


def test_build_samples_deterministic_and_labeled():
    erls, stays, raster, index = _world()
    reg = {erls[0].erl_id: "ER"}
    a = build_samples(erls, stays, assign_erls(stays, erls), raster, index, reg)
    b = build_samples(erls, stays, assign_erls(stays, erls), raster, index, reg)
    assert len(a) == 6
    assert [(s.shift, s.erl_id) for s in a] == sorted((s.shift, s.erl_id) for s in a)
    for x, y in zip(a, b):
        assert x.features.tobytes() == y.features.tobytes()
    assert {s.label for s in a} == {"ER", None}
    # each day one trip A -> B, so both ERLs have degree 1
    assert all(s.features[FEATURE_NAMES.index("degree")] == 1 for s in a)


def test_feature_table_round_trip(tmp_path):
    erls, stays, raster, index = _world()
    table = FeatureTable.from_samples(build_samples(erls, stays, assign_erls(stays, erls), raster, index,
                                                    {erls[1].erl_id: "PM"}))
    write_feature_table(table, tmp_path / "f.csv")
    back = read_feature_table(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.X, table.X)
    assert back.erl_ids == table.erl_ids and back.shifts == table.shifts and back.labels == table.labels
    assert len(back.labeled()) == 3


def test_registry_rejects_unknown_label(tmp_path):
    (tmp_path / "r.json").write_text('{"a": "XX"}')
    with pytest.raises(DataError):
        read_registry(tmp_path / "r.json")

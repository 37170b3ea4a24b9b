import dataclasses
import json
from collections import defaultdict

import numpy as np
import pytest

from erlclass.config import SynthConfig
from erlclass.context import cover_ratios
from erlclass.errors import ConfigError, GenerationFailed
from erlclass.geo import GridCell
from erlclass.trajectory import Erl, assign_erls, detect_stay_points, extract_erls, read_traces
from erlclass.synth import PATTERNS, generate, patterns_for, plant_erls, write_outputs

from conftest import SMALL_SYNTH


def test_same_seed_byte_identical(tmp_path, small_synth):
    write_outputs(small_synth, tmp_path / "a")
    write_outputs(generate(SMALL_SYNTH), tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["ground_truth.json", "landcover.bin", "landcover.json", "pois.csv", "registry.json",
                     "traces.csv"]
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_other_seed_differs(small_synth):
    other = generate(dataclasses.replace(SMALL_SYNTH, seed=8))
    assert [e.erl_id for e in other.erls] != [e.erl_id for e in small_synth.erls]


def test_count_contract():
    cfg = SynthConfig(n_er=100, n_mr=20, n_pm=30, n_unlabeled=5)
    erls = plant_erls(cfg, np.random.default_rng(0))
    labeled = [e.category for e in erls if e.labeled]
    assert len(labeled) == 150
    assert (labeled.count("ER"), labeled.count("MR"), labeled.count("PM")) == (100, 20, 30)
    assert sum(not e.labeled for e in erls) == 5


def test_sites_never_touch():
    erls = plant_erls(SynthConfig(), np.random.default_rng(1))
    owner = {}
    for k, e in enumerate(erls):
        for c in e.cells:
            assert c not in owner
            owner[c] = k
    for k, e in enumerate(erls):
        for c in e.cells:
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    assert owner.get(GridCell(c.ix + dx, c.iy + dy), k) == k


def test_crowded_city_fails():
    cfg = SynthConfig(n_er=400, n_mr=0, n_pm=0, n_unlabeled=0, city_radius=3000.0, max_retries=300)
    with pytest.raises(GenerationFailed):
        plant_erls(cfg, np.random.default_rng(0))


def test_pattern_overrides():
    cfg = SynthConfig(patterns={"mixing": {"stay_min": [60, 61]}})
    assert patterns_for(cfg)["mixing"].stay_min == (60, 61)
    assert patterns_for(cfg)["dumping"] == PATTERNS["dumping"]
    with pytest.raises(ConfigError):
        patterns_for(SynthConfig(patterns={"quarry": {}}))
    with pytest.raises(ConfigError):
        patterns_for(SynthConfig(patterns={"mixing": {"colour": 1}}))


@pytest.fixture(scope="module")
def recovered(tmp_path_factory, small_synth):
    d = tmp_path_factory.mktemp("synth")
    files = write_outputs(small_synth, d)
    res = read_traces(files["traces"])
    stays = []
    for tid in sorted(res.traces):
        stays.extend(detect_stay_points(res.traces[tid], small_synth.center))
    return stays, extract_erls(stays), res


def test_traces_are_clean(recovered):
    _, _, res = recovered
    assert res.reject_count == 0 and res.n_duplicates == 0


def test_planted_erls_recovered(recovered, small_synth):
    _, found, _ = recovered
    found_ids = {e.erl_id for e in found}
    hits = sum(e.erl_id in found_ids for e in small_synth.erls)
    assert hits >= 0.95 * len(small_synth.erls)


def test_category_signatures(recovered, small_synth):
    stays, _, _ = recovered
    planted = [Erl.from_cells(e.cells) for e in small_synth.erls]
    subtype = {e.erl_id: e.subtype for e in small_synth.erls}
    durations = defaultdict(list)
    for s, eid in zip(stays, assign_erls(stays, planted)):
        if eid is not None:
            durations[subtype[eid]].append(s.duration)
    mean = {k: np.mean(v) for k, v in durations.items()}
    assert mean["parking"] > mean["repair"] > mean["construction"] > mean["mixing"] > mean["dumping"]
    grass = defaultdict(list)
    for e, p in zip(small_synth.erls, planted):
        grass[e.subtype].append(cover_ratios(p, small_synth.raster).as_dict()["grassland"])
    assert np.mean(grass["dumping"]) > np.mean(grass["mixing"]) > np.mean(grass["construction"])


def test_registry_matches_ground_truth(tmp_path, small_synth):
    files = write_outputs(small_synth, tmp_path)
    reg = json.loads(open(files["registry"]).read())
    truth = json.loads(open(files["ground_truth"]).read())
    assert reg == {g["erl_id"]: g["category"] for g in truth if g["labeled"]}
    assert len(reg) == SMALL_SYNTH.n_er + SMALL_SYNTH.n_mr + SMALL_SYNTH.n_pm

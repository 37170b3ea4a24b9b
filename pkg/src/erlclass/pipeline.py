"""Grouped splitting, repeated model comparison, risk ranking and the
stage runners the CLI strings together."""
from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .context import read_pois, read_raster
from .errors import DataError, ErlError, ModelError, StratificationImpossible
from .explain import backward_eliminate, default_batches, importance, tree_shap
from .features import CLASSES, FeatureTable, build_samples, read_feature_table, read_registry, write_feature_table
from .geo import GeoPoint
from .metrics import METRIC_NAMES, evaluate
from .models import MODEL_NAMES, fit_model, load_model, save_model
from .trajectory import Erl, assign_erls, detect_stay_points, extract_erls, read_stays, read_traces, write_stays

PARTITIONS = ("train", "val", "test")


# -- grouped split ---------------------------------------------------------


def largest_remainder(n: int, fractions) -> list[int]:
    """Integer sizes summing to ``n``; leftover units go to the largest
    fractional parts, earlier partitions first on ties."""
    quotas = [n * f for f in fractions]
    sizes = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def _stratified_sizes(class_counts: list[int], fractions) -> np.ndarray:
    """Per-class partition sizes whose column totals equal the overall
    largest-remainder sizes, with every class present in every partition
    where a swap can arrange it."""
    k, p = len(class_counts), len(fractions)
    totals = largest_remainder(sum(class_counts), fractions)
    quota = np.array([[n * f for f in fractions] for n in class_counts])
    sizes = np.floor(quota).astype(int)
    deficit = np.array(totals) - sizes.sum(axis=0)
    frac = quota - sizes
    for c in range(k):
        for _ in range(class_counts[c] - sizes[c].sum()):
            open_cols = [j for j in range(p) if deficit[j] > 0]
            j = max(open_cols, key=lambda j: (frac[c, j], -j))
            sizes[c, j] += 1
            deficit[j] -= 1
            frac[c, j] = -1.0
    # fill empty cells by swapping one unit with another class
    for c in range(k):
        for j in range(p):
            if sizes[c, j] > 0 or class_counts[c] < p:
                continue
            for q in sorted(range(p), key=lambda q: -sizes[c, q]):
                if sizes[c, q] < 2:
                    continue
                donors = [d for d in range(k) if d != c and sizes[d, j] >= 2]
                if donors:
                    d = max(donors, key=lambda d: sizes[d, j])
                    sizes[c, q] -= 1
                    sizes[c, j] += 1
                    sizes[d, j] -= 1
                    sizes[d, q] += 1
                    break
    return sizes


def grouped_split(registry: dict, fractions=(0.7, 0.1, 0.2), seed: int = 0) -> dict[str, list[str]]:
    """Partition labeled ERLs (erl_id -> label) into train/val/test.

    Stratified by label; if any present class has fewer ERLs than there
    are partitions, warns StratificationImpossible and splits unstratified.
    """
    rng = np.random.default_rng(seed)
    ids = sorted(registry)
    by_class = {c: [e for e in ids if registry[e] == c] for c in CLASSES}
    by_class = {c: v for c, v in by_class.items() if v}
    out = {p: [] for p in PARTITIONS}
    if any(len(v) < len(fractions) for v in by_class.values()):
        warnings.warn(
            "a class has too few ERLs to appear in every partition; splitting unstratified",
            StratificationImpossible,
            stacklevel=2,
        )
        perm = [ids[i] for i in rng.permutation(len(ids))]
        start = 0
        for p, size in zip(PARTITIONS, largest_remainder(len(ids), fractions)):
            out[p] = sorted(perm[start : start + size])
            start += size
        return out
    classes = list(by_class)
    sizes = _stratified_sizes([len(by_class[c]) for c in classes], fractions)
    for ci, c in enumerate(classes):
        members = by_class[c]
        perm = [members[i] for i in rng.permutation(len(members))]
        start = 0
        for p, size in zip(PARTITIONS, sizes[ci]):
            out[p].extend(perm[start : start + size])
            start += size
    return {p: sorted(v) for p, v in out.items()}


def split_tables(table: FeatureTable, split: dict) -> dict[str, FeatureTable]:
    return {p: table.subset(table.rows_for(split[p])) for p in PARTITIONS}


def registry_of(table: FeatureTable) -> dict:
    """erl_id -> label for the labeled ERLs present in the table."""
    return {e: lab for e, lab in zip(table.erl_ids, table.labels) if lab is not None}


# -- comparison ------------------------------------------------------------


@dataclass
class CompareReport:
    """Per model, per metric, the values over repetitions."""

    runs: dict  # model -> metric -> list of values
    errors: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for model, per in self.runs.items():
            out[model] = {
                m: {"mean": float(np.mean(v)), "std": float(np.std(v))} for m, v in per.items()
            }
        return out

    def to_json(self) -> dict:
        return {"summary": self.summary(), "runs": self.runs, "errors": self.errors}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "metric", "mean", "std"])
            for model, per in self.summary().items():
                for m in METRIC_NAMES:
                    w.writerow([model, m, repr(per[m]["mean"]), repr(per[m]["std"])])


def fit_on_split(name: str, parts: dict, cfg: RunConfig, seed: int):
    val = parts["val"]
    kw = {}
    if name == "mlp" and len(val):
        kw = {"X_val": val.X, "y_val": val.y()}
    return fit_model(name, parts["train"].X, parts["train"].y(), cfg.class_weights.as_array(), cfg.models, seed, **kw)


def run_compare(table: FeatureTable, cfg: RunConfig, models=MODEL_NAMES) -> CompareReport:
    """Fit every model on the same grouped split per repetition.

    Repetition r re-splits with seed + r and seeds the models with seed + r;
    metrics come from the test partition.
    """
    labeled = table.labeled()
    registry = registry_of(labeled)
    report = CompareReport({m: {k: [] for k in METRIC_NAMES} for m in models})
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        parts = split_tables(labeled, grouped_split(registry, cfg.split, seed))
        for name in models:
            if name in report.errors:
                continue
            try:
                model = fit_on_split(name, parts, cfg, seed)
                rep = evaluate(model, parts["test"].X, parts["test"].y(), cfg.auroc)
            except ModelError as exc:
                report.errors[name] = str(exc)
                continue
            for k, v in rep.values().items():
                report.runs[name][k].append(float(v))
    for name in report.errors:
        report.runs.pop(name, None)
    return report


# -- risk ranking ----------------------------------------------------------


@dataclass(frozen=True)
class RiskScore:
    erl_id: str
    shift: str
    score: float
    components: dict


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def rank_risk(rows, risk_cfg) -> list[RiskScore]:
    """Rank one shift's samples.

    ``rows`` are (erl_id, shift, predicted class, degree, all_flow,
    stay_time). Components are min-max normalised over the rows; equal
    minimum and maximum give 0.
    """
    rows = list(rows)
    if not rows:
        return []
    cat = np.array([risk_cfg.cat_weight[r[2]] for r in rows], dtype=float)
    deg, flow, stay = (_minmax(np.array([r[i] for r in rows], dtype=float)) for i in (3, 4, 5))
    parts = {
        "category": risk_cfg.w_cat * cat,
        "degree": risk_cfg.w_deg * deg,
        "all_flow": risk_cfg.w_flow * flow,
        "stay_time": risk_cfg.w_stay * stay,
    }
    total = sum(parts.values())
    scores = [
        RiskScore(r[0], str(r[1]), float(total[i]), {k: float(v[i]) for k, v in parts.items()})
        for i, r in enumerate(rows)
    ]
    return sorted(scores, key=lambda s: (-s.score, s.erl_id))


def risk_rows(table: FeatureTable, predicted) -> dict:
    """shift -> rank_risk input rows."""
    out: dict = {}
    deg, flow, stay = (table.column(c) for c in ("degree", "all_flow", "stay_time"))
    for i, (eid, sh) in enumerate(zip(table.erl_ids, table.shifts)):
        out.setdefault(sh, []).append((eid, sh, CLASSES[int(predicted[i])], deg[i], flow[i], stay[i]))
    return out


# -- stage runners ---------------------------------------------------------


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    """Artifact layout under one output directory, plus a content-hash
    manifest so a stage whose inputs and parameters are unchanged is
    skipped."""

    def __init__(self, root, cfg: RunConfig):
        self.root = Path(root)
        self.cfg = cfg
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        self.manifest = json.loads(self.manifest_path.read_text()) if self.manifest_path.exists() else {}

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def data(self, key: str) -> Path:
        given = getattr(self.cfg.paths, key)
        if given:
            return Path(given)
        default = {"traces": "traces.csv", "pois": "pois.csv", "raster": "landcover.json", "registry": "registry.json"}
        return self.root / "data" / default[key]

    def _key(self, inputs, params) -> str:
        h = hashlib.sha256()
        for p in inputs:
            if not Path(p).exists():
                raise DataError(f"missing input {p}")
            h.update(str(p).encode() + b"\0" + file_digest(p).encode())
        h.update(json.dumps(params, sort_keys=True, default=str).encode())
        return h.hexdigest()

    def run(self, stage: str, inputs, params, outputs, fn) -> bool:
        """Run ``fn`` unless the manifest shows identical inputs and intact
        outputs. Returns True when the stage ran."""
        key = self._key(inputs, params)
        entry = self.manifest.get(stage)
        if entry and entry["key"] == key and all(
            Path(p).exists() and file_digest(p) == d for p, d in entry["outputs"].items()
        ):
            return False
        fn()
        self.manifest[stage] = {"key": key, "outputs": {str(p): file_digest(p) for p in outputs}}
        self.manifest_path.write_text(json.dumps(self.manifest, indent=1, sort_keys=True))
        return True


def _center(cfg: RunConfig) -> GeoPoint:
    return GeoPoint(cfg.center.lon, cfg.center.lat)


def stage_synth(ws: Workspace) -> dict:
    from .synth import generate, write_outputs

    out_dir = ws.root / "data"
    produced = {}

    def go():
        out = generate(ws.cfg.synth, _center(ws.cfg), ws.cfg.tz_offset)
        produced.update(write_outputs(out, out_dir))

    outputs = [out_dir / n for n in ("traces.csv", "pois.csv", "landcover.json", "landcover.bin",
                                     "registry.json", "ground_truth.json")]
    ws.run("synth", [], {"synth": ws.cfg.synth, "center": ws.cfg.center, "tz": ws.cfg.tz_offset}, outputs, go)
    return {p.name: str(p) for p in outputs}


def stage_ingest(ws: Workspace) -> Path:
    traces = ws.data("traces")
    stays_path, report_path = ws.path("stays.csv"), ws.path("ingest_report.json")

    def go():
        res = read_traces(traces)
        stays = []
        for tid in sorted(res.traces):
            stays.extend(detect_stay_points(res.traces[tid], _center(ws.cfg), ws.cfg.stay.d_max, ws.cfg.stay.t_min))
        write_stays(stays, stays_path)
        report = res.report()
        report["n_stays"] = len(stays)
        report_path.write_text(json.dumps(report, indent=1, sort_keys=True))

    ws.run("ingest", [traces], {"stay": ws.cfg.stay, "center": ws.cfg.center}, [stays_path, report_path], go)
    return stays_path


def stage_extract(ws: Workspace) -> Path:
    stays_path, erls_path = ws.path("stays.csv"), ws.path("erls.json")

    def go():
        erls = extract_erls(read_stays(stays_path), ws.cfg.erl.min_days, ws.cfg.erl.min_stays_per_day,
                            ws.cfg.tz_offset)
        erls_path.write_text(json.dumps([e.to_json() for e in erls], indent=1))

    ws.run("extract-erls", [stays_path], {"erl": ws.cfg.erl, "tz": ws.cfg.tz_offset}, [erls_path], go)
    return erls_path


def read_erls(path) -> list[Erl]:
    return [Erl.from_json(d) for d in json.loads(Path(path).read_text())]


def stage_featurize(ws: Workspace) -> Path:
    stays_path, erls_path = ws.path("stays.csv"), ws.path("erls.json")
    raster_path, pois_path, registry_path = ws.data("raster"), ws.data("pois"), ws.data("registry")
    features_path = ws.path("features.csv")
    raster_bin = Path(raster_path).with_suffix(".bin")
    inputs = [stays_path, erls_path, raster_path, pois_path, registry_path]
    if raster_bin.exists():
        inputs.append(raster_bin)

    def go():
        stays = read_stays(stays_path)
        erls = read_erls(erls_path)
        raster = read_raster(raster_path)
        index, _ = read_pois(pois_path, _center(ws.cfg))
        registry = read_registry(registry_path)
        samples = build_samples(erls, stays, assign_erls(stays, erls), raster, index, registry,
                                ws.cfg.tz_offset, ws.cfg.poi_radius)
        write_feature_table(FeatureTable.from_samples(samples), features_path)

    ws.run("featurize", inputs, {"tz": ws.cfg.tz_offset, "poi_radius": ws.cfg.poi_radius, "center": ws.cfg.center},
           [features_path], go)
    return features_path


def load_features(ws: Workspace) -> FeatureTable:
    path = ws.path("features.csv")
    if not path.exists():
        raise DataError(f"no feature table at {path}; run featurize first")
    return read_feature_table(path)


def stage_split(ws: Workspace) -> dict:
    features_path, split_path = ws.path("features.csv"), ws.path("split.json")

    def go():
        table = load_features(ws).labeled()
        split = grouped_split(registry_of(table), ws.cfg.split, ws.cfg.seed)
        split_path.write_text(json.dumps(split, indent=1))

    ws.run("split", [features_path], {"split": ws.cfg.split, "seed": ws.cfg.seed}, [split_path], go)
    return json.loads(split_path.read_text())


def _parts(ws: Workspace) -> dict:
    table = load_features(ws).labeled()
    split = stage_split(ws)
    return split_tables(table, split)


def stage_train(ws: Workspace, name: str) -> Path:
    model_path = ws.path("models", f"{name}.json")

    stage_split(ws)

    def go():
        save_model(fit_on_split(name, _parts(ws), ws.cfg, ws.cfg.seed), model_path)

    params = {"models": ws.cfg.models, "seed": ws.cfg.seed, "cw": ws.cfg.class_weights}
    ws.run(f"train:{name}", [ws.path("features.csv"), ws.path("split.json")], params, [model_path], go)
    return model_path


def stage_evaluate(ws: Workspace, name: str) -> dict:
    model_path = stage_train(ws, name)
    metrics_path = ws.path("reports", f"metrics_{name}.json")
    cm_path = ws.path("reports", f"confusion_{name}.csv")

    def go():
        test = _parts(ws)["test"]
        rep = evaluate(load_model(model_path), test.X, test.y(), ws.cfg.auroc)
        metrics_path.write_text(json.dumps(rep.to_json(), indent=1, sort_keys=True))
        rep.confusion.to_csv(cm_path)

    ws.run(f"evaluate:{name}", [model_path, ws.path("features.csv"), ws.path("split.json")], {"auroc": ws.cfg.auroc},
           [metrics_path, cm_path], go)
    return json.loads(metrics_path.read_text())


def stage_compare(ws: Workspace, models=MODEL_NAMES) -> dict:
    features_path = ws.path("features.csv")
    json_path, csv_path = ws.path("reports", "compare.json"), ws.path("reports", "compare.csv")

    def go():
        rep = run_compare(load_features(ws), ws.cfg, models)
        json_path.write_text(json.dumps(rep.to_json(), indent=1, sort_keys=True))
        rep.to_csv(csv_path)

    params = {"models": ws.cfg.models, "seed": ws.cfg.seed, "split": ws.cfg.split, "cw": ws.cfg.class_weights,
              "repeats": ws.cfg.repeats, "auroc": ws.cfg.auroc, "which": list(models)}
    ws.run("compare", [features_path], params, [json_path, csv_path], go)
    return json.loads(json_path.read_text())


def explain_rows(ws: Workspace, n: int | None) -> FeatureTable:
    """Held-out rows to explain: test, then validation, then unlabeled samples."""
    table = load_features(ws)
    split = stage_split(ws)
    rows = table.rows_for(split["test"]) + table.rows_for(split["val"])
    rows += [i for i, lab in enumerate(table.labels) if lab is None]
    return table.subset(rows if n is None else rows[:n])


def stage_explain(ws: Workspace, name: str = "rf", n: int | None = None) -> Path:
    model_path = stage_train(ws, name)
    shap_path = ws.path("reports", f"shap_{name}.csv")
    base_path = ws.path("reports", f"shap_base_{name}.json")
    imp_path = ws.path("reports", f"importance_{name}.csv")

    def go():
        rows = explain_rows(ws, n)
        shap = tree_shap(load_model(model_path), rows.X)
        shap.to_csv(shap_path, [f"{e}@{s}" for e, s in zip(rows.erl_ids, rows.shifts)])
        base_path.write_text(json.dumps(shap.base_json(), indent=1, sort_keys=True))
        ranking = importance(shap)
        ranking.to_csv(imp_path)

    ws.run(f"explain:{name}", [model_path, ws.path("features.csv"), ws.path("split.json")], {"n": n},
           [shap_path, base_path, imp_path], go)
    return imp_path


def read_importance(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [r["feature"] for r in rows], [float(r["importance"]) for r in rows]


def stage_simplify(ws: Workspace) -> Path:
    el = ws.cfg.elimination
    imp_path = stage_explain(ws, el.model) if el.batches is None else None
    trace_path = ws.path("reports", "elimination.csv")

    def go():
        parts = _parts(ws)
        if el.batches is None:
            from .explain import ImportanceRanking

            names, vals = read_importance(imp_path)
            batches = default_batches(ImportanceRanking(names, np.array(vals)), el.importance_floor)
        else:
            batches = el.batches
        trace = backward_eliminate(parts["train"], parts["test"], batches, el.model, ws.cfg.class_weights.as_array(),
                                   ws.cfg.models, ws.cfg.seed, parts["val"], ws.cfg.auroc)
        trace.to_csv(trace_path)

    inputs = [ws.path("features.csv"), ws.path("split.json")] + ([imp_path] if imp_path else [])
    ws.run("simplify", inputs, {"elimination": el, "models": ws.cfg.models, "seed": ws.cfg.seed}, [trace_path], go)
    return trace_path


def stage_rank(ws: Workspace, name: str = "rf", shift: str | None = None) -> Path:
    model_path = stage_train(ws, name)
    risk_path = ws.path("reports", "risk.csv")

    def go():
        table = load_features(ws)
        pred = load_model(model_path).predict(table.X)
        groups = risk_rows(table, pred)
        with open(risk_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shift", "rank", "erl_id", "predicted", "score", "category", "degree", "all_flow", "stay_time"])
            pred_of = {(e, str(s)): CLASSES[int(p)] for e, s, p in zip(table.erl_ids, table.shifts, pred)}
            for sh in sorted(groups):
                if shift is not None and str(sh) != shift:
                    continue
                for k, rs in enumerate(rank_risk(groups[sh], ws.cfg.risk), start=1):
                    c = rs.components
                    w.writerow([rs.shift, k, rs.erl_id, pred_of[(rs.erl_id, rs.shift)], repr(rs.score),
                                repr(c["category"]), repr(c["degree"]), repr(c["all_flow"]), repr(c["stay_time"])])

    ws.run("rank", [model_path, ws.path("features.csv")], {"risk": ws.cfg.risk, "shift": shift}, [risk_path], go)
    return risk_path


__all__ = [
    "largest_remainder", "grouped_split", "split_tables", "registry_of", "CompareReport", "run_compare",
    "RiskScore", "rank_risk", "risk_rows", "Workspace", "ErlError",
]

"""Command line: one subcommand per pipeline stage.

Every stage reads and writes under ``--out-dir``; stages whose inputs and
parameters have not changed since their last run are skipped.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline as P
from .config import RunConfig
from .errors import ConfigError, ErlError
from .models import MODEL_NAMES

log = logging.getLogger("erlclass")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erlclass", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON run configuration; unknown keys are rejected")
    ap.add_argument("--seed", type=int, help="base seed; also seeds the synthetic generator")
    ap.add_argument("--out-dir", default="run", help="artifact directory (default: ./run)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate a synthetic city into OUT/data")
    sub.add_parser("ingest", help="clean GPS traces and detect stay points")
    sub.add_parser("extract-erls", help="cluster frequently used cells into ERLs")
    sub.add_parser("featurize", help="build the per (ERL, shift) feature table")
    sub.add_parser("split", help="grouped train/val/test split at the ERL level")
    for name, text in (("train", "fit one model on the training partition"),
                       ("evaluate", "score one model on the test partition")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--model", choices=MODEL_NAMES, default="rf")
    p = sub.add_parser("compare", help="repeated comparison of the four models")
    p.add_argument("--models", nargs="+", choices=MODEL_NAMES, default=list(MODEL_NAMES))
    p = sub.add_parser("explain", help="TreeSHAP attributions and importance ranking")
    p.add_argument("--model", choices=("rf", "gbdt"), default="rf")
    p.add_argument("--n", type=int, default=None, help="explain at most N held-out samples")
    sub.add_parser("simplify", help="backward feature elimination")
    p = sub.add_parser("rank", help="risk ranking per shift")
    p.add_argument("--model", choices=MODEL_NAMES, default="rf")
    p.add_argument("--shift", default=None, help="only this shift, e.g. 2023-05-01D")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        d = cfg.to_dict()
        d["seed"] = args.seed
        d["synth"]["seed"] = args.seed
        cfg = RunConfig.from_dict(d)
    return cfg


def dispatch(args, ws: P.Workspace) -> object:
    cmd = args.command
    if cmd == "synth":
        return P.stage_synth(ws)
    if cmd == "ingest":
        P.stage_ingest(ws)
        return json.loads(ws.path("ingest_report.json").read_text())
    if cmd == "extract-erls":
        return {"erls": len(P.read_erls(P.stage_extract(ws)))}
    if cmd == "featurize":
        return {"samples": len(P.read_feature_table(P.stage_featurize(ws)))}
    if cmd == "split":
        return {k: len(v) for k, v in P.stage_split(ws).items()}
    if cmd == "train":
        return {"model": str(P.stage_train(ws, args.model))}
    if cmd == "evaluate":
        rep = P.stage_evaluate(ws, args.model)
        return {k: rep[k] for k in ("accuracy", "precision", "recall", "macro_f1", "auroc")}
    if cmd == "compare":
        return P.stage_compare(ws, tuple(args.models))["summary"]
    if cmd == "explain":
        names, vals = P.read_importance(P.stage_explain(ws, args.model, args.n))
        return dict(list(zip(names, vals))[:10])
    if cmd == "simplify":
        return {"trace": str(P.stage_simplify(ws))}
    if cmd == "rank":
        return {"risk": str(P.stage_rank(ws, args.model, args.shift))}
    raise ConfigError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        ws = P.Workspace(args.out_dir, cfg)
        out = dispatch(args, ws)
    except ErlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(out, indent=1, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())

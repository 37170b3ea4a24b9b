"""Backward elimination on a finished run, least important features first.

    python scripts/elimination_curve.py runs/seed42 [--model rf] [--keep distance_center stay_time ...]

Without --keep the batches come from the run's SHAP ranking (all features
under the importance floor first, then one at a time). With --keep every
other feature goes in the first batch and the kept ones follow one at a
time, so the curve has a step with exactly the kept set.
"""
import argparse

import numpy as np

from erlclass import pipeline as P
from erlclass.config import RunConfig
from erlclass.explain import ImportanceRanking, backward_eliminate, default_batches
from erlclass.features import FEATURE_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--model", default="rf", choices=("lr", "mlp", "gbdt", "rf"))
    ap.add_argument("--keep", nargs="+", default=None)
    args = ap.parse_args()

    cfg = RunConfig(seed=args.seed)
    ws = P.Workspace(args.run_dir, cfg)
    parts = P.split_tables(P.load_features(ws).labeled(), P.stage_split(ws))
    if args.keep:
        batches = [[f for f in FEATURE_NAMES if f not in args.keep]] + [[f] for f in args.keep]
    else:
        names, vals = P.read_importance(P.stage_explain(ws, "rf"))
        batches = default_batches(ImportanceRanking(names, np.array(vals)), cfg.elimination.importance_floor)
    trace = backward_eliminate(parts["train"], parts["test"], batches, args.model, cfg.class_weights.as_array(),
                               cfg.models, cfg.seed, parts["val"], cfg.auroc)
    print(f"{'left':>5s} {'acc':>7s} {'macroF1':>8s} {'auroc':>7s}  removed")
    for s in trace.steps:
        r = s.report
        removed = ",".join(s.removed) if len(s.removed) < 4 else f"{len(s.removed)} features"
        print(f"{s.n_remaining:5d} {r.accuracy:7.3f} {r.macro_f1:8.3f} {r.auroc:7.3f}  {removed}")


if __name__ == "__main__":
    main()

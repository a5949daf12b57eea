"""5-fold cross-validation on the bundled clinical datasets.

    python scripts/reproduce_datasets.py --restarts 5 [--only whas500]

Writes one aggregate line per dataset; ``--lambda-beta`` and ``--folds`` are
exposed for sensitivity runs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from softsurv.cli import aggregate, cv_runs
from softsurv.data import bundled, load_csv
from softsurv.metrics import censoring_km, ibs, kaplan_meier
from softsurv.nodec import TrainConfig

RUNS = {  # name -> (depth, family)
    "whas500": (2, "llog"),
    "veterans": (1, "llog"),
    "gbsg2": (2, "spline-po"),
}


def km_baseline_ibs(raw, plan_seed, folds):
    """Test IBS of the covariate-free training-fold KM curve."""
    from softsurv.data import kfold

    plan = kfold(raw, folds, plan_seed)
    vals = []
    for f in range(folds):
        tr, te = plan.train_test(f)
        km = kaplan_meier(raw.times[tr], raw.events[tr])
        pred = lambda ts, m=len(te): np.tile(km(np.atleast_1d(ts)), (m, 1))
        vals.append(ibs(pred, raw.times[te], raw.events[te], censoring_km(raw.times[te], raw.events[te])))
    return float(np.mean(vals))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--restarts", type=int, default=5)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lambda-beta", type=float, default=4.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--only", choices=sorted(RUNS))
    args = ap.parse_args()
    for name, (depth, family) in RUNS.items():
        if args.only and name != args.only:
            continue
        raw = load_csv(bundled(name), "time", "event")
        cfg = TrainConfig(depth=depth, restarts=args.restarts, seed=args.seed, lam_beta=args.lambda_beta)
        t0 = time.perf_counter()
        agg = aggregate(cv_runs(raw, family, cfg, args.folds, jobs=args.jobs))
        print(f"{name:9s} D={depth} {family:9s} test C_H {agg['test_c_harrell']:.3f} "
              f"C_U {agg['test_c_uno']:.3f} CD-AUC {agg['test_cd_auc']:.3f} IBS {agg['test_ibs']:.3f} "
              f"(KM baseline IBS {km_baseline_ibs(raw, args.seed, args.folds):.3f}) "
              f"{time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

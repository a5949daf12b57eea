"""Command-line front end: ``softsurv {train,predict,evaluate,cv,fairness-sweep}``.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
``SST_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import SurvivalDataset, kfold, load_csv, load_features, select_features
from .errors import (
    DegenerateCensoring,
    DegenerateKM,
    EmptyRestrictedSet,
    NoComparablePairs,
    NonFinite,
    NonFiniteAtStart,
    NonPositiveDerivative,
    SSTError,
    UndefinedAtTime,
    MissingGroupColumn,
)
from .leafmodel import FAMILIES
from .metrics import MetricReport, evaluate, gini_leaf_balance
from .model import SSTModel, fit, internal_dataset
from .nodec import TrainConfig
from .objective import ObjectiveContext, fairness_penalty

log = logging.getLogger("softsurv")

NUMERIC_ERRORS = (NonFinite, NonFiniteAtStart, NonPositiveDerivative, EmptyRestrictedSet, DegenerateKM,
                  DegenerateCensoring, NoComparablePairs, UndefinedAtTime, FloatingPointError)
METRICS = ("c_harrell", "c_uno", "cd_auc", "ibs")
RHO_STEPS = (0, 1, 5, 10, 15, 20)


@dataclass
class RunManifest:
    command: str
    config: dict
    dataset_fingerprint: str
    seeds: list
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


# core routines (importable) -------------------------------------------------


def model_metrics(model: SSTModel, ds: SurvivalDataset) -> MetricReport:
    """Metrics of ``model`` on raw (unpreprocessed) labeled data; adds the
    fairness penalty and leaf balance when ``ds`` carries a group column."""
    X = model.prepare(ds.features)
    rep = evaluate(model.survival_fn(X), ds.times, ds.events)
    if ds.group is not None:
        d = internal_dataset(replace(ds, features=X), model.time_scale)
        ctx = ObjectiveContext.from_dataset(d, model.spec)
        rep.fairness_penalty = fairness_penalty(ctx, model.params)
        rep.gini_simple, rep.gini_weighted = gini_leaf_balance(model.leaves(X), ds.group)
    return rep


def _cv_task(args):
    raw, family, cfg, knots, fold, restart, train_idx, test_idx = args
    run_cfg = replace(cfg, restarts=1, seed=run_seed(cfg.seed, fold, restart))
    model, _ = fit(raw.subset(train_idx), family, run_cfg, knots)
    tr = model_metrics(model, raw.subset(train_idx))
    te = model_metrics(model, raw.subset(test_idx))
    return fold, restart, tr, te


def run_seed(seed: int, fold: int, restart: int) -> int:
    return seed + 1000 * fold + restart


def cv_runs(raw: SurvivalDataset, family: str, cfg: TrainConfig, folds: int, knots: int = 2,
            jobs: int = 1) -> list[dict]:
    """One row per (fold, restart): a single initial solution trained on the
    training folds, scored on train and test.  Rows are sorted by (fold, restart)."""
    plan = kfold(raw, folds, cfg.seed)
    tasks = []
    for f in range(folds):
        tr, te = plan.train_test(f)
        tasks += [(raw, family, cfg, knots, f, r, tr, te) for r in range(cfg.restarts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_cv_task, tasks))
    else:
        results = [_cv_task(t) for t in tasks]
    rows = []
    for fold, restart, tr, te in sorted(results, key=lambda r: (r[0], r[1])):
        row = {"kind": "run", "fold": fold, "restart": restart}
        for split, rep in (("train", tr), ("test", te)):
            for k, v in rep.to_dict().items():
                if v is not None:
                    row[f"{split}_{k}"] = float(v)
        rows.append(row)
    return rows


def aggregate(rows: list[dict]) -> dict:
    keys = [k for k in rows[0] if k not in ("kind", "fold", "restart")]
    agg = {"kind": "aggregate", "fold": "", "restart": ""}
    for k in keys:
        vals = np.array([r[k] for r in rows], dtype=float)
        agg[k] = float(np.mean(vals))
        agg[f"{k}_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return agg


def rho_grid(group) -> list[float]:
    """``[0, 1, 5, 10, 15, 20] / (N_M N_F)`` for group sizes ``N_M``, ``N_F``."""
    group = np.asarray(group).astype(int)
    n_m, n_f = int(group.sum()), int((1 - group).sum())
    if n_m == 0 or n_f == 0:
        raise MissingGroupColumn("both groups must be present for a fairness sweep")
    return [k / (n_m * n_f) for k in RHO_STEPS]


def curve_rows(model: SSTModel, ds: SurvivalDataset, ts) -> list[tuple]:
    X = model.prepare(ds.features)
    S = model.survival(X, ts)
    leaves = model.leaves(X)
    return [(i, int(leaves[i]), float(t), float(S[i, k])) for i in range(len(X)) for k, t in enumerate(ts)]


# I/O helpers ----------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_dict_rows(path, rows):
    header = []
    for r in rows:
        header += [k for k in r if k not in header]
    _write_csv(path, header, [[r.get(k, "") for k in header] for r in rows])


def _config(args) -> TrainConfig:
    return TrainConfig(
        depth=args.depth, seed=args.seed, init_mode=args.init, rho=args.rho, lam_beta=args.lambda_beta,
        restarts=args.restarts, M_it=args.max_iter,
    )


def _load_labeled(args) -> SurvivalDataset:
    return load_csv(args.data, args.time_col, args.event_col, getattr(args, "group_col", None))


# commands -------------------------------------------------------------------


def cmd_train(args) -> int:
    raw = _load_labeled(args)
    cfg = _config(args)
    t0 = time.perf_counter()
    model, hist = fit(raw, args.family, cfg, args.knots)
    elapsed = time.perf_counter() - t0
    model.manifest = RunManifest("train", {**cfg.to_dict(), "family": args.family, "knots": args.knots},
                                 raw.fingerprint(), [cfg.seed + r for r in range(cfg.restarts)]).to_dict()
    model.train_metrics = {k: v for k, v in model_metrics(model, raw).to_dict().items() if v is not None}
    model.save(args.out)
    Path(args.history or f"{args.out}.history.csv").write_text(hist.to_csv(), encoding="utf-8")
    # wall-clock numbers live outside the model so the model file is reproducible
    Path(f"{args.out}.timings.json").write_text(json.dumps({"train_seconds": elapsed}) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    model = SSTModel.load(args.model)
    X = model.prepare(load_features(args.data, model.feature_names))
    ts = np.array([float(v) for v in args.times.split(",")])
    S = model.survival(X, ts)
    leaves = model.leaves(X)
    header = ["point_id", "leaf"] + [f"S(t={float(t)!r})" for t in ts]
    rows = [[i, int(leaves[i]), *[float(v) for v in S[i]]] for i in range(len(X))]
    _write_csv(args.out, header, rows)
    return 0


def cmd_evaluate(args) -> int:
    model = SSTModel.load(args.model)
    raw = select_features(_load_labeled(args), model.feature_names)
    rep = {k: v for k, v in model_metrics(model, raw).to_dict().items() if v is not None}
    rep["manifest"] = RunManifest("evaluate", {"model": str(args.model)}, raw.fingerprint(), []).to_dict()
    Path(args.out).write_text(json.dumps(rep, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_cv(args) -> int:
    raw = _load_labeled(args)
    cfg = _config(args)
    rows = cv_runs(raw, args.family, cfg, args.folds, args.knots, args.jobs)
    _write_dict_rows(args.out, rows + [aggregate(rows)])
    manifest = RunManifest("cv", {**cfg.to_dict(), "family": args.family, "knots": args.knots, "folds": args.folds},
                           raw.fingerprint(), [run_seed(cfg.seed, f, r) for f in range(args.folds)
                                               for r in range(cfg.restarts)])
    Path(f"{args.out}.manifest.json").write_text(json.dumps(manifest.to_dict(), indent=1) + "\n", encoding="utf-8")
    return 0


def cmd_fairness_sweep(args) -> int:
    if not args.group_col:
        raise MissingGroupColumn("--group-col is required for fairness-sweep")
    raw = _load_labeled(args)
    base = _config(args)
    out_rows, curves = [], []
    grid = rho_grid(raw.group)
    ts = np.unique(raw.times)
    for step, rho in zip(RHO_STEPS, grid):
        cfg = replace(base, rho=rho)
        rows = cv_runs(raw, args.family, cfg, args.folds, args.knots, args.jobs)
        out_rows.append({"rho": rho, "rho_step": step, **aggregate(rows)})
        model, _ = fit(raw, args.family, cfg, args.knots)
        curves += [(rho, *r) for r in curve_rows(model, raw, ts)]
    _write_dict_rows(args.out, out_rows)
    _write_csv(args.curves or f"{args.out}.curves.csv", ["rho", "point_id", "leaf", "t", "S"], curves)
    return 0


# parser ---------------------------------------------------------------------


def _positive_int(v):
    iv = int(v)
    if iv < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return iv


def _nonneg_float(v):
    fv = float(v)
    if not fv >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return fv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softsurv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def labeled(sp):
        sp.add_argument("data", help="CSV with a header row")
        sp.add_argument("--time-col", default="time")
        sp.add_argument("--event-col", default="event")
        sp.add_argument("--group-col", default=None)

    def training(sp, restarts):
        sp.add_argument("--family", choices=FAMILIES, default="llog")
        sp.add_argument("--depth", type=_positive_int, default=2)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--init", choices=("random", "clustering"), default="random")
        sp.add_argument("--rho", type=_nonneg_float, default=0.0)
        sp.add_argument("--lambda-beta", type=_nonneg_float, default=4.0)
        sp.add_argument("--knots", type=_positive_int, default=2, help="internal spline knots")
        sp.add_argument("--restarts", type=_positive_int, default=restarts)
        sp.add_argument("--max-iter", type=int, default=10, help="macro iterations")

    sp = sub.add_parser("train", help="fit a tree and write the model JSON and history CSV")
    labeled(sp)
    training(sp, 20)
    sp.add_argument("--out", required=True)
    sp.add_argument("--history", default=None)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="survival probabilities at given times")
    sp.add_argument("model")
    sp.add_argument("data")
    sp.add_argument("--times", required=True, help="comma-separated times")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="metric report against labeled data")
    sp.add_argument("model")
    labeled(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    for name, func, doc in (("cv", cmd_cv, "k-fold cross-validation"),
                            ("fairness-sweep", cmd_fairness_sweep, "cross-validation over the fairness grid")):
        sp = sub.add_parser(name, help=doc)
        labeled(sp)
        training(sp, 5)
        sp.add_argument("--folds", type=int, default=5)
        sp.add_argument("--jobs", type=_positive_int, default=1)
        sp.add_argument("--out", required=True)
        if name == "fairness-sweep":
            sp.add_argument("--curves", default=None)
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SST_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as e:
        print(f"softsurv: numeric failure: {e}", file=sys.stderr)
        return 3
    except (SSTError, ValueError, OSError) as e:
        print(f"softsurv: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

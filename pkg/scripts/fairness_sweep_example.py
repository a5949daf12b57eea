"""Fairness sweep on the two-group Weibull fixture.

Trains on the full data at every grid value of rho and prints the training
penalty and leaf balance; pass ``--cv`` to also run the CLI sweep.

    python scripts/fairness_sweep_example.py --out /tmp/sweep
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

from softsurv.cli import main as cli_main
from softsurv.cli import model_metrics, rho_grid
from softsurv.model import fit
from softsurv.nodec import TrainConfig
from softsurv.synthetic import two_group_weibull


def write_csv(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "event", "group", *ds.feature_names])
        for i in range(ds.n):
            w.writerow([repr(float(ds.times[i])), int(ds.events[i]), int(ds.group[i]),
                        *(repr(float(v)) for v in ds.features[i])])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--restarts", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="sweep")
    ap.add_argument("--cv", action="store_true")
    args = ap.parse_args()

    ds = two_group_weibull(n=args.n, seed=args.seed)
    print(f"{'rho':>12} {'penalty':>12} {'gini':>6} {'gini_w':>6} {'C_H':>6}")
    for rho in rho_grid(ds.group):
        model, _ = fit(ds, "weibull", TrainConfig(depth=args.depth, restarts=args.restarts, seed=args.seed, rho=rho))
        r = model_metrics(model, ds)
        print(f"{rho:12.4g} {r.fairness_penalty:12.4g} {r.gini_simple:6.3f} {r.gini_weighted:6.3f} {r.c_harrell:6.3f}")
    if args.cv:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(ds, out / "data.csv")
        cli_main(["fairness-sweep", str(out / "data.csv"), "--group-col", "group", "--family", "weibull",
                  "--depth", str(args.depth), "--restarts", str(args.restarts), "--seed", str(args.seed),
                  "--out", str(out / "sweep.csv")])
        print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.csv.curves.csv'}")


if __name__ == "__main__":
    main()

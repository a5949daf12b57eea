import csv
import json

import numpy as np
import pytest

from softsurv.cli import aggregate, main, rho_grid
from softsurv.data import bundled, load_csv
from softsurv.model import SSTModel
from softsurv.synthetic import two_group_weibull

VET = str(bundled("veterans"))
FAST = ["--restarts", "1", "--max-iter", "2"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    out = d / "m.json"
    assert main(["train", VET, "--family", "llog", "--depth", "1", *FAST, "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def group_csv(tmp_path_factory):
    ds = two_group_weibull(n=80, seed=1)
    path = tmp_path_factory.mktemp("grp") / "g.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "event", "group", *ds.feature_names])
        for i in range(ds.n):
            w.writerow([repr(float(ds.times[i])), int(ds.events[i]), int(ds.group[i]), *(repr(float(v)) for v in ds.features[i])])
    return path


def test_train_writes_model_and_history(trained):
    model = SSTModel.load(trained)
    assert model.params.omega.shape[0] == 1 and model.params.beta.shape[0] == 2
    hist = (trained.parent / "m.json.history.csv").read_text().splitlines()
    assert hist[0] == "it,k,s,E,error_best,branch_taken"
    assert "train_seconds" in json.loads((trained.parent / "m.json.timings.json").read_text())
    assert model.manifest["dataset_fingerprint"] and model.manifest["version"]


def test_train_is_byte_deterministic(trained, tmp_path):
    out = tmp_path / "again.json"
    main(["train", VET, "--family", "llog", "--depth", "1", *FAST, "--out", str(out)])
    assert out.read_bytes() == trained.read_bytes()


def test_model_roundtrip_bit_exact(trained):
    m = SSTModel.load(trained)
    back = SSTModel.from_json(m.to_json())
    np.testing.assert_array_equal(back.params.omega, m.params.omega)
    np.testing.assert_array_equal(back.params.beta, m.params.beta)
    assert back.time_scale == m.time_scale and back.to_json() == m.to_json()


def test_usage_errors(tmp_path, capsys):
    assert main(["train", VET, "--depth", "0", "--out", str(tmp_path / "x")]) == 2
    assert main(["train", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x")]) == 2
    assert main(["train", VET, "--time-col", "nope", "--out", str(tmp_path / "x")]) == 2
    assert main(["fairness-sweep", VET, "--out", str(tmp_path / "x")]) == 2


def test_predict(trained, tmp_path):
    out = tmp_path / "p.csv"
    assert main(["predict", str(trained), VET, "--times", "0,30,100", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 137 and list(rows[0])[:3] == ["point_id", "leaf", "S(t=0.0)"]
    assert all(float(r["S(t=0.0)"]) == 1.0 for r in rows)
    model = SSTModel.load(trained)
    X = model.prepare(load_csv(VET, "time", "event").features)
    np.testing.assert_array_equal([int(r["leaf"]) for r in rows], model.leaves(X))
    s30 = np.array([float(r["S(t=30.0)"]) for r in rows])
    np.testing.assert_array_equal(s30, model.survival(X, [30.0])[:, 0])


def test_evaluate_reproduces_train_metrics(trained, tmp_path):
    out = tmp_path / "e.json"
    assert main(["evaluate", str(trained), VET, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    stored = SSTModel.load(trained).train_metrics
    for k in ("c_harrell", "c_uno", "cd_auc", "ibs"):
        assert rep[k] == pytest.approx(stored[k], abs=1e-12)


def test_predict_schema_mismatch(trained, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,event,zzz\n1,1,2\n")
    assert main(["predict", str(trained), str(bad), "--times", "1", "--out", str(tmp_path / "o")]) == 2


def test_cv_rows_and_aggregate(tmp_path):
    out = tmp_path / "cv.csv"
    assert main(["cv", VET, "--family", "exp", "--depth", "1", "--folds", "5", "--restarts", "2",
                 "--max-iter", "1", "--out", str(out)]) == 0
    rows = read_rows(out)
    runs = [r for r in rows if r["kind"] == "run"]
    assert len(runs) == 10 and rows[-1]["kind"] == "aggregate"
    for k in ("test_c_harrell", "train_ibs", "test_cd_auc", "test_c_uno"):
        assert float(rows[-1][k]) == pytest.approx(np.mean([float(r[k]) for r in runs]), abs=1e-12)
    manifest = json.loads((tmp_path / "cv.csv.manifest.json").read_text())
    assert len(manifest["seeds"]) == 10


def test_aggregate_mean_and_sd():
    rows = [{"kind": "run", "fold": 0, "restart": r, "x": v} for r, v in enumerate([1.0, 2.0, 4.0])]
    agg = aggregate(rows)
    assert agg["x"] == pytest.approx(7 / 3, abs=1e-15) and agg["x_sd"] == pytest.approx(np.std([1, 2, 4], ddof=1))


def test_rho_grid():
    g = rho_grid(np.array([1, 1, 0, 0, 0]))
    assert len(g) == 6 and g[0] == 0 and g[-1] == pytest.approx(20 / 6)


def test_fairness_sweep(group_csv, tmp_path):
    out = tmp_path / "sweep.csv"
    args = ["--group-col", "group", "--family", "weibull", "--depth", "1", "--folds", "2", "--restarts", "1",
            "--max-iter", "1", "--seed", "4"]
    assert main(["fairness-sweep", str(group_csv), *args, "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 6 and float(rows[0]["rho"]) == 0.0
    assert "train_fairness_penalty" in rows[0] and "test_gini_weighted" in rows[0]
    curves = read_rows(tmp_path / "sweep.csv.curves.csv")
    assert list(curves[0]) == ["rho", "point_id", "leaf", "t", "S"]
    cv_out = tmp_path / "cv.csv"
    assert main(["cv", str(group_csv), *args, "--out", str(cv_out)]) == 0
    agg = read_rows(cv_out)[-1]
    for k in agg:
        if k.startswith(("train_", "test_")):
            assert rows[0][k] == agg[k]

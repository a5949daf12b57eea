"""Right-censored survival datasets: CSV loading, preprocessing, and k-fold plans."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    AllMissingColumn,
    BadEventFlag,
    MissingColumn,
    NonPositiveTime,
    ParseError,
    SchemaMismatch,
    TooFewRows,
)

MISSING_MARKERS = {"", "na", "nan"}
CATEGORICAL_MAX_LEVELS = 10


@dataclass(frozen=True)
class SurvivalDataset:
    features: np.ndarray  # (N, p); NaN marks a missing cell before preprocessing
    times: np.ndarray  # (N,) > 0
    events: np.ndarray  # (N,) in {0, 1}
    feature_names: tuple[str, ...]
    group: np.ndarray | None = None  # (N,) in {0, 1}
    preprocessor: Preprocessor | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        t = np.asarray(self.times, dtype=float).ravel()
        c = np.asarray(self.events).astype(int).ravel()
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", c)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.group is not None:
            object.__setattr__(self, "group", np.asarray(self.group).astype(int).ravel())
        n = len(t)
        if n < 1 or X.shape[1] < 1:
            raise TooFewRows("dataset needs N >= 1 rows and p >= 1 features")
        if X.shape[0] != n or len(c) != n or (self.group is not None and len(self.group) != n):
            raise SchemaMismatch("features, times, events and group must have the same length")
        if len(self.feature_names) != X.shape[1]:
            raise SchemaMismatch("feature_names length does not match the feature matrix")
        bad = np.flatnonzero(~np.isfinite(t) | (t <= 0))
        if bad.size:
            raise NonPositiveTime(int(bad[0]))
        bad = np.flatnonzero((c != 0) & (c != 1))
        if bad.size:
            raise BadEventFlag(int(bad[0]), c[bad[0]])

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> SurvivalDataset:
        idx = np.asarray(idx)
        return replace(
            self,
            features=self.features[idx],
            times=self.times[idx],
            events=self.events[idx],
            group=None if self.group is None else self.group[idx],
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.features, self.times, self.events.astype(np.int64)):
            h.update(np.ascontiguousarray(a).tobytes())
        if self.group is not None:
            h.update(np.ascontiguousarray(self.group.astype(np.int64)).tobytes())
        return h.hexdigest()


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_MARKERS


def load_csv(path, time_col: str, event_col: str, group_col: str | None = None) -> SurvivalDataset:
    """Read a header-row CSV. Every column other than time/event/group is a feature.

    Missing feature cells (empty, ``NA``, ``nan``) become NaN and are left for
    :func:`preprocess` to impute.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooFewRows(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]

    for col in (time_col, event_col) + ((group_col,) if group_col else ()):
        if col not in header:
            raise MissingColumn(col)
    ti, ei = header.index(time_col), header.index(event_col)
    gi = header.index(group_col) if group_col else None
    fidx = [j for j in range(len(header)) if j not in (ti, ei, gi)]
    if not fidx:
        raise MissingColumn("<at least one feature column>")
    if not rows:
        raise TooFewRows(f"{path}: no data rows")

    n = len(rows)
    X = np.full((n, len(fidx)), np.nan)
    t = np.empty(n)
    c = np.empty(n, dtype=int)
    g = np.empty(n, dtype=int) if gi is not None else None
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(r, "<row>", f"{len(row)} cells, expected {len(header)}")
        try:
            t[r - 1] = float(row[ti])
        except ValueError:
            raise ParseError(r, time_col, row[ti]) from None
        if not np.isfinite(t[r - 1]) or t[r - 1] <= 0:
            raise NonPositiveTime(r)
        c[r - 1] = _parse_flag(row[ei], r, BadEventFlag)
        if gi is not None:
            g[r - 1] = _parse_flag(row[gi], r, lambda row_, v: ParseError(row_, group_col, v))
        for k, j in enumerate(fidx):
            cell = row[j]
            if _is_missing(cell):
                continue
            try:
                X[r - 1, k] = float(cell)
            except ValueError:
                raise ParseError(r, header[j], cell) from None
    return SurvivalDataset(X, t, c, [header[j] for j in fidx], group=g)


def _parse_flag(cell, row, err):
    try:
        v = float(cell)
    except ValueError:
        raise err(row, cell) from None
    if v not in (0.0, 1.0):
        raise err(row, cell)
    return int(v)


@dataclass
class Preprocessor:
    """Imputation values and min-max scaling fitted on one (training) dataset."""

    fill: np.ndarray
    mins: np.ndarray
    maxs: np.ndarray
    categorical: np.ndarray  # bool mask

    @classmethod
    def fit(cls, X: np.ndarray, feature_names=None, categorical=None) -> Preprocessor:
        X = np.asarray(X, dtype=float)
        p = X.shape[1]
        names = list(feature_names) if feature_names is not None else [str(j) for j in range(p)]
        if categorical is None:
            cat = np.array([len(np.unique(col[~np.isnan(col)])) <= CATEGORICAL_MAX_LEVELS for col in X.T])
        else:
            cat = np.array([(names[j] in categorical) or (j in categorical) for j in range(p)])
        fill = np.empty(p)
        for j in range(p):
            obs = X[:, j][~np.isnan(X[:, j])]
            if obs.size == 0:
                raise AllMissingColumn(names[j])
            if cat[j]:
                vals, counts = np.unique(obs, return_counts=True)
                fill[j] = vals[np.argmax(counts)]  # lowest value wins ties
            else:
                fill[j] = obs.mean()
        filled = np.where(np.isnan(X), fill, X)
        return cls(fill=fill, mins=filled.min(axis=0), maxs=filled.max(axis=0), categorical=cat)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.fill):
            raise SchemaMismatch(f"expected {len(self.fill)} features, got {X.shape[1]}")
        filled = np.where(np.isnan(X), self.fill, X)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        # constant columns map to 0; out-of-range test values are not clipped
        return np.where(span > 0, (filled - self.mins) / safe, 0.0)

    def apply(self, ds: SurvivalDataset) -> SurvivalDataset:
        return replace(ds, features=self.transform(ds.features), preprocessor=self)

    def to_dict(self) -> dict:
        return {
            "fill": self.fill.tolist(),
            "min": self.mins.tolist(),
            "max": self.maxs.tolist(),
            "categorical": self.categorical.astype(bool).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Preprocessor:
        return cls(
            fill=np.asarray(d["fill"], dtype=float),
            mins=np.asarray(d["min"], dtype=float),
            maxs=np.asarray(d["max"], dtype=float),
            categorical=np.asarray(d.get("categorical", [False] * len(d["fill"])), dtype=bool),
        )


def preprocess(raw: SurvivalDataset, categorical=None) -> SurvivalDataset:
    """Impute (mean / mode) and min-max scale every feature to [0, 1].

    ``categorical`` names or indexes the categorical columns; when omitted a
    column with at most 10 distinct observed values is treated as categorical.
    The fitted :class:`Preprocessor` is kept on the result so held-out data can
    be transformed with the same statistics.
    """
    pre = Preprocessor.fit(raw.features, raw.feature_names, categorical)
    return pre.apply(raw)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "k": self.k, "assignments": self.assignments.tolist()})

    @classmethod
    def from_json(cls, text: str) -> FoldPlan:
        d = json.loads(text)
        return cls(k=int(d["k"]), assignments=np.asarray(d["assignments"], dtype=int), seed=int(d["seed"]))


def kfold(ds: SurvivalDataset | int, k: int, seed: int) -> FoldPlan:
    n = ds if isinstance(ds, (int, np.integer)) else ds.n
    if k < 2 or k > n:
        raise TooFewRows(f"k-fold needs 2 <= k <= N (k={k}, N={n})")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def bundled(name: str) -> Path:
    """Path of a CSV under the repository's ``data/`` directory."""
    path = Path(__file__).resolve().parents[2] / "data" / f"{name}.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run scripts/fetch_datasets.py")
    return path


def select_features(ds: SurvivalDataset, names) -> SurvivalDataset:
    """Reorder/restrict the feature columns of ``ds`` to ``names``."""
    names = list(names)
    missing = [n for n in names if n not in ds.feature_names]
    if missing:
        raise SchemaMismatch(f"data lacks model feature columns {missing}")
    cols = [ds.feature_names.index(n) for n in names]
    return replace(ds, features=ds.features[:, cols], feature_names=tuple(names))


def load_features(path, names) -> np.ndarray:
    """Feature matrix of the columns ``names`` of a header-row CSV (no labels needed)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TooFewRows(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    missing = [n for n in names if n not in header]
    if missing:
        raise SchemaMismatch(f"data lacks model feature columns {missing}")
    if not rows:
        raise TooFewRows(f"{path}: no data rows")
    cols = [header.index(n) for n in names]
    X = np.full((len(rows), len(cols)), np.nan)
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise ParseError(r, "<row>", f"{len(row)} cells, expected {len(header)}")
        for k, j in enumerate(cols):
            if _is_missing(row[j]):
                continue
            try:
                X[r - 1, k] = float(row[j])
            except ValueError:
                raise ParseError(r, header[j], row[j]) from None
    return X

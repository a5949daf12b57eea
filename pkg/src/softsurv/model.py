"""Fitted soft survival tree: preprocessing, internal time unit, parameters
and the versioned JSON format ``sst-v1``.

Training works in an internal time unit ``t / time_scale`` with
``time_scale = sum(t) / sum(c)`` on the training data (the exponential MLE
of the mean lifetime).  This keeps intercepts near 0 so the ridge term does
not depend on whether times were recorded in days or years.  Every public
prediction takes and returns times in the original unit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import Preprocessor, SurvivalDataset
from .errors import SchemaMismatch
from .leafmodel import LeafModelSpec
from .nodec import History, TrainConfig, train_restarts
from .splines import place_knots
from .tree import TreeParams, hbp_leaves, predict_survival_matrix

FORMAT = "sst-v1"


def time_scale_of(times, events) -> float:
    times = np.asarray(times, dtype=float)
    d = int(np.sum(events))
    return float(times.sum() / d) if d > 0 else float(times.mean())


@dataclass
class SSTModel:
    params: TreeParams
    spec: LeafModelSpec  # knots live in the internal time unit
    time_scale: float
    feature_names: tuple[str, ...]
    preprocessor: Preprocessor | None = None
    config: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    train_metrics: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return self.params.depth

    def prepare(self, X: np.ndarray) -> np.ndarray:
        """Raw feature matrix -> the [0, 1]-scaled matrix the tree expects."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        return X if self.preprocessor is None else self.preprocessor.transform(X)

    def leaves(self, X_prepared: np.ndarray) -> np.ndarray:
        return hbp_leaves(self.params, X_prepared)

    def survival(self, X_prepared: np.ndarray, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float)) / self.time_scale
        return predict_survival_matrix(self.params, self.spec, X_prepared, ts)

    def survival_fn(self, X_prepared: np.ndarray):
        """Callable ``ts -> (N, len(ts))`` for the metrics module."""
        X_prepared = np.atleast_2d(X_prepared)
        leaves = self.leaves(X_prepared)
        scale = self.time_scale
        return lambda ts: predict_survival_matrix(
            self.params, self.spec, X_prepared, np.atleast_1d(np.asarray(ts, dtype=float)) / scale, leaves
        )

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "depth": self.params.depth,
            "leaf_model": self.spec.to_dict(),
            "time_scale": self.time_scale,
            "feature_names": list(self.feature_names),
            "preprocessor": None if self.preprocessor is None else self.preprocessor.to_dict(),
            "omega": self.params.omega.tolist(),
            "beta": self.params.beta.tolist(),
            "config": self.config,
            "manifest": self.manifest,
            "train_metrics": self.train_metrics,
        }

    def to_json(self) -> str:
        # json emits the shortest repr of each float, which round-trips exactly
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> SSTModel:
        if d.get("format") != FORMAT:
            raise SchemaMismatch(f"expected format {FORMAT!r}, found {d.get('format')!r}")
        try:
            params = TreeParams(int(d["depth"]), np.asarray(d["omega"], dtype=float), np.asarray(d["beta"], dtype=float))
            pre = d.get("preprocessor")
            return cls(
                params=params,
                spec=LeafModelSpec.from_dict(d["leaf_model"]),
                time_scale=float(d["time_scale"]),
                feature_names=tuple(d["feature_names"]),
                preprocessor=None if pre is None else Preprocessor.from_dict(pre),
                config=d.get("config", {}),
                manifest=d.get("manifest", {}),
                train_metrics=d.get("train_metrics", {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaMismatch(f"malformed model file: {e}") from None

    @classmethod
    def from_json(cls, text: str) -> SSTModel:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f"model file is not JSON: {e}") from None

    @classmethod
    def load(cls, path) -> SSTModel:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def internal_dataset(ds: SurvivalDataset, time_scale: float) -> SurvivalDataset:
    return replace(ds, times=ds.times / time_scale)


def fit(raw: SurvivalDataset, family: str, cfg: TrainConfig, knots: int = 2,
        categorical=None) -> tuple[SSTModel, History]:
    """Preprocess ``raw`` (imputation + min-max fitted here), pick the time
    unit and knots, and train with ``cfg.restarts`` restarts."""
    pre = Preprocessor.fit(raw.features, raw.feature_names, categorical)
    ds = pre.apply(raw)
    scale = time_scale_of(ds.times, ds.events)
    ds_int = internal_dataset(ds, scale)
    spec = LeafModelSpec(family, place_knots(ds_int, m=knots) if family.startswith("spline") else None)
    params, hist, _ = train_restarts(ds_int, spec, cfg)
    model = SSTModel(params, spec, scale, ds.feature_names, pre, config=cfg.to_dict())
    return model, hist

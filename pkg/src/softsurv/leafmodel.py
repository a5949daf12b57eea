"""Uniform interface over the parametric and spline leaf families."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import splines, survdist
from .errors import SchemaMismatch
from .splines import KnotSet

FAMILIES = ("exp", "weibull", "llog", "spline-po", "spline-ph")


@dataclass(frozen=True)
class LeafModelSpec:
    family: str
    knots: KnotSet | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown leaf family {self.family!r}; choose from {FAMILIES}")
        if self.is_spline and self.knots is None:
            raise ValueError(f"{self.family} leaves need a KnotSet")

    @property
    def is_spline(self) -> bool:
        return self.family.startswith("spline")

    @property
    def link(self) -> str:
        return self.family.split("-")[1]

    def n_params(self, p: int) -> int:
        if self.is_spline:
            return splines.n_params(self.knots, p)
        return survdist.n_params(self.family, p)

    def nll_terms(self, beta, X, t, c, grad=True):
        """``(values, gradient rows or None, valid mask)`` for every point."""
        if self.is_spline:
            return splines.nll_terms(self.link, self.knots, beta, X, t, c, grad)
        val, g = survdist.nll_terms(self.family, beta, X, t, c, grad)
        return val, g, np.ones(val.shape, dtype=bool)

    def survival(self, beta, X, ts) -> np.ndarray:
        if self.is_spline:
            return splines.survival_curves(self.link, self.knots, beta, X, ts)
        return survdist.survival_curves(self.family, beta, X, ts)

    def survival_vjp(self, beta, X, ts, G) -> np.ndarray:
        if self.is_spline:
            return splines.survival_vjp(self.link, self.knots, beta, X, ts, G)
        return survdist.survival_vjp(self.family, beta, X, ts, G)

    def slope_positive(self, beta, t) -> np.ndarray:
        """``ds/dy > 0`` at each time (always true for parametric families)."""
        t = np.asarray(t, dtype=float)
        if not self.is_spline:
            return np.ones(t.shape, dtype=bool)
        p = len(beta) - (self.knots.m + 2)
        return splines.spline_deriv(self.knots, np.asarray(beta)[p:], np.log(t)) > 0

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.knots is not None:
            d["knots"] = self.knots.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> LeafModelSpec:
        try:
            knots = KnotSet.from_dict(d["knots"]) if d.get("knots") else None
            return cls(d["family"], knots)
        except (KeyError, ValueError) as e:
            raise SchemaMismatch(f"bad leaf_model entry: {e}") from None

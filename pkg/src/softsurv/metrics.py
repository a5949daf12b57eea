"""Discrimination and calibration estimators for right-censored predictions.

Every estimator takes ``surv``: a callable mapping an array of times to the
``(N, len(times))`` matrix of predicted survival probabilities of the N
evaluated points, plus their observed ``times`` and ``events``.

Conventions:
  * ``G_hat`` is the Kaplan-Meier estimate of the censoring distribution; when
    an event is weighted at its own time the left limit ``G(t_i-)`` is used.
  * Terms whose IPCW weight would be ``1 / 0`` are dropped.
  * Prediction ties count 0.5 in every concordance-type measure, AUC included.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateCensoring, DegenerateKM, MissingGroupColumn, NoComparablePairs, UndefinedAtTime


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function equal to 1 before the first jump."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 1.0) if self.times.size else np.ones_like(np.asarray(t, dtype=float))

    def left(self, t):
        """Left limit ``f(t-)``."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 1.0) if self.times.size else np.ones_like(np.asarray(t, dtype=float))


def kaplan_meier(times, events) -> StepFunction:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    u, inv = np.unique(times, return_inverse=True)
    deaths = np.bincount(inv, weights=events, minlength=u.size)
    at_risk = times.size - np.concatenate([[0], np.cumsum(np.bincount(inv, minlength=u.size))[:-1]])
    jump = deaths > 0
    surv = np.cumprod(1.0 - deaths[jump] / at_risk[jump])
    return StepFunction(u[jump], surv)


def censoring_km(times, events) -> StepFunction:
    return kaplan_meier(times, 1 - np.asarray(events).astype(int))


def _concordance_counts(si: np.ndarray, sj: np.ndarray) -> np.ndarray:
    """For each value in ``si``: #{sj > si} + 0.5 #{sj == si}."""
    srt = np.sort(sj)
    lo = np.searchsorted(srt, si, side="left")
    hi = np.searchsorted(srt, si, side="right")
    return (srt.size - hi) + 0.5 * (hi - lo)


def _pairwise_c(surv, times, events, weight_fn=None) -> float:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    ev_times = np.unique(times[events == 1])
    if ev_times.size == 0:
        raise NoComparablePairs("no observed events")
    M = np.asarray(surv(ev_times))
    num = den = 0.0
    for k, tk in enumerate(ev_times):
        cases = np.flatnonzero((times == tk) & (events == 1))
        controls = times > tk
        n_ctrl = int(controls.sum())
        if n_ctrl == 0:
            continue
        w = 1.0 if weight_fn is None else weight_fn(tk)
        if w == 0:
            continue
        num += w * float(np.sum(_concordance_counts(M[cases, k], M[controls, k])))
        den += w * len(cases) * n_ctrl
    if den == 0:
        raise NoComparablePairs("no comparable pairs")
    return num / den


def c_harrell(surv, times, events) -> float:
    """Harrell's C with both survival values of a pair read at the earlier time."""
    return _pairwise_c(surv, times, events)


def c_uno(surv, times, events, G_hat: StepFunction | None = None) -> float:
    """Uno's C: comparable pairs weighted by ``G(t_i-)^-2``."""
    if G_hat is None:
        G_hat = censoring_km(times, events)

    def weight(t):
        g = float(G_hat.left(t))
        return 0.0 if g <= 0 else g**-2

    return _pairwise_c(surv, times, events, weight)


def _event_weights(G_hat, times, events):
    g = G_hat.left(times)
    w = np.where((events == 1) & (g > 0), 1.0 / np.where(g > 0, g, 1.0), 0.0)
    dropped = int(np.sum((events == 1) & (g <= 0)))
    return w, dropped


def auc_at(surv, times, events, G_hat: StepFunction | None, t: float) -> float:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    if G_hat is None:
        G_hat = censoring_km(times, events)
    w, _ = _event_weights(G_hat, times, events)
    return _auc_from_column(np.asarray(surv(np.array([t])))[:, 0], times, w, t)


def _auc_from_column(s, times, w, t):
    cases = (times <= t) & (w > 0)
    controls = times > t
    if not cases.any() or not controls.any():
        raise UndefinedAtTime(t)
    num = float(w[cases] @ _concordance_counts(s[cases], s[controls]))
    return num / (float(w[cases].sum()) * int(controls.sum()))


def cd_auc(surv, times, events, G_hat: StepFunction | None = None) -> float:
    """KM-weighted mean of the time-dependent AUC over ``(t_min, t_max]``.

    Each KM jump time contributes ``AUC(tau) * (S(tau-) - S(tau))``; jump times
    where the AUC is undefined (no controls left) are skipped and the weights
    renormalized.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    if G_hat is None:
        G_hat = censoring_km(times, events)
    km = kaplan_meier(times, events)
    t_min, t_max = times.min(), times.max()
    if km(t_min) - km(t_max) <= 0:
        raise DegenerateKM("Kaplan-Meier curve is flat over the observed range")
    prev = np.concatenate([[1.0], km.values[:-1]])
    keep = (km.times > t_min) & (km.times <= t_max)
    taus, jumps = km.times[keep], (prev - km.values)[keep]
    w, _ = _event_weights(G_hat, times, events)
    M = np.asarray(surv(taus))
    num = den = 0.0
    for k, tau in enumerate(taus):
        try:
            a = _auc_from_column(M[:, k], times, w, tau)
        except UndefinedAtTime:
            continue
        num += a * jumps[k]
        den += jumps[k]
    if den == 0:
        raise DegenerateKM("time-dependent AUC undefined at every KM jump time")
    return num / den


def _brier_matrix(S, times, events, G_hat, grid):
    w_ev, dropped = _event_weights(G_hat, times, events)
    g_t = G_hat(grid)
    inv_g_t = np.where(g_t > 0, 1.0 / np.where(g_t > 0, g_t, 1.0), 0.0)
    before = times[:, None] <= grid[None, :]
    after = ~before
    terms = np.where(before, (S**2) * w_ev[:, None], (S - 1.0) ** 2 * inv_g_t[None, :])
    dropped += int(np.sum(after & (g_t <= 0)[None, :]))
    return terms.sum(axis=0) / times.size, dropped


def brier_at(surv, times, events, G_hat: StepFunction | None, t: float, return_dropped=False):
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    if G_hat is None:
        G_hat = censoring_km(times, events)
    grid = np.array([t], dtype=float)
    bs, dropped = _brier_matrix(np.asarray(surv(grid)), times, events, G_hat, grid)
    return (float(bs[0]), dropped) if return_dropped else float(bs[0])


def ibs_grid(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return np.unique(np.concatenate([[0.0], times, [times.max()]]))


def ibs(surv, times, events, G_hat: StepFunction | None = None, return_dropped=False):
    """Trapezoidal integral of BS(t) on ``{0} + observed times``, divided by ``t_max``."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    if G_hat is None:
        G_hat = censoring_km(times, events)
    grid = ibs_grid(times)
    bs, dropped = _brier_matrix(np.asarray(surv(grid)), times, events, G_hat, grid)
    if events.any() and not np.any(_event_weights(G_hat, times, events)[0] > 0):
        raise DegenerateCensoring("censoring KM is zero before every event")
    val = float(np.sum(np.diff(grid) * (bs[1:] + bs[:-1]) / 2.0) / times.max())
    return (val, dropped) if return_dropped else val


def gini_leaf_balance(leaf_assignment, group) -> tuple[float, float]:
    """Normalized two-class Gini ``4 p (1 - p)`` per nonempty leaf, averaged
    plainly and by leaf occupancy (1 = even split, 0 = single group)."""
    if group is None:
        raise MissingGroupColumn()
    leaf_assignment = np.asarray(leaf_assignment)
    group = np.asarray(group).astype(float)
    ginis, sizes = [], []
    for n in np.unique(leaf_assignment):
        g = group[leaf_assignment == n]
        frac = g.mean()
        ginis.append(4.0 * frac * (1.0 - frac))
        sizes.append(g.size)
    ginis, sizes = np.array(ginis), np.array(sizes)
    return float(ginis.mean()), float(ginis @ sizes / sizes.sum())


@dataclass
class MetricReport:
    c_harrell: float
    c_uno: float
    cd_auc: float
    ibs: float
    ibs_dropped_terms: int = 0
    fairness_penalty: float | None = None
    gini_simple: float | None = None
    gini_weighted: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(surv, times, events, G_hat: StepFunction | None = None) -> MetricReport:
    """All four survival measures; ``G_hat`` defaults to the censoring KM of the evaluated data."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events).astype(int)
    if G_hat is None:
        G_hat = censoring_km(times, events)
    cache = _CachedSurv(surv)
    val_ibs, dropped = ibs(cache, times, events, G_hat, return_dropped=True)
    return MetricReport(
        c_harrell=_nan_on(NoComparablePairs)(c_harrell)(cache, times, events),
        c_uno=_nan_on(NoComparablePairs)(c_uno)(cache, times, events, G_hat),
        cd_auc=_nan_on(DegenerateKM)(cd_auc)(cache, times, events, G_hat),
        ibs=val_ibs,
        ibs_dropped_terms=dropped,
    )


class _CachedSurv:
    """Evaluates the wrapped predictor once on all observed times plus 0."""

    def __init__(self, surv):
        self.surv = surv
        self.cache = {}

    def __call__(self, ts):
        ts = np.asarray(ts, dtype=float)
        missing = [t for t in np.unique(ts) if t not in self.cache]
        if missing:
            cols = np.asarray(self.surv(np.array(missing)))
            for k, t in enumerate(missing):
                self.cache[t] = cols[:, k]
        return np.column_stack([self.cache[t] for t in ts]) if ts.size else np.empty((0, 0))


def _nan_on(exc):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except exc:
                return float("nan")

        return inner

    return wrap

"""Royston-Parmar flexible leaf models.

A natural cubic spline ``s(y; eta)`` of log-time ``y = log t`` models the log
cumulative odds (PO) or the log cumulative hazard (PH); covariates shift it
additively: ``eta_lin = s(log t) + gamma @ x``.

    PO:  S = 1 / (1 + exp(eta_lin))
    PH:  S = exp(-exp(eta_lin))

A leaf parameter vector is ``beta = (gamma (p), eta (m + 2))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveDerivative, NonPositiveTime, TooFewEvents
from .survdist import _exp, _sigmoid, _softplus

LINKS = ("po", "ph")


@dataclass(frozen=True)
class KnotSet:
    k_min: float
    k_max: float
    internal: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "internal", tuple(float(k) for k in self.internal))
        chain = (self.k_min, *self.internal, self.k_max)
        if any(b <= a for a, b in zip(chain, chain[1:])):
            raise TooFewEvents(f"knots must be strictly increasing: {chain}")

    @property
    def m(self) -> int:
        return len(self.internal)

    @property
    def lambdas(self) -> np.ndarray:
        return (self.k_max - np.asarray(self.internal)) / (self.k_max - self.k_min)

    def to_dict(self) -> dict:
        return {"k_min": self.k_min, "k_max": self.k_max, "internal": list(self.internal)}

    @classmethod
    def from_dict(cls, d: dict) -> KnotSet:
        return cls(float(d["k_min"]), float(d["k_max"]), tuple(d.get("internal", ())))


def place_knots(times, events=None, m: int = 2) -> KnotSet:
    """Boundary knots at the extreme uncensored log-times, internal knots at the
    ``100 j / (m + 1)`` percentiles (linear interpolation) of the same values.

    ``times`` may also be a :class:`~softsurv.data.SurvivalDataset`.
    """
    if hasattr(times, "times"):
        times, events = times.times, times.events
    times = np.asarray(times, dtype=float)
    events = np.ones_like(times) if events is None else np.asarray(events)
    y = np.log(times[events == 1])
    if np.unique(y).size < m + 2:
        raise TooFewEvents(f"need at least {m + 2} distinct uncensored times, got {np.unique(y).size}")
    qs = np.percentile(y, [100.0 * j / (m + 1) for j in range(1, m + 1)]) if m else []
    try:
        return KnotSet(float(y.min()), float(y.max()), tuple(qs))
    except TooFewEvents as e:
        raise TooFewEvents(f"percentile knots collide: {e}") from None


def basis(ks: KnotSet, j: int, y):
    """``v_j(y)`` for ``j`` in ``1..m``."""
    if not 1 <= j <= ks.m:
        raise IndexError(f"basis index {j} outside 1..{ks.m}")
    y = np.asarray(y, dtype=float)
    kj, lam = ks.internal[j - 1], ks.lambdas[j - 1]
    return (
        np.maximum(y - kj, 0.0) ** 3
        - lam * np.maximum(y - ks.k_min, 0.0) ** 3
        - (1.0 - lam) * np.maximum(y - ks.k_max, 0.0) ** 3
    )


def basis_deriv(ks: KnotSet, j: int, y):
    if not 1 <= j <= ks.m:
        raise IndexError(f"basis index {j} outside 1..{ks.m}")
    y = np.asarray(y, dtype=float)
    kj, lam = ks.internal[j - 1], ks.lambdas[j - 1]
    return 3.0 * (
        np.maximum(y - kj, 0.0) ** 2
        - lam * np.maximum(y - ks.k_min, 0.0) ** 2
        - (1.0 - lam) * np.maximum(y - ks.k_max, 0.0) ** 2
    )


def design(ks: KnotSet, y) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[1, y, v_1..v_m]`` and their y-derivatives ``[0, 1, v_1'..v_m']``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    B = np.empty((y.size, ks.m + 2))
    dB = np.empty_like(B)
    B[:, 0], B[:, 1] = 1.0, y
    dB[:, 0], dB[:, 1] = 0.0, 1.0
    for j in range(1, ks.m + 1):
        B[:, j + 1] = basis(ks, j, y)
        dB[:, j + 1] = basis_deriv(ks, j, y)
    return B, dB


def spline_eval(ks: KnotSet, eta, y):
    B, _ = design(ks, y)
    out = B @ np.asarray(eta, dtype=float)
    return out if np.ndim(y) else float(out[0])


def spline_deriv(ks: KnotSet, eta, y):
    _, dB = design(ks, y)
    out = dB @ np.asarray(eta, dtype=float)
    return out if np.ndim(y) else float(out[0])


def n_params(ks: KnotSet, p: int) -> int:
    return p + ks.m + 2


@dataclass
class LeafParamsSpline:
    gamma: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.eta])

    @classmethod
    def from_vector(cls, beta, ks: KnotSet, p: int) -> LeafParamsSpline:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (n_params(ks, p),):
            raise DimensionMismatch(f"spline leaf with p={p}, m={ks.m} needs {n_params(ks, p)} parameters")
        return cls(beta[:p], beta[p:])


def _split(ks, beta, X):
    X = np.atleast_2d(X)
    p = X.shape[1]
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != n_params(ks, p):
        raise DimensionMismatch(f"spline leaf: beta has {beta.shape[-1]} entries, expected {n_params(ks, p)}")
    return X, beta[:p], beta[p:]


def nll_terms(link, ks, beta, X, t, c, grad=True):
    """Per-point NLL, gradient and a validity mask.

    A point with ``c = 1`` and ``ds/dy <= 0`` at its time has no defined
    likelihood term: it is flagged ``valid = False`` and its value and
    gradient rows are zero so callers can drop it.
    """
    X, gamma, eta = _split(ks, beta, X)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise NonPositiveTime()
    c = np.asarray(c, dtype=float)
    logt = np.log(t)
    B, dB = design(ks, logt)
    lin = B @ eta + X @ gamma
    ds = dB @ eta
    valid = (c == 0) | (ds > 0)
    safe_ds = np.where(valid & (c == 1), ds, 1.0)
    dens = c * (logt - np.log(safe_ds) - lin)
    if link == "po":
        val = dens + (1.0 + c) * _softplus(lin)
    elif link == "ph":
        val = dens + _exp(lin)
    else:
        raise ValueError(f"unknown spline link {link!r}")
    val = np.where(valid, val, 0.0)
    if not grad:
        return val, None, valid
    gl = -c + ((1.0 + c) * _sigmoid(lin) if link == "po" else _exp(lin))
    g = np.concatenate([gl[:, None] * X, gl[:, None] * B - (c / safe_ds)[:, None] * dB], axis=1)
    g[~valid] = 0.0
    return val, g, valid


def _linear_predictor(ks, beta, X, ts):
    X, gamma, eta = _split(ks, beta, X)
    B, _ = design(ks, np.log(ts))
    return X, B, (X @ gamma)[:, None] + (B @ eta)[None, :]


def survival_curves(link, ks, beta, X, ts):
    X = np.atleast_2d(X)
    ts = np.asarray(ts, dtype=float)
    out = np.ones((X.shape[0], ts.size))
    pos = ts > 0
    if pos.any():
        _, _, lin = _linear_predictor(ks, beta, X, ts[pos])
        out[:, pos] = _sigmoid(-lin) if link == "po" else np.exp(-_exp(lin))
    return out


def survival_vjp(link, ks, beta, X, ts, G):
    """``sum_{i,k} G[i, k] * dS_i(ts[k]) / dbeta`` for ``ts > 0``."""
    X, B, lin = _linear_predictor(ks, beta, X, ts)
    if link == "po":
        S = _sigmoid(-lin)
        dS = -S * (1.0 - S)
    else:
        e = _exp(lin)
        dS = -np.exp(-e) * e
    W = G * dS
    return np.concatenate([X.T @ W.sum(axis=1), W.sum(axis=0) @ B])


# scalar API -------------------------------------------------------------


def _point(lp: LeafParamsSpline, ks, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != lp.gamma.shape:
        raise DimensionMismatch(f"x has {x.size} features, gamma has {lp.gamma.size}")
    if lp.eta.size != ks.m + 2:
        raise DimensionMismatch(f"eta needs {ks.m + 2} entries")
    return lp.to_vector(), x[None, :]


def _scalar_nll(link, lp, ks, x, t, c):
    beta, X = _point(lp, ks, x)
    val, g, valid = nll_terms(link, ks, beta, X, np.array([t]), np.array([c]))
    if not valid[0]:
        raise NonPositiveDerivative(f"ds/dy <= 0 at t={t}")
    return float(val[0]), g[0]


def nll_po(lp: LeafParamsSpline, ks: KnotSet, x, t: float, c: int) -> float:
    return _scalar_nll("po", lp, ks, x, t, c)[0]


def nll_po_grad(lp: LeafParamsSpline, ks: KnotSet, x, t: float, c: int) -> np.ndarray:
    return _scalar_nll("po", lp, ks, x, t, c)[1]


def nll_ph(lp: LeafParamsSpline, ks: KnotSet, x, t: float, c: int) -> float:
    return _scalar_nll("ph", lp, ks, x, t, c)[0]


def nll_ph_grad(lp: LeafParamsSpline, ks: KnotSet, x, t: float, c: int) -> np.ndarray:
    return _scalar_nll("ph", lp, ks, x, t, c)[1]


def survival(link: str, lp: LeafParamsSpline, ks: KnotSet, x, t: float) -> float:
    beta, X = _point(lp, ks, x)
    return float(survival_curves(link, ks, beta, X, [t])[0, 0])

"""Parametric leaf survival models with a log-linked primary parameter.

For every family the primary parameter is ``mu(x) = exp(gamma0 + gamma @ x)``;
Exp uses it as a rate, Weibull and log-logistic as a scale.  The shape
``alpha`` of Weibull/log-logistic is stored as ``a = log(alpha)`` so the
parameter vector ``beta = (gamma0, gamma..., a...)`` is unconstrained.

The vectorized helpers (``*_terms``) take a flat ``beta``, an ``(n, p)``
feature matrix and length-``n`` arrays; the scalar functions mirror them for
a single point and a :class:`LeafParamsParametric`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NonPositiveTime

FAMILIES = ("exp", "weibull", "llog")
N_ANCILLARY = {"exp": 0, "weibull": 1, "llog": 1}
EXP_CLAMP = 700.0


def _exp(v):
    return np.exp(np.clip(v, -EXP_CLAMP, EXP_CLAMP))


def _softplus(v):
    return np.logaddexp(0.0, v)


def _sigmoid(v):
    return expit(v)


def n_params(kind: str, p: int) -> int:
    return p + 1 + N_ANCILLARY[kind]


@dataclass
class LeafParamsParametric:
    gamma0: float
    gamma: np.ndarray
    anc: np.ndarray

    def __post_init__(self):
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.anc = np.atleast_1d(np.asarray(self.anc, dtype=float))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.gamma0], self.gamma, self.anc])

    @classmethod
    def from_vector(cls, kind: str, beta, p: int) -> LeafParamsParametric:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (n_params(kind, p),):
            raise DimensionMismatch(f"{kind} leaf with p={p} needs {n_params(kind, p)} parameters")
        return cls(beta[0], beta[1 : p + 1], beta[p + 1 :])


def _split(kind, beta, X):
    beta = np.asarray(beta, dtype=float)
    X = np.atleast_2d(X)
    p = X.shape[1]
    if beta.shape[-1] != n_params(kind, p):
        raise DimensionMismatch(f"{kind} leaf: beta has {beta.shape[-1]} entries, expected {n_params(kind, p)}")
    z = beta[0] + X @ beta[1 : p + 1]
    a = beta[p + 1] if N_ANCILLARY[kind] else 0.0
    return z, a


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise NonPositiveTime()
    return t


def log_hazard_cumhaz(kind, beta, X, t):
    """Return ``(log h, H)`` per point; ``t`` must be positive."""
    z, a = _split(kind, beta, X)
    logt = np.log(_check_t(t))
    if kind == "exp":
        return z + 0.0 * logt, _exp(z + logt)
    alpha = float(_exp(a))
    w = logt - z
    if kind == "weibull":
        return a - z + (alpha - 1.0) * w, _exp(alpha * w)
    if kind == "llog":
        sp = _softplus(alpha * w)
        return a - z + (alpha - 1.0) * w - sp, sp
    raise ValueError(f"unknown parametric family {kind!r}")


def nll_terms(kind, beta, X, t, c, grad=True):
    """Per-point censored NLL ``-c log h + H`` and its gradient w.r.t. beta."""
    X = np.atleast_2d(X)
    c = np.asarray(c, dtype=float)
    logh, H = log_hazard_cumhaz(kind, beta, X, t)
    val = -c * logh + H
    if not grad:
        return val, None
    z, a = _split(kind, beta, X)
    n, p = X.shape
    g = np.empty((n, n_params(kind, p)))
    if kind == "exp":
        gz = -c + H
    else:
        alpha = float(_exp(a))
        w = np.log(t) - z
        if kind == "weibull":
            gz = alpha * (c - H)
            ga = -c * (1.0 + alpha * w) + alpha * w * H
        else:
            sig = _sigmoid(alpha * w)
            gz = alpha * (c - (1.0 + c) * sig)
            ga = -c * (1.0 + alpha * w) + (1.0 + c) * sig * alpha * w
        g[:, p + 1] = ga
    g[:, 0] = gz
    g[:, 1 : p + 1] = gz[:, None] * X
    return val, g


def cumhaz_and_grad(kind, beta, X, t):
    """``H`` at each point and ``dH/dbeta``; used by survival-curve penalties."""
    X = np.atleast_2d(X)
    z, a = _split(kind, beta, X)
    n, p = X.shape
    H = log_hazard_cumhaz(kind, beta, X, t)[1]
    g = np.empty((n, n_params(kind, p)))
    if kind == "exp":
        gz = H
    else:
        alpha = float(_exp(a))
        w = np.log(t) - z
        if kind == "weibull":
            gz = -alpha * H
            g[:, p + 1] = alpha * w * H
        else:
            sig = _sigmoid(alpha * w)
            gz = -alpha * sig
            g[:, p + 1] = alpha * w * sig
    g[:, 0] = gz
    g[:, 1 : p + 1] = gz[:, None] * X
    return H, g


def survival_curves(kind, beta, X, ts):
    """``(n, len(ts))`` matrix of survival probabilities; ``S(t<=0) = 1``."""
    X = np.atleast_2d(X)
    ts = np.asarray(ts, dtype=float)
    out = np.ones((X.shape[0], ts.size))
    pos = ts > 0
    if pos.any():
        z, a = _split(kind, beta, X)
        logt = np.log(ts[pos])[None, :]
        if kind == "exp":
            H = _exp(z[:, None] + logt)
        else:
            alpha = float(_exp(a))
            q = alpha * (logt - z[:, None])
            H = _exp(q) if kind == "weibull" else _softplus(q)
        out[:, pos] = np.exp(-H)
    return out


def survival_vjp(kind, beta, X, ts, G):
    """``sum_{i,k} G[i, k] * dS_i(ts[k]) / dbeta`` for ``ts > 0``."""
    X = np.atleast_2d(X)
    z, a = _split(kind, beta, X)
    logt = np.log(np.asarray(ts, dtype=float))[None, :]
    n, p = X.shape
    out = np.zeros(n_params(kind, p))
    if kind == "exp":
        H = _exp(z[:, None] + logt)
        dHz = H
    else:
        alpha = float(_exp(a))
        w = logt - z[:, None]
        if kind == "weibull":
            H = _exp(alpha * w)
            dHz, dHa = -alpha * H, alpha * w * H
        else:
            H = _softplus(alpha * w)
            sig = _sigmoid(alpha * w)
            dHz, dHa = -alpha * sig, alpha * w * sig
    GS = -G * np.exp(-H)  # dS = -S dH
    if kind != "exp":
        out[p + 1] = np.sum(GS * dHa)
    gz = np.sum(GS * dHz, axis=1)
    out[0] = gz.sum()
    out[1 : p + 1] = X.T @ gz
    return out


# scalar API -------------------------------------------------------------


def _point(lp: LeafParamsParametric, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != lp.gamma.shape:
        raise DimensionMismatch(f"x has {x.size} features, gamma has {lp.gamma.size}")
    return lp.to_vector(), x[None, :]


def hazard(kind: str, lp: LeafParamsParametric, x, t: float) -> float:
    beta, X = _point(lp, x)
    return float(np.exp(log_hazard_cumhaz(kind, beta, X, np.array([t]))[0][0]))


def cumhaz(kind: str, lp: LeafParamsParametric, x, t: float) -> float:
    beta, X = _point(lp, x)
    return float(log_hazard_cumhaz(kind, beta, X, np.array([t]))[1][0])


def survival(kind: str, lp: LeafParamsParametric, x, t: float) -> float:
    beta, X = _point(lp, x)
    if t < 0:
        raise NonPositiveTime()
    return float(survival_curves(kind, beta, X, [t])[0, 0])


def nll(kind: str, lp: LeafParamsParametric, x, t: float, c: int) -> float:
    beta, X = _point(lp, x)
    return float(nll_terms(kind, beta, X, np.array([t]), np.array([c]), grad=False)[0][0])


def nll_grad(kind: str, lp: LeafParamsParametric, x, t: float, c: int) -> np.ndarray:
    beta, X = _point(lp, x)
    return nll_terms(kind, beta, X, np.array([t]), np.array([c]))[1][0]

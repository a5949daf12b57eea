"""Limited-memory BFGS with a backtracking Armijo line search.

If the objective or its gradient comes back NaN (or ``-inf``) the run is
abandoned and restarted once from the best finite point with a derivative
free Nelder-Mead simplex.  A trial value of ``+inf`` is treated as an
infeasible step and simply backtracked, which lets callers express barriers.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import NonFiniteAtStart

log = logging.getLogger(__name__)


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAIL = "LineSearchFail"
    FALLBACK_USED = "FallbackUsed"
    NON_FINITE = "NonFinite"


@dataclass
class SolveReport:
    x: np.ndarray
    fun: float
    grad_norm: float
    nit: int
    status: Status
    nfev: int = 0
    f0: float = np.nan


class _Abort(Exception):
    pass


def minimize(
    fun,
    x0,
    gtol: float = 1e-6,
    max_iter: int = 500,
    memory: int = 10,
    ftol: float = 0.0,
    armijo: float = 1e-4,
    max_backtracks: int = 60,
    fallback_maxiter: int = 40000,
) -> SolveReport:
    """Minimize ``fun(x) -> (value, gradient)`` from ``x0``.

    Stops when ``||grad||_inf < gtol``, when a step improves the value by less
    than ``ftol * max(1, |f|)`` (disabled by default), or after ``max_iter``
    iterations.  The returned point is never worse than ``x0``.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float)
    nfev = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteAtStart(f"objective is {f} at the starting point")
    f0 = f
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    status = Status.MAX_ITER
    it = 0
    try:
        for it in range(max_iter):
            if np.max(np.abs(g)) < gtol:
                status = Status.CONVERGED
                break
            d = _two_loop(g, S, Y)
            gd = float(g @ d)
            if gd >= 0:
                S.clear()
                Y.clear()
                d, gd = -g, -float(g @ g)
            step = 1.0 if S else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
            for _ in range(max_backtracks):
                x_new = x + step * d
                f_new, g_new = fun(x_new)
                nfev += 1
                f_new = float(f_new)
                if np.isnan(f_new) or f_new == -np.inf:
                    raise _Abort
                if f_new <= f + armijo * step * gd:
                    g_new = np.asarray(g_new, dtype=float)
                    if not np.all(np.isfinite(g_new)):
                        raise _Abort
                    break
                if np.isfinite(f_new):
                    # safeguarded quadratic interpolation
                    denom = 2.0 * (f_new - f - gd * step)
                    trial = -gd * step * step / denom if denom > 0 else 0.5 * step
                    step = min(max(trial, 0.1 * step), 0.5 * step)
                else:
                    step *= 0.5
            else:
                status = Status.LINE_SEARCH_FAIL
                break
            s_vec, y_vec = x_new - x, g_new - g
            decrease = f - f_new
            x, f, g = x_new, f_new, g_new
            if s_vec @ y_vec > 1e-10 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
                S.append(s_vec)
                Y.append(y_vec)
            if ftol > 0 and decrease <= ftol * max(1.0, abs(f)):
                status = Status.CONVERGED
                it += 1
                break
        else:
            it = max_iter
    except _Abort:
        log.debug("non-finite objective after %d iterations; switching to Nelder-Mead", it)
        return _fallback(fun, x, f, f0, it, nfev, fallback_maxiter)
    return SolveReport(x, f, float(np.max(np.abs(g))) if g.size else 0.0, it, status, nfev, f0)


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _fallback(fun, x_best, f_best, f0, nit, nfev, maxiter):
    def value(z):
        v = float(fun(z)[0])
        return v if np.isfinite(v) else np.inf

    res = _scipy_minimize(value, x_best, method="Nelder-Mead", options={"maxiter": maxiter, "maxfev": 2 * maxiter})
    x, f = (res.x, float(res.fun)) if np.isfinite(res.fun) and res.fun <= f_best else (x_best, f_best)
    _, g = fun(x)
    g = np.asarray(g, dtype=float)
    gn = float(np.max(np.abs(g))) if np.all(np.isfinite(g)) and g.size else np.nan
    return SolveReport(np.asarray(x, dtype=float), f, gn, nit + int(res.nit), Status.FALLBACK_USED, nfev + int(res.nfev), f0)

"""Slow, loop-based reference implementations used to check the vectorized code."""
import math

import numpy as np


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def path_prob(omega, x, depth, leaf, root=1):
    """Product of branch probabilities from ``root`` down to ``leaf``."""
    prob, n = 1.0, leaf
    while n > root:
        parent = n // 2
        q = sig(float(omega[parent - 1, 1:] @ x - omega[parent - 1, 0]))
        prob *= q if n % 2 == 0 else 1.0 - q
        n = parent
    return prob


def param_nll(kind, beta, x, t, c):
    p = len(x)
    z = beta[0] + float(np.dot(beta[1 : p + 1], x))
    if kind == "exp":
        lam = math.exp(z)
        return -c * math.log(lam) + lam * t
    alpha = math.exp(beta[p + 1])
    u = (t * math.exp(-z)) ** alpha
    if kind == "weibull":
        h = alpha / t * u
        return -c * math.log(h) + u
    h = alpha / t * u / (1.0 + u)
    return -c * math.log(h) + math.log1p(u)


def tree_error(kind, omega, beta, depth, X, t, c, lam):
    total = 0.0
    for i in range(len(t)):
        for leaf in range(2**depth, 2 ** (depth + 1)):
            total += path_prob(omega, X[i], depth, leaf) * param_nll(kind, beta[leaf - 2**depth], X[i], t[i], c[i])
    return total / len(t) + 0.5 * lam * float(np.sum(beta**2))


def hbp(omega, x, depth):
    n = 1
    while n < 2**depth:
        q = sig(float(omega[n - 1, 1:] @ x - omega[n - 1, 0]))
        n = 2 * n if q >= 0.5 else 2 * n + 1
    return n


def subtree_error(kind, omega, beta, depth, X, t, c, s):
    idx = []
    for i in range(len(t)):
        leaf = hbp(omega, X[i], depth)
        a = leaf
        while a > s:
            a //= 2
        if a == s:
            idx.append(i)
    leaves = [n for n in range(2**depth, 2 ** (depth + 1)) if (n >> (n.bit_length() - s.bit_length())) == s]
    total = 0.0
    for i in idx:
        for leaf in leaves:
            total += path_prob(omega, X[i], depth, leaf, root=s) * param_nll(kind, beta[leaf - 2**depth], X[i], t[i], c[i])
    return total / len(idx)


def fairness(curves, group, grid_w):
    total = 0.0
    for i in range(len(group)):
        if not group[i]:
            continue
        for j in range(len(group)):
            if group[j]:
                continue
            for k in range(len(grid_w)):
                total += grid_w[k] * (curves[i][k] - curves[j][k]) ** 2
    return total


def km(times, events):
    """Product-limit estimate returned as a list of (time, value) jumps."""
    out, s = [], 1.0
    for u in sorted(set(times)):
        d = sum(1 for ti, ci in zip(times, events) if ti == u and ci == 1)
        r = sum(1 for ti in times if ti >= u)
        if d:
            s *= 1.0 - d / r
            out.append((u, s))
    return out


def step(jumps, t, left=False):
    v = 1.0
    for u, s in jumps:
        if u < t or (u == t and not left):
            v = s
    return v


def c_index(S, times, events, G=None):
    """``S[i](t)`` is point i's survival function; optional IPCW ``G`` jumps."""
    num = den = 0.0
    n = len(times)
    for i in range(n):
        if events[i] != 1:
            continue
        w = 1.0 if G is None else step(G, times[i], left=True)
        if G is not None:
            if w <= 0:
                continue
            w = w**-2
        for j in range(n):
            if times[i] < times[j]:
                a, b = S[i](times[i]), S[j](times[i])
                den += w
                num += w * (1.0 if a < b else 0.5 if a == b else 0.0)
    return num / den


def auc(S, times, events, G, t):
    num = den = 0.0
    for i in range(len(times)):
        if not (times[i] <= t and events[i] == 1):
            continue
        g = step(G, times[i], left=True)
        if g <= 0:
            continue
        for j in range(len(times)):
            if times[j] > t:
                a, b = S[i](t), S[j](t)
                den += 1.0 / g
                num += (1.0 if a < b else 0.5 if a == b else 0.0) / g
    return num / den


def cd_auc(S, times, events, G):
    K = km(times, events)
    tmin, tmax = min(times), max(times)
    num = den = 0.0
    prev = 1.0
    for u, s in K:
        jump = prev - s
        prev = s
        if not (tmin < u <= tmax):
            continue
        has_case = any(times[i] <= u and events[i] == 1 and step(G, times[i], left=True) > 0 for i in range(len(times)))
        has_ctrl = any(tj > u for tj in times)
        if not (has_case and has_ctrl):
            continue
        num += auc(S, times, events, G, u) * jump
        den += jump
    return num / den


def brier(S, times, events, G, t):
    total = 0.0
    for i in range(len(times)):
        if times[i] <= t and events[i] == 1:
            g = step(G, times[i], left=True)
            if g > 0:
                total += S[i](t) ** 2 / g
        elif times[i] > t:
            g = step(G, t)
            if g > 0:
                total += (1.0 - S[i](t)) ** 2 / g
    return total / len(times)


def ibs(S, times, events, G):
    grid = sorted(set([0.0] + list(times)))
    tmax = max(times)
    val = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        val += (b - a) * (brier(S, times, events, G, a) + brier(S, times, events, G, b)) / 2.0
    return val / tmax

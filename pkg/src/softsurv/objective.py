"""Training error of a soft survival tree, its subtree restrictions, the group
fairness penalty, and analytic gradients.

The error is the routing-probability-weighted mean leaf NLL

    E = 1/N sum_i sum_n P_in L_n(x_i, t_i, c_i; beta_n) + lam/2 ||beta||^2

and the fair objective adds ``rho * penalty`` where the penalty sums squared
differences between the single-leaf survival curves of every (group,
complement) pair of points over a time grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRestrictedSet, MissingGroupColumn, NonFinite
from .leafmodel import LeafModelSpec
from .tree import TreeParams, TreeTopology, branch_probs, hbp_leaves, hbp_path_contains, subtree_leaf_probs

DEFAULT_LAMBDA_BETA = 4.0  # lam/2 * ||beta||^2 == 2 * ||beta||^2


@dataclass
class ObjectiveContext:
    X: np.ndarray
    times: np.ndarray
    events: np.ndarray
    spec: LeafModelSpec
    lam_beta: float = DEFAULT_LAMBDA_BETA
    rho: float = 0.0
    group: np.ndarray | None = None
    fair_weighting: str = "unit"  # or "trapezoid"
    grid: np.ndarray = field(init=False)
    grid_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.times = np.asarray(self.times, dtype=float)
        self.events = np.asarray(self.events).astype(int)
        if self.lam_beta < 0 or self.rho < 0:
            raise ValueError("lam_beta and rho must be nonnegative")
        self.grid = np.unique(self.times)
        self.grid_weights = _grid_weights(self.grid, self.fair_weighting)

    @classmethod
    def from_dataset(cls, ds, spec, lam_beta=DEFAULT_LAMBDA_BETA, rho=0.0, fair_weighting="unit"):
        return cls(ds.features, ds.times, ds.events, spec, lam_beta, rho, ds.group, fair_weighting)

    @property
    def n(self) -> int:
        return len(self.times)


def _grid_weights(grid, how):
    if how == "unit":
        return np.ones(grid.size)
    if how == "trapezoid":
        w = np.zeros(grid.size)
        if grid.size > 1:
            d = np.diff(grid)
            w[:-1] += d / 2
            w[1:] += d / 2
        return w
    raise ValueError(f"unknown fairness weighting {how!r}")


def leaf_nll(ctx: ObjectiveContext, params: TreeParams, idx, leaves, grad=False):
    """NLL of points ``idx`` under each leaf in ``leaves``.

    Returns ``(L, valid, G)``: ``(n, k)`` values (0 where excluded), the validity
    mask and, with ``grad=True``, a list of ``(n, d)`` gradient arrays.
    """
    X, t, c = ctx.X[idx], ctx.times[idx], ctx.events[idx]
    L = np.empty((len(t), len(leaves)))
    valid = np.empty(L.shape, dtype=bool)
    grads = []
    for k, n in enumerate(leaves):
        val, g, ok = ctx.spec.nll_terms(params.leaf_beta(n), X, t, c, grad)
        L[:, k], valid[:, k] = val, ok
        grads.append(g)
    return L, valid, (grads if grad else None)


def restricted_set(params: TreeParams, X: np.ndarray, s: int, leaves=None) -> np.ndarray:
    """Indices of the points whose HBP path contains branch node ``s``."""
    if leaves is None:
        leaves = hbp_leaves(params, X)
    return np.flatnonzero(hbp_path_contains(params.depth, leaves, s))


def regularizer(ctx: ObjectiveContext, params: TreeParams) -> float:
    return 0.5 * ctx.lam_beta * float(np.sum(params.beta**2))


def tree_error(ctx: ObjectiveContext, params: TreeParams, regularize=True) -> float:
    P = subtree_leaf_probs(branch_probs(params.omega, ctx.X), params.depth, 1)
    L, _, _ = leaf_nll(ctx, params, slice(None), list(params.topology.leaf_nodes))
    val = float(np.sum(P * L)) / ctx.n
    if regularize:
        val += regularizer(ctx, params)
    if not np.isfinite(val):
        raise NonFinite(f"tree error is {val}; omega finite={np.all(np.isfinite(params.omega))}, "
                        f"beta finite={np.all(np.isfinite(params.beta))}")
    return val


def subtree_error(ctx: ObjectiveContext, params: TreeParams, s: int, idx=None) -> float:
    """Mean over ``I_s`` of the subtree-relative mixture NLL (no regularizer)."""
    if idx is None:
        idx = restricted_set(params, ctx.X, s)
    idx = np.asarray(idx)
    if idx.size == 0:
        raise EmptyRestrictedSet(f"no training point reaches node {s}")
    leaves = params.topology.subtree_leaves(s)
    P = subtree_leaf_probs(branch_probs(params.omega, ctx.X[idx]), params.depth, s)
    L, _, _ = leaf_nll(ctx, params, idx, leaves)
    return float(np.sum(P * L)) / idx.size


def subtree_vgrad(pb: np.ndarray, L: np.ndarray, depth: int, s: int, nodes) -> tuple[np.ndarray, np.ndarray]:
    """Per-point subtree mixture NLL and its derivative w.r.t. the split
    activations ``v_b`` of each branch node ``b`` in ``nodes``.

    ``L`` holds the NLL of each point under ``subtree_leaves(s)``.
    """
    topo = TreeTopology(depth)
    sub = topo.subtree_leaves(s)
    col = {n: k for k, n in enumerate(sub)}
    P = subtree_leaf_probs(pb, depth, s)
    A = P * L
    gv = np.empty((pb.shape[0], len(nodes)))
    for k, b in enumerate(nodes):
        left = [2 * b] if topo.is_leaf(2 * b) else topo.subtree_leaves(2 * b)
        right = [2 * b + 1] if topo.is_leaf(2 * b + 1) else topo.subtree_leaves(2 * b + 1)
        q = pb[:, b - 1]
        gv[:, k] = (1.0 - q) * A[:, [col[n] for n in left]].sum(axis=1) - q * A[:, [col[n] for n in right]].sum(axis=1)
    return A.sum(axis=1), gv


def grad_omega(ctx: ObjectiveContext, params: TreeParams, W_B, s: int = 1, idx=None) -> np.ndarray:
    """Gradient of :func:`subtree_error` (``s = 1``: of the tree error) w.r.t.
    ``omega_n`` for ``n`` in ``W_B``; rows follow ``W_B``."""
    if idx is None:
        idx = restricted_set(params, ctx.X, s) if s != 1 else np.arange(ctx.n)
    idx = np.asarray(idx)
    if idx.size == 0:
        raise EmptyRestrictedSet(f"no training point reaches node {s}")
    X = ctx.X[idx]
    pb = branch_probs(params.omega, X)
    L, _, _ = leaf_nll(ctx, params, idx, params.topology.subtree_leaves(s))
    _, gv = subtree_vgrad(pb, L, params.depth, s, list(W_B))
    # dv/domega = (-1, x)
    return np.column_stack([-gv.sum(axis=0), gv.T @ X]) / idx.size


def grad_beta(ctx: ObjectiveContext, params: TreeParams, W_L, s: int = 1, idx=None) -> np.ndarray:
    """Gradient w.r.t. ``beta_n`` (``n`` in ``W_L``) of the restricted data term
    plus the ridge term, plus ``rho`` times the fairness gradient."""
    if idx is None:
        idx = restricted_set(params, ctx.X, s) if s != 1 else np.arange(ctx.n)
    idx = np.asarray(idx)
    if idx.size == 0:
        raise EmptyRestrictedSet(f"no training point reaches node {s}")
    sub = params.topology.subtree_leaves(s)
    P = subtree_leaf_probs(branch_probs(params.omega, ctx.X[idx]), params.depth, s)
    _, _, G = leaf_nll(ctx, params, idx, list(W_L), grad=True)
    out = np.empty((len(W_L), params.beta.shape[1]))
    for k, n in enumerate(W_L):
        out[k] = P[:, sub.index(n)] @ G[k] / idx.size + ctx.lam_beta * params.leaf_beta(n)
    if ctx.rho > 0:
        fg = fairness_grad(ctx, params)
        out += ctx.rho * np.array([fg[n - 2**params.depth] for n in W_L])
    return out


# fairness ----------------------------------------------------------------


def _groups(ctx):
    if ctx.group is None:
        raise MissingGroupColumn()
    g = np.asarray(ctx.group).astype(bool)
    return g, ~g


def predicted_curves(ctx: ObjectiveContext, params: TreeParams, leaves=None) -> tuple[np.ndarray, np.ndarray]:
    """Single-leaf survival curves of every training point on the fairness grid."""
    if leaves is None:
        leaves = hbp_leaves(params, ctx.X)
    S = np.empty((ctx.n, ctx.grid.size))
    for n in np.unique(leaves):
        rows = leaves == n
        S[rows] = ctx.spec.survival(params.leaf_beta(n), ctx.X[rows], ctx.grid)
    return S, leaves


def pair_penalty(S: np.ndarray, g: np.ndarray, w: np.ndarray) -> float:
    """``sum_k w_k sum_{i in G} sum_{j not in G} (S_ik - S_jk)^2`` via group moments."""
    a, b = S[g], S[~g]
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0.0
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    per_t = (
        b.shape[0] * np.sum((a - ma) ** 2, axis=0)
        + a.shape[0] * np.sum((b - mb) ** 2, axis=0)
        + a.shape[0] * b.shape[0] * (ma - mb) ** 2
    )
    return float(per_t @ w)


def fairness_penalty(ctx: ObjectiveContext, params: TreeParams, leaves=None) -> float:
    g, _ = _groups(ctx)
    S, _ = predicted_curves(ctx, params, leaves)
    return pair_penalty(S, g, ctx.grid_weights)


def fairness_grad(ctx: ObjectiveContext, params: TreeParams, leaves=None, only=None) -> np.ndarray:
    """``(n_leaf, d)`` gradient of the penalty w.r.t. every leaf's beta, with the
    HBP assignment held fixed. ``only`` restricts the computation to some leaves."""
    g, gbar = _groups(ctx)
    S, leaves = predicted_curves(ctx, params, leaves)
    out = np.zeros_like(params.beta)
    if g.sum() == 0 or gbar.sum() == 0:
        return out
    dS = np.empty_like(S)
    dS[g] = 2.0 * gbar.sum() * (S[g] - S[gbar].mean(axis=0))
    dS[gbar] = 2.0 * g.sum() * (S[gbar] - S[g].mean(axis=0))
    dS *= ctx.grid_weights
    pos = ctx.grid > 0
    for n in np.unique(leaves) if only is None else only:
        rows = leaves == n
        if rows.any():
            out[n - 2**params.depth] = ctx.spec.survival_vjp(
                params.leaf_beta(n), ctx.X[rows], ctx.grid[pos], dS[rows][:, pos]
            )
    return out


def fair_objective(ctx: ObjectiveContext, params: TreeParams) -> float:
    E = tree_error(ctx, params)
    if ctx.rho == 0:
        return E
    return E + ctx.rho * fairness_penalty(ctx, params)

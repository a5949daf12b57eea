"""Decomposition trainer for soft survival trees.

Each macro iteration visits the branch nodes in heap order.  For node ``s``
the split parameters of the subtree rooted at ``s`` are updated first (BN
step, with a rebalancing heuristic when routing at ``s`` is lopsided), then
the leaf parameters below ``s`` (LN step).  Both steps only use the points
whose highest-probability path runs through ``s``.  The best parameters seen
by the full objective are returned.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.cluster import KMeans
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import davies_bouldin_score

from . import splines
from .data import SurvivalDataset
from .errors import DegenerateCluster, EmptyRestrictedSet
from .leafmodel import LeafModelSpec
from .metrics import kaplan_meier
from .objective import (
    DEFAULT_LAMBDA_BETA,
    ObjectiveContext,
    fair_objective,
    fairness_grad,
    fairness_penalty,
    leaf_nll,
    restricted_set,
    subtree_vgrad,
)
from .optimizer import minimize
from .tree import TreeParams, TreeTopology, branch_probs, hbp_leaves, subtree_leaf_probs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    depth: int = 2
    M_it: int = 10
    eps1: float = 0.1
    eps2: float = 0.3
    eps3: float = 0.4
    theta: float = 0.8
    lam_beta: float = DEFAULT_LAMBDA_BETA
    rho: float = 0.0
    restarts: int = 20
    seed: int = 0
    tol_rel: float = 1e-6
    init_mode: str = "random"  # or "clustering"
    clustering_repeats: int = 5
    spline_init: str = "km"  # "km": per-leaf KM least squares, "unit": s(y) = y
    fair_weighting: str = "unit"
    solver_max_iter: int = 500
    solver_gtol: float = 1e-6

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        for name in ("eps1", "eps2", "eps3", "theta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.M_it < 0:
            raise ValueError("M_it must be >= 0")
        if self.restarts < 1 or self.clustering_repeats < 1:
            raise ValueError("restarts and clustering_repeats must be >= 1")
        if self.lam_beta < 0 or self.rho < 0:
            raise ValueError("lam_beta and rho must be nonnegative")
        if self.init_mode not in ("random", "clustering"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.spline_init not in ("km", "unit"):
            raise ValueError(f"unknown spline_init {self.spline_init!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WorkingSet:
    s: int
    W_B: tuple[int, ...]
    W_L: tuple[int, ...]
    I_s: np.ndarray


def working_sets(depth: int, s: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if s == 1 and depth > 1:
        return (1,), ()
    D_B, D_L = TreeTopology(depth).descendants(s)
    return (s, *D_B), tuple(D_L)


def working_set(params: TreeParams, X: np.ndarray, s: int) -> WorkingSet:
    W_B, W_L = working_sets(params.depth, s)
    return WorkingSet(s, W_B, W_L, restricted_set(params, X, s))


# initialization -------------------------------------------------------------


def _ctx(ds: SurvivalDataset, spec: LeafModelSpec, cfg: TrainConfig) -> ObjectiveContext:
    return ObjectiveContext.from_dataset(ds, spec, cfg.lam_beta, cfg.rho, cfg.fair_weighting)


def default_leaf_beta(spec: LeafModelSpec, ds: SurvivalDataset) -> np.ndarray:
    """Covariate-free leaf matching the marginal event rate (parametric) or
    the unit spline ``s(y) = y`` (spline families)."""
    p = ds.p
    beta = np.zeros(spec.n_params(p))
    if spec.is_spline:
        beta[p + 1] = 1.0
        return beta
    rate = max(ds.events.sum(), 1) / ds.times.sum()
    # exp parameterizes the log rate, weibull/llog the log scale
    beta[0] = math.log(rate) if spec.family == "exp" else -math.log(rate)
    return beta


def init_random(ds: SurvivalDataset, spec: LeafModelSpec, seed: int, depth: int, spline_init: str = "unit",
                lam_beta: float = DEFAULT_LAMBDA_BETA) -> TreeParams:
    """Uniform(-1, 1) splits; every leaf starts at :func:`default_leaf_beta`.

    With ``spline_init="km"`` spline leaves are instead fitted to the KM curve
    of a bootstrap sample of ``N / 2^D`` points (one sample per leaf).
    """
    rng = np.random.default_rng(seed)
    topo = TreeTopology(depth)
    omega = rng.uniform(-1.0, 1.0, size=(topo.n_branch, ds.p + 1))
    beta = np.tile(default_leaf_beta(spec, ds), (topo.n_leaf, 1))
    if spec.is_spline and spline_init == "km":
        size = max(ds.n // topo.n_leaf, 2)
        for k in range(topo.n_leaf):
            idx = rng.integers(0, ds.n, size=size)
            beta[k] = spline_km_init(spec, ds, idx)
    return TreeParams(depth, omega, beta)


def spline_km_init(spec: LeafModelSpec, ds: SurvivalDataset, idx) -> np.ndarray:
    """Least-squares fit of the spline to the transformed KM curve of ``idx``.

    PH targets ``log(-log S)``, PO targets ``log((1 - S) / S)``.  Falls back to
    a straight line, then to ``s(y) = y``, whenever the fit is not increasing
    over the observed log-time range.
    """
    p, ks = ds.p, spec.knots
    unit = default_leaf_beta(spec, ds)
    t, c = ds.times[idx], ds.events[idx]
    km = kaplan_meier(t, c)
    S = km.values
    ok = (S > 0) & (S < 1)
    if ok.sum() < 2:
        return unit
    y = np.log(km.times[ok])
    target = np.log(-np.log(S[ok])) if spec.link == "ph" else np.log((1 - S[ok]) / S[ok])
    B, _ = splines.design(ks, y)
    check = np.linspace(ks.k_min, ks.k_max, 64)
    for cols in (B.shape[1], 2):
        if ok.sum() < cols:
            continue
        coef, *_ = np.linalg.lstsq(B[:, :cols], target, rcond=None)
        eta = np.zeros(ks.m + 2)
        eta[:cols] = coef
        if np.all(splines.spline_deriv(ks, eta, check) > 0):
            beta = unit.copy()
            beta[p:] = eta
            return beta
    return unit


def _pc_median_split(X):
    centered = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[0]
    left = proj <= np.median(proj)
    if left.all() or not left.any():
        left = np.arange(len(X)) < len(X) // 2
    return left


def two_means_split(X: np.ndarray, seed: int) -> np.ndarray:
    """Boolean mask of the points sent left by a 2-means split.

    The cluster containing the first point goes left.  Raises
    :class:`DegenerateCluster` when one side is empty.
    """
    if len(X) < 2:
        raise DegenerateCluster("fewer than two points at a branch node")
    labels = KMeans(n_clusters=2, n_init=1, random_state=seed).fit_predict(X)
    left = labels == labels[0]
    if left.all():
        raise DegenerateCluster("2-means produced an empty side")
    return left


def leaf_clusters(X: np.ndarray, depth: int, seed: int) -> np.ndarray:
    """Leaf index of every point after top-down 2-means splitting."""
    node = np.ones(len(X), dtype=int)
    rng = np.random.default_rng(seed)
    for n in TreeTopology(depth).branch_nodes:
        rows = np.flatnonzero(node == n)
        if rows.size == 0:
            continue
        try:
            left = two_means_split(X[rows], int(rng.integers(2**31)))
        except DegenerateCluster:
            left = _pc_median_split(X[rows]) if rows.size >= 2 else np.ones(rows.size, dtype=bool)
        node[rows] = np.where(left, 2 * n, 2 * n + 1)
    return node


def _db_index(X, labels):
    if len(np.unique(labels)) < 2 or len(np.unique(labels)) >= len(X):
        return np.inf
    return float(davies_bouldin_score(X, labels))


def select_partition(X: np.ndarray, depth: int, repeats: int, rng) -> tuple[np.ndarray, list]:
    """Leaf labels of the repeat with the lowest Davies-Bouldin index, and all scores."""
    best_labels, best_db, scores = None, np.inf, []
    for _ in range(repeats):
        labels = leaf_clusters(X, depth, int(rng.integers(2**31)))
        db = _db_index(X, labels)
        scores.append(db)
        if best_labels is None or db < best_db:
            best_labels, best_db = labels, db
    return best_labels, scores


# inverse ridge strength of the split regressions (features live in [0, 1])
SPLIT_C = 10.0


def fit_split(X: np.ndarray, left: np.ndarray, weights=None) -> np.ndarray | None:
    """Logistic regression with class 1 = left; returns ``(w0, w)`` in the
    tree's ``F(w . x - w0)`` orientation, or None with a single class."""
    if left.all() or not left.any():
        return None
    lr = LogisticRegression(C=SPLIT_C).fit(X, left.astype(int), sample_weight=weights)
    return np.concatenate([[-lr.intercept_[0]], lr.coef_[0]])


def fit_leaf(spec: LeafModelSpec, X, t, c, beta0, lam_beta, weights=None, max_iter=500, gtol=1e-6) -> np.ndarray:
    """Weighted-mean leaf NLL plus ridge term, minimized from ``beta0``.

    Points that are invalid for a spline at ``beta0`` stay excluded; a step
    that invalidates another point is rejected (infinite value).
    """
    n = len(t)
    if n == 0:
        return np.zeros_like(beta0)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    _, _, valid0 = spec.nll_terms(beta0, X, t, c, grad=False)
    w = w * valid0

    def fun(b):
        val, g, ok = spec.nll_terms(b, X, t, c, grad=True)
        if np.any(valid0 & ~ok):
            return np.inf, np.zeros_like(b)
        return float(w @ val) / n + 0.5 * lam_beta * float(b @ b), (w @ g) / n + lam_beta * b

    return minimize(fun, beta0, gtol=gtol, max_iter=max_iter).x


def init_clustering(ds: SurvivalDataset, spec: LeafModelSpec, cfg: TrainConfig, seed: int | None = None) -> TreeParams:
    """Splits from logistic regressions on the best of ``clustering_repeats``
    top-down 2-means partitions (lowest Davies-Bouldin index); leaves from a
    maximum-likelihood fit on their cluster."""
    D = cfg.depth
    if ds.n < 2**D:
        raise DegenerateCluster(f"need at least {2**D} points for depth {D}")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    best_labels, _ = select_partition(ds.features, D, cfg.clustering_repeats, rng)
    params = init_random(ds, spec, int(rng.integers(2**31)), D, cfg.spline_init, cfg.lam_beta)
    topo = TreeTopology(D)
    for n in topo.branch_nodes:
        depth_n = topo.node_depth(n)
        through = (best_labels >> (D - depth_n)) == n
        left = ((best_labels >> (D - depth_n - 1)) == 2 * n)[through]
        w = fit_split(ds.features[through], left) if through.sum() >= 2 else None
        if w is not None:
            params.omega[n - 1] = w
    for n in topo.leaf_nodes:
        rows = best_labels == n
        if rows.any():
            beta0 = params.leaf_beta(n).copy()
            if spec.is_spline and cfg.spline_init == "km":
                beta0 = spline_km_init(spec, ds, np.flatnonzero(rows))
            params.beta[n - 2**D] = fit_leaf(spec, ds.features[rows], ds.times[rows], ds.events[rows], beta0,
                                             cfg.lam_beta, max_iter=cfg.solver_max_iter)
    return params


# BN step --------------------------------------------------------------------


@dataclass
class BranchUpdate:
    omega: np.ndarray
    branch: str  # "balanced", "moderate" or "high"
    L_s: float


def routing_weights(left: np.ndarray, L_s: float) -> np.ndarray:
    """``1 / (2 L_s)`` for left-routed points, ``1 / (2 (1 - L_s))`` otherwise."""
    # an empty side never uses its (infinite) weight
    wl = 1.0 / (2.0 * L_s) if L_s > 0 else 0.0
    wr = 1.0 / (2.0 * (1.0 - L_s)) if L_s < 1 else 0.0
    return np.where(left, wl, wr)


def _reroute_candidates(ctx, params, idx, s, left, nll_point):
    """Points on the majority side of ``s`` ordered by (NLL desc, index asc),
    skipping points whose alternative leaf has a non-increasing spline."""
    to_left = left.mean() < 0.5  # minority side is the target
    majority = np.flatnonzero(left != to_left)
    if ctx.spec.is_spline and majority.size:
        # HBP leaf below the other child of s
        target_child = 2 * s if to_left else 2 * s + 1
        pb = branch_probs(params.omega, ctx.X[idx[majority]])
        nodes = np.full(majority.size, target_child)
        while nodes[0] < 2**params.depth:
            go_left = pb[np.arange(majority.size), nodes - 1] >= 0.5
            nodes = np.where(go_left, 2 * nodes, 2 * nodes + 1)
        keep = np.ones(majority.size, dtype=bool)
        for n in np.unique(nodes):
            rows = nodes == n
            pts = idx[majority[rows]]
            bad = (ctx.events[pts] == 1) & ~ctx.spec.slope_positive(params.leaf_beta(n), ctx.times[pts])
            keep[np.flatnonzero(rows)[bad]] = False
        majority = majority[keep]
    order = np.lexsort((majority, -nll_point[majority]))
    return majority[order]


def update_branch_node(ctx: ObjectiveContext, params: TreeParams, ws: WorkingSet, eps1: float, eps2: float,
                       eps3: float, max_iter: int = 500, gtol: float = 1e-6) -> BranchUpdate:
    s, idx = ws.s, np.asarray(ws.I_s)
    if idx.size == 0:
        raise EmptyRestrictedSet(f"no training point reaches node {s}")
    X = ctx.X[idx]
    pb = branch_probs(params.omega, X)
    left = pb[:, s - 1] >= 0.5
    L_s = float(left.mean())
    leaves = params.topology.subtree_leaves(s)
    L, _, _ = leaf_nll(ctx, params, idx, leaves)
    omega = params.omega.copy()
    imbalanced = (L_s <= eps1 or L_s >= 1 - eps1) and eps1 * idx.size >= 1
    if not imbalanced:
        rows = [n - 1 for n in ws.W_B]
        shape = (len(rows), omega.shape[1])

        def fun(theta):
            om = omega.copy()
            om[rows] = theta.reshape(shape)
            pbt = branch_probs(om, X)
            val, gv = subtree_vgrad(pbt, L, params.depth, s, ws.W_B)
            g = np.column_stack([-gv.sum(axis=0), gv.T @ X]) / idx.size
            return float(val.sum()) / idx.size, g.ravel()

        res = minimize(fun, omega[rows].ravel(), gtol=gtol, max_iter=max_iter)
        omega[rows] = res.x.reshape(shape)
        return BranchUpdate(omega, "balanced", L_s)

    r = left.copy()
    branch = "moderate"
    if L_s <= eps2 or L_s >= 1 - eps2:
        branch = "high"
        nll_point, _ = subtree_vgrad(pb, L, params.depth, s, [])
        cand = _reroute_candidates(ctx, params, idx, s, left, nll_point)
        n_flip = min(math.ceil(eps3 * idx.size), cand.size)
        r[cand[:n_flip]] = ~r[cand[:n_flip]]
    w = fit_split(X, r, routing_weights(left, L_s))
    if w is not None:
        omega[s - 1] = w
    return BranchUpdate(omega, branch, L_s)


# LN step --------------------------------------------------------------------


def ln_step(ctx: ObjectiveContext, params: TreeParams, ws: WorkingSet, max_iter: int = 500,
            gtol: float = 1e-6) -> np.ndarray:
    """New ``beta`` with the rows of ``ws.W_L`` refitted on ``ws.I_s``.

    Without fairness each leaf is solved on its own (the objective is
    additive across leaves); with ``rho > 0`` the leaves are solved jointly
    with the penalty evaluated on all training points at the frozen routing.
    """
    beta = params.beta.copy()
    if not ws.W_L:
        return beta
    s, idx = ws.s, np.asarray(ws.I_s)
    if idx.size == 0:
        raise EmptyRestrictedSet(f"no training point reaches node {s}")
    sub = params.topology.subtree_leaves(s)
    P = subtree_leaf_probs(branch_probs(params.omega, ctx.X[idx]), params.depth, s)
    X, t, c = ctx.X[idx], ctx.times[idx], ctx.events[idx]
    if ctx.rho == 0:
        for n in ws.W_L:
            beta[n - 2**params.depth] = fit_leaf(ctx.spec, X, t, c, params.leaf_beta(n), ctx.lam_beta,
                                                 P[:, sub.index(n)],
                                                 max_iter, gtol)
        return beta
    return _joint_fair_ln(ctx, params, ws, P, sub, max_iter, gtol)


def _joint_fair_ln(ctx, params, ws, P, sub, max_iter, gtol):
    idx = np.asarray(ws.I_s)
    X, t, c = ctx.X[idx], ctx.times[idx], ctx.events[idx]
    rows = [n - 2**params.depth for n in ws.W_L]
    cols = [sub.index(n) for n in ws.W_L]
    d = params.beta.shape[1]
    valid0 = [ctx.spec.nll_terms(params.leaf_beta(n), X, t, c, grad=False)[2] for n in ws.W_L]
    all_leaves = hbp_leaves(params, ctx.X)
    work = params.copy()

    def fun(theta):
        B = theta.reshape(len(rows), d)
        work.beta[rows] = B
        val, grad = 0.0, np.zeros_like(B)
        for k in range(len(rows)):
            v, g, ok = ctx.spec.nll_terms(B[k], X, t, c, grad=True)
            if np.any(valid0[k] & ~ok):
                return np.inf, np.zeros_like(theta)
            w = P[:, cols[k]] * valid0[k]
            val += float(w @ v) / idx.size + 0.5 * ctx.lam_beta * float(B[k] @ B[k])
            grad[k] = (w @ g) / idx.size + ctx.lam_beta * B[k]
        val += ctx.rho * fairness_penalty(ctx, work, all_leaves)
        grad += ctx.rho * fairness_grad(ctx, work, all_leaves, only=list(ws.W_L))[rows]
        return val, grad.ravel()

    res = minimize(fun, params.beta[rows].ravel(), gtol=gtol, max_iter=max_iter)
    beta = params.beta.copy()
    beta[rows] = res.x.reshape(len(rows), d)
    return beta


# main loop ------------------------------------------------------------------


@dataclass
class History:
    rows: list = field(default_factory=list)  # (it, k, s, E, error_best, branch_taken)
    eps: list = field(default_factory=list)  # (it, eps1, eps2, eps3) after the decay of iteration it
    initial_error: float = float("nan")
    stop_reason: str = ""

    COLUMNS = ("it", "k", "s", "E", "error_best", "branch_taken")

    def error_best(self) -> np.ndarray:
        return np.array([r[4] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for it, k, s, E, best, branch in self.rows:
            w.writerow([it, k, s, repr(E), repr(best), branch])
        return buf.getvalue()


def train(ds: SurvivalDataset, spec: LeafModelSpec, cfg: TrainConfig, init: TreeParams) -> tuple[TreeParams, History]:
    """Run the decomposition from ``init``; returns the best parameters seen
    and the iteration history."""
    ctx = _ctx(ds, spec, cfg)
    return train_ctx(ctx, cfg, init)


def train_ctx(ctx: ObjectiveContext, cfg: TrainConfig, init: TreeParams) -> tuple[TreeParams, History]:
    params = init.copy()
    best = init.copy()
    error_best = fair_objective(ctx, params)
    hist = History(initial_error=error_best)
    eps1, eps2, eps3 = cfg.eps1, cfg.eps2, cfg.eps3
    k = 0
    hist.stop_reason = "max_iter"
    E_prev = error_best
    for it in range(1, cfg.M_it + 1):
        E = E_prev
        for s in params.topology.branch_nodes:
            ws = working_set(params, ctx.X, s)
            if ws.I_s.size == 0:
                E = fair_objective(ctx, params)
                hist.rows.append((it, k, s, E, error_best, "skipped"))
                k += 1
                continue
            upd = update_branch_node(ctx, params, ws, eps1, eps2, eps3, cfg.solver_max_iter, cfg.solver_gtol)
            params.omega = upd.omega
            params.beta = ln_step(ctx, params, ws, cfg.solver_max_iter, cfg.solver_gtol)
            E = fair_objective(ctx, params)
            if E < error_best:
                error_best = E
                best = params.copy()
            hist.rows.append((it, k, s, E, error_best, upd.branch))
            k += 1
        eps1, eps2, eps3 = cfg.theta * eps1, cfg.theta * eps2, cfg.theta * eps3
        hist.eps.append((it, eps1, eps2, eps3))
        # stalled: the sweep moved the objective by less than tol_rel (relative)
        if abs(E_prev - E) < cfg.tol_rel * max(abs(E_prev), 1e-300):
            hist.stop_reason = "tol_rel"
            break
        E_prev = E
    return best, hist


def train_restarts(ds: SurvivalDataset, spec: LeafModelSpec, cfg: TrainConfig) -> tuple[TreeParams, History, list]:
    """Train from ``cfg.restarts`` initial solutions (seeded ``seed + r``) and
    keep the one with the lowest final objective."""
    results = []
    for r in range(cfg.restarts):
        seed = cfg.seed + r
        if cfg.init_mode == "clustering":
            init = init_clustering(ds, spec, cfg, seed)
        else:
            init = init_random(ds, spec, seed, cfg.depth, cfg.spline_init, cfg.lam_beta)
        params, hist = train(ds, spec, cfg, init)
        results.append((min(hist.initial_error, *hist.error_best()) if hist.rows else hist.initial_error,
                        params, hist))
    k = int(np.argmin([r[0] for r in results]))
    return results[k][1], results[k][2], [r[0] for r in results]

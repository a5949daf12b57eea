"""Maximal binary soft trees of fixed depth.

Nodes are numbered in heap order: the root is 1, the children of ``n`` are
``2n`` (left) and ``2n + 1`` (right).  Branch nodes are ``1..2^D - 1`` and
leaves ``2^D..2^(D+1) - 1``.  Row ``n - 1`` of ``omega`` holds the split of
branch node ``n`` as ``(intercept, weights...)``; row ``n - 2^D`` of ``beta``
holds the survival parameters of leaf ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch


def sigmoid(v):
    # expit: no overflow for any |v| and full relative precision in both tails
    return expit(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class TreeTopology:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("tree depth must be >= 1")

    @property
    def n_branch(self) -> int:
        return 2**self.depth - 1

    @property
    def n_leaf(self) -> int:
        return 2**self.depth

    @property
    def branch_nodes(self) -> range:
        return range(1, 2**self.depth)

    @property
    def leaf_nodes(self) -> range:
        return range(2**self.depth, 2 ** (self.depth + 1))

    def is_leaf(self, n: int) -> bool:
        return n >= 2**self.depth

    def node_depth(self, n: int) -> int:
        return n.bit_length() - 1

    def ancestors(self, n: int) -> tuple[list[int], list[int]]:
        """``(A_L(n), A_R(n))``: ancestors whose left / right branch is on the path to ``n``."""
        left, right = [], []
        while n > 1:
            parent = n // 2
            (left if n % 2 == 0 else right).append(parent)
            n = parent
        return left[::-1], right[::-1]

    def descendants(self, s: int) -> tuple[list[int], list[int]]:
        """``(D_B(s), D_L(s))``: branch and leaf descendants of ``s`` (``s`` excluded)."""
        branches, leaves = [], []
        level = [s]
        while level:
            nxt = []
            for n in level:
                for child in (2 * n, 2 * n + 1):
                    if self.is_leaf(child):
                        leaves.append(child)
                    else:
                        branches.append(child)
                        nxt.append(child)
            level = nxt
        return branches, leaves

    @cached_property
    def _subtree_leaves(self) -> dict:
        return {s: self.descendants(s)[1] for s in self.branch_nodes}

    def subtree_leaves(self, s: int) -> list[int]:
        return self._subtree_leaves[s]


@dataclass
class TreeParams:
    depth: int
    omega: np.ndarray  # (2^D - 1, p + 1)
    beta: np.ndarray  # (2^D, d)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float) if not isinstance(self.omega, np.ndarray) else self.omega
        self.beta = np.asarray(self.beta, dtype=float) if not isinstance(self.beta, np.ndarray) else self.beta
        topo = TreeTopology(self.depth)
        if self.omega.ndim != 2 or self.omega.shape[0] != topo.n_branch:
            raise DimensionMismatch(f"omega must have {topo.n_branch} rows for depth {self.depth}")
        if self.beta.ndim != 2 or self.beta.shape[0] != topo.n_leaf:
            raise DimensionMismatch(f"beta must have {topo.n_leaf} rows for depth {self.depth}")

    @property
    def topology(self) -> TreeTopology:
        return TreeTopology(self.depth)

    @property
    def p(self) -> int:
        return self.omega.shape[1] - 1

    def copy(self) -> TreeParams:
        return TreeParams(self.depth, np.array(self.omega), np.array(self.beta))

    def leaf_beta(self, n: int) -> np.ndarray:
        return self.beta[n - 2**self.depth]

    def all_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.beta)))


def branch_prob(omega_n, x) -> float:
    """Probability of taking the left branch: ``F(w . x - w0)``."""
    omega_n = np.asarray(omega_n, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if omega_n.shape != (x.size + 1,):
        raise DimensionMismatch(f"omega_n has {omega_n.size} entries, expected p + 1 = {x.size + 1}")
    return float(sigmoid(x @ omega_n[1:] - omega_n[0]))


def branch_probs(omega: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``(N, n_branch)`` left-branch probabilities for every point and branch node."""
    X = np.atleast_2d(X)
    if X.shape[1] != omega.shape[1] - 1:
        raise DimensionMismatch(f"X has {X.shape[1]} features, omega expects {omega.shape[1] - 1}")
    return sigmoid(X @ omega[:, 1:].T - omega[:, 0])


def subtree_leaf_probs(pb: np.ndarray, depth: int, s: int = 1) -> np.ndarray:
    """Leaf probabilities relative to the subtree rooted at ``s``.

    ``pb`` is the ``(N, n_branch)`` output of :func:`branch_probs`; columns of
    the result follow ``TreeTopology(depth).subtree_leaves(s)``.
    """
    N = pb.shape[0]
    level = {s: np.ones(N)}
    while True:
        nxt = {}
        for n, P in level.items():
            if n >= 2**depth:
                return np.column_stack([level[k] for k in sorted(level)])
            q = pb[:, n - 1]
            nxt[2 * n] = P * q
            nxt[2 * n + 1] = P * (1.0 - q)
        level = nxt


def leaf_prob_matrix(params: TreeParams, X: np.ndarray) -> np.ndarray:
    return subtree_leaf_probs(branch_probs(params.omega, X), params.depth, 1)


def leaf_probs(params: TreeParams, x) -> np.ndarray:
    """``P_xn`` for every leaf of the tree, in heap order."""
    return leaf_prob_matrix(params, np.atleast_2d(np.asarray(x, dtype=float)))[0]


def hbp_leaf(params: TreeParams, x) -> int:
    """Leaf reached by following the branch with probability >= 0.5 at each node.

    Only the split rows on the path are read.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n, first_leaf = 1, 2**params.depth
    while n < first_leaf:
        n = 2 * n if branch_prob(params.omega[n - 1], x) >= 0.5 else 2 * n + 1
    return n


def hbp_leaves(params: TreeParams, X: np.ndarray, pb: np.ndarray | None = None) -> np.ndarray:
    """Vectorized :func:`hbp_leaf` over the rows of ``X``."""
    if pb is None:
        pb = branch_probs(params.omega, X)
    nodes = np.ones(pb.shape[0], dtype=int)
    rows = np.arange(pb.shape[0])
    for _ in range(params.depth):
        left = pb[rows, nodes - 1] >= 0.5
        nodes = np.where(left, 2 * nodes, 2 * nodes + 1)
    return nodes


def hbp_path_contains(params_depth: int, leaves: np.ndarray, s: int) -> np.ndarray:
    """Mask of points whose HBP path (ending at ``leaves``) passes through ``s``."""
    shift = params_depth - (int(s).bit_length() - 1)
    return (leaves >> shift) == s


def predict_survival(params: TreeParams, spec, x, ts) -> np.ndarray:
    """Survival curve of the HBP leaf of ``x`` evaluated at ``ts``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    leaf = hbp_leaf(params, x)
    beta = params.beta[leaf - 2**params.depth]
    return spec.survival(beta, x[None, :], np.atleast_1d(ts))[0]


def predict_survival_matrix(params: TreeParams, spec, X: np.ndarray, ts, leaves=None) -> np.ndarray:
    """``(N, len(ts))`` single-leaf predictions for every row of ``X``."""
    X = np.atleast_2d(X)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if leaves is None:
        leaves = hbp_leaves(params, X)
    out = np.empty((X.shape[0], ts.size))
    for n in np.unique(leaves):
        rows = leaves == n
        out[rows] = spec.survival(params.beta[n - 2**params.depth], X[rows], ts)
    return out

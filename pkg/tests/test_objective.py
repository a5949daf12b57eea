import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import fd_grad, rel_err
from softsurv.errors import EmptyRestrictedSet, MissingGroupColumn
from softsurv.leafmodel import LeafModelSpec
from softsurv.objective import (
    ObjectiveContext,
    fair_objective,
    fairness_grad,
    fairness_penalty,
    grad_beta,
    grad_omega,
    pair_penalty,
    predicted_curves,
    restricted_set,
    subtree_error,
    tree_error,
)
from softsurv.splines import place_knots
from softsurv.tree import TreeParams

FAMILIES = ("exp", "weibull", "llog")


def random_problem(rng, kind="exp", depth=2, n=25, p=2, lam=0.5, rho=0.0, group=True, scale=1.0):
    X = rng.uniform(0, 1, (n, p))
    t = rng.uniform(0.2, 3.0, n)
    c = rng.integers(0, 2, n)
    if kind.startswith("spline"):
        spec = LeafModelSpec(kind, place_knots(t, c, m=2))
        d = spec.n_params(p)
        beta = np.zeros((2**depth, d))
        beta[:, :p] = rng.normal(0, 0.3, (2**depth, p))
        beta[:, p] = rng.normal(0, 0.3, 2**depth)
        beta[:, p + 1] = rng.uniform(0.8, 1.5, 2**depth)
        beta[:, p + 2 :] = rng.normal(0, 0.02, (2**depth, d - p - 2))
    else:
        spec = LeafModelSpec(kind)
        beta = rng.normal(0, 0.4, (2**depth, spec.n_params(p)))
    omega = rng.normal(0, 2 * scale, (2**depth - 1, p + 1))
    g = rng.integers(0, 2, n) if group else None
    ctx = ObjectiveContext(X, t, c, spec, lam, rho, g)
    return ctx, TreeParams(depth, omega, beta)


def test_hand_example():
    spec = LeafModelSpec("exp")
    ctx = ObjectiveContext(np.array([[0.3]]), [2.0], [0], spec, lam_beta=0.0)
    params = TreeParams(1, np.zeros((1, 2)), np.zeros((2, 2)))
    assert tree_error(ctx, params) == pytest.approx(2.0, abs=1e-15)
    ctx.lam_beta = 4.0
    assert tree_error(ctx, params) == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("kind", FAMILIES)
def test_tree_error_matches_oracle(kind):
    rng = np.random.default_rng(1)
    for _ in range(20):
        ctx, params = random_problem(rng, kind, depth=int(rng.integers(1, 4)))
        want = oracles.tree_error(kind, params.omega, params.beta, params.depth, ctx.X, ctx.times, ctx.events, ctx.lam_beta)
        assert tree_error(ctx, params) == pytest.approx(want, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("kind", FAMILIES)
def test_subtree_error_matches_oracle(kind):
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(30):
        ctx, params = random_problem(rng, kind, depth=3)
        for s in range(1, 8):
            if restricted_set(params, ctx.X, s).size == 0:
                with pytest.raises(EmptyRestrictedSet):
                    subtree_error(ctx, params, s)
                continue
            want = oracles.subtree_error(kind, params.omega, params.beta, 3, ctx.X, ctx.times, ctx.events, s)
            assert subtree_error(ctx, params, s) == pytest.approx(want, rel=1e-12, abs=1e-12)
            checked += 1
    assert checked > 50


def test_subtree_root_is_unregularized_tree_error(rng):
    ctx, params = random_problem(rng)
    assert subtree_error(ctx, params, 1, np.arange(ctx.n)) == pytest.approx(tree_error(ctx, params, regularize=False), rel=1e-13)


def test_bottom_node_with_equal_leaves_ignores_split(rng):
    ctx, params = random_problem(rng, depth=1)
    params.beta[1] = params.beta[0]
    idx = np.arange(ctx.n)
    base = subtree_error(ctx, params, 1, idx)
    params.omega[0] = rng.normal(0, 5, params.omega.shape[1])
    assert subtree_error(ctx, params, 1, idx) == pytest.approx(base, rel=1e-13)


@pytest.mark.parametrize("kind", FAMILIES + ("spline-po", "spline-ph"))
def test_grad_omega_fd(kind):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(25):
        ctx, params = random_problem(rng, kind, depth=2, scale=0.5)
        nodes = [1, 2, 3]
        g = grad_omega(ctx, params, nodes, 1, np.arange(ctx.n))

        def f(v):
            q = TreeParams(2, v.reshape(params.omega.shape), params.beta)
            return tree_error(ctx, q, regularize=False)

        worst = max(worst, rel_err(g.ravel(), fd_grad(f, params.omega.ravel().copy())))
    assert worst < 1e-5


@pytest.mark.parametrize("kind", FAMILIES)
def test_grad_beta_fd(kind):
    rng = np.random.default_rng(4)
    for _ in range(25):
        ctx, params = random_problem(rng, kind, depth=2)
        leaves = [4, 5, 6, 7]
        g = grad_beta(ctx, params, leaves, 1, np.arange(ctx.n))

        def f(v):
            return tree_error(ctx, TreeParams(2, params.omega, v.reshape(params.beta.shape)))

        assert rel_err(g.ravel(), fd_grad(f, params.beta.ravel().copy())) < 1e-5


def test_saturated_split_has_zero_gradient(rng):
    ctx, params = random_problem(rng, depth=1)
    params.omega[0] = [-1e3, 0.0, 0.0]  # p = 1 for every point
    g = grad_omega(ctx, params, [1], 1, np.arange(ctx.n))
    assert np.all(np.abs(g) < 1e-12)


def test_unreached_leaf_gradient_is_pure_ridge(rng):
    ctx, params = random_problem(rng, depth=1)
    params.omega[0] = [-1e3, 0.0, 0.0]  # nothing reaches leaf 3
    g = grad_beta(ctx, params, [3], 1, np.arange(ctx.n))
    np.testing.assert_array_equal(g[0], ctx.lam_beta * params.beta[1])


def test_fairness_pair_example():
    S = np.vstack([np.ones(5), np.zeros(5)])
    assert pair_penalty(S, np.array([True, False]), np.ones(5)) == 5.0


def test_fairness_zero_for_shared_leaf(rng):
    ctx, params = random_problem(rng, depth=1)
    params.beta[:, 1:] = 0.0  # covariate-free leaves
    params.beta[1] = params.beta[0]
    assert fairness_penalty(ctx, params) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("kind", FAMILIES + ("spline-po",))
def test_fairness_matches_oracle(kind):
    rng = np.random.default_rng(5)
    for _ in range(10):
        ctx, params = random_problem(rng, kind, n=20)
        S, _ = predicted_curves(ctx, params)
        want = oracles.fairness(S.tolist(), ctx.group.astype(bool).tolist(), ctx.grid_weights.tolist())
        assert fairness_penalty(ctx, params) == pytest.approx(want, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", FAMILIES + ("spline-po", "spline-ph"))
def test_fairness_grad_fd(kind):
    rng = np.random.default_rng(6)
    for _ in range(10):
        ctx, params = random_problem(rng, kind, n=20)
        g = fairness_grad(ctx, params)
        from softsurv.tree import hbp_leaves

        leaves = hbp_leaves(params, ctx.X)

        def f(v):
            return fairness_penalty(ctx, TreeParams(2, params.omega, v.reshape(params.beta.shape)), leaves)

        assert rel_err(g.ravel(), fd_grad(f, params.beta.ravel().copy())) < 1e-5


def test_fairness_needs_group(rng):
    ctx, params = random_problem(rng, group=False)
    with pytest.raises(MissingGroupColumn):
        fairness_penalty(ctx, params)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 10.0))
def test_fair_objective_additivity(seed, rho):
    ctx, params = random_problem(np.random.default_rng(seed), rho=rho)
    diff = fair_objective(ctx, params) - tree_error(ctx, params)
    assert diff == pytest.approx(rho * fairness_penalty(ctx, params), rel=1e-10, abs=1e-10)


def test_rho_zero_is_bitwise_tree_error(rng):
    ctx, params = random_problem(rng, rho=0.0)
    assert fair_objective(ctx, params) == tree_error(ctx, params)


def test_masked_pairs_contribute_zero():
    rng = np.random.default_rng(7)
    ctx, params = random_problem(rng, "spline-ph", depth=1)
    # leaf 3 decreases in log-time, so its event terms are all masked
    p = ctx.X.shape[1]
    params.beta[1, p + 1] = -1.0
    params.beta[1, p + 2 :] = 0.0
    params.omega[0] = 0.0  # P = 1/2, 1/2
    e = tree_error(ctx, params, regularize=False)
    total = 0.0
    for k in range(2):
        val, _, ok = ctx.spec.nll_terms(params.beta[k], ctx.X, ctx.times, ctx.events, False)
        if k == 1:
            np.testing.assert_array_equal(ok, ctx.events == 0)
        assert np.all(val[~ok] == 0.0)
        total += 0.5 * val.sum()
    assert e == pytest.approx(total / ctx.n, rel=1e-12)

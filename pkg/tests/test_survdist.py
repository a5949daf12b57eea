import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softsurv import survdist
from softsurv.errors import NonPositiveTime
from softsurv.survdist import LeafParamsParametric as LP

from conftest import fd_grad, rel_err


def lp(kind, mu, alpha=1.0, p=1):
    # exp: mu is the rate; weibull/llog: mu is the scale
    anc = [] if kind == "exp" else [math.log(alpha)]
    return LP(math.log(mu), np.zeros(p), anc)


X0 = np.zeros(1)


def test_exp_hazard_constant():
    for t in (0.1, 1.0, 7.0):
        assert survdist.hazard("exp", lp("exp", 1.0), X0, t) == pytest.approx(1.0, abs=1e-15)


def test_weibull_alpha_one_constant_hazard():
    for t in (0.1, 1.0, 7.0):
        assert survdist.hazard("weibull", lp("weibull", 2.0, 1.0), X0, t) == pytest.approx(0.5, rel=1e-12)


def test_llog_hazard_hand_value():
    assert survdist.hazard("llog", lp("llog", 1.0, 2.0), X0, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_cumhaz_examples():
    assert survdist.cumhaz("exp", lp("exp", 2.0), X0, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert survdist.cumhaz("weibull", lp("weibull", 1.0, 2.0), X0, 3.0) == pytest.approx(9.0, rel=1e-13)
    for a in (0.3, 1.0, 4.0):
        assert survdist.cumhaz("llog", lp("llog", 3.0, a), X0, 3.0) == pytest.approx(math.log(2), rel=1e-13)


def test_survival_examples():
    for kind in survdist.FAMILIES:
        assert survdist.survival(kind, lp(kind, 1.3, 1.7), X0, 0.0) == 1.0
    assert survdist.survival("llog", lp("llog", 2.5, 3.0), X0, 2.5) == pytest.approx(0.5, rel=1e-14)
    assert survdist.survival("exp", lp("exp", 1.0), X0, 1.0) == pytest.approx(math.exp(-1), rel=1e-14)


def test_llog_survival_closed_form():
    mu, a, t = 1.7, 2.3, 0.9
    assert survdist.survival("llog", lp("llog", mu, a), X0, t) == pytest.approx(1 / (1 + (t / mu) ** a), rel=1e-13)


def test_nll_examples():
    assert survdist.nll("exp", lp("exp", 1.0), X0, 2.0, 0) == pytest.approx(2.0)
    assert survdist.nll("exp", lp("exp", 1.0), X0, 2.0, 1) == pytest.approx(2.0)


def test_nonpositive_time_rejected():
    with pytest.raises(NonPositiveTime):
        survdist.nll("weibull", lp("weibull", 1.0, 1.0), X0, 0.0, 1)
    with pytest.raises(NonPositiveTime):
        survdist.hazard("exp", lp("exp", 1.0), X0, -1.0)


def test_exponent_clamp_no_overflow():
    beta = np.array([800.0, 0.0, 0.0])
    val, g = survdist.nll_terms("weibull", beta, np.zeros((1, 1)), np.array([1.0]), np.array([1]))
    assert np.all(np.isfinite(val)) and np.all(np.isfinite(g))


params = st.tuples(
    st.sampled_from(survdist.FAMILIES),
    st.floats(-2, 2), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5),
    st.floats(0.05, 5.0), st.integers(0, 1), st.integers(0, 2**31 - 1),
)


@given(params)
def test_nll_gradient_matches_fd(args):
    kind, g0, g1, a, t, c, seed = args
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, 2)
    beta = np.concatenate([[g0], [g1, -g1 / 2], [a] if kind != "exp" else []])
    f = lambda b: survdist.nll_terms(kind, b, x[None], np.array([t]), np.array([c]), grad=False)[0][0]
    g = survdist.nll_terms(kind, beta, x[None], np.array([t]), np.array([c]))[1][0]
    assert rel_err(g, fd_grad(f, beta)) < 1e-5


@given(params)
def test_weibull_alpha_one_equals_exp(args):
    _, g0, g1, _, t, c, seed = args
    x = np.random.default_rng(seed).uniform(0, 1, 2)
    wb = np.array([g0, g1, 0.3, 0.0])  # scale mu, alpha = 1
    ex = -wb[:3]  # rate 1 / mu
    v_w = survdist.nll_terms("weibull", wb, x[None], [t], [c], grad=False)[0]
    v_e = survdist.nll_terms("exp", ex, x[None], [t], [c], grad=False)[0]
    assert v_w[0] == pytest.approx(v_e[0], abs=1e-10)
    S_w = survdist.survival_curves("weibull", wb, x[None], [t])
    S_e = survdist.survival_curves("exp", ex, x[None], [t])
    assert S_w[0, 0] == pytest.approx(S_e[0, 0], abs=1e-12)


@given(params)
def test_survival_monotone_and_exp_minus_cumhaz(args):
    kind, g0, g1, a, _, _, seed = args
    x = np.random.default_rng(seed).uniform(0, 1, 2)
    beta = np.concatenate([[g0], [g1, g1], [a] if kind != "exp" else []])
    ts = np.linspace(0.01, 10, 50)
    S = survdist.survival_curves(kind, beta, x[None], ts)[0]
    assert np.all(np.diff(S) <= 1e-15)
    H = survdist.log_hazard_cumhaz(kind, beta, np.tile(x, (ts.size, 1)), ts)[1]
    assert np.all(np.diff(H) >= -1e-12)
    np.testing.assert_allclose(S, np.exp(-H), atol=1e-12)


@pytest.mark.parametrize("kind", survdist.FAMILIES)
def test_survival_vjp_matches_fd(kind, rng):
    X = rng.uniform(0, 1, (4, 2))
    beta = np.concatenate([[0.2], [0.5, -0.4], [0.3] if kind != "exp" else []])
    ts = np.array([0.3, 1.0, 2.5])
    G = rng.normal(size=(4, 3))
    f = lambda b: float(np.sum(G * survdist.survival_curves(kind, b, X, ts)))
    assert rel_err(survdist.survival_vjp(kind, beta, X, ts, G), fd_grad(f, beta)) < 1e-6


def test_leaf_params_vector_roundtrip():
    p = LP(0.5, [1.0, 2.0], [0.1])
    q = LP.from_vector("weibull", p.to_vector(), 2)
    np.testing.assert_array_equal(q.to_vector(), p.to_vector())

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bgeps import BivariateSample
from bgeps.core import (
    DEGENERATE,
    BgepsParams,
    Branch,
    cond_n_mean,
    cond_n_pmf,
    conditional_cdf,
    decomposition_weights,
    joint_cdf,
    joint_log_pdf,
    joint_pdf,
    limiting_bge,
    log_likelihood,
    marginal_cdf,
    max_cdf,
    prob_y1_greater_y2,
    prob_y1_less_y2,
)
from bgeps.power_series import DomainError, PowerSeriesFamily
from oracles import bge_log_pdf, cond_n_series, mixture_cdf, mixture_pdf

F = PowerSeriesFamily.parse
LN2 = math.log(2)

SETTINGS = [
    ("geometric", 0.3, (1.0, 0.3, 0.7), 2.0),
    ("poisson", 1.5, (0.8, 1.2, 0.5), 1.0),
    ("logarithmic", 0.6, (2.0, 1.0, 1.0), 0.7),
    ("binomial:3", 0.9, (0.5, 0.9, 1.3), 1.5),
    ("negbinomial:2", 0.4, (1.2, 0.4, 0.6), 3.0),
    ("poly:1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1", 0.9, (1.0, 1.0, 1.0), 1.0),
]


def make(spec, theta, a, lam):
    return BgepsParams(*a, lam, theta, F(spec))


def test_params_validation():
    with pytest.raises(ValueError):
        BgepsParams(0, 1, 1, 1)
    with pytest.raises(ValueError):
        BgepsParams(1, 1, 1, -1)
    with pytest.raises(ValueError):
        BgepsParams(1, 1, 1, 1, 1.0, F("geometric"))
    p = BgepsParams(1, 2, 3, 4)
    assert p.family == DEGENERATE and p.theta == 1.0 and p.names == ("alpha1", "alpha2", "alpha3", "lambda")
    q = make("poisson", 2.0, (1, 2, 3), 4)
    assert BgepsParams.from_vector(q.to_vector(), q.family) == q
    assert q.replace(theta=3.0).theta == 3.0


# -- joint cdf ---------------------------------------------------------------------


def test_joint_cdf_degenerate_is_bge():
    p = BgepsParams(1.0, 2.0, 0.5, 1.3)
    for y1, y2 in [(0.3, 0.9), (1.2, 0.4), (0.8, 0.8)]:
        f = lambda a, y: (1 - math.exp(-1.3 * y)) ** a  # noqa: E731
        expected = f(1.0, y1) * f(2.0, y2) * f(0.5, min(y1, y2))
        assert joint_cdf(p, y1, y2) == pytest.approx(expected, rel=1e-14)


def test_joint_cdf_examples():
    p = make("geometric", 0.5, (1, 1, 1), 1)
    assert joint_cdf(p, LN2, LN2) == pytest.approx(1 / 15, rel=1e-14)
    assert joint_cdf(p, math.inf, math.inf) == 1.0
    assert joint_cdf(p, 0.0, 1.0) == 0.0
    assert joint_cdf(p, -1.0, 1.0) == 0.0


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS)
def test_joint_cdf_mixture(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    for y1 in (0.1, 0.7, 2.0):
        for y2 in (0.1, 0.5, 2.0):
            assert joint_cdf(p, y1, y2) == pytest.approx(mixture_cdf(spec, theta, *a, lam, y1, y2), abs=1e-12)


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS)
def test_marginals_and_max(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    y = np.linspace(0.05, 4, 25)
    np.testing.assert_allclose(joint_cdf(p, y, np.inf), marginal_cdf(p, 1, y), rtol=1e-13)
    np.testing.assert_allclose(joint_cdf(p, np.inf, y), marginal_cdf(p, 2, y), rtol=1e-13)
    np.testing.assert_allclose(joint_cdf(p, y, y), max_cdf(p, y), rtol=1e-13)
    with pytest.raises(ValueError):
        marginal_cdf(p, 3, 1.0)


# -- density ------------------------------------------------------------------------


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS)
def test_density_mixture(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    for y1, y2 in [(0.2, 0.9), (1.5, 0.3), (0.6, 0.6), (0.05, 3.0), (2.5, 2.5)]:
        assert joint_pdf(p, y1, y2).value == pytest.approx(
            mixture_pdf(spec, theta, *a, lam, y1, y2), rel=1e-10, abs=1e-14
        )


def test_density_branches_and_degenerate_f0():
    p = BgepsParams(1.0, 2.0, 0.5, 1.3)
    assert joint_pdf(p, 0.2, 0.4).branch is Branch.F1
    assert joint_pdf(p, 0.4, 0.2).branch is Branch.F2
    d = joint_pdf(p, 0.4, 0.4)
    assert d.branch is Branch.F0
    assert d.log_value == pytest.approx(bge_log_pdf(1.0, 2.0, 0.5, 1.3, 0.4, 0.4), rel=1e-14)
    assert d.value == pytest.approx(math.exp(d.log_value), rel=1e-15)


def test_density_domain():
    p = BgepsParams(1, 1, 1, 1)
    with pytest.raises(DomainError):
        joint_pdf(p, 0.0, 1.0)
    with pytest.raises(DomainError):
        joint_log_pdf(p, [1.0, -1.0], [1.0, 1.0])


@given(
    st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.2, 4),
    st.floats(0.01, 0.95), st.floats(0.01, 6), st.floats(0.01, 6),
)
@settings(max_examples=100, deadline=None)
def test_exchange_symmetry(a1, a2, a3, lam, theta, y1, y2):
    fam = F("negbinomial:2")
    p = BgepsParams(a1, a2, a3, lam, theta, fam)
    q = BgepsParams(a2, a1, a3, lam, theta, fam)
    c1, l1 = joint_log_pdf(p, y1, y2)
    c2, l2 = joint_log_pdf(q, y2, y1)
    assert {int(c1), int(c2)} in ({1, 2}, {0})
    assert float(l1) == pytest.approx(float(l2), rel=1e-13, abs=1e-13)


def test_density_large_shapes_stay_finite():
    p = make("poisson", 30.0, (40.0, 25.0, 30.0), 2.0)
    codes, lf = joint_log_pdf(p, [0.5, 3.0, 2.0], [3.0, 0.5, 2.0])
    assert np.all(np.isfinite(lf))


# -- decomposition, probabilities --------------------------------------------------


def test_decomposition_examples():
    assert decomposition_weights(BgepsParams(1, 1, 1, 1)) == pytest.approx((2 / 3, 1 / 3))
    ac, sing = decomposition_weights(BgepsParams(1.4452, 0.4681, 1.1704, 1))
    assert (ac, sing) == pytest.approx((0.6205, 0.3795), abs=1e-4)
    assert ac + sing == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS[:3])
def test_singular_mass_by_quadrature(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    val, _ = quad(lambda y: joint_pdf(p, y, y).value, 0, math.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    assert val == pytest.approx(decomposition_weights(p)[1], abs=1e-6)


def test_prob_ordering():
    p = BgepsParams(2.0, 1.0, 1.0, 1.0)
    assert prob_y1_less_y2(p) == pytest.approx(0.25)
    assert prob_y1_greater_y2(p) == pytest.approx(0.5)
    assert prob_y1_less_y2(BgepsParams(1, 1, 1, 1)) == pytest.approx(1 / 3)
    for spec, theta, a, lam in SETTINGS:
        assert prob_y1_less_y2(make(spec, theta, (2.0, 1.0, 1.0), lam)) == pytest.approx(0.25)


# -- conditional cdf ------------------------------------------------------------------


def test_conditional_cdf_examples():
    p = BgepsParams(1, 1, 1, 1)
    assert conditional_cdf(p, LN2, math.log(4)) == pytest.approx(1 / 3, rel=1e-14)
    assert conditional_cdf(p, math.inf, 1.0) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(DomainError):
        conditional_cdf(p, 1.0, 0.0)
    with pytest.raises(DomainError):
        conditional_cdf(BgepsParams(1e306, 1e306, 1e306, 1), 1.0, 1e-300)


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS)
def test_conditional_cdf_ratio(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    g = np.linspace(0.1, 3, 8)
    y1, y2 = np.meshgrid(g, g)
    expected = np.asarray(joint_cdf(p, y1, y2)) / np.asarray(marginal_cdf(p, 2, y2))
    np.testing.assert_allclose(conditional_cdf(p, y1, y2), expected, rtol=1e-12)


# -- conditional count law --------------------------------------------------------------


def test_cond_n_degenerate():
    p = BgepsParams(1, 2, 3, 1)
    assert cond_n_mean(p, 0.4, 0.9) == 1.0
    assert cond_n_pmf(p, 0.4, 0.9, 1) == pytest.approx(1.0)
    assert cond_n_pmf(p, 0.4, 0.9, 2) == 0.0


@pytest.mark.parametrize("spec,theta,a,lam", SETTINGS)
def test_cond_n_against_bayes_oracle(spec, theta, a, lam):
    p = make(spec, theta, a, lam)
    for y1, y2 in [(0.3, 1.1), (1.1, 0.3), (0.7, 0.7)]:
        n, w = cond_n_series(spec, theta, *a, lam, y1, y2)
        ours = np.asarray(cond_n_pmf(p, y1, y2, n))
        np.testing.assert_allclose(ours, w, rtol=1e-9, atol=1e-15)
        assert math.fsum(ours.tolist()) == pytest.approx(1.0, abs=1e-10)
        assert cond_n_mean(p, y1, y2) == pytest.approx(float(np.sum(n * w)), rel=1e-10)
        assert cond_n_mean(p, y1, y2) >= p.family.leading_index


def test_cond_n_geometric_series():
    p = make("geometric", 0.5, (1.0, 0.5, 2.0), 1.2)
    n = np.arange(1, 400)
    w = np.asarray(cond_n_pmf(p, 0.3, 0.9, n))
    assert w[-1] < 1e-14
    assert cond_n_mean(p, 0.3, 0.9) == pytest.approx(math.fsum((n * w).tolist()), abs=1e-10)


# -- likelihood ----------------------------------------------------------------------------


def test_log_likelihood_identity_and_permutation():
    rng = np.random.default_rng(0)
    y1 = rng.uniform(0.05, 3, 60)
    y2 = rng.uniform(0.05, 3, 60)
    y2[:10] = y1[:10]
    p = make("logarithmic", 0.6, (1.0, 0.7, 0.9), 1.1)
    data = BivariateSample(y1, y2)
    direct = math.fsum(joint_pdf(p, a, b).log_value for a, b in zip(y1, y2))
    assert log_likelihood(p, data) == pytest.approx(direct, abs=1e-12 * abs(direct))
    perm = rng.permutation(60)
    assert log_likelihood(p, BivariateSample(y1[perm], y2[perm])) == pytest.approx(direct, rel=1e-13)


def test_log_likelihood_single_tie_degenerate():
    p = BgepsParams(1.0, 2.0, 0.5, 1.3)
    data = BivariateSample([0.7], [0.7])
    assert log_likelihood(p, data) == pytest.approx(bge_log_pdf(1.0, 2.0, 0.5, 1.3, 0.7, 0.7), rel=1e-14)


def test_log_likelihood_far_tail_is_finite_and_rejects_raw_pairs():
    # log-space evaluation keeps far-tail observations finite
    p = BgepsParams(1.0, 1.0, 1.0, 50.0)
    assert math.isfinite(log_likelihood(p, BivariateSample([100.0], [200.0])))
    with pytest.raises(ValueError):
        log_likelihood(p, [(1.0, 2.0)])


# -- limit ------------------------------------------------------------------------------------


def test_limiting_bge():
    p = make("geometric", 0.3, (1.0, 2.0, 3.0), 1.5)
    assert limiting_bge(p) == BgepsParams(1.0, 2.0, 3.0, 1.5)
    q = limiting_bge(make("negbinomial:2", 0.3, (1.0, 2.0, 3.0), 1.5))
    assert q == BgepsParams(2.0, 4.0, 6.0, 1.5)
    assert q.family.is_degenerate

import math

import numpy as np
import pytest
from scipy import integrate, stats

from fhs.basis import basis_for_data, design_matrix, eval_basis, make_basis
from fhs.extmodels import (GpShrinkagePrior, LogSplineModel, VaryingCoefficientData, _log_beta_pair,
                           _stable_cholesky, exponential_kernel, fit_logspline, fit_varying_coefficient,
                           gp_prior_sample, near_null_ratio, null_design, piecewise_linear_null,
                           squared_exponential_kernel)
from fhs.projection import RankError, orthogonal_complement
from fhs.sampler import FhsConfig, run_chain

from conftest import sup_cdf_distance

FAST = FhsConfig(n_iter=1500, n_burnin=500, seed=3)


def test_vc_unit_weights_equal_simple_fit():
    rng = np.random.default_rng(0)
    x = rng.uniform(-np.pi, np.pi, 120)
    y = np.sin(x) + rng.standard_normal(120)
    vc = fit_varying_coefficient(VaryingCoefficientData(y=y, w=np.ones(120), x=x), null="constant", cfg=FAST)
    basis = basis_for_data(x, FAST.k_n, FAST.degree)
    d = orthogonal_complement(design_matrix(basis, x), null_design("constant", x))
    simple = run_chain(y, d, FAST)
    np.testing.assert_array_equal(vc.betas, simple.betas)
    np.testing.assert_array_equal(vc.log_etas, simple.log_etas)


def test_vc_zero_weights_rejected():
    x = np.linspace(-3, 3, 50)
    with pytest.raises(RankError):
        fit_varying_coefficient(VaryingCoefficientData(y=np.zeros(50), w=np.zeros(50), x=x), cfg=FAST)


def test_vc_data_validation():
    with pytest.raises(ValueError):
        VaryingCoefficientData(y=np.zeros(3), w=np.zeros(4), x=np.zeros(3))
    with pytest.raises(ValueError):
        VaryingCoefficientData(y=np.array([np.nan]), w=np.ones(1), x=np.ones(1))


def test_null_design_names():
    x = np.array([1.0, 2.0])
    assert null_design("zero", x).shape == (2, 0)
    np.testing.assert_array_equal(null_design("quadratic", x), [[1, 1, 1], [1, 2, 4]])
    with pytest.raises(ValueError):
        null_design("cubic", x)


def quadratic_coefficients(basis, func):
    t = np.linspace(*basis.domain, 200)
    coef, *_ = np.linalg.lstsq(eval_basis(basis, t), func(t), rcond=None)
    return coef


def test_logspline_reproduces_normal():
    model = LogSplineModel(make_basis(8, 3, (-3.0, 3.0)))
    beta = quadratic_coefficients(model.basis, lambda t: -t**2 / 2)
    t = np.linspace(-3, 3, 41)
    mass = stats.norm.cdf(3) - stats.norm.cdf(-3)
    np.testing.assert_allclose(model.density(beta, t), stats.norm.pdf(t) / mass, rtol=1e-9)


def test_logspline_gauge_and_normalization():
    model = LogSplineModel(make_basis(8, 3, (-2.0, 4.0)))
    rng = np.random.default_rng(1)
    t = np.linspace(-2, 4, 17)
    for _ in range(5):
        beta = 3 * rng.standard_normal(8)
        np.testing.assert_allclose(model.log_density(beta + 7.5, t), model.log_density(beta, t), atol=1e-10)
        total, _ = integrate.quad(lambda s: float(model.density(beta, np.array([s]))[0]), -2, 4,
                                  points=model.basis.breaks[1:-1], limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_logspline_node_doubling():
    basis = make_basis(8, 3, (-4.0, 4.0))
    beta = 4 * np.random.default_rng(2).standard_normal((10, 8))
    a = LogSplineModel(basis, n_nodes=512).log_normalizer(beta)
    b = LogSplineModel(basis, n_nodes=1024).log_normalizer(beta)
    assert np.max(np.abs(a - b)) < 1e-8


def test_logspline_overflow_recentred():
    model = LogSplineModel(make_basis(6, 3, (0.0, 1.0)))
    beta = np.full(6, 900.0)
    assert np.all(np.isfinite(model.log_density(beta, np.linspace(0, 1, 5))))


def test_logspline_fit_normal_data():
    y = np.random.default_rng(4).standard_normal(200)
    draws = fit_logspline(y, FhsConfig(n_iter=6000, n_burnin=2000, seed=1))
    assert draws.omegas.mean() > 0.9
    assert 0.15 < draws.config["acceptance"] < 0.45
    again = fit_logspline(y, FhsConfig(n_iter=6000, n_burnin=2000, seed=1))
    np.testing.assert_array_equal(draws.betas, again.betas)
    t = np.linspace(*draws.model.basis.domain, 9)
    dens = draws.model.density(draws.betas.mean(axis=0), t)
    np.testing.assert_allclose(dens, stats.norm.pdf(t), atol=0.08)


def test_logspline_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_logspline(np.array([0.0, np.inf] * 10), FAST)
    with pytest.raises(ValueError):
        fit_logspline(np.arange(3.0), FAST)


def test_kernels():
    x = np.array([0.0, 1.0])
    np.testing.assert_allclose(exponential_kernel(x, x), [[1, math.exp(-1)], [math.exp(-1), 1]])
    np.testing.assert_allclose(squared_exponential_kernel(x, x)[0, 1], math.exp(-0.5))


def test_piecewise_null_columns():
    x = np.array([-2.0, 0.0, 2.0])
    np.testing.assert_array_equal(piecewise_linear_null()(x), [[1, 0, 1, 0], [1, 1, 0, 0], [1, 3, 0, 1]])


def test_log_beta_pair_law():
    lw, l1 = _log_beta_pair(0.5, 2.0, 30000, np.random.default_rng(5))
    np.testing.assert_allclose(np.exp(lw) + np.exp(l1), 1.0, atol=1e-12)
    assert sup_cdf_distance(np.exp(lw), stats.beta(0.5, 2.0).cdf) < 0.012
    # tiny b: log(1 - omega) must stay finite instead of underflowing
    lw, l1 = _log_beta_pair(0.5, 1e-4, 1000, np.random.default_rng(6))
    assert np.all(np.isfinite(l1)) and np.median(l1) < -100


def test_stable_cholesky():
    m = np.ones((3, 3))  # rank one, needs jitter
    chol = _stable_cholesky(m, 1e-8)
    assert np.allclose(chol @ chol.T, m, atol=1e-6)
    with pytest.raises(np.linalg.LinAlgError):
        _stable_cholesky(-np.eye(3), 1e-8)


def test_gp_no_shrinkage_limit():
    xs = np.linspace(-np.pi, np.pi, 20)
    prior = GpShrinkagePrior(null="linear")
    paths = gp_prior_sample(prior, xs, 5000, np.random.default_rng(7), tau2=1e12)
    var = paths.var(axis=0)
    se = math.sqrt(2 / 5000)
    assert np.all(np.abs(var - 1.0) < 4 * se)


def test_gp_covariance_fixed_tau():
    xs = np.linspace(-np.pi, np.pi, 30)
    prior = GpShrinkagePrior(null="linear")
    tau2 = 0.3
    paths = gp_prior_sample(prior, xs, 10000, np.random.default_rng(8), tau2=tau2)
    sigma = exponential_kernel(xs, xs)
    q0 = null_design("linear", xs)
    q0 = q0 @ np.linalg.solve(q0.T @ q0, q0.T)
    cov = np.linalg.inv(np.linalg.inv(sigma) + (np.eye(30) - q0) / tau2)
    probe = [0, 7, 15, 22, 29]
    emp = np.cov(paths[:, probe].T)
    ref = cov[np.ix_(probe, probe)]
    sd = np.sqrt(np.diag(ref))
    big = np.abs(ref / np.outer(sd, sd)) > 0.3
    assert np.max(np.abs(emp - ref)[big] / np.abs(ref)[big]) < 0.05


def test_gp_monotone_in_b():
    n = 100
    xs = np.linspace(-np.pi, np.pi, n)
    means, ses = [], []
    for b in (1e-1, 1e-2, n**-2.0):
        prior = GpShrinkagePrior(null="linear", a=0.5, b=b)
        r = near_null_ratio(gp_prior_sample(prior, xs, 1500, np.random.default_rng(9)), prior, xs)
        means.append(r.mean())
        ses.append(r.std() / math.sqrt(r.size))
    for i in range(2):
        assert means[i] - means[i + 1] > 3 * math.hypot(ses[i], ses[i + 1])


def test_gp_return_tau2_and_validation():
    xs = np.linspace(0, 1, 10)
    prior = GpShrinkagePrior(b=1e-300)
    paths, log_tau2 = gp_prior_sample(prior, xs, 5, np.random.default_rng(0), return_tau2=True)
    assert paths.shape == (5, 10) and log_tau2.shape == (5,)
    # the extreme-shrinkage limit lies in the null space
    assert np.all(near_null_ratio(paths, prior, xs) < 1e-8)
    with pytest.raises(ValueError):
        gp_prior_sample(prior, xs, 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        GpShrinkagePrior(kernel="matern")

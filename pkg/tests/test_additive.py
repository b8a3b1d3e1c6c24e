import math

import numpy as np
import pytest

from fhs.additive import (AdditiveDesign, AdditiveDraws, backfit_chain, component_seed, conditional_moments,
                          confusion, mcc, select_components, unshrunk_fit)
from fhs.harness.data import gen_additive_setting
from fhs.projection import RankError
from fhs.sampler import FhsConfig


def small_problem(n=200, p=3, noise=1.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (n, p))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1] ** 2 + noise * rng.standard_normal(n)
    return X, y


def test_design_centering_and_basis():
    X, y = small_problem()
    d = AdditiveDesign.from_data(X, y)
    assert d.p == 3 and d.n == 200
    for j, phi in enumerate(d.components):
        assert phi.shape[1] == 7
        np.testing.assert_allclose(phi.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(d.component_basis(j, X[:, j]), phi, atol=1e-12)
    assert d.intercept == pytest.approx(y.mean())


def test_singular_component_named():
    X, y = small_problem()
    X[:, 1] = np.where(X[:, 1] > 0, 1.0, -1.0)
    with pytest.raises(RankError, match="component 1"):
        AdditiveDesign.from_data(X, y)


def test_conditional_moments_direct_solve():
    X, y = small_problem()
    d = AdditiveDesign.from_data(X, y)
    r = np.random.default_rng(1).standard_normal(200)
    mean, cov = conditional_moments(d, 2, r, 0.3, 1.7)
    phi = d.components[2]
    gram_inv = np.linalg.inv(phi.T @ phi)
    np.testing.assert_allclose(mean, 0.7 * gram_inv @ phi.T @ r, atol=1e-8)
    np.testing.assert_allclose(cov, 1.7 * 0.7 * gram_inv, atol=1e-8)


def test_sweep_conditional_check_runs():
    X, y = small_problem()
    d = AdditiveDesign.from_data(X, y)
    backfit_chain(d, FhsConfig(n_iter=400, n_burnin=100), check_every=100)


def test_pure_noise_shrinks_to_zero():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, (300, 1))
    y = rng.standard_normal(300)
    d = AdditiveDesign.from_data(x, y)
    draws = backfit_chain(d, FhsConfig(n_iter=3000, n_burnin=1000))
    fit = d.components[0] @ draws.betas[0].mean(axis=0)
    assert math.sqrt(np.mean(fit**2)) < 0.1 * y.std()
    assert draws.omegas.mean() > 0.9


def test_determinism_and_permutation_equivariance():
    X, y = small_problem(p=4)
    cfg = FhsConfig(n_iter=600, n_burnin=200, seed=5)
    keys = ["a", "b", "c", "d"]
    base = backfit_chain(AdditiveDesign.from_data(X, y, keys=keys), cfg)
    again = backfit_chain(AdditiveDesign.from_data(X, y, keys=keys), cfg)
    np.testing.assert_array_equal(base.log_etas, again.log_etas)
    perm = [2, 0, 3, 1]
    shuffled = backfit_chain(AdditiveDesign.from_data(X[:, perm], y, keys=[keys[i] for i in perm]), cfg)
    for new, old in enumerate(perm):
        np.testing.assert_allclose(shuffled.betas[new], base.betas[old], atol=1e-9)
        np.testing.assert_allclose(shuffled.log_etas[:, new], base.log_etas[:, old], atol=1e-9)
    np.testing.assert_allclose(shuffled.sigma2s, base.sigma2s, rtol=1e-9)


def test_component_seed_depends_on_key_only():
    a = np.random.default_rng(component_seed(3, "x1")).random()
    b = np.random.default_rng(component_seed(3, "x1")).random()
    c = np.random.default_rng(component_seed(3, "x2")).random()
    assert a == b != c


def test_pinned_omega_zero_matches_least_squares():
    X, y = small_problem(noise=0.1)
    d = AdditiveDesign.from_data(X, y)
    draws = backfit_chain(d, FhsConfig(n_iter=6000, n_burnin=1000), fixed_omega=0.0)
    diff = draws.fitted(d) - unshrunk_fit(d)
    assert math.sqrt(np.mean(diff**2)) < 1e-3


def fake_draws(d, values):
    betas = [np.tile(v, (20, 1)) for v in values]
    return AdditiveDraws(betas=betas, log_etas=np.zeros((20, d.p)), sigma2s=np.ones(20), intercept=0.0,
                         keys=d.keys)


def test_selection_rule():
    X, y = small_problem(p=2)
    d = AdditiveDesign.from_data(X, y)
    zero = np.zeros(7)
    bump = np.zeros(7)
    bump[2] = 1.0
    sel = select_components(fake_draws(d, [zero, bump]), d)
    np.testing.assert_array_equal(sel.included, [False, True])
    rows = sel.report_rows()
    assert rows[0]["max_abs_band_center"] == 0 and rows[0]["max_band_width"] == 0
    assert rows[1]["included"]
    with pytest.raises(ValueError):
        select_components(fake_draws(d, [zero, bump]), d, level=1.2)


def test_mcc_examples():
    assert mcc(4, 196, 0, 0) == 1.0
    # (4 * 194) / sqrt(6 * 4 * 196 * 194)
    assert mcc(4, 194, 2, 0) == pytest.approx(776 / math.sqrt(912576), rel=1e-14)
    truth = [1] * 4 + [0] * 196
    pred = [1] * 6 + [0] * 194
    skm = pytest.importorskip("sklearn.metrics")
    assert mcc(4, 194, 2, 0) == pytest.approx(skm.matthews_corrcoef(truth, pred), abs=1e-12)
    # inverted selection has no empty margin, so it is perfectly anti-correlated
    assert mcc(0, 0, 3, 5) == pytest.approx(-1.0)
    assert mcc(0, 196, 0, 4) == 0.0  # nothing selected: empty margin
    assert mcc(0, 0, 0, 0) == 0.0


def test_confusion_counts():
    assert confusion([1, 1, 0, 0], [1, 0, 1, 0]) == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}


def test_predict_clips_to_training_range():
    X, y = small_problem()
    d = AdditiveDesign.from_data(X, y)
    draws = backfit_chain(d, FhsConfig(n_iter=300, n_burnin=100))
    inside = draws.predict(d, np.full((1, 3), 2.0 - 1e-9))
    outside = draws.predict(d, np.full((1, 3), 50.0))
    edge = np.array([[X[:, j].max() for j in range(3)]])
    np.testing.assert_allclose(outside, draws.predict(d, edge))
    assert np.isfinite(inside).all()


def test_selection_monotone_in_b():
    spurious = {}
    for b in (1e-2, "auto"):
        counts = []
        for rep in range(6):
            data = gen_additive_setting(1, 200, seed=rep, p=20)
            d = AdditiveDesign.from_data(data.X, data.y)
            draws = backfit_chain(d, FhsConfig(b=b, n_iter=2000, n_burnin=700, seed=rep))
            sel = select_components(draws, d, truth=data.active)
            counts.append(sel.mcc_inputs["fp"])
        spurious[b] = np.array(counts, float)
    se = math.hypot(spurious[1e-2].std(ddof=1), spurious["auto"].std(ddof=1)) / math.sqrt(6)
    assert spurious["auto"].mean() <= spurious[1e-2].mean() + 3 * se

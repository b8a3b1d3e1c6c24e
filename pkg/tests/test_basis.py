import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from fhs.basis import BSplineBasis, DomainError, basis_for_data, design_matrix, eval_basis, make_basis


def cox_de_boor(knots, degree, j, x):
    """Plain recursive definition, right-closed on the last span."""
    if degree == 0:
        lo, hi = knots[j], knots[j + 1]
        if lo <= x < hi:
            return 1.0
        last = knots[-1]
        return 1.0 if (x == last and hi == last and lo < hi) else 0.0
    out = 0.0
    d1 = knots[j + degree] - knots[j]
    if d1 > 0:
        out += (x - knots[j]) / d1 * cox_de_boor(knots, degree - 1, j, x)
    d2 = knots[j + degree + 1] - knots[j + 1]
    if d2 > 0:
        out += (knots[j + degree + 1] - x) / d2 * cox_de_boor(knots, degree - 1, j + 1, x)
    return out


def oracle(basis, x):
    return np.array([cox_de_boor(basis.knots, basis.degree, j, x) for j in range(basis.n_basis)])


def test_counts_and_knots():
    b = make_basis(8, 3, (-np.pi, np.pi))
    assert b.n_basis == 8
    assert len(b.breaks) == 6  # 4 interior breakpoints
    k = b.knots
    assert np.all(np.diff(k) >= 0)
    assert np.sum(k == -np.pi) == 4 and np.sum(k == np.pi) == 4


def test_linear_pair():
    b = make_basis(2, 1, (0, 1))
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(eval_basis(b, x), np.column_stack([1 - x, x]), atol=1e-15)


@pytest.mark.parametrize("n_basis,degree,x", [(5, 2, 0.37), (8, 3, 0.6), (8, 3, 0.0), (8, 3, 1.0), (6, 1, 0.4)])
def test_matches_recursive_oracle(n_basis, degree, x):
    b = make_basis(n_basis, degree, (0, 1))
    np.testing.assert_allclose(eval_basis(b, x), oracle(b, x), atol=1e-12)


def test_matches_scipy_design_matrix():
    rng = np.random.default_rng(3)
    b = make_basis(10, 3, (-2, 5))
    x = rng.uniform(-2, 5, 300)
    ref = BSpline.design_matrix(x, b.knots, 3).toarray()
    np.testing.assert_allclose(eval_basis(b, x), ref, atol=1e-12)


def test_endpoints():
    b = make_basis(8, 3, (0, 1))
    e = np.zeros(8)
    e[0] = 1
    np.testing.assert_array_equal(eval_basis(b, 0.0), e)
    np.testing.assert_allclose(eval_basis(b, 1.0), e[::-1], atol=1e-15)


def test_degree_zero_is_indicator():
    b = BSplineBasis(0, np.array([0.0, 0.5, 1.0]))
    np.testing.assert_array_equal(eval_basis(b, 0.25), [1.0, 0.0])
    np.testing.assert_array_equal(eval_basis(b, 0.5), [0.0, 1.0])  # right-continuous
    np.testing.assert_array_equal(eval_basis(b, 1.0), [0.0, 1.0])


def test_small_design():
    b = make_basis(2, 1, (0, 1))
    np.testing.assert_allclose(design_matrix(b, [0, 0.5, 1]).values, [[1, 0], [.5, .5], [0, 1]])


def test_design_rows_equal_eval():
    rng = np.random.default_rng(1)
    x = rng.uniform(-np.pi, np.pi, 200)
    b = basis_for_data(x, 8)
    phi = design_matrix(b, x).values
    for i in (0, 17, 199):
        np.testing.assert_array_equal(phi[i], eval_basis(b, x[i]))
    gram = sum(np.outer(eval_basis(b, xi), eval_basis(b, xi)) for xi in x)
    np.testing.assert_allclose(phi.T @ phi, gram, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(gram) > 0)
    assert np.isfinite(np.linalg.cond(gram))


def test_out_of_domain_reports_index():
    b = make_basis(6, 3, (0, 1))
    with pytest.raises(DomainError) as err:
        design_matrix(b, [0.2, 0.5, 1.5])
    assert err.value.index == 2
    with pytest.raises(DomainError):
        eval_basis(b, np.nan)


def test_invalid_bases():
    with pytest.raises(ValueError):
        make_basis(3, 3)
    with pytest.raises(ValueError):
        make_basis(8, 3, (1, 1))


def test_quantile_knots_cover_data():
    rng = np.random.default_rng(2)
    x = rng.exponential(size=500)
    b = basis_for_data(x, 8, knots="quantile")
    assert b.domain == (x.min(), x.max())
    np.testing.assert_allclose(eval_basis(b, x).sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n_basis=st.integers(2, 14), degree=st.integers(0, 4), u=st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_partition_support_nonnegative(n_basis, degree, u):
    if n_basis < degree + 1:
        return
    b = make_basis(n_basis, degree, (-1.5, 2.0))
    x = -1.5 + 3.5 * np.asarray(u)
    v = eval_basis(b, x)
    assert np.all(v >= 0)
    np.testing.assert_allclose(v.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((v > 0).sum(axis=1) <= degree + 1)
    # phi_j vanishes outside [t_j, t_{j+q+1}]
    k = b.knots
    for j in range(b.n_basis):
        outside = (x < k[j]) | (x > k[j + degree + 1])
        assert np.all(v[outside, j] == 0)

import numpy as np
import pytest

from fhs.basis import basis_for_data, design_matrix
from fhs.extmodels import null_design
from fhs.projection import orthogonal_complement


def sup_cdf_distance(sample, cdf):
    """Kolmogorov distance between a sample and a vectorized CDF."""
    s = np.sort(np.asarray(sample))
    n = s.size
    f = cdf(s)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - f), np.max(f - lo)))


def simple_design(n=100, k_n=8, null="linear", seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, n)
    basis = basis_for_data(x, k_n, 3)
    return x, orthogonal_complement(design_matrix(basis, x), null_design(null, x))


@pytest.fixture
def linear_design():
    return simple_design()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])

"""B-spline bases on a closed interval and their design matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a covariate falls outside the basis domain."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped B-spline basis.

    Attributes
    ----------
    degree : int
        Polynomial degree ``q`` (order ``q + 1``).
    breaks : ndarray
        Strictly increasing breakpoints ``t_0 < ... < t_{k-q}``; the first and
        last are the domain end points.
    """

    degree: int
    breaks: np.ndarray

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        if breaks.ndim != 1 or breaks.size < 2:
            raise ValueError("need at least two breakpoints")
        if not np.all(np.diff(breaks) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        breaks.setflags(write=False)
        object.__setattr__(self, "breaks", breaks)

    @property
    def n_basis(self) -> int:
        return self.breaks.size - 1 + self.degree

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.breaks[0]), float(self.breaks[-1])

    @property
    def knots(self) -> np.ndarray:
        """Full knot vector with each end point repeated ``degree + 1`` times."""
        q = self.degree
        return np.concatenate(
            [np.repeat(self.breaks[0], q), self.breaks, np.repeat(self.breaks[-1], q)]
        )

    def __call__(self, x):
        return eval_basis(self, x)


@dataclass(frozen=True)
class DesignMatrix:
    """``values[i, j] = phi_j(covariates[i])`` together with the basis used."""

    values: np.ndarray
    covariates: np.ndarray
    basis: BSplineBasis | None = None

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def make_basis(n_basis: int, degree: int = 3, domain=(0.0, 1.0)) -> BSplineBasis:
    """Equally spaced clamped B-spline basis with ``n_basis`` functions.

    ``n_basis - degree`` spans of equal width cover ``domain``. A basis with a
    single span (``n_basis == degree + 1``) is the Bernstein basis and is
    accepted; fewer functions than ``degree + 1`` cannot exist and is rejected.
    """
    n_basis = int(n_basis)
    degree = int(degree)
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if n_basis < degree + 1:
        raise ValueError(
            f"n_basis={n_basis} too small for degree {degree}; need at least {degree + 1}"
        )
    lo, hi = (float(v) for v in domain)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise ValueError(f"degenerate domain [{lo}, {hi}]")
    breaks = np.linspace(lo, hi, n_basis - degree + 1)
    return BSplineBasis(degree=degree, breaks=breaks)


def basis_for_data(x, n_basis: int, degree: int = 3, knots: str = "uniform") -> BSplineBasis:
    """Basis over ``[min(x), max(x)]`` with uniform or quantile breakpoints."""
    x = np.asarray(x, dtype=float)
    if knots == "uniform":
        return make_basis(n_basis, degree, (x.min(), x.max()))
    if knots == "quantile":
        probs = np.linspace(0.0, 1.0, n_basis - degree + 1)
        breaks = np.quantile(x, probs)
        breaks[0], breaks[-1] = x.min(), x.max()
        return BSplineBasis(degree=degree, breaks=breaks)
    raise ValueError(f"unknown knot placement {knots!r}")


def _check_domain(basis: BSplineBasis, x: np.ndarray):
    lo, hi = basis.domain
    bad = np.flatnonzero(~((x >= lo) & (x <= hi)))
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"covariate {x[i]!r} at index {i} outside basis domain [{lo}, {hi}]", index=i
        )


def _eval_many(basis: BSplineBasis, x: np.ndarray) -> np.ndarray:
    q = basis.degree
    t = basis.knots
    breaks = basis.breaks
    n_span = breaks.size - 1
    # span index in breakpoint numbering; closed on the right at the last span
    span = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, n_span - 1)
    mu = span + q  # index into the full knot vector, t[mu] <= x < t[mu + 1]

    m = x.size
    vals = np.zeros((m, q + 1))
    vals[:, 0] = 1.0
    left = np.empty((m, q + 1))
    right = np.empty((m, q + 1))
    # triangular Cox-de Boor table for the q + 1 non-zero functions on each span
    for r in range(1, q + 1):
        left[:, r] = x - t[mu + 1 - r]
        right[:, r] = t[mu + r] - x
        saved = np.zeros(m)
        for s in range(r):
            temp = vals[:, s] / (right[:, s + 1] + left[:, r - s])
            vals[:, s] = saved + right[:, s + 1] * temp
            saved = left[:, r - s] * temp
        vals[:, r] = saved

    out = np.zeros((m, basis.n_basis))
    cols = span[:, None] + np.arange(q + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def eval_basis(basis: BSplineBasis, x) -> np.ndarray:
    """Values of all basis functions at ``x``.

    Scalar ``x`` gives a vector of length ``n_basis``; array ``x`` gives one
    row per point. Raises :class:`DomainError` for points outside the domain.
    """
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    _check_domain(basis, flat)
    out = _eval_many(basis, flat)
    if arr.ndim == 0:
        return out[0]
    return out.reshape(arr.shape + (basis.n_basis,))


def design_matrix(basis: BSplineBasis, xs) -> DesignMatrix:
    xs = np.asarray(xs, dtype=float).ravel()
    _check_domain(basis, xs)
    return DesignMatrix(values=_eval_many(basis, xs), covariates=xs, basis=basis)

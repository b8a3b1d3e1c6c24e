"""Projection matrices and the null/complement split behind the shrinkage prior.

Projectors are held as orthonormal factors ``U`` (``Q = U U^T``) and applied
with two matrix-vector products; the dense ``n x n`` forms are built only when
asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import DesignMatrix

RANK_TOL = 1e-10
NEST_TOL = 1e-8


class RankError(np.linalg.LinAlgError):
    pass


class NestingError(ValueError):
    pass


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, DesignMatrix):
        a = a.values
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def orthonormal_factor(a, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of ``a`` (``n x d``).

    Raises :class:`RankError` if the smallest singular value is below
    ``tol`` times the largest.
    """
    a = _as_matrix(a)
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    if sv[0] == 0:
        raise RankError(f"matrix is zero; {a.shape[1]} deficient columns")
    n_bad = int(np.sum(sv < tol * sv[0]))
    if n_bad:
        raise RankError(
            f"matrix with {a.shape[1]} columns is rank deficient by {n_bad} column(s)"
        )
    return u


def projector(a, tol: float = RANK_TOL) -> np.ndarray:
    """Dense orthogonal projector onto the column space of ``a``."""
    u = orthonormal_factor(a, tol)
    return u @ u.T


def _residualize(u0: np.ndarray, a: np.ndarray) -> np.ndarray:
    # two passes of block Gram-Schmidt; one pass loses orthogonality on
    # strongly correlated spline columns
    for _ in range(2):
        a = a - u0 @ (u0.T @ a)
    return a


@dataclass(frozen=True)
class ShrinkageDesign:
    """Design ``Phi`` split into a null part and its orthogonal complement.

    Attributes
    ----------
    phi : ndarray (n, k)
    phi0 : ndarray (n, d0)
        Null-space design as supplied.
    u0, u1 : ndarray
        Orthonormal bases of span(phi0) and of span(phi) minus span(phi0).
    coords : ndarray (k, k)
        ``[u0, u1]^T phi``; maps coefficients to orthonormal coordinates.
    """

    phi: np.ndarray
    phi0: np.ndarray
    u0: np.ndarray
    u1: np.ndarray
    coords: np.ndarray
    basis: object = None
    coords_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coords_inv", np.linalg.inv(self.coords))

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def d0(self) -> int:
        return self.u0.shape[1]

    @property
    def phi1(self) -> np.ndarray:
        return self.u1

    @property
    def u(self) -> np.ndarray:
        return np.hstack([self.u0, self.u1])

    @property
    def q0(self) -> np.ndarray:
        return self.u0 @ self.u0.T

    @property
    def q1(self) -> np.ndarray:
        return self.u1 @ self.u1.T

    @property
    def q_phi(self) -> np.ndarray:
        u = self.u
        return u @ u.T

    @property
    def penalty(self) -> np.ndarray:
        """``Phi^T (I - Q0) Phi``, the quadratic form in the prior exponent."""
        r1 = self.coords[self.d0:]
        return r1.T @ r1

    def apply_q0(self, v):
        return self.u0 @ (self.u0.T @ v)

    def apply_q1(self, v):
        return self.u1 @ (self.u1.T @ v)

    def apply_q_phi(self, v):
        return self.apply_q0(v) + self.apply_q1(v)

    def to_coords(self, beta):
        """Orthonormal coordinates ``[c0, c1]`` with ``phi @ beta = u @ c``."""
        return np.asarray(beta) @ self.coords.T

    def from_coords(self, c):
        return np.asarray(c) @ self.coords_inv.T


def orthogonal_complement(phi, phi0=None, tol: float = RANK_TOL) -> ShrinkageDesign:
    """Split ``span(phi)`` into ``span(phi0)`` and its orthogonal complement.

    ``phi0=None`` (or a matrix with no columns) gives ``d0 = 0``, the
    zero-function null space used by additive models.
    """
    basis = phi.basis if isinstance(phi, DesignMatrix) else None
    phi = _as_matrix(phi)
    n, k = phi.shape
    phi0 = np.zeros((n, 0)) if phi0 is None else _as_matrix(phi0)
    if phi0.shape[0] != n:
        raise ValueError(f"phi0 has {phi0.shape[0]} rows, phi has {n}")
    d0 = phi0.shape[1]
    if d0 >= k:
        raise ValueError(f"null space dimension d0={d0} must be below k={k}")

    u_phi = orthonormal_factor(phi, tol)
    u0 = orthonormal_factor(phi0, tol)
    if d0:
        resid = _residualize(u_phi, phi0)
        rel = np.linalg.norm(resid) / np.linalg.norm(phi0)
        if rel > NEST_TOL:
            raise NestingError(
                f"null space not nested in span(phi): relative residual {rel:.3e}"
            )

    comp = _residualize(u0, phi)
    u, sv, _ = np.linalg.svd(comp, full_matrices=False)
    m = k - d0
    if sv[m - 1] < tol * sv[0]:
        raise RankError("complement of the null space is rank deficient")
    u1 = _residualize(u0, u[:, :m])
    u1, _ = np.linalg.qr(u1)
    full = np.hstack([u0, u1])
    coords = full.T @ phi
    return ShrinkageDesign(phi=phi, phi0=phi0, u0=u0, u1=u1, coords=coords, basis=basis)


def shrinkage_mean(y, omega: float, design: ShrinkageDesign) -> np.ndarray:
    """Conditional posterior mean fit ``(1 - omega) Q_phi y + omega Q0 y``."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n:
        raise ValueError(f"y has length {y.shape[0]}, design has {design.n} rows")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    return design.apply_q0(y) + (1.0 - omega) * design.apply_q1(y)

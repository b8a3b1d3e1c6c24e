"""Model extensions: varying coefficients, log-spline densities, GP priors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg

from .basis import BSplineBasis, basis_for_data, design_matrix, eval_basis, make_basis
from .projection import ShrinkageDesign, orthogonal_complement, orthonormal_factor
from .sampler import ChainDivergence, ChainDraws, FhsConfig, run_chain, slice_log_eta

# ---------------------------------------------------------------------------
# varying-coefficient regression


@dataclass(frozen=True)
class VaryingCoefficientData:
    y: np.ndarray
    w: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(v, float).ravel() for v in (self.y, self.w, self.x)]
        if len({a.size for a in arrs}) != 1:
            raise ValueError("y, w and x must have equal lengths")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("non-finite entries in varying-coefficient data")
        for name, a in zip(("y", "w", "x"), arrs):
            object.__setattr__(self, name, a)


def null_design(kind, x) -> np.ndarray:
    """Polynomial null-space designs by name: constant, linear, quadratic."""
    x = np.asarray(x, float)
    degree = {"zero": -1, "constant": 0, "linear": 1, "quadratic": 2}.get(kind)
    if degree is None:
        raise ValueError(f"unknown null space {kind!r}")
    return np.column_stack([x ** d for d in range(degree + 1)]) if degree >= 0 else np.zeros((x.size, 0))


def vc_design(data: VaryingCoefficientData, cfg: FhsConfig, null="constant",
              basis: BSplineBasis | None = None) -> ShrinkageDesign:
    """Weighted design ``diag(w) Phi`` with null design ``diag(w) Phi0``."""
    basis = basis or basis_for_data(data.x, cfg.k_n, cfg.degree)
    phi = design_matrix(basis, data.x)
    phi0 = null_design(null, data.x) if isinstance(null, str) else np.asarray(null, float)
    design = orthogonal_complement(data.w[:, None] * phi.values, data.w[:, None] * phi0)
    return replace(design, basis=basis)


def fit_varying_coefficient(data: VaryingCoefficientData, null="constant", cfg: FhsConfig = FhsConfig(),
                            basis: BSplineBasis | None = None, seed: int | None = None) -> ChainDraws:
    """Posterior draws of the coefficient function's spline weights.

    ``y_i = w_i f(x_i) + eps_i`` is an ordinary fit with design rows scaled by
    ``w_i``; the draws are coefficients of ``f`` in the unweighted basis.
    """
    design = vc_design(data, cfg, null, basis)
    draws = run_chain(data.y, design, cfg, seed=seed)
    draws.basis = design.basis
    return draws


# ---------------------------------------------------------------------------
# log-spline density estimation


@dataclass(frozen=True)
class MHSettings:
    """Random-walk Metropolis settings for the log-spline coefficients."""

    init_scale: float | None = None
    target: tuple[float, float] = (0.2, 0.4)
    adapt_every: int = 100
    adapt_factor: float = 1.25


@dataclass
class LogSplineModel:
    """Log-spline density ``p(t) = exp(f(t)) / int exp(f)`` on a bounded range.

    The basis and the quadrature share the data range widened by
    ``extension`` on each side. The integral uses composite Gauss-Legendre
    nodes, ``n_nodes`` in total split evenly over the knot spans.
    """

    basis: BSplineBasis
    n_nodes: int = 512
    extension: float = 0.1
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    node_basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        breaks = self.basis.breaks
        per_span = max(2, math.ceil(self.n_nodes / (breaks.size - 1)))
        gx, gw = legendre.leggauss(per_span)
        lo, hi = breaks[:-1, None], breaks[1:, None]
        half = (hi - lo) / 2.0
        self.nodes = (lo + half * (gx[None, :] + 1.0)).ravel()
        self.weights = (half * gw[None, :]).ravel()
        self.node_basis = eval_basis(self.basis, self.nodes)

    @classmethod
    def for_data(cls, y, k_n=8, degree=3, n_nodes=512, extension=0.1):
        y = np.asarray(y, float)
        lo, hi = y.min(), y.max()
        pad = extension * (hi - lo)
        return cls(make_basis(k_n, degree, (lo - pad, hi + pad)), n_nodes, extension)

    def log_normalizer(self, beta) -> np.ndarray:
        """``log int exp(f)``; vectorized over leading axes of ``beta``."""
        f = np.asarray(beta) @ self.node_basis.T
        top = f.max(axis=-1, keepdims=True)
        # recentre by the grid maximum; the normalized density is unaffected
        return np.log(np.exp(f - top) @ self.weights) + top[..., 0]

    def log_density(self, beta, t) -> np.ndarray:
        beta = np.asarray(beta, float)
        f = beta @ eval_basis(self.basis, np.asarray(t, float)).T
        return f - np.expand_dims(self.log_normalizer(beta), -1)

    def density(self, beta, t) -> np.ndarray:
        return np.exp(self.log_density(beta, t))


@dataclass(frozen=True)
class _DensityCoords:
    """Gauge-fixed coordinates for log-spline coefficients.

    ``beta = A theta``; the last ``k - d0`` coordinates of ``theta`` carry the
    prior penalty ``|c1|^2`` exactly and the constant direction is removed.
    """

    A: np.ndarray
    m: int  # number of penalized coordinates


def _density_coords(design: ShrinkageDesign) -> _DensityCoords:
    d0, k = design.d0, design.k
    ones = design.u0.T @ np.ones(design.n)
    e = ones / np.linalg.norm(ones)
    # orthonormal complement of e inside the null coordinates
    full, _ = np.linalg.qr(np.column_stack([e, np.eye(d0)]))
    v0 = full[:, 1:d0]
    embed = np.zeros((k, k - 1))
    embed[:d0, : d0 - 1] = v0
    embed[d0:, d0 - 1:] = np.eye(k - d0)
    return _DensityCoords(A=design.coords_inv @ embed, m=k - d0)


def _logspline_mle(model: LogSplineModel, stat, n, A, iters=100):
    """Newton ascent on the (concave) log-likelihood in ``theta``."""
    theta = np.zeros(A.shape[1])
    B = model.node_basis @ A
    sA = stat @ A
    for _ in range(iters):
        f = B @ theta
        p = np.exp(f - f.max()) * model.weights
        p /= p.sum()
        mean = p @ B
        grad = sA - n * mean
        cov = (B * p[:, None]).T @ B - np.outer(mean, mean)
        step = np.linalg.solve(n * cov + 1e-10 * np.eye(len(theta)), grad)
        theta = theta + step
        if np.max(np.abs(step)) < 1e-12:
            break
    return theta, n * cov


def fit_logspline(y, cfg: FhsConfig = FhsConfig(), mh: MHSettings = MHSettings(), null="quadratic",
                  fixed_omega: float | None = None, n_nodes: int = 512, seed: int | None = None) -> ChainDraws:
    """Metropolis-within-Gibbs for the log-spline density under the fHS prior.

    ``beta`` moves by a random-walk Metropolis step whose covariance is the
    inverse of the likelihood information at the MLE plus the current prior
    precision; the step scale adapts during burn-in only. ``eta`` moves by the
    slice step with ``sigma2 = 1``. ``fixed_omega=0`` gives the unshrunk
    (flat-prior) B-spline posterior.
    """
    y = np.asarray(y, float)
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    n = y.size
    if n < cfg.k_n:
        raise ValueError("need at least k_n observations")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)

    model = LogSplineModel.for_data(y, cfg.k_n, cfg.degree, n_nodes)
    phi = design_matrix(model.basis, y)
    phi0 = null_design(null, y) if isinstance(null, str) else np.asarray(null, float)
    design = orthogonal_complement(phi, phi0)
    gauge = _density_coords(design)
    A, m = gauge.A, gauge.m
    dim = A.shape[1]

    stat = phi.values.sum(axis=0)
    s_theta = stat @ A
    B = model.node_basis @ A

    def loglik(theta):
        f = B @ theta
        top = f.max()
        return s_theta @ theta - n * (math.log(np.exp(f - top) @ model.weights) + top)

    theta, info = _logspline_mle(model, stat, n, A)
    a = cfg.a
    b = cfg.resolve_b(n)
    shape_eta = a + m / 2.0
    if fixed_omega is not None:
        log_eta = math.log(fixed_omega) - math.log1p(-fixed_omega) if fixed_omega > 0 else -math.inf
    else:
        log_eta = -2.0 * math.log(cfg.tau_init)
    scale = mh.init_scale or 2.38 / math.sqrt(dim)
    ll = loglik(theta)

    n_keep = cfg.n_iter - cfg.n_burnin
    thetas = np.empty((n_keep, dim))
    log_etas = np.empty(n_keep)
    accepted = 0
    window = 0
    kept_acc = 0
    eye_pen = np.zeros(dim)
    eye_pen[dim - m:] = 1.0
    for it in range(cfg.n_iter):
        eta = math.exp(log_eta) if log_eta > -math.inf else 0.0
        prec = info + np.diag(eta * eye_pen)
        chol = linalg.cholesky(prec, lower=True)
        step = linalg.solve_triangular(chol, rng.standard_normal(dim), lower=True, trans="T")
        prop = theta + scale * step
        ll_prop = loglik(prop)
        c1, c1p = theta[dim - m:], prop[dim - m:]
        log_ratio = ll_prop - ll - 0.5 * eta * (c1p @ c1p - c1 @ c1)
        if math.log(rng.random()) < log_ratio:
            theta, ll = prop, ll_prop
            window += 1
            if it >= cfg.n_burnin:
                kept_acc += 1
        if not math.isfinite(ll):
            raise ChainDivergence(f"log-likelihood became {ll} at iteration {it}", it)

        if fixed_omega is None:
            qf = float(theta[dim - m:] @ theta[dim - m:])
            log_s = math.log(qf / 2.0) if qf > 0 else -math.inf
            u1, u2 = rng.random(2)
            log_eta = float(slice_log_eta(log_eta, shape_eta, log_s, a, b, u1, u2))

        if it < cfg.n_burnin and (it + 1) % mh.adapt_every == 0:
            rate = window / mh.adapt_every
            if rate < mh.target[0]:
                scale /= mh.adapt_factor
            elif rate > mh.target[1]:
                scale *= mh.adapt_factor
            window = 0
        j = it - cfg.n_burnin
        if j >= 0:
            thetas[j] = theta
            log_etas[j] = log_eta

    betas = thetas @ A.T
    config = replace(cfg, seed=seed).to_dict()
    config.update(mh_scale=scale, acceptance=kept_acc / n_keep, null=str(null))
    draws = ChainDraws(betas=betas, log_etas=log_etas, sigma2s=np.ones(n_keep), seed=seed, config=config)
    draws.basis = model.basis
    draws.model = model
    return draws


# ---------------------------------------------------------------------------
# Gaussian-process prior with shrinkage towards a parametric subspace


def exponential_kernel(x1, x2, lengthscale=1.0):
    return np.exp(-np.abs(np.subtract.outer(x1, x2)) / lengthscale)


def squared_exponential_kernel(x1, x2, lengthscale=1.0):
    return np.exp(-0.5 * np.subtract.outer(x1, x2) ** 2 / lengthscale**2)


KERNELS = {"exponential": exponential_kernel, "squared_exponential": squared_exponential_kernel}


@dataclass(frozen=True)
class GpShrinkagePrior:
    """``F | tau ~ N(0, (Sigma^-1 + (I - Q0) / tau^2)^-1)`` with ``omega ~ Beta(a, b)``.

    ``null`` is a callable ``x -> Phi0`` or the name of a polynomial null
    space; ``jitter`` is relative to the kernel diagonal.
    """

    null: object = "linear"
    a: float = 0.5
    b: float = 0.5
    kernel: str = "exponential"
    jitter: float = 1e-8

    def __post_init__(self):
        if self.jitter <= 0:
            raise ValueError("jitter must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    def null_matrix(self, xs):
        if isinstance(self.null, str):
            return null_design(self.null, xs)
        return np.asarray(self.null(xs), float)

    def gram(self, xs):
        return KERNELS[self.kernel](xs, xs)


def piecewise_linear_null(knots=(-1.0, 1.0)):
    """Null design ``{1, (x - k1)_+, (k1 - x)_+, (x - k2)_+, ...}``-style hinges.

    With the default knots this is ``{1, (x+1)_+, (-x-1)_+, (x-1)_+}``.
    """
    first, *rest = knots

    def phi0(x):
        x = np.asarray(x, float)
        cols = [np.ones_like(x), np.maximum(x - first, 0), np.maximum(first - x, 0)]
        cols += [np.maximum(x - k, 0) for k in rest]
        return np.column_stack(cols)

    return phi0


def _log_beta_pair(a, b, size, rng):
    """``log omega`` and ``log(1 - omega)`` for ``omega ~ Beta(a, b)``.

    Gamma variates with tiny shape underflow, so ``log G(s)`` is drawn as
    ``log G(s + 1) + log(U) / s``.
    """
    ga = np.log(rng.standard_gamma(a + 1.0, size)) + np.log(rng.random(size)) / a
    gb = np.log(rng.standard_gamma(b + 1.0, size)) + np.log(rng.random(size)) / b
    tot = np.logaddexp(ga, gb)
    return ga - tot, gb - tot


def _stable_cholesky(mat, jitter, tries=3):
    scale = float(np.mean(np.diag(mat)))
    eps = jitter
    for _ in range(tries + 1):
        try:
            return linalg.cholesky(mat + eps * scale * np.eye(mat.shape[0]), lower=True)
        except linalg.LinAlgError:
            eps *= 10.0
    raise np.linalg.LinAlgError(f"kernel matrix not factorizable with jitter up to {eps / 10:g}")


def gp_prior_sample(prior: GpShrinkagePrior, xs, n_paths: int, rng, tau2=None,
                    return_tau2: bool = False):
    """Sample paths of ``F`` at ``xs`` from the shrinkage GP prior.

    ``tau2`` fixes ``tau^2`` for every path instead of drawing
    ``tau^2 = (1 - omega) / omega``. Returns an ``(n_paths, n)`` array, and
    the per-path ``log tau^2`` when ``return_tau2`` is true.
    """
    xs = np.asarray(xs, float)
    n = xs.size
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    sigma_chol = _stable_cholesky(prior.gram(xs), prior.jitter)
    u0 = orthonormal_factor(prior.null_matrix(xs))
    d0 = u0.shape[1]
    full = np.hstack([u0, null_complement(u0, n)])
    # Sigma^-1 in the [null, complement] basis
    half = linalg.solve_triangular(sigma_chol, full, lower=True)
    prec = half.T @ half

    if tau2 is None:
        log_omega, log_1m = _log_beta_pair(prior.a, prior.b, n_paths, rng)
        log_tau2 = log_1m - log_omega
    else:
        log_tau2 = np.full(n_paths, math.log(tau2))

    paths = np.empty((n_paths, n))
    z = rng.standard_normal((n_paths, n))
    null_chol = linalg.cholesky(prec[:d0, :d0], lower=True) if d0 else None
    for i in range(n_paths):
        if -log_tau2[i] > 690.0:
            # complement precision beyond double range: the limit path lies in the null space
            g = np.zeros(n)
            if d0:
                g[:d0] = linalg.solve_triangular(null_chol, z[i, :d0], lower=True, trans="T")
        else:
            lam = prec.copy()
            lam[d0:, d0:] += math.exp(-log_tau2[i]) * np.eye(n - d0)
            chol = linalg.cholesky(lam, lower=True)
            g = linalg.solve_triangular(chol, z[i], lower=True, trans="T")
        paths[i] = full @ g
    if return_tau2:
        return paths, log_tau2
    return paths


def null_complement(u0: np.ndarray, n: int) -> np.ndarray:
    """Deterministic completion of ``u0`` to a basis of ``R^n``."""
    if u0.shape[1] == 0:
        return np.eye(n)
    q, _ = np.linalg.qr(u0, mode="complete")
    return q[:, u0.shape[1]:]


def near_null_ratio(paths, prior: GpShrinkagePrior, xs) -> np.ndarray:
    """``|(I - Q0) F| / |F|`` for each path."""
    u0 = orthonormal_factor(prior.null_matrix(np.asarray(xs, float)))
    paths = np.atleast_2d(paths)
    resid = paths - (paths @ u0) @ u0.T
    return np.linalg.norm(resid, axis=1) / np.linalg.norm(paths, axis=1)

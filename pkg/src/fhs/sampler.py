"""Gibbs sampler for spline regression under the functional horseshoe prior.

The chain alternates

1. ``beta | omega, sigma2`` -- exact Gaussian draw in orthonormal null /
   complement coordinates,
2. ``eta = 1/tau^2 | beta, sigma2`` -- slice step with a truncated Gamma
   draw by inverse CDF,
3. ``sigma2 | beta, eta`` -- inverse-gamma draw (optional).

``eta`` is carried on the log scale. With the default ``b = n^(-k/2)`` the
posterior of ``omega = eta / (1 + eta)`` can sit within ``exp(-300)`` of one,
which no float can represent directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .basis import eval_basis
from .projection import ShrinkageDesign

OMEGA_MAX = float(np.nextafter(1.0, 0.0))
OMEGA_MIN = float(np.finfo(float).tiny)
_CHUNK = 1024


class ChainDivergence(FloatingPointError):
    """Non-finite value in the chain; ``iteration`` is where it appeared."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class FhsConfig:
    """Hyperparameters and chain settings.

    ``b="auto"`` resolves to ``exp(-k_n log(n) / 2)`` once ``n`` is known.
    ``sigma2_prior`` is an inverse-gamma ``(shape, rate)`` pair or ``"fixed"``,
    in which case ``sigma2`` is held at ``sigma2_init`` (default 1).
    """

    a: float = 0.5
    b: float | str = "auto"
    k_n: int = 8
    degree: int = 3
    sigma2_prior: tuple[float, float] | str = (0.01, 0.01)
    sigma2_init: float | None = None
    sigma2_prior_includes_beta_term: bool = True
    n_iter: int = 30000
    n_burnin: int = 10000
    tau_init: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.b != "auto" and not (isinstance(self.b, (int, float)) and self.b > 0):
            raise ValueError("b must be positive or 'auto'")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.sigma2_prior != "fixed":
            shape, rate = self.sigma2_prior
            if shape <= 0 or rate <= 0:
                raise ValueError("sigma2 prior parameters must be positive")
        if self.tau_init <= 0:
            raise ValueError("tau_init must be positive")

    @property
    def fixed_sigma2(self) -> bool:
        return self.sigma2_prior == "fixed"

    def log_b(self, n: int | None = None) -> float:
        if self.b == "auto":
            if n is None:
                raise ValueError("b='auto' needs the sample size")
            return -self.k_n * math.log(n) / 2.0
        return math.log(self.b)

    def resolve_b(self, n: int | None = None) -> float:
        return math.exp(self.log_b(n))

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["sigma2_prior"], tuple):
            d["sigma2_prior"] = list(d["sigma2_prior"])
        return d


@dataclass
class ChainState:
    beta: np.ndarray
    log_eta: float
    sigma2: float
    yq1y: float = 0.0

    @property
    def eta(self) -> float:
        return math.exp(self.log_eta)

    @property
    def tau(self) -> float:
        return math.exp(-0.5 * self.log_eta)

    @property
    def omega(self) -> float:
        return float(special.expit(self.log_eta))

    @property
    def h_n(self) -> float:
        return self.yq1y / (2.0 * self.sigma2)

    @classmethod
    def initial(cls, y, design: ShrinkageDesign, tau=1.0, sigma2=1.0, beta=None):
        y = np.asarray(y, dtype=float)
        if beta is None:
            beta = design.from_coords(design.u.T @ y)
        yq1y = float(np.sum((design.u1.T @ y) ** 2))
        return cls(beta=np.asarray(beta, float), log_eta=-2.0 * math.log(tau),
                   sigma2=float(sigma2), yq1y=yq1y)


@dataclass
class ChainDraws:
    """Kept draws of one chain: one row per kept iteration."""

    betas: np.ndarray
    log_etas: np.ndarray
    sigma2s: np.ndarray
    seed: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return self.betas.shape[0]

    @property
    def omegas(self) -> np.ndarray:
        # nearest floats inside (0, 1); log_etas keeps the exact value
        return np.clip(special.expit(self.log_etas), OMEGA_MIN, OMEGA_MAX)

    @property
    def taus(self) -> np.ndarray:
        return np.exp(-0.5 * self.log_etas)

    def to_csv(self, path):
        k = self.betas.shape[1]
        header = [f"beta_{j + 1}" for j in range(k)] + ["omega", "sigma2", "log_eta"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row, om, s2, le in zip(self.betas, self.omegas, self.sigma2s, self.log_etas):
                w.writerow([repr(float(v)) for v in row] + [repr(float(om)), repr(float(s2)), repr(float(le))])

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True)
        names = data.dtype.names
        betas = np.column_stack([data[n] for n in names if n.startswith("beta_")])
        return cls(betas=betas, log_etas=np.asarray(data["log_eta"]),
                   sigma2s=np.asarray(data["sigma2"]))


# ---------------------------------------------------------------------------
# truncated Gamma and the slice step


def truncated_gamma_log(shape, log_rate, log_upper, u):
    """Log of a Gamma(shape, rate) draw truncated to ``(0, upper)``.

    Inverse CDF through the regularized incomplete gamma function. ``u`` is a
    uniform on (0, 1). A zero rate (``log_rate = -inf``) gives the power
    density ``eta^(shape-1)`` on ``(0, upper)``. All arguments broadcast.
    """
    shape, log_rate, log_upper, u = np.broadcast_arrays(
        np.asarray(shape, float), np.asarray(log_rate, float),
        np.asarray(log_upper, float), np.asarray(u, float))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore", under="ignore"):
        x = np.exp(np.minimum(log_rate + log_upper, 709.0))
        p = special.gammainc(shape, x)
        q = special.gammaincc(shape, x)
        lower = special.gammaincinv(shape, u * p)
        upper = special.gammainccinv(shape, q + (1.0 - u) * p)
        z = np.where(p <= 0.5, lower, upper)
        out = np.log(z) - log_rate
        power = log_upper + np.log(u) / shape
        use_power = ~np.isfinite(log_rate) | (p <= 0.0) | ~(z > 0.0)
        out = np.where(use_power, power, out)
    return np.minimum(out, log_upper)


def _log_expm1(v):
    with np.errstate(over="ignore", divide="ignore"):
        return np.where(v < 30.0, np.log(np.expm1(np.minimum(v, 30.0))),
                        v + np.log1p(-np.exp(-v)))


def slice_log_eta(log_eta, shape, log_s, a, b, u_slice, u_gamma):
    """One slice update of ``eta`` on the log scale.

    Target: ``eta^(shape-1) (1 + eta)^(-(a+b)) exp(-s eta)``. The auxiliary
    level is ``u_slice * (1 + eta)^(-(a+b))``, which confines the new value
    below ``t* = level^(-1/(a+b)) - 1``.
    """
    v = np.logaddexp(0.0, log_eta) - np.log(u_slice) / (a + b)
    log_t = _log_expm1(v)
    return truncated_gamma_log(shape, log_s, log_t, u_gamma)


def slice_update_tau(beta, state: ChainState, design: ShrinkageDesign, cfg: FhsConfig, rng) -> float:
    """Slice step for ``tau`` given ``beta``; returns the new ``tau``."""
    r1 = design.coords[design.d0:] @ np.asarray(beta, float)
    qf = float(r1 @ r1)
    log_s = math.log(qf / (2.0 * state.sigma2)) if qf > 0 else -math.inf
    shape = cfg.a + (design.k - design.d0) / 2.0
    b = cfg.resolve_b(design.n)
    u1, u2 = rng.random(2)
    log_eta = float(slice_log_eta(state.log_eta, shape, log_s, cfg.a, b, u1, u2))
    return math.exp(-0.5 * log_eta)


# ---------------------------------------------------------------------------
# beta and sigma2 conditionals


def _draw_shrunk(uty1, log_eta, sigma, z1):
    """Complement-block coordinates ``c1`` plus ``w1 = c1 / sqrt(1 - omega)``."""
    half = math.exp(-0.5 * float(np.logaddexp(0.0, log_eta)))  # sqrt(1 - omega)
    w1 = half * uty1 + sigma * z1
    return half * w1, w1


def draw_beta(y, state: ChainState, design: ShrinkageDesign, rng) -> np.ndarray:
    """Exact draw of ``beta | y, omega, sigma2``.

    In orthonormal coordinates the null block is ``N(U0^T y, sigma2 I)`` and
    the complement block is ``N((1-omega) U1^T y, sigma2 (1-omega) I)``.
    """
    y = np.asarray(y, float)
    sigma = math.sqrt(state.sigma2)
    z = rng.standard_normal(design.k)
    d0 = design.d0
    c0 = design.u0.T @ y + sigma * z[:d0]
    c1, _ = _draw_shrunk(design.u1.T @ y, state.log_eta, sigma, z[d0:])
    return design.from_coords(np.concatenate([c0, c1]))


def _sigma2_params(cfg: FhsConfig, n, m, rss, penalty):
    shape, rate = cfg.sigma2_prior
    shape = shape + n / 2.0
    rate = rate + rss / 2.0
    if cfg.sigma2_prior_includes_beta_term:
        shape += m / 2.0
        rate += penalty / 2.0
    return shape, rate


def update_sigma2(y, beta, state: ChainState, design: ShrinkageDesign, cfg: FhsConfig, rng) -> float:
    """Inverse-gamma draw of ``sigma2 | y, beta, eta``.

    Shape ``a0 + (n + k - d0)/2`` and rate
    ``b0 + |y - phi beta|^2 / 2 + eta beta^T P beta / 2``; the ``beta`` terms
    drop out when ``cfg.sigma2_prior_includes_beta_term`` is false.
    """
    if cfg.fixed_sigma2:
        raise ValueError("sigma2 is fixed in this configuration")
    y = np.asarray(y, float)
    beta = np.asarray(beta, float)
    resid = y - design.phi @ beta
    r1 = design.coords[design.d0:] @ beta
    penalty = state.eta * float(r1 @ r1)
    shape, rate = _sigma2_params(cfg, y.size, design.k - design.d0, float(resid @ resid), penalty)
    return rate / rng.gamma(shape)


# ---------------------------------------------------------------------------
# marginal of omega and its normalizer


def omega_log_density(omega, a, b, k_n, d0, h_n):
    """Unnormalized log posterior density of ``omega`` given ``H_n``."""
    omega = np.asarray(omega, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ((a + (k_n - d0) / 2.0 - 1.0) * np.log(omega)
               + (b - 1.0) * np.log1p(-omega) - h_n * omega)
    out = np.where((omega > 0) & (omega < 1), out, -np.inf)
    return out[()] if out.ndim == 0 else out


class NormalizerBounds(NamedTuple):
    lower: float
    upper: float
    exact: float


def normalizer_bounds(A_n: float, B_n: float, H_n: float, log: bool = False) -> NormalizerBounds:
    """Two-sided bounds on ``int_0^1 w^(A-1) (1-w)^(B-1) exp(-H w) dw``.

    ``exact`` is by adaptive quadrature with algebraic end-point weights. The
    lower bound keeps only the ``B H / (A + B)`` correction term; the omitted
    term is non-negative so the bound stays valid. With ``log=True`` all
    three values are returned as logarithms, which is the only usable form
    once ``H_n`` exceeds ~700.
    """
    if not (A_n > 0 and B_n > 0 and H_n >= 0):
        raise ValueError("need A_n > 0, B_n > 0, H_n >= 0")
    log_be = special.betaln(A_n, B_n)
    frac = B_n / (A_n + B_n)
    log_upper = log_be - H_n + np.logaddexp(0.0, math.log(frac) + H_n)
    log_lower = log_be - H_n + math.log1p(frac * H_n)
    # exp(-H w) = exp(-H) exp(H (1 - w)); the second factor is at most exp(H)
    # only where w^(A-1) is small, and the weighted integral stays finite
    shift = H_n if H_n > 0 else 0.0
    val, _ = integrate.quad(lambda w: math.exp(H_n * (1.0 - w) - shift), 0.0, 1.0,
                            weight="alg", wvar=(A_n - 1.0, B_n - 1.0),
                            epsabs=0.0, epsrel=1e-12, limit=200)
    log_exact = math.log(val) + shift - H_n
    if log:
        return NormalizerBounds(float(log_lower), float(log_upper), float(log_exact))
    return NormalizerBounds(math.exp(log_lower), math.exp(log_upper), math.exp(log_exact))


# ---------------------------------------------------------------------------
# the chain


def run_chain(y, design: ShrinkageDesign, cfg: FhsConfig, fixed_omega: float | None = None,
              seed: int | None = None) -> ChainDraws:
    """Run the Gibbs sampler and return the post-burn-in draws.

    Deterministic given ``(y, design, cfg, seed)``; ``seed`` defaults to
    ``cfg.seed``. ``fixed_omega`` pins the shrinkage factor and skips the
    slice step.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != design.n:
        raise ValueError(f"y must be a vector of length {design.n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)

    n, k, d0 = design.n, design.k, design.d0
    m = k - d0
    uty = design.u.T @ y
    uty0, uty1 = uty[:d0], uty[d0:]
    resid_base = float(y @ y - uty @ uty)  # |(I - Q_phi) y|^2
    a = cfg.a
    b = cfg.resolve_b(n)
    shape_eta = a + m / 2.0

    if cfg.sigma2_init is not None:
        sigma2 = float(cfg.sigma2_init)
    elif cfg.fixed_sigma2:
        sigma2 = 1.0
    else:
        sigma2 = max(resid_base / max(n - k, 1), 1e-8 * float(y @ y) / n, 1e-300)
    if fixed_omega is not None:
        if not 0.0 <= fixed_omega < 1.0:
            raise ValueError("fixed_omega must lie in [0, 1)")
        log_eta = math.log(fixed_omega) - math.log1p(-fixed_omega) if fixed_omega > 0 else -math.inf
    else:
        log_eta = -2.0 * math.log(cfg.tau_init)
    if not cfg.fixed_sigma2:
        s_shape, _ = _sigma2_params(cfg, n, m, 0.0, 0.0)

    n_keep = cfg.n_iter - cfg.n_burnin
    coords_out = np.empty((n_keep, k))
    log_etas = np.empty(n_keep)
    sigma2s = np.empty(n_keep)

    for start in range(0, cfg.n_iter, _CHUNK):
        size = min(_CHUNK, cfg.n_iter - start)
        z = rng.standard_normal((size, k))
        u = rng.random((size, 2))
        g = rng.standard_gamma(s_shape, size) if not cfg.fixed_sigma2 else None
        for i in range(size):
            it = start + i
            sigma = math.sqrt(sigma2)
            zi = z[i]
            c0 = uty0 + sigma * zi[:d0]
            if log_eta == math.inf:
                w1 = sigma * zi[d0:]
                c1 = 0.0 * w1
            else:
                c1, w1 = _draw_shrunk(uty1, log_eta, sigma, zi[d0:])
            ww = float(w1 @ w1)
            log_1m_omega = -float(np.logaddexp(0.0, log_eta))
            log_s = log_1m_omega + math.log(ww / (2.0 * sigma2)) if ww > 0 else -math.inf

            if fixed_omega is None:
                log_eta = float(slice_log_eta(log_eta, shape_eta, log_s, a, b, u[i, 0], u[i, 1]))
                if math.isnan(log_eta):
                    raise ChainDivergence(f"eta became NaN at iteration {it}", it)

            if not cfg.fixed_sigma2:
                dc0 = uty0 - c0
                dc1 = uty1 - c1
                rss = resid_base + float(dc0 @ dc0) + float(dc1 @ dc1)
                penalty = 2.0 * sigma2 * math.exp(log_s + log_eta) if log_s > -math.inf else 0.0
                _, rate = _sigma2_params(cfg, n, m, rss, penalty)
                sigma2 = rate / g[i]
                if not (math.isfinite(sigma2) and sigma2 > 0):
                    raise ChainDivergence(f"sigma2 became {sigma2} at iteration {it}", it)

            j = it - cfg.n_burnin
            if j >= 0:
                coords_out[j, :d0] = c0
                coords_out[j, d0:] = c1
                log_etas[j] = log_eta
                sigma2s[j] = sigma2

    betas = design.from_coords(coords_out)
    if not np.all(np.isfinite(betas)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(betas), axis=1))[0]) + cfg.n_burnin
        raise ChainDivergence(f"non-finite beta at iteration {bad}", bad)
    return ChainDraws(betas=betas, log_etas=log_etas, sigma2s=sigma2s, seed=seed,
                      config=replace(cfg, seed=seed).to_dict())


# ---------------------------------------------------------------------------
# summaries


@dataclass
class FitSummary:
    """Pointwise posterior summary of ``f`` on a grid."""

    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    omega_mean: float | None = None
    sigma2_mean: float | None = None
    metrics: dict = field(default_factory=dict)

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, float)
        return (self.lower <= values) & (values <= self.upper)


def function_draws(betas, basis, grid) -> np.ndarray:
    """Draws of ``f`` on ``grid``: shape ``(n_draws, len(grid))``."""
    return np.asarray(betas) @ eval_basis(basis, np.asarray(grid, float)).T


def posterior_summary(draws: ChainDraws, design, level: float = 0.95, grid=None) -> FitSummary:
    """Posterior mean curve and equal-tailed pointwise credible band.

    ``design`` is a :class:`ShrinkageDesign` (its basis is used) or a basis.
    """
    if draws.n_kept == 0:
        raise ValueError("no draws to summarize")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    basis = getattr(design, "basis", design)
    if basis is None:
        raise ValueError("design carries no basis; pass the basis directly")
    if grid is None:
        lo, hi = basis.domain
        grid = np.linspace(lo, hi, 101)
    grid = np.asarray(grid, float)
    fx = function_draws(draws.betas, basis, grid)
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(fx, [alpha, 1.0 - alpha], axis=0)
    return FitSummary(
        grid=grid,
        mean=draws.betas.mean(axis=0) @ eval_basis(basis, grid).T,
        lower=lower,
        upper=upper,
        level=level,
        omega_mean=float(draws.omegas.mean()),
        sigma2_mean=float(draws.sigma2s.mean()),
    )

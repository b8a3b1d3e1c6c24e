"""Additive models with a zero-function shrinkage prior on every component.

Each component is a centered B-spline expansion. One sweep of the sampler
draws every component's coefficients from its conditional given the partial
residual, then updates all the ``eta_j`` by the slice step, then ``sigma2``.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .basis import basis_for_data, eval_basis
from .projection import RankError
from .sampler import ChainDivergence, ChainDraws, FhsConfig, OMEGA_MAX, OMEGA_MIN, slice_log_eta

REFRESH_EVERY = 500


@dataclass
class AdditiveDesign:
    """Centered component designs sharing one response.

    Component ``j`` uses basis ``bases[j]`` evaluated at ``X[:, j]``, centered
    by ``col_means[j]``, with its last column dropped: centered B-spline
    columns sum to zero, so all ``k`` of them are linearly dependent.
    """

    components: list
    y_centered: np.ndarray
    intercept: float
    bases: list
    col_means: list
    keys: list
    ranges: list
    u: list = field(init=False, repr=False)
    r: list = field(init=False, repr=False)
    r_inv: list = field(init=False, repr=False)

    def __post_init__(self):
        n = self.y_centered.size
        self.u, self.r, self.r_inv = [], [], []
        for j, phi in enumerate(self.components):
            if phi.shape[0] != n:
                raise ValueError(f"component {j} has {phi.shape[0]} rows, expected {n}")
            q, r = np.linalg.qr(phi)
            d = np.abs(np.diag(r))
            if d.min() < 1e-10 * d.max():
                raise RankError(f"component {j} ({self.keys[j]!r}) has a singular Gram matrix")
            self.u.append(np.ascontiguousarray(q))
            self.r.append(r)
            self.r_inv.append(np.linalg.inv(r))

    @property
    def p(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return self.y_centered.size

    @classmethod
    def from_data(cls, X, y, k_n: int = 8, degree: int = 3, keys=None) -> "AdditiveDesign":
        X = np.asarray(X, float)
        y = np.asarray(y, float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError("X must be n x p with n = len(y)")
        keys = list(range(X.shape[1])) if keys is None else list(keys)
        comps, bases, means, ranges = [], [], [], []
        for j in range(X.shape[1]):
            basis = basis_for_data(X[:, j], k_n, degree)
            raw = eval_basis(basis, X[:, j])
            mu = raw.mean(axis=0)
            comps.append((raw - mu)[:, :-1])
            bases.append(basis)
            means.append(mu)
            ranges.append(basis.domain)
        intercept = float(y.mean())
        return cls(components=comps, y_centered=y - intercept, intercept=intercept,
                   bases=bases, col_means=means, keys=keys, ranges=ranges)

    def component_basis(self, j: int, x, clip: bool = False) -> np.ndarray:
        """Centered, reduced basis of component ``j`` at new points ``x``."""
        x = np.asarray(x, float)
        if clip:
            x = np.clip(x, *self.ranges[j])
        return (eval_basis(self.bases[j], x) - self.col_means[j])[:, :-1]


def conditional_moments(design: AdditiveDesign, j: int, partial_residual, omega: float, sigma2: float):
    """Mean and covariance of ``beta_j`` given the partial residual and ``omega_j``.

    ``(1 - omega) (Phi_j^T Phi_j)^-1 Phi_j^T r_j`` and
    ``sigma2 (1 - omega) (Phi_j^T Phi_j)^-1``, through the QR factor.
    """
    r_inv = design.r_inv[j]
    mean = (1.0 - omega) * (r_inv @ (design.u[j].T @ partial_residual))
    cov = sigma2 * (1.0 - omega) * (r_inv @ r_inv.T)
    return mean, cov


def component_seed(seed: int, key) -> np.random.SeedSequence:
    """Per-component random stream keyed by the component's identity."""
    if isinstance(key, (int, np.integer)):
        tag = int(key)
    else:
        tag = zlib.crc32(str(key).encode()) + (1 << 32)
    return np.random.SeedSequence(seed, spawn_key=(tag,))


@dataclass
class AdditiveDraws:
    """Kept draws: per-component coefficients, ``log eta_j``, ``sigma2``."""

    betas: list
    log_etas: np.ndarray
    sigma2s: np.ndarray
    intercept: float
    keys: list
    seed: int | None = None
    config: dict = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return self.sigma2s.size

    @property
    def omegas(self) -> np.ndarray:
        return np.clip(special.expit(self.log_etas), OMEGA_MIN, OMEGA_MAX)

    def component(self, j: int) -> ChainDraws:
        return ChainDraws(betas=self.betas[j], log_etas=self.log_etas[:, j],
                          sigma2s=self.sigma2s, seed=self.seed, config=self.config)

    def fitted(self, design: AdditiveDesign) -> np.ndarray:
        """Posterior mean of ``E[y]`` at the design points, intercept included."""
        out = np.full(design.n, self.intercept)
        for j, phi in enumerate(design.components):
            out += phi @ self.betas[j].mean(axis=0)
        return out

    def predict(self, design: AdditiveDesign, X, clip: bool = True) -> np.ndarray:
        X = np.asarray(X, float)
        out = np.full(X.shape[0], self.intercept)
        for j in range(design.p):
            out += design.component_basis(j, X[:, j], clip=clip) @ self.betas[j].mean(axis=0)
        return out


def backfit_chain(design: AdditiveDesign, cfg: FhsConfig, fixed_omega=None, thin: int = 1,
                  seed: int | None = None, check_every: int = 0) -> AdditiveDraws:
    """Componentwise Gibbs sampler for the additive model.

    Components are visited in the order of their keys so that reordering the
    input columns only permutes the output. ``fixed_omega`` (scalar or one
    value per component) pins the shrinkage factors. ``check_every > 0``
    compares the sampled conditional mean against a direct solve every that
    many sweeps and raises if they disagree beyond ``1e-8``.
    """
    seed = cfg.seed if seed is None else seed
    n, p = design.n, design.p
    y = design.y_centered
    order = sorted(range(p), key=lambda j: (str(type(design.keys[j])), design.keys[j]))
    streams = [np.random.default_rng(component_seed(seed, design.keys[j])) for j in range(p)]
    global_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xFFFFFFFFFF,)))
    ms = np.array([phi.shape[1] for phi in design.components])
    a = cfg.a
    b = cfg.resolve_b(n)
    shape_eta = a + ms / 2.0

    if fixed_omega is not None:
        om = np.broadcast_to(np.asarray(fixed_omega, float), (p,))
        with np.errstate(divide="ignore"):
            log_eta = np.log(om) - np.log1p(-om)
    else:
        log_eta = np.full(p, -2.0 * math.log(cfg.tau_init))
    if cfg.sigma2_init is not None:
        sigma2 = float(cfg.sigma2_init)
    elif cfg.fixed_sigma2:
        sigma2 = 1.0
    else:
        sigma2 = float(y @ y) / n

    if cfg.fixed_sigma2:
        s_shape = None
    else:
        s_shape = cfg.sigma2_prior[0] + n / 2.0
        if cfg.sigma2_prior_includes_beta_term:
            s_shape += ms.sum() / 2.0

    coords = [np.zeros(m) for m in ms]
    resid = y.copy()
    n_keep = (cfg.n_iter - cfg.n_burnin + thin - 1) // thin
    kept = [np.empty((n_keep, m)) for m in ms]
    kept_eta = np.empty((n_keep, p))
    kept_s2 = np.empty(n_keep)
    log_s = np.empty(p)
    chunk = 256
    slot = 0

    for start in range(0, cfg.n_iter, chunk):
        size = min(chunk, cfg.n_iter - start)
        zs = [streams[j].standard_normal((size, ms[j])) for j in range(p)]
        us = np.stack([streams[j].random((size, 2)) for j in range(p)], axis=1)
        gs = global_rng.standard_gamma(s_shape, size) if s_shape is not None else None
        for i in range(size):
            it = start + i
            sigma = math.sqrt(sigma2)
            half = np.exp(-0.5 * np.logaddexp(0.0, log_eta))  # sqrt(1 - omega_j)
            for j in order:
                uj = design.u[j]
                t = uj.T @ resid + coords[j]
                if check_every and it % check_every == 0:
                    _check_conditional(design, j, resid, coords[j], t, half[j] ** 2)
                w = half[j] * t + sigma * zs[j][i]
                new = half[j] * w
                resid -= uj @ (new - coords[j])
                coords[j] = new
                ww = float(w @ w)
                log_s[j] = (math.log(ww / (2.0 * sigma2)) - float(np.logaddexp(0.0, log_eta[j]))
                            if ww > 0 else -math.inf)

            if fixed_omega is None:
                log_eta = slice_log_eta(log_eta, shape_eta, log_s, a, b, us[i, :, 0], us[i, :, 1])
                if np.isnan(log_eta).any():
                    raise ChainDivergence(f"eta became NaN at sweep {it}", it)

            if (it + 1) % REFRESH_EVERY == 0:
                resid = y - sum(design.u[j] @ coords[j] for j in range(p))

            if s_shape is not None:
                rate = cfg.sigma2_prior[1] + float(resid @ resid) / 2.0
                if cfg.sigma2_prior_includes_beta_term:
                    with np.errstate(over="ignore"):
                        rate += sigma2 * float(np.sum(np.exp(log_s + log_eta)))
                sigma2 = rate / gs[i]
                if not (math.isfinite(sigma2) and sigma2 > 0):
                    raise ChainDivergence(f"sigma2 became {sigma2} at sweep {it}", it)

            j_keep = it - cfg.n_burnin
            if j_keep >= 0 and j_keep % thin == 0:
                for j in range(p):
                    kept[j][slot] = coords[j]
                kept_eta[slot] = log_eta
                kept_s2[slot] = sigma2
                slot += 1

    betas = [kept[j] @ design.r_inv[j].T for j in range(p)]
    return AdditiveDraws(betas=betas, log_etas=kept_eta, sigma2s=kept_s2, intercept=design.intercept,
                         keys=list(design.keys), seed=seed,
                         config=dict(replace(cfg, seed=seed).to_dict(), thin=thin))


def _check_conditional(design, j, resid, coord, t, one_minus_omega):
    partial = resid + design.u[j] @ coord
    phi = design.components[j]
    direct = one_minus_omega * np.linalg.solve(phi.T @ phi, phi.T @ partial)
    sampled = one_minus_omega * (design.r_inv[j] @ t)
    scale = max(1.0, float(np.max(np.abs(direct))))
    if np.max(np.abs(direct - sampled)) > 1e-8 * scale:
        raise AssertionError(f"conditional mean of component {j} disagrees with direct solve")


# ---------------------------------------------------------------------------
# selection


@dataclass
class SelectionResult:
    included: np.ndarray
    bands: list
    grids: list
    keys: list
    mcc_inputs: dict | None = None

    def report_rows(self):
        rows = []
        for j, (key, band) in enumerate(zip(self.keys, self.bands)):
            center = (band[0] + band[1]) / 2.0
            width = band[1] - band[0]
            rows.append({
                "component": key,
                "included": bool(self.included[j]),
                "max_abs_band_center": float(np.max(np.abs(center))),
                "mean_band_width": float(np.mean(width)),
                "max_band_width": float(np.max(width)),
            })
        return rows


def component_bands(draws: AdditiveDraws, design: AdditiveDesign, level=0.95, n_grid=101):
    alpha = (1.0 - level) / 2.0
    bands, grids = [], []
    for j in range(design.p):
        lo, hi = design.ranges[j]
        grid = np.linspace(lo, hi, n_grid)
        fx = draws.betas[j] @ design.component_basis(j, grid).T
        bands.append(np.quantile(fx, [alpha, 1.0 - alpha], axis=0))
        grids.append(grid)
    return bands, grids


def select_components(draws: AdditiveDraws, design: AdditiveDesign, level: float = 0.95,
                      n_grid: int = 101, truth=None) -> SelectionResult:
    """Keep component ``j`` iff its pointwise band excludes zero somewhere.

    ``truth`` (boolean mask of truly active components) fills ``mcc_inputs``.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    bands, grids = component_bands(draws, design, level, n_grid)
    included = np.array([bool(np.any((band[0] > 0) | (band[1] < 0))) for band in bands])
    res = SelectionResult(included=included, bands=bands, grids=grids, keys=list(design.keys))
    if truth is not None:
        res.mcc_inputs = confusion(included, truth)
    return res


def confusion(included, truth) -> dict:
    included = np.asarray(included, bool)
    truth = np.asarray(truth, bool)
    return {
        "tp": int(np.sum(included & truth)),
        "tn": int(np.sum(~included & ~truth)),
        "fp": int(np.sum(included & ~truth)),
        "fn": int(np.sum(~included & truth)),
    }


def mcc(tp: int, tn: int, fp: int, fn: int) -> float:
    """Matthews correlation coefficient; 0 when any margin is empty."""
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def unshrunk_fit(design: AdditiveDesign) -> np.ndarray:
    """Least-squares fit with every component unpenalized (minimum-norm when underdetermined)."""
    big = np.hstack(design.components)
    coef, *_ = np.linalg.lstsq(big, design.y_centered, rcond=None)
    return design.intercept + big @ coef

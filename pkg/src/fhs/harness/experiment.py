"""Replicated simulation experiments: fHS against the unshrunk B-spline fit."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..additive import AdditiveDesign, backfit_chain, mcc, select_components, unshrunk_fit
from ..basis import basis_for_data, design_matrix, eval_basis
from ..extmodels import VaryingCoefficientData, fit_logspline, null_design, vc_design
from ..projection import orthogonal_complement
from ..sampler import ChainDivergence, FhsConfig, posterior_summary, run_chain
from . import data as gen
from .errors import ConfigError
from .metrics import MetricsReport, aligned_mse, empirical_mse

log = logging.getLogger(__name__)

MODELS = ("simple", "varying_coefficient", "density", "additive")
_ALIASES = {"vc": "varying_coefficient"}
DEFAULT_NULL = {"simple": "linear", "varying_coefficient": "constant", "density": "quadratic"}


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate.

    ``truth`` names a truth function, or a setting id (1, 2, 3) for the
    additive model. ``snr`` applies to the simple and varying-coefficient
    models only. ``p`` optionally reduces the number of candidate covariates
    of an additive setting.
    """

    model: str
    truth: str
    n: int
    replicates: int = 20
    snr: float | None = 1.0
    master_seed: int = 0
    p: int | None = None
    null: str | None = None
    level: float = 0.95

    def __post_init__(self):
        model = _ALIASES.get(self.model, self.model)
        object.__setattr__(self, "model", model)
        if model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {list(MODELS)}")
        allowed = {
            "simple": gen.SIMPLE_TRUTHS,
            "varying_coefficient": gen.VC_TRUTHS,
            "density": gen.DENSITY_TRUTHS,
            "additive": ("1", "2", "3"),
        }[model]
        truth = str(self.truth)
        object.__setattr__(self, "truth", truth)
        if truth not in allowed:
            raise ConfigError(f"unknown truth {truth!r} for {model}; choose from {list(allowed)}")
        if self.n < (50 if model == "additive" else 10):
            raise ConfigError(f"n={self.n} is too small")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if model in ("simple", "varying_coefficient"):
            if self.snr is None or not self.snr > 0:
                raise ConfigError("snr must be positive for regression models")
        else:
            object.__setattr__(self, "snr", None)
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")

    def replicate_seeds(self) -> list:
        """Integer seeds ``(data, chain)`` per replicate, spawned from the master seed."""
        children = np.random.SeedSequence(self.master_seed).spawn(self.replicates)
        return [tuple(int(s) for s in c.generate_state(2, np.uint32)) for c in children]


# ---------------------------------------------------------------------------
# one replicate per model


def _simple(spec, cfg, data_seed, chain_seed, want_plot):
    d = gen.gen_univariate(spec.truth, spec.n, spec.snr, seed=data_seed, model="simple")
    basis = basis_for_data(d.x, cfg.k_n, cfg.degree)
    phi = design_matrix(basis, d.x)
    design = orthogonal_complement(phi, null_design(spec.null or DEFAULT_NULL["simple"], d.x))
    draws = run_chain(d.y, design, cfg, seed=chain_seed)
    fhat = phi.values @ draws.betas.mean(axis=0)
    base = design.apply_q_phi(d.y)
    row = {
        "mse100_fhs": 100.0 * empirical_mse(fhat, d.f),
        "mse100_baseline": 100.0 * empirical_mse(base, d.f),
        "omega_mean": float(draws.omegas.mean()),
        "sigma2_mean": float(draws.sigma2s.mean()),
    }
    plot = None
    if want_plot:
        s = posterior_summary(draws, basis, spec.level)
        truth, _ = gen.truth_function("simple", spec.truth, spec.snr)
        plot = dict(kind="fit", grid=s.grid, mean=s.mean, lower=s.lower, upper=s.upper,
                    truth=truth(s.grid), points=(d.x, d.y))
    return row, draws, plot


def _vc(spec, cfg, data_seed, chain_seed, want_plot):
    d = gen.gen_univariate(spec.truth, spec.n, spec.snr, seed=data_seed, model="vc")
    vcd = VaryingCoefficientData(y=d.y, w=d.w, x=d.x)
    design = vc_design(vcd, cfg, spec.null or DEFAULT_NULL["varying_coefficient"])
    draws = run_chain(d.y, design, cfg, seed=chain_seed)
    raw = eval_basis(design.basis, d.x)
    fhat = raw @ draws.betas.mean(axis=0)
    beta_ls = design.from_coords(design.u.T @ d.y)
    row = {
        "mse100_fhs": 100.0 * empirical_mse(fhat, d.f),
        "mse100_baseline": 100.0 * empirical_mse(raw @ beta_ls, d.f),
        "omega_mean": float(draws.omegas.mean()),
        "sigma2_mean": float(draws.sigma2s.mean()),
    }
    plot = None
    if want_plot:
        s = posterior_summary(draws, design.basis, spec.level)
        truth, _ = gen.truth_function("vc", spec.truth, spec.snr)
        plot = dict(kind="fit", grid=s.grid, mean=s.mean, lower=s.lower, upper=s.upper, truth=truth(s.grid))
    return row, draws, plot


def _density(spec, cfg, data_seed, chain_seed, want_plot):
    d = gen.gen_univariate(spec.truth, spec.n, seed=data_seed, model="density")
    null = spec.null or DEFAULT_NULL["density"]
    draws = fit_logspline(d.y, cfg, null=null, seed=chain_seed)
    base = fit_logspline(d.y, cfg, null=null, fixed_omega=0.0, seed=chain_seed)
    fhat = draws.model.log_density(draws.betas, d.y).mean(axis=0)
    bhat = base.model.log_density(base.betas, d.y).mean(axis=0)
    row = {
        "mse100_fhs": 100.0 * aligned_mse(fhat, d.f),
        "mse100_baseline": 100.0 * aligned_mse(bhat, d.f),
        "omega_mean": float(draws.omegas.mean()),
        "acceptance": float(draws.config["acceptance"]),
    }
    plot = None
    if want_plot:
        lo, hi = draws.model.basis.domain
        grid = np.linspace(lo, hi, 101)
        dens = draws.model.density(draws.betas, grid)
        lower, upper = np.quantile(dens, [(1 - spec.level) / 2, (1 + spec.level) / 2], axis=0)
        with np.errstate(divide="ignore"):
            truth = np.exp(gen.density_logpdf(spec.truth)(grid))
        plot = dict(kind="density", grid=grid, mean=dens.mean(axis=0), lower=lower, upper=upper, truth=truth)
    return row, draws, plot


def _additive(spec, cfg, data_seed, chain_seed, want_plot):
    setting = int(spec.truth)
    d = gen.gen_additive_setting(setting, spec.n, seed=data_seed, p=spec.p)
    design = AdditiveDesign.from_data(d.X, d.y, cfg.k_n, cfg.degree)
    draws = backfit_chain(design, cfg, seed=chain_seed)
    sel = select_components(draws, design, spec.level, truth=d.active)
    conf = sel.mcc_inputs
    fhat = draws.fitted(design)
    row = {
        "mse100_fhs": 100.0 * empirical_mse(fhat, d.signal),
        "mse100_baseline": 100.0 * empirical_mse(unshrunk_fit(design), d.signal),
        "mcc": mcc(**conf),
        "true_model": int(np.array_equal(sel.included, d.active)),
        "n_spurious": conf["fp"],
        "n_missed": conf["fn"],
        "sigma2_mean": float(draws.sigma2s.mean()),
    }
    plot = None
    if want_plot:
        means = []
        truths = [None] * design.p
        for j in range(design.p):
            means.append(design.component_basis(j, sel.grids[j]) @ draws.betas[j].mean(axis=0))
        for col, coef, f in gen.additive_terms(setting):
            if col < design.p:
                g = sel.grids[col]
                # components are identified up to a constant; center over the sample
                truths[col] = coef * (f(g) - f(d.X[:, col]).mean())
        plot = dict(kind="components", grids=sel.grids, bands=sel.bands, means=means,
                    keys=design.keys, included=sel.included, truths=truths)
    return row, draws, plot


_RUNNERS = {"simple": _simple, "varying_coefficient": _vc, "density": _density, "additive": _additive}


def run_replicate(spec: SimulationSpec, cfg: FhsConfig, index: int, want_plot: bool = False):
    """Run one replicate; chain failures are recorded, not raised."""
    data_seed, chain_seed = spec.replicate_seeds()[index]
    row = {"replicate": index, "seed": chain_seed}
    try:
        res, draws, plot = _RUNNERS[spec.model](spec, cfg, data_seed, chain_seed, want_plot)
    except (ChainDivergence, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("replicate %d failed: %s", index, exc)
        row.update(failed=1, error=type(exc).__name__)
        return row, None, None
    row.update(res)
    row["failed"] = 0
    return row, draws, plot


def _job(args):
    spec, cfg, index, want_plot = args
    return run_replicate(spec, cfg, index, want_plot)


def _write_plot(path, plot, title):
    from . import plots

    if plot["kind"] == "components":
        return plots.plot_components(path, plot["grids"], plot["bands"], plot["means"], plot["keys"],
                                     plot["included"], plot["truths"])
    ylabel = "density" if plot["kind"] == "density" else "f(x)"
    return plots.plot_fit(path, plot["grid"], plot["mean"], plot["lower"], plot["upper"],
                          truth=plot.get("truth"), points=plot.get("points"), title=title, ylabel=ylabel)


def _save_draws(draws, path: Path):
    if hasattr(draws, "component"):
        path.mkdir(parents=True, exist_ok=True)
        for j, key in enumerate(draws.keys):
            draws.component(j).to_csv(path / f"component_{key}.csv")
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        draws.to_csv(path.with_suffix(".csv"))


def run_experiment(spec: SimulationSpec, cfg: FhsConfig, out_dir=None, workers: int = 1,
                   save_draws: bool = False, plot: bool = True) -> MetricsReport:
    """Run all replicates of ``spec`` and write the report files to ``out_dir``.

    Outputs: ``metrics_replicates.csv``, ``metrics_aggregate.csv``,
    ``metadata.json`` and one SVG of the first successful replicate's fit.
    Results do not depend on ``workers``.
    """
    jobs = [(spec, cfg, i, plot and out_dir is not None) for i in range(spec.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    rows = [r for r, _, _ in results]
    meta = {
        "package_version": __version__,
        "data_version": gen.DATA_VERSION,
        "spec": asdict(spec),
        "config": cfg.to_dict(),
        "resolved_b": cfg.resolve_b(spec.n),
    }
    report = MetricsReport(rows=rows, meta=meta)
    if out_dir is None:
        return report

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write(out)
    fhs_mean = report.values("mse100_fhs")
    base_mean = report.values("mse100_baseline")
    if fhs_mean.size and base_mean.size:
        meta["mse_ratio"] = float(fhs_mean.mean() / base_mean.mean())
    meta["n_failed"] = report.n_failed
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    for row, draws, fig in results:
        if fig is not None:
            title = f"{spec.model} / {spec.truth}, n={spec.n}, replicate {row['replicate']}"
            _write_plot(out / f"fit_{spec.model}_{spec.truth}.svg", fig, title)
            break
    if save_draws:
        for row, draws, _ in results:
            if draws is not None:
                _save_draws(draws, out / "draws" / f"replicate_{row['replicate']:03d}")
    return report


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return str(v)

"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import DomainError
from .projection import NestingError
from .sampler import ChainDivergence

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("fhs")

# flag defaults; None means "not given" so config-file values can win
DEFAULTS = {"kn": 8, "a": 0.5, "b": "auto", "iters": 30000, "burnin": 10000, "seed": 0, "degree": 3,
            "sigma2_prior": None}


def _add_common(p, kn_default=None):
    p.add_argument("--kn", type=int, help=f"number of B-spline basis functions (default {kn_default or 8})")
    p.add_argument("--degree", type=int, help="spline degree (default 3)")
    p.add_argument("--a", type=float, help="Beta prior shape a (default 0.5)")
    p.add_argument("--b", help="Beta prior shape b, or 'auto' for exp(-kn log(n) / 2)")
    p.add_argument("--iters", type=int, help="total iterations (default 30000)")
    p.add_argument("--burnin", type=int, help="burn-in iterations (default 10000)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--sigma2-prior", dest="sigma2_prior",
                   help="inverse-gamma 'shape,rate' for sigma2, or 'fixed' (default 0.01,0.01)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-draws", action="store_true", help="also write the posterior draws")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhs", description="Functional horseshoe shrinkage fits and experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a univariate, varying-coefficient or density model to a CSV")
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--model", choices=["simple", "vc", "varying_coefficient", "density"], default="simple")
    p.add_argument("--x", help="covariate column (regression models)")
    p.add_argument("--y", required=True, help="response column, or the sample for density fits")
    p.add_argument("--w", help="multiplier column (varying-coefficient model)")
    p.add_argument("--null", help="null space: zero, constant, linear or quadratic")
    p.add_argument("--level", type=float, default=0.95)
    _add_common(p)

    p = sub.add_parser("fit-additive", help="additive fHS fit with component selection")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--covariates", help="comma-separated columns (default: all others)")
    p.add_argument("--level", type=float, default=0.95)
    _add_common(p)

    p = sub.add_parser("sample-gp", help="draw paths from the shrinkage Gaussian-process prior")
    p.add_argument("--n", type=int, default=100, help="grid points on [-3, 3]")
    p.add_argument("--paths", type=int, default=5000)
    p.add_argument("--null", choices=["linear", "piecewise"], default="linear")
    p.add_argument("--kernel", choices=["exponential", "squared_exponential"], default="exponential")
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--b", default="auto", help="Beta shape b, or 'auto' for n^-2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--save-draws", action="store_true", help="write every path, not only the first 20")

    p = sub.add_parser("simulate", help="replicated simulation experiment")
    p.add_argument("--config", help="config file with [simulation], [prior] and [sampler] sections")
    p.add_argument("--model", choices=["simple", "vc", "varying_coefficient", "density", "additive"])
    p.add_argument("--truth", help="truth name, or setting id 1-3 for the additive model")
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--p", type=int, help="number of candidate covariates (additive settings)")
    p.add_argument("--null", help="null space override")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    _add_common(p)

    p = sub.add_parser("realdata", help="held-out evaluation with spurious covariates on a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--response", required=True)
    p.add_argument("--covariates", help="comma-separated columns (default: all others)")
    p.add_argument("--spurious", type=int, default=0)
    p.add_argument("--test-size", dest="test_size", type=int, default=0)
    p.add_argument("--folds", type=int, default=1)
    p.add_argument("--level", type=float, default=0.95)
    _add_common(p, kn_default=5)
    return parser


def _fhs_config(args, file_values=None, kn_default=8):
    from .harness.config import make_fhs_config

    values = dict(DEFAULTS, kn=kn_default)
    values.update(file_values or {})
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return make_fhs_config(**values)


def _columns(text):
    return None if text is None else [c.strip() for c in text.split(",") if c.strip()]


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    from .basis import basis_for_data, design_matrix
    from .extmodels import VaryingCoefficientData, fit_logspline, null_design, vc_design
    from .harness import plots
    from .harness.errors import ConfigError
    from .harness.experiment import DEFAULT_NULL
    from .harness.realdata import load_numeric_csv
    from .projection import orthogonal_complement
    from .sampler import posterior_summary, run_chain

    model = "varying_coefficient" if args.model == "vc" else args.model
    cfg = _fhs_config(args)
    null = args.null or DEFAULT_NULL[model]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if model == "density":
        frame = load_numeric_csv(args.data, [args.y])
        y = frame[args.y].to_numpy()
        draws = fit_logspline(y, cfg, null=null)
        lo, hi = draws.model.basis.domain
        grid = np.linspace(lo, hi, 101)
        dens = draws.model.density(draws.betas, grid)
        alpha = (1.0 - args.level) / 2.0
        lower, upper = np.quantile(dens, [alpha, 1.0 - alpha], axis=0)
        mean = dens.mean(axis=0)
        ylabel = "density"
        points = None
    else:
        if args.x is None:
            raise ConfigError("--x is required for regression models")
        if model == "varying_coefficient" and args.w is None:
            raise ConfigError("--w is required for the varying-coefficient model")
        cols = [args.x, args.y] + ([args.w] if model == "varying_coefficient" else [])
        frame = load_numeric_csv(args.data, cols)
        x, y = frame[args.x].to_numpy(), frame[args.y].to_numpy()
        if model == "simple":
            basis = basis_for_data(x, cfg.k_n, cfg.degree)
            design = orthogonal_complement(design_matrix(basis, x), null_design(null, x))
            points = (x, y)
        else:
            data = VaryingCoefficientData(y=y, w=frame[args.w].to_numpy(), x=x)
            design = vc_design(data, cfg, null)
            points = None
        draws = run_chain(y, design, cfg)
        s = posterior_summary(draws, design.basis, args.level)
        grid, mean, lower, upper = s.grid, s.mean, s.lower, s.upper
        ylabel = "f(x)"

    _write_rows(out / "fit_summary.csv", ["x", "mean", "lower", "upper"], zip(grid, mean, lower, upper))
    summary = {"model": model, "null": null, "n": int(len(frame)), "omega_mean": float(draws.omegas.mean()),
               "sigma2_mean": float(draws.sigma2s.mean()), "config": cfg.to_dict(), "level": args.level,
               "package_version": __version__}
    if model == "density":
        summary["acceptance"] = draws.config["acceptance"]
    with open(out / "fit_metadata.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    plots.plot_fit(out / f"fit_{model}.svg", grid, mean, lower, upper, points=points, ylabel=ylabel,
                   title=f"{model} fit, posterior mean omega {summary['omega_mean']:.3f}")
    if args.save_draws:
        draws.to_csv(out / "draws.csv")
    print(f"omega_mean={summary['omega_mean']:.6g} written to {out}")
    return EXIT_OK


def cmd_fit_additive(args) -> int:
    from .additive import AdditiveDesign, backfit_chain, select_components
    from .harness import plots
    from .harness.realdata import drop_constant, load_numeric_csv, write_selection_report

    cfg = _fhs_config(args)
    covs = _columns(args.covariates)
    if covs is None:
        import pandas as pd

        covs = [c for c in pd.read_csv(args.data, nrows=0).columns if c != args.response]
    frame = load_numeric_csv(args.data, [args.response, *covs])
    covs = drop_constant(frame, covs)
    design = AdditiveDesign.from_data(frame[covs].to_numpy(), frame[args.response].to_numpy(),
                                      cfg.k_n, cfg.degree, keys=covs)
    draws = backfit_chain(design, cfg)
    sel = select_components(draws, design, args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_selection_report(out / "selection.csv", sel.report_rows())
    means = [design.component_basis(j, sel.grids[j]) @ draws.betas[j].mean(axis=0) for j in range(design.p)]
    plots.plot_components(out / "components.svg", sel.grids, sel.bands, means, design.keys, sel.included)
    if args.save_draws:
        d = out / "draws"
        d.mkdir(exist_ok=True)
        for j, key in enumerate(design.keys):
            draws.component(j).to_csv(d / f"component_{key}.csv")
    chosen = [k for k, inc in zip(design.keys, sel.included) if inc]
    print(f"selected {len(chosen)} of {design.p}: {', '.join(map(str, chosen))}")
    return EXIT_OK


def cmd_sample_gp(args) -> int:
    from .extmodels import GpShrinkagePrior, gp_prior_sample, near_null_ratio, piecewise_linear_null
    from .harness import plots
    from .harness.errors import ConfigError

    if args.n < 5 or args.paths < 1:
        raise ConfigError("need --n >= 5 and --paths >= 1")
    try:
        b = 1.0 / args.n**2 if args.b == "auto" else float(args.b)
    except ValueError as exc:
        raise ConfigError(f"bad --b {args.b!r}") from exc
    null = "linear" if args.null == "linear" else piecewise_linear_null()
    try:
        prior = GpShrinkagePrior(null=null, a=args.a, b=b, kernel=args.kernel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not (args.a > 0 and b > 0):
        raise ConfigError("a and b must be positive")
    xs = np.linspace(-3.0, 3.0, args.n)
    paths = gp_prior_sample(prior, xs, args.paths, np.random.default_rng(args.seed))
    ratio = near_null_ratio(paths, prior, xs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keep = paths if args.save_draws else paths[:20]
    _write_rows(out / "gp_paths.csv", ["x"] + [f"path_{i + 1}" for i in range(len(keep))],
                np.column_stack([xs, keep.T]))
    _write_rows(out / "gp_summary.csv", ["statistic", "value"],
                [("mean_complement_ratio", float(ratio.mean())),
                 ("sd_complement_ratio", float(ratio.std(ddof=1)) if ratio.size > 1 else float("nan")),
                 ("a", args.a), ("b", b), ("paths", args.paths)])
    plots.plot_paths(out / "gp_paths.svg", xs, paths, title=f"{args.null} null, b={b:g}")
    print(f"mean |(I-Q0)F|/|F| = {ratio.mean():.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .harness.config import read_config, write_config
    from .harness.errors import ConfigError
    from .harness.experiment import SimulationSpec, run_experiment

    file_cfg = read_config(args.config) if args.config else {}
    sim = dict(file_cfg.get("simulation", {}))
    for key in ("model", "truth", "n", "replicates", "snr", "p", "null"):
        v = getattr(args, key)
        if v is not None:
            sim[key] = v
    for key in ("model", "truth", "n"):
        if key not in sim:
            raise ConfigError(f"simulate needs --{key} (or {key} in the config file)")
    prior = dict(file_cfg.get("prior", {}))
    sampler = dict(file_cfg.get("sampler", {}))
    workers = args.workers or sampler.pop("workers", 1)
    cfg = _fhs_config(args, {**prior, **sampler})
    spec = SimulationSpec(model=sim["model"], truth=sim["truth"], n=sim["n"],
                          replicates=sim.get("replicates", 20), snr=sim.get("snr", 1.0),
                          master_seed=cfg.seed, p=sim.get("p"), null=sim.get("null"),
                          level=sim.get("level", 0.95))
    out = Path(args.out)
    report = run_experiment(spec, cfg, out, workers=workers, save_draws=args.save_draws)
    echo = {"model": spec.model, "truth": spec.truth, "n": spec.n, "replicates": spec.replicates,
            "snr": spec.snr, "p": spec.p, "null": spec.null, "level": spec.level}
    write_config(out / "config_used.ini", echo, cfg, {"workers": workers})
    for metric, mean, sd, count in report.aggregate():
        print(f"{metric}: mean={mean:.6g} sd={sd:.6g} n={count}")
    if report.n_failed == spec.replicates:
        log.error("every replicate failed")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_realdata(args) -> int:
    from .harness.realdata import run_realdata

    cfg = _fhs_config(args, kn_default=5)
    report = run_realdata(args.data, args.response, _columns(args.covariates), spurious=args.spurious,
                          test_size=args.test_size, folds=args.folds, cfg=cfg, out_dir=args.out,
                          level=args.level)
    for metric, mean, sd, count in report.aggregate():
        print(f"{metric}: mean={mean:.6g} sd={sd:.6g} n={count}")
    print("modal model:", ", ".join(report.meta["modal_model"]) or "(empty)")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "fit-additive": cmd_fit_additive, "sample-gp": cmd_sample_gp,
            "simulate": cmd_simulate, "realdata": cmd_realdata}


def main(argv=None) -> int:
    from .harness.errors import ConfigError, DataError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError, NestingError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ChainDivergence, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining library validation errors concern the input data
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

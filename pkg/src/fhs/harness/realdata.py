"""Held-out evaluation of additive fHS selection on a user-supplied CSV."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import pandas as pd

from .. import __version__
from ..additive import AdditiveDesign, backfit_chain, select_components
from ..sampler import FhsConfig
from .errors import DataError
from .metrics import MetricsReport, empirical_mse

log = logging.getLogger(__name__)


def load_numeric_csv(path, columns=None) -> pd.DataFrame:
    """Read a CSV with a header row and check that the used columns are numeric.

    Raises :class:`DataError` naming the first offending row and column.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    columns = list(frame.columns) if columns is None else list(columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"columns not found in {path}: {missing}")
    out = {}
    for c in columns:
        raw = frame[c].str.strip()
        vals = pd.to_numeric(raw, errors="coerce")
        bad = vals.isna() | ~np.isfinite(vals.to_numpy(float))
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"non-numeric value {raw.iloc[i]!r} at row {i + 1}, column {c!r}")
        out[c] = vals.to_numpy(float)
    return pd.DataFrame(out, columns=columns)


def drop_constant(frame: pd.DataFrame, columns) -> list:
    kept = []
    for c in columns:
        if np.ptp(frame[c].to_numpy()) == 0:
            msg = f"dropping constant column {c!r}"
            warnings.warn(msg, stacklevel=2)
            log.warning(msg)
        else:
            kept.append(c)
    return kept


def _standardize(train: np.ndarray, *others):
    mu = train.mean(axis=0)
    sd = train.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return [(a - mu) / sd for a in (train, *others)]


def run_realdata(csv_path, response: str, covariates=None, spurious: int = 0, test_size: int = 0,
                 folds: int = 1, cfg: FhsConfig = FhsConfig(k_n=5), out_dir=None, seed: int | None = None,
                 level: float = 0.95) -> MetricsReport:
    """Repeated random splits: fit the additive fHS model on the training part.

    Response and covariates are z-scored with training statistics only.
    ``spurious`` i.i.d. standard normal columns are appended before the
    splits. Each fold records the test mean squared error (standardized
    response scale), the selected components and how many of them are
    spurious. ``report.meta`` carries the modal selected model.
    """
    seed = cfg.seed if seed is None else seed
    if folds < 1:
        raise DataError("folds must be at least 1")
    if spurious < 0 or test_size < 0:
        raise DataError("spurious and test_size must be non-negative")
    header = pd.read_csv(csv_path, nrows=0).columns if Path(csv_path).exists() else None
    if header is None:
        raise DataError(f"no such file: {csv_path}")
    if covariates is None:
        covariates = [c for c in header if c != response]
    frame = load_numeric_csv(csv_path, [response, *covariates])
    covariates = drop_constant(frame, covariates)
    n = len(frame)
    if test_size >= n - 10:
        raise DataError(f"test_size={test_size} leaves too few training rows out of {n}")

    spawn = np.random.SeedSequence(seed).spawn(folds + 1)
    X = frame[covariates].to_numpy()
    names = list(covariates)
    if spurious:
        extra = np.random.default_rng(spawn[0]).standard_normal((n, spurious))
        X = np.hstack([X, extra])
        names += [f"spurious_{i + 1}" for i in range(spurious)]
    is_spurious = np.array([nm.startswith("spurious_") and i >= len(covariates)
                            for i, nm in enumerate(names)])
    y = frame[response].to_numpy()

    rows, selections, reports = [], [], []
    for f in range(folds):
        split_rng = np.random.default_rng(spawn[f + 1])
        chain_seed = int(spawn[f + 1].generate_state(1, np.uint32)[0])
        perm = split_rng.permutation(n)
        test, train = perm[:test_size], np.sort(perm[test_size:])
        Xtr, Xte = _standardize(X[train], X[test])
        ytr, yte = _standardize(y[train, None], y[test, None])
        design = AdditiveDesign.from_data(Xtr, ytr[:, 0], cfg.k_n, cfg.degree, keys=names)
        draws = backfit_chain(design, cfg, seed=chain_seed)
        sel = select_components(draws, design, level)
        chosen = [nm for nm, inc in zip(names, sel.included) if inc]
        row = {
            "fold": f,
            "seed": chain_seed,
            "test_error": empirical_mse(draws.predict(design, Xte), yte[:, 0]) if test_size else None,
            "n_selected": len(chosen),
            "n_spurious": int(np.sum(sel.included & is_spurious)),
            "selected": ";".join(chosen),
        }
        rows.append(row)
        selections.append(row["selected"])
        reports.append(sel.report_rows())

    counts = Counter(selections)
    modal, modal_count = max(counts.items(), key=lambda kv: (kv[1], -selections.index(kv[0])))
    meta = {
        "package_version": __version__,
        "csv": str(csv_path),
        "response": response,
        "covariates": list(covariates),
        "spurious": spurious,
        "test_size": test_size,
        "folds": folds,
        "seed": seed,
        "level": level,
        "config": cfg.to_dict(),
        "modal_model": modal.split(";") if modal else [],
        "modal_model_frequency": modal_count / folds,
    }
    report = MetricsReport(rows=rows, meta=meta)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.write(out)
        with open(out / "metadata.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for f, rep in enumerate(reports):
            write_selection_report(out / f"selection_fold{f:03d}.csv", rep)
    return report


def write_selection_report(path, rows):
    cols = ["component", "included", "max_abs_band_center", "mean_band_width", "max_band_width"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([int(r[c]) if c == "included" else (repr(r[c]) if isinstance(r[c], float) else r[c])
                        for c in cols])

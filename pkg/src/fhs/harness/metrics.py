"""Error metrics and the per-replicate / aggregate report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def empirical_mse(fhat, ftrue) -> float:
    """Mean squared difference over the sample points (squared empirical L2 norm)."""
    fhat = np.asarray(fhat, float)
    ftrue = np.asarray(ftrue, float)
    if fhat.shape != ftrue.shape:
        raise ValueError(f"length mismatch: {fhat.shape} vs {ftrue.shape}")
    d = fhat - ftrue
    return float(np.mean(d * d))


def aligned_mse(log_fhat, log_ftrue) -> float:
    """MSE of two log densities after removing their mean difference."""
    log_fhat = np.asarray(log_fhat, float)
    log_ftrue = np.asarray(log_ftrue, float)
    if log_fhat.shape != log_ftrue.shape:
        raise ValueError(f"length mismatch: {log_fhat.shape} vs {log_ftrue.shape}")
    d = log_fhat - log_ftrue
    d = d - d.mean()
    return float(np.mean(d * d))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _parse(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


@dataclass
class MetricsReport:
    """Per-replicate records plus their aggregate.

    ``rows`` holds one dict per replicate (or fold). Failed replicates carry
    ``failed=1`` and are left out of the aggregate.
    """

    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        # every row carries every column so that CSV round trips are exact
        cols = self.columns
        self.rows = [{c: r.get(c) for c in cols} for r in self.rows]

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.rows if r.get("failed"))

    @property
    def columns(self) -> list:
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def values(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows
                         if not r.get("failed") and r.get(name) is not None], float)

    def aggregate(self) -> list:
        """``(metric, mean, sd, count)`` for every numeric column."""
        out = []
        skip = {"replicate", "seed", "failed", "fold"}
        for name in self.columns:
            if name in skip:
                continue
            sample = [r.get(name) for r in self.rows if not r.get("failed")]
            if not sample or not all(isinstance(v, (int, float, np.integer, np.floating))
                                     and not isinstance(v, (bool, np.bool_)) for v in sample):
                continue
            vals = np.array(sample, float)
            sd = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
            out.append((name, float(vals.mean()), sd, int(vals.size)))
        out.append(("n_failed", float(self.n_failed), math.nan, len(self.rows)))
        return out

    def mean(self, name: str) -> float:
        for metric, m, _, _ in self.aggregate():
            if metric == name:
                return m
        raise KeyError(name)

    def write(self, out_dir, stem: str = "metrics") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        per = out_dir / f"{stem}_replicates.csv"
        agg = out_dir / f"{stem}_aggregate.csv"
        cols = self.columns
        with open(per, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in cols])
        with open(agg, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "mean", "sd", "count"])
            for row in self.aggregate():
                w.writerow([_fmt(v) for v in row])
        return per, agg

    @classmethod
    def read(cls, per_replicate_csv) -> "MetricsReport":
        with open(per_replicate_csv, newline="") as fh:
            rows = [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        return cls(rows=rows)

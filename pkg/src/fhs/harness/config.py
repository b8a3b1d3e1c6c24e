"""Config files: INI-style sections of flat ``key = value`` pairs.

Example::

    [simulation]
    model = simple
    truth = linear
    n = 200
    replicates = 20

    [prior]
    a = 0.5
    b = auto
    kn = 8

    [sampler]
    iters = 30000
    burnin = 10000
    seed = 1
"""

from __future__ import annotations

import configparser
from pathlib import Path

from ..sampler import FhsConfig
from .errors import ConfigError

SIMULATION_KEYS = {"model": str, "truth": str, "n": int, "replicates": int, "snr": float,
                   "p": int, "null": str, "level": float}
PRIOR_KEYS = {"a": float, "b": str, "kn": int, "degree": int, "sigma2_prior": str}
SAMPLER_KEYS = {"iters": int, "burnin": int, "seed": int, "tau_init": float, "workers": int}
SECTIONS = {"simulation": SIMULATION_KEYS, "prior": PRIOR_KEYS, "sampler": SAMPLER_KEYS}


def read_config(path) -> dict:
    """Parse a config file into ``{section: {key: typed value}}``."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}] in {path}")
        keys = SECTIONS[section]
        out[section] = {}
        for key, raw in parser[section].items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                out[section][key] = keys[key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return out


def make_fhs_config(a=0.5, b="auto", kn=8, degree=3, iters=30000, burnin=10000, seed=0,
                    sigma2_prior=None, tau_init=1.0) -> FhsConfig:
    """Build an :class:`FhsConfig` from flag-style names; errors become ConfigError."""
    if isinstance(b, str) and b != "auto":
        try:
            b = float(b)
        except ValueError as exc:
            raise ConfigError(f"b must be a positive number or 'auto', got {b!r}") from exc
    if sigma2_prior is None or sigma2_prior == "":
        prior = (0.01, 0.01)
    elif sigma2_prior == "fixed":
        prior = "fixed"
    else:
        try:
            prior = tuple(float(v) for v in str(sigma2_prior).split(","))
        except ValueError as exc:
            raise ConfigError(f"bad sigma2_prior {sigma2_prior!r}") from exc
        if len(prior) != 2:
            raise ConfigError("sigma2_prior needs 'shape,rate' or 'fixed'")
    if kn < degree + 1:
        raise ConfigError(f"kn={kn} must be at least degree + 1 = {degree + 1}")
    try:
        return FhsConfig(a=a, b=b, k_n=kn, degree=degree, n_iter=iters, n_burnin=burnin, seed=seed,
                         sigma2_prior=prior, tau_init=tau_init)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def write_config(path, simulation: dict, cfg: FhsConfig, extra: dict | None = None) -> Path:
    """Echo every setting, defaults included, in the config-file format."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["simulation"] = {k: str(v) for k, v in simulation.items() if v is not None}
    prior = cfg.sigma2_prior if cfg.fixed_sigma2 else ",".join(repr(float(v)) for v in cfg.sigma2_prior)
    parser["prior"] = {"a": repr(cfg.a), "b": str(cfg.b), "kn": str(cfg.k_n), "degree": str(cfg.degree),
                       "sigma2_prior": prior}
    sampler = {"iters": str(cfg.n_iter), "burnin": str(cfg.n_burnin), "seed": str(cfg.seed),
               "tau_init": repr(cfg.tau_init)}
    sampler.update({k: str(v) for k, v in (extra or {}).items()})
    parser["sampler"] = sampler
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
    return path

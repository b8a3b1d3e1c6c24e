"""Synthetic data for the univariate and additive simulation studies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

DOMAIN = (-math.pi, math.pi)
DATA_VERSION = "1"

_PI2 = math.pi**2
# Var(g(X)) for X ~ U(-pi, pi), and E[g(X)^2] (used with a mean-zero multiplier)
_SIMPLE_VAR = {
    "linear": (lambda x: x, _PI2 / 3.0),
    "quadratic": (lambda x: x**2, 4.0 * _PI2**2 / 45.0),
    "sine": (lambda x: np.sin(x), 0.5),
}
_VC_SECOND_MOMENT = {
    "constant": (lambda x: np.ones_like(x), 1.0),
    "quadratic": (lambda x: x**2, _PI2**2 / 5.0),
    "sine": (lambda x: np.sin(x), 0.5),
}
_W_SECOND_MOMENT = _PI2 / 3.0

SIMPLE_TRUTHS = tuple(_SIMPLE_VAR)
VC_TRUTHS = tuple(_VC_SECOND_MOMENT)
DENSITY_TRUTHS = ("normal", "lognormal", "mixture")


class UnknownTruth(ValueError):
    pass


@dataclass
class UnivariateData:
    """One simulated data set; ``f`` is the truth at the sample points.

    For density models ``x`` is ``None`` and ``f`` holds the true log density
    at ``y``.
    """

    model: str
    truth: str
    y: np.ndarray
    f: np.ndarray
    x: np.ndarray | None = None
    w: np.ndarray | None = None
    scale: float = 1.0


def truth_function(model: str, truth: str, snr: float = 1.0, sigma2: float = 1.0):
    """The standardized truth as a callable plus its scale factor."""
    if model == "simple":
        table, spread = _SIMPLE_VAR, 1.0
    elif model in ("vc", "varying_coefficient"):
        table, spread = _VC_SECOND_MOMENT, _W_SECOND_MOMENT
    else:
        raise UnknownTruth(f"no regression truth for model {model!r}")
    if truth not in table:
        raise UnknownTruth(f"unknown truth {truth!r} for model {model!r}; choose from {sorted(table)}")
    g, moment = table[truth]
    scale = math.sqrt(snr * sigma2 / (moment * spread))
    return (lambda x: scale * g(np.asarray(x, float))), scale


def mixture_logpdf(t):
    t = np.asarray(t, float)
    return np.logaddexp(math.log(0.3) + stats.norm.logpdf(t, 2.0, 1.0),
                        math.log(0.7) + stats.norm.logpdf(t, -1.0, math.sqrt(0.5)))


def density_logpdf(truth: str):
    if truth == "normal":
        return stats.norm(0.0, 1.0).logpdf
    if truth == "lognormal":
        return stats.lognorm(s=1.0).logpdf
    if truth == "mixture":
        return mixture_logpdf
    raise UnknownTruth(f"unknown density truth {truth!r}; choose from {list(DENSITY_TRUTHS)}")


def gen_univariate(truth: str, n: int, snr: float = 1.0, seed=None, model: str = "simple",
                   sigma2: float = 1.0) -> UnivariateData:
    """Simulate one data set for the simple, varying-coefficient or density model.

    Regression covariates (and varying-coefficient multipliers ``w``) are
    i.i.d. U(-pi, pi); the truth is scaled so that the signal variance over
    the noise variance equals ``snr``.
    """
    rng = np.random.default_rng(seed)
    if model == "density":
        logpdf = density_logpdf(truth)
        if truth == "normal":
            y = rng.standard_normal(n)
        elif truth == "lognormal":
            y = np.exp(rng.standard_normal(n))
        else:
            first = rng.random(n) < 0.3
            y = np.where(first, rng.normal(2.0, 1.0, n), rng.normal(-1.0, math.sqrt(0.5), n))
        return UnivariateData(model=model, truth=truth, y=y, f=logpdf(y))

    if snr <= 0:
        raise ValueError("snr must be positive")
    f, scale = truth_function(model, truth, snr, sigma2)
    x = rng.uniform(*DOMAIN, n)
    fx = f(x)
    if model == "simple":
        y = fx + math.sqrt(sigma2) * rng.standard_normal(n)
        return UnivariateData(model=model, truth=truth, x=x, y=y, f=fx, scale=scale)
    w = rng.uniform(*DOMAIN, n)
    y = w * fx + math.sqrt(sigma2) * rng.standard_normal(n)
    return UnivariateData(model="vc", truth=truth, x=x, w=w, y=y, f=fx, scale=scale)


# ---------------------------------------------------------------------------
# additive settings


def _s1_funcs():
    return [
        lambda x: -np.sin(2.0 * x),
        lambda x: x**2 - 25.0 / 12.0,
        lambda x: x,
        lambda x: np.exp(-x) - 0.4 * math.sinh(2.5),
    ]


def _s2_funcs():
    two_pi = 2.0 * math.pi
    return [
        lambda x: x,
        lambda x: (2.0 * x - 1.0) ** 2,
        lambda x: np.sin(two_pi * x) / (2.0 - np.sin(two_pi * x)),
        lambda x: (0.1 * np.sin(two_pi * x) + 0.2 * np.cos(two_pi * x) + 0.3 * np.sin(two_pi * x) ** 2
                   + 0.4 * np.cos(two_pi * x) ** 3 + 0.5 * np.sin(two_pi * x) ** 3),
    ]


SETTING_P = {1: 200, 2: 80, 3: 60}
SETTING_NOISE_VAR = {1: 1.0, 2: 1.74, 3: 0.5184}


@dataclass
class AdditiveData:
    X: np.ndarray
    y: np.ndarray
    signal: np.ndarray
    active: np.ndarray
    setting: int


def additive_terms(setting: int):
    """``(column, multiplier, function)`` triples of a setting's true model."""
    if setting == 1:
        return [(j, 1.0, f) for j, f in enumerate(_s1_funcs())]
    if setting == 2:
        return [(j, c, f) for j, (c, f) in enumerate(zip((5.0, 3.0, 4.0, 6.0), _s2_funcs()))]
    if setting == 3:
        funcs = _s2_funcs()
        return [(4 * g + j, c, funcs[j]) for g, c in enumerate((1.0, 1.5, 2.5)) for j in range(4)]
    raise ValueError(f"unknown additive setting {setting!r}")


def additive_covariates(setting: int, n: int, p: int, rng) -> np.ndarray:
    if setting == 1:
        return rng.uniform(-2.5, 2.5, (n, p))
    W = rng.random((n, p))
    U = rng.random((n, 1))
    return (W + U) / 2.0


def gen_additive_setting(setting: int, n: int, seed=None, p: int | None = None) -> AdditiveData:
    """Simulate one of the three additive-model settings.

    ``p`` overrides the number of candidate covariates (at least the number
    of active ones).
    """
    if setting not in SETTING_P:
        raise ValueError(f"unknown additive setting {setting!r}")
    if n < 50:
        raise ValueError("additive settings need n >= 50")
    terms = additive_terms(setting)
    p = SETTING_P[setting] if p is None else int(p)
    n_active = len(terms)
    if p < n_active:
        raise ValueError(f"setting {setting} needs p >= {n_active}")
    rng = np.random.default_rng(seed)
    X = additive_covariates(setting, n, p, rng)
    signal = np.zeros(n)
    for col, coef, f in terms:
        signal += coef * f(X[:, col])
    y = signal + math.sqrt(SETTING_NOISE_VAR[setting]) * rng.standard_normal(n)
    active = np.zeros(p, bool)
    active[[col for col, _, _ in terms]] = True
    return AdditiveData(X=X, y=y, signal=signal, active=active, setting=setting)

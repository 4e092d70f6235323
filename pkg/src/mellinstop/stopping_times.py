"""Parametric families for the random time T.

Each :class:`StoppingTimeModel` bundles a density, a seeded sampler, the
Mellin transform ``M[T](z) = E[T^(z-1)]`` with its strip, and the
smoothness-class metadata ``(beta_angle, a, b)`` that drives cut-off rules.

Parametrizations
----------------
gamma             shape, rate         density r^s x^(s-1) e^(-r x) / Gamma(s)
exponential       rate
weibull           shape k, scale lam  density (k/lam) (x/lam)^(k-1) e^(-(x/lam)^k)
lognormal         mu, sigma           log T ~ N(mu, sigma^2)
inverse_gaussian  mean mu, shape lam
beta              p, q (both >= 1)
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import ValidationError
from .mellin import MellinFunction, MellinStrip, mellin_numeric
from .seeding import make_rng
from .special_functions import as_complex, log_gamma

__all__ = [
    "FAMILIES",
    "SmoothnessClass",
    "StoppingTimeModel",
    "make_stopping_time",
    "sample",
    "mellin_value",
]

FAMILIES = ("gamma", "exponential", "weibull", "lognormal", "inverse_gaussian", "beta")

SECTOR_EPS = 0.05
HALF_PI = math.pi / 2.0
NUMERIC_MELLIN_TOL = 1e-10


@dataclass(frozen=True)
class SmoothnessClass:
    """Sector half-angle of holomorphic extension and the strip ``(a, b)``."""

    beta_angle: float
    a: float
    b: float

    def __post_init__(self):
        if not 0.0 <= self.beta_angle < math.pi:
            raise ValidationError(f"beta_angle must lie in [0, pi), got {self.beta_angle}")
        if not 0.0 <= self.a < self.b:
            raise ValidationError(f"need 0 <= a < b, got ({self.a}, {self.b})")


_PARAM_NAMES = {
    "gamma": ("shape", "rate"),
    "exponential": ("rate",),
    "weibull": ("shape", "scale"),
    "lognormal": ("mu", "sigma"),
    "inverse_gaussian": ("mean", "shape"),
    "beta": ("p", "q"),
}

_DEFAULTS = {
    "gamma": {"shape": 2.0, "rate": 1.0},
    "exponential": {"rate": 1.0},
    "weibull": {"shape": 2.0, "scale": 1.0},
    "lognormal": {"mu": 0.0, "sigma": 1.0},
    "inverse_gaussian": {"mean": 1.0, "shape": 1.0},
    "beta": {"p": 2.0, "q": 2.0},
}


@dataclass(frozen=True)
class StoppingTimeModel:
    family: str
    params: dict
    logpdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    mellin: MellinFunction = field(repr=False)
    smoothness: SmoothnessClass
    _draw: Callable[[np.random.Generator, int | None], np.ndarray] = field(repr=False)
    support_upper: float = math.inf

    def density(self, x):
        """Density at ``x`` (scalar or array); zero outside the support."""
        arr = np.asarray(x, dtype=float)
        out = np.zeros(arr.shape)
        ok = (arr > 0) & (arr < self.support_upper) & np.isfinite(arr)
        if np.any(ok):
            with np.errstate(over="ignore", under="ignore"):
                out[ok] = np.exp(self.logpdf(arr[ok]))
        return float(out) if arr.ndim == 0 else out

    def sample(self, seed: int, size: int | None = None):
        return sample(self, seed, size)

    def mellin_value(self, z):
        return mellin_value(self, z)

    def mean(self) -> float:
        return mellin_value(self, 2.0).real

    def describe(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


def _positive(params: dict, *names: str) -> None:
    for name in names:
        v = params[name]
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValidationError(f"parameter {name!r} must be a positive finite number, got {v!r}")


def _resolve_params(family: str, params: dict | None, kw: dict) -> dict:
    if family not in FAMILIES:
        raise ValidationError(f"unknown stopping-time family {family!r}; choose from {FAMILIES}")
    merged = dict(_DEFAULTS[family])
    merged.update(params or {})
    merged.update(kw)
    unknown = set(merged) - set(_PARAM_NAMES[family])
    if unknown:
        raise ValidationError(f"unknown parameters {sorted(unknown)} for family {family!r}")
    return {k: float(v) if isinstance(v, (int, float)) else v for k, v in merged.items()}


@functools.lru_cache(maxsize=65536)
def _ig_mellin_point(mean: float, shape: float, re: float, im: float) -> complex:
    model = make_stopping_time("inverse_gaussian", mean=mean, shape=shape)
    return mellin_numeric(model.density, MellinStrip(-math.inf, math.inf), complex(re, im),
                          tol=NUMERIC_MELLIN_TOL)


def make_stopping_time(family: str, params: dict | None = None, **kw) -> StoppingTimeModel:
    """Build a stopping-time model.

    Examples
    --------
    >>> m = make_stopping_time("gamma", shape=2, rate=1)
    >>> round(m.density(1.0), 7)
    0.3678794
    """
    p = _resolve_params(family, params, kw)
    upper = math.inf
    sector = HALF_PI - SECTOR_EPS

    if family in ("gamma", "exponential"):
        shape = p.get("shape", 1.0)
        rate = p["rate"]
        _positive(p, *p.keys())
        lg_shape = math.lgamma(shape)

        def logpdf(x):
            return shape * math.log(rate) - lg_shape + (shape - 1.0) * np.log(x) - rate * x

        def mf(z):
            return np.exp((1.0 - z) * math.log(rate) + log_gamma(z + shape - 1.0) - lg_shape)

        def draw(rng, size):
            return rng.gamma(shape, 1.0 / rate, size)

        strip = MellinStrip(1.0 - shape)

    elif family == "weibull":
        _positive(p, "shape", "scale")
        k, lam = p["shape"], p["scale"]
        # exp(-z^k) decays on |arg z| < pi/(2k) only
        sector = min(HALF_PI, math.pi / (2.0 * k)) - SECTOR_EPS

        def logpdf(x):
            y = x / lam
            return math.log(k / lam) + (k - 1.0) * np.log(y) - y**k

        def mf(z):
            return np.exp((z - 1.0) * math.log(lam) + log_gamma(1.0 + (z - 1.0) / k))

        def draw(rng, size):
            return lam * rng.weibull(k, size)

        strip = MellinStrip(1.0 - k)

    elif family == "lognormal":
        _positive(p, "sigma")
        mu, sig = p["mu"], p["sigma"]
        if not math.isfinite(mu):
            raise ValidationError("mu must be finite")

        def logpdf(x):
            lx = np.log(x)
            return -lx - math.log(sig) - 0.5 * math.log(2 * math.pi) - (lx - mu) ** 2 / (2 * sig**2)

        def mf(z):
            w = z - 1.0
            return np.exp(mu * w + 0.5 * sig**2 * w * w)

        def draw(rng, size):
            return rng.lognormal(mu, sig, size)

        strip = MellinStrip(-math.inf, math.inf)

    elif family == "inverse_gaussian":
        _positive(p, "mean", "shape")
        mu, lam = p["mean"], p["shape"]

        def logpdf(x):
            return (0.5 * (math.log(lam / (2 * math.pi)) - 3.0 * np.log(x))
                    - lam * (x / mu - 1.0) ** 2 / (2.0 * x))

        def mf(z):
            flat = np.ravel(np.asarray(z, dtype=complex))
            vals = [_ig_mellin_point(mu, lam, float(v.real), float(v.imag)) for v in flat]
            return np.asarray(vals, dtype=complex).reshape(np.shape(z))

        def draw(rng, size):
            return rng.wald(mu, lam, size)

        strip = MellinStrip(-math.inf, math.inf)

    else:  # beta
        _positive(p, "p", "q")
        a_, b_ = p["p"], p["q"]
        if a_ < 1.0 or b_ < 1.0:
            raise ValidationError("beta family requires p >= 1 and q >= 1")
        upper = 1.0
        # Mellin transform decays only polynomially: no sector of holomorphy
        sector = 0.0
        lbeta = special.betaln(a_, b_)

        def logpdf(x):
            return (a_ - 1.0) * np.log(x) + (b_ - 1.0) * np.log1p(-x) - lbeta

        def mf(z):
            return np.exp(
                log_gamma(a_ + z - 1.0) + math.lgamma(a_ + b_)
                - math.lgamma(a_) - log_gamma(a_ + b_ + z - 1.0)
            )

        def draw(rng, size):
            return rng.beta(a_, b_, size)

        strip = MellinStrip(1.0 - a_)

    kind = "numeric-quadrature" if family == "inverse_gaussian" else "analytic"
    mellin = MellinFunction(strip, mf, kind=kind, name=f"M[{family}]")
    smooth = SmoothnessClass(sector, max(0.0, strip.a), strip.b)
    return StoppingTimeModel(family, p, logpdf, mellin, smooth, draw, upper)


def sample(model: StoppingTimeModel, seed: int, size: int | None = None):
    """Draw from ``model`` with a Philox generator keyed by ``seed``."""
    out = model._draw(make_rng(seed), size)
    return float(out) if size is None else np.asarray(out, dtype=float)


def mellin_value(model: StoppingTimeModel, z):
    """``M[T](z)``; strip violations raise :class:`~mellinstop.errors.StripError`."""
    return model.mellin(as_complex(z, "z"))

"""Self-similar process models observed at an independent random time.

Only the time-one marginal ``|Y_1|`` matters: by self-similarity
``|Y_T| = T^H |Y_1|`` in law, so sampling and the denominator Mellin
transform reduce to closed forms for ``|Y_1|``.

* ``bessel(d)``: H = 1/2, ``|Y_1|`` is chi with ``d`` degrees of freedom.
* ``gaussian_ss(H)``: ``Y_1`` standard normal, ``|Y_1|`` half-normal.
* ``gamma_ss(H, sigma)``: ``Y_1`` Gamma(sigma, rate 1).

Unit variance / unit rate are built in; rescale the data first
(``X / sd`` or ``rate * X``) for other normalizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import QuadratureError, ValidationError
from .mellin import (
    MellinFunction,
    MellinStrip,
    SampleBatch,
    mellin_of_bessel_marginal,
    mellin_of_gamma_density,
)
from .seeding import make_rng
from .special_functions import as_complex, log_gamma

__all__ = [
    "ProcessModel",
    "bessel",
    "gaussian_ss",
    "gamma_ss",
    "make_process",
    "sample_stopped",
    "sample_observations",
    "marginal_mellin_value",
    "stopped_density",
]

H_MAX = 4.0


@dataclass(frozen=True)
class ProcessModel:
    name: str
    H: float
    params: dict
    marginal_mellin: MellinFunction = field(repr=False)
    _draw_y1: Callable[[np.random.Generator, int | None], np.ndarray] = field(repr=False)
    _logpdf_y1: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def y1_density(self, y):
        arr = np.asarray(y, dtype=float)
        out = np.zeros(arr.shape)
        ok = (arr > 0) & np.isfinite(arr)
        if np.any(ok):
            out[ok] = np.exp(self._logpdf_y1(arr[ok]))
        return float(out) if arr.ndim == 0 else out

    def sample_y1(self, rng: np.random.Generator, size: int | None = None):
        return self._draw_y1(rng, size)

    def log_marginal_mellin(self, s) -> np.ndarray:
        """``log M[|Y_1|](s)``; used for stable reciprocals far up the strip."""
        self.marginal_mellin.strip.check(s, f"{self.name} marginal Mellin transform")
        return self._log_mellin(np.asarray(s, dtype=complex))

    def _log_mellin(self, s):
        if self.name in ("bessel", "gaussian_ss"):
            d = self.params.get("d", 1.0)
            return (log_gamma((s + d - 1.0) / 2.0) + 0.5 * (s - 1.0) * math.log(2.0)
                    - math.lgamma(d / 2.0))
        sig = self.params["sigma"]
        return log_gamma(s + sig - 1.0) - math.lgamma(sig)

    @property
    def minimax_h_ok(self) -> bool:
        """Whether H lies in (0, 2), the range covered by the lower-bound construction."""
        return 0.0 < self.H < 2.0

    def describe(self) -> dict:
        return {"name": self.name, "H": self.H, **self.params}


def _check_h(H: float) -> float:
    if not (isinstance(H, (int, float)) and 0.0 < H <= H_MAX):
        raise ValidationError(f"H must lie in (0, {H_MAX}], got {H!r}")
    return float(H)


def bessel(d: float) -> ProcessModel:
    """Bessel process of dimension ``d >= 1`` (H = 1/2)."""
    if not (isinstance(d, (int, float)) and math.isfinite(d) and d >= 1.0):
        raise ValidationError(f"Bessel dimension must be >= 1, got {d!r}")
    d = float(d)
    lg = math.lgamma(d / 2.0)

    def logpdf(y):
        return (1.0 - d / 2.0) * math.log(2.0) - lg + (d - 1.0) * np.log(y) - 0.5 * y * y

    def draw(rng, size):
        # chi_d = sqrt(Gamma(d/2, scale 2)), valid for every real d >= 1
        return np.sqrt(rng.gamma(d / 2.0, 2.0, size))

    mf = MellinFunction(MellinStrip(1.0 - d), lambda s: mellin_of_bessel_marginal(d, s),
                        name="M[BES_1]")
    return ProcessModel("bessel", 0.5, {"d": d}, mf, draw, logpdf)


def gaussian_ss(H: float = 0.5) -> ProcessModel:
    """H-self-similar process with standard normal ``Y_1`` (e.g. fractional Brownian motion)."""
    H = _check_h(H)

    def logpdf(y):
        return 0.5 * math.log(2.0 / math.pi) - 0.5 * y * y

    def draw(rng, size):
        return np.abs(rng.standard_normal(size))

    mf = MellinFunction(MellinStrip(0.0), lambda s: mellin_of_bessel_marginal(1.0, s),
                        name="M[|N(0,1)|]")
    return ProcessModel("gaussian_ss", H, {}, mf, draw, logpdf)


def gamma_ss(H: float = 1.0, sigma: float = 1.0) -> ProcessModel:
    """H-self-similar process whose ``Y_1`` is Gamma(sigma, rate 1)."""
    H = _check_h(H)
    if not (isinstance(sigma, (int, float)) and math.isfinite(sigma) and sigma > 0):
        raise ValidationError(f"sigma must be positive, got {sigma!r}")
    sigma = float(sigma)
    lg = math.lgamma(sigma)

    def logpdf(y):
        return -lg + (sigma - 1.0) * np.log(y) - y

    def draw(rng, size):
        return rng.gamma(sigma, 1.0, size)

    mf = MellinFunction(MellinStrip(1.0 - sigma), lambda s: mellin_of_gamma_density(sigma, 1.0, s),
                        name="M[Gamma(sigma,1)]")
    return ProcessModel("gamma_ss", H, {"sigma": sigma}, mf, draw, logpdf)


_CONSTRUCTORS = {
    "bessel": (bessel, ("d",)),
    "gaussian_ss": (gaussian_ss, ("H",)),
    "gamma_ss": (gamma_ss, ("H", "sigma")),
}


def make_process(name: str, **params) -> ProcessModel:
    """Build a process model from a name and keyword parameters.

    Bessel processes ignore an ``H`` entry equal to 1/2 so that
    :meth:`ProcessModel.describe` output round-trips.
    """
    if name not in _CONSTRUCTORS:
        raise ValidationError(f"unknown process {name!r}; choose from {sorted(_CONSTRUCTORS)}")
    ctor, allowed = _CONSTRUCTORS[name]
    params = dict(params)
    params.pop("name", None)
    if name == "bessel" and params.get("H", 0.5) == 0.5:
        params.pop("H", None)
    extra = set(params) - set(allowed)
    if extra:
        raise ValidationError(f"unexpected parameters {sorted(extra)} for process {name!r}")
    if name == "bessel" and "d" not in params:
        raise ValidationError("a Bessel process needs its dimension d")
    return ctor(**params)


def sample_stopped(process: ProcessModel, t_sample: float, seed: int) -> float:
    """One draw of ``|Y_T|`` given ``T = t_sample``: ``t_sample^H * |Y_1|``."""
    if not t_sample > 0:
        raise ValidationError(f"t_sample must be positive, got {t_sample}")
    return float(t_sample**process.H * process.sample_y1(make_rng(seed)))


def sample_observations(process: ProcessModel, t_model, n: int, seed: int) -> SampleBatch:
    """Draw ``n`` i.i.d. observations of ``|Y_T|`` from one seeded stream.

    The stream yields all ``n`` draws of T first, then all ``n`` draws of
    ``|Y_1|``.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = make_rng(seed)
    t = np.asarray(t_model._draw(rng, n), dtype=float)
    y1 = np.asarray(process.sample_y1(rng, n), dtype=float)
    vals = t**process.H * y1
    # an underflowed product is a legitimate draw that is merely tiny
    vals = np.maximum(vals, np.finfo(float).tiny)
    return SampleBatch(vals, seed_provenance=int(seed))


def marginal_mellin_value(process: ProcessModel, s):
    """``M[|Y_1|](s)`` for the process' closed form."""
    return process.marginal_mellin(as_complex(s, "s"))


def stopped_density(process: ProcessModel, t_density: Callable[[float], float], y: float,
                    tol: float = 1e-10) -> float:
    """Density of ``|Y_T|`` at ``y`` by mixing the marginals ``g_t`` over ``f_T``.

    ``p(y) = int g_t(y) f_T(t) dt`` with ``g_t(y) = t^-H g_1(y t^-H)``,
    integrated in ``u = ln t`` with a breakpoint where ``y t^-H = 1``.
    """
    if not y > 0:
        raise ValidationError(f"y must be positive, got {y}")
    if math.isinf(y):
        return 0.0
    H = process.H
    ly = math.log(y)

    def fn(u):
        if abs(u) > 700.0:
            return 0.0
        z = ly - H * u
        if z > 700.0 or z < -700.0:
            return 0.0
        ft = t_density(math.exp(u))
        if ft == 0.0:
            return 0.0
        return float(ft) * math.exp(u * (1.0 - H)) * process.y1_density(math.exp(z))

    total = 0.0
    err = 0.0
    edges = [-np.inf, *sorted({0.0, ly / H}), np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(fn, lo, hi, epsabs=tol / 8.0, epsrel=1e-12, limit=400)
        total += val
        err += e
    if not err <= tol:
        raise QuadratureError(f"mixture quadrature error {err:.3g} exceeds tol {tol:.3g} at y={y}")
    return total

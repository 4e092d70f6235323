"""Two-hypothesis lower-bound construction for densities of T.

The base density is

    q(x) = (sin b / b) / (1 + x^(pi/b)),     M[q](z) = sin b / sin(b z),

for a sector angle ``b`` in (0, pi).  It is perturbed by the Mellin
convolution of ``q`` with the oscillating kernel

    rho_M(x) = exp(-(ln x)^2 / 2) sin(M ln x) / (x sqrt(2 pi)),

whose Mellin transform ``(e^((z-1+iM)^2/2) - e^((z-1-iM)^2/2)) / (2i)``
vanishes at ``z = 1``, so ``f1 = q + delta (q * rho_M)`` keeps unit mass.  The
two hypotheses are hard to tell apart from observations of ``|Y_T|``: their
chi-square divergence decays like ``exp(-(pi + 2b) M)`` for Bessel
observations while ``sup |f1 - f0|`` only decays like ``exp(-b M)``.

Numerics
--------
Everything is computed in logarithmic coordinates with the trapezoid rule,
which converges geometrically for the smooth, rapidly decaying integrands
involved.  The perturbation ``p1 - p0`` of the observation density is
obtained by mixing the perturbation ``q * rho_M`` itself, never by
subtracting two nearly equal densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import NumericalError, QuadratureError, StripError, ValidationError
from .mellin import MellinFunction, MellinStrip, mellin_convolve, mellin_invert
from .processes import ProcessModel
from .special_functions import as_complex

__all__ = [
    "q_density",
    "q_mellin",
    "rho_density",
    "rho_mellin",
    "AdversarialPair",
    "make_adversarial_pair",
    "f1_density",
    "perturbation",
    "sup_distance",
    "ObservationGrid",
    "observation_densities",
    "observation_mellin",
    "chi2_divergence",
    "Chi2Result",
    "critical_sample_size",
]

STEP = 0.02
KERNEL_LO, KERNEL_HI = -14.0, 12.0
VALIDATION_POINTS = 2000
VALIDATION_RANGE = (-6.0, 6.0)  # log10 of the x range used to validate f1 >= 0
X_LO = 1e-4
MAX_LOG_SPAN = 600.0


def _check_beta(beta_angle: float) -> float:
    if not (isinstance(beta_angle, (int, float)) and 0.0 < beta_angle < math.pi):
        raise ValidationError(f"beta_angle must lie in (0, pi), got {beta_angle!r}")
    return float(beta_angle)


def _check_m(M: float) -> float:
    if not (isinstance(M, (int, float)) and math.isfinite(M) and M > 0):
        raise ValidationError(f"M must be positive, got {M!r}")
    return float(M)


def _log_q(beta_angle: float, u):
    """``q(e^u)`` evaluated without overflow."""
    return (math.sin(beta_angle) / beta_angle) * special.expit(-np.asarray(u) * math.pi / beta_angle)


def q_density(beta_angle: float, x):
    """Base density ``q``; scalar or array ``x > 0``.

    Examples
    --------
    >>> round(q_density(math.pi / 2, 1.0), 7)
    0.3183099
    """
    b = _check_beta(beta_angle)
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValidationError("x must be positive")
    with np.errstate(divide="ignore"):
        out = _log_q(b, np.log(arr))
    return float(out) if arr.ndim == 0 else out


def q_mellin(beta_angle: float, z):
    """``sin b / sin(b z)`` on the strip ``0 < Re z < pi/b``."""
    b = _check_beta(beta_angle)
    z = as_complex(z, "z")
    MellinStrip(0.0, math.pi / b).check(z, "q Mellin transform")
    out = math.sin(b) / np.sin(b * z)
    return complex(out) if np.ndim(out) == 0 else out


def q_mellin_function(beta_angle: float) -> MellinFunction:
    b = _check_beta(beta_angle)
    return MellinFunction(MellinStrip(0.0, math.pi / b), lambda z: math.sin(b) / np.sin(b * z),
                          name="M[q]")


def _log_rho_kernel(M: float, w):
    """``rho_M(e^w)``: standard normal density times ``sin(M w) e^(-w)``."""
    w = np.asarray(w, dtype=float)
    return np.exp(-0.5 * w * w - w) * np.sin(M * w) / math.sqrt(2.0 * math.pi)


def rho_density(M: float, x):
    """Signed perturbation kernel ``rho_M``; integrates to zero."""
    M = _check_m(M)
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValidationError("x must be positive")
    out = _log_rho_kernel(M, np.log(arr))
    return float(out) if arr.ndim == 0 else out


def rho_mellin(M: float, z):
    """``(e^((z-1+iM)^2/2) - e^((z-1-iM)^2/2)) / (2i)``; entire in ``z``."""
    M = _check_m(M)
    z = as_complex(z, "z")
    w = z - 1.0
    out = (np.exp(0.5 * (w + 1j * M) ** 2) - np.exp(0.5 * (w - 1j * M) ** 2)) / 2j
    return complex(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AdversarialPair:
    """Hypotheses ``f0 = q`` and ``f1 = q + delta (q * rho_M)``."""

    beta_angle: float
    M: float
    delta: float
    _grid_u: np.ndarray = field(init=False, repr=False, compare=False)
    _grid_h: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_beta(self.beta_angle)
        _check_m(self.M)
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValidationError(f"delta must be >= 0, got {self.delta}")
        lo, hi = VALIDATION_RANGE
        u = np.linspace(lo * math.log(10), hi * math.log(10), VALIDATION_POINTS)
        h = _perturbation_on_grid(self.beta_angle, self.M, u)
        object.__setattr__(self, "_grid_u", u)
        object.__setattr__(self, "_grid_h", h)
        f1 = _log_q(self.beta_angle, u) + self.delta * h
        if np.any(f1 < 0):
            bad = float(np.exp(u[np.argmin(f1)]))
            raise ValidationError(
                f"f1 is negative near x={bad:.4g} for delta={self.delta}; choose a smaller delta"
            )

    def f0(self, x):
        return q_density(self.beta_angle, x)

    def f1(self, x):
        return f1_density(self, x)

    def validation_grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(x, f0, f1)`` on the 2000-point logarithmic validation grid."""
        x = np.exp(self._grid_u)
        f0 = _log_q(self.beta_angle, self._grid_u)
        return x, f0, f0 + self.delta * self._grid_h

    def describe(self) -> dict:
        return {"beta_angle": self.beta_angle, "M": self.M, "delta": self.delta}


def make_adversarial_pair(beta_angle: float, M: float, delta: float | None = None,
                          max_halvings: int = 30) -> AdversarialPair:
    """Build a pair, choosing ``delta`` by halving from 1/2 until ``f1 >= 0`` on the grid."""
    if delta is not None:
        return AdversarialPair(beta_angle, M, delta)
    d = 0.5
    for _ in range(max_halvings):
        try:
            return AdversarialPair(beta_angle, M, d)
        except ValidationError:
            d /= 2.0
    raise NumericalError(f"no admissible delta found down to {d:.3g}")


def _kernel_grid(M: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    n_lo = int(math.floor(KERNEL_LO / step))
    n_hi = int(math.ceil(KERNEL_HI / step))
    w = np.arange(n_lo, n_hi + 1) * step
    return w, _log_rho_kernel(M, w)


def _perturbation_on_grid(beta_angle: float, M: float, u: np.ndarray) -> np.ndarray:
    """``(q * rho_M)(e^u)`` for a uniform grid ``u``, by a discrete convolution."""
    u = np.asarray(u, dtype=float)
    step = u[1] - u[0] if u.size > 1 else STEP
    sub = max(1, int(math.ceil(step / STEP)))
    fine = step / sub
    w, kern = _kernel_grid(M, fine)
    # q on the extended fine grid u_j - w_k
    n_fine = (u.size - 1) * sub + 1
    ext = u[0] - w[-1] + np.arange(n_fine + w.size - 1) * fine
    qv = _log_q(beta_angle, ext)
    conv = np.convolve(qv, kern, mode="valid") * fine
    return conv[::sub][: u.size]


def perturbation(beta_angle: float, M: float, x, tol: float = 1e-13) -> np.ndarray | float:
    """``(q * rho_M)(x)`` by adaptive quadrature of the Mellin convolution."""
    b, M = _check_beta(beta_angle), _check_m(M)
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([
        mellin_convolve(lambda t: _log_q(b, math.log(t)), lambda t: rho_density(M, t), float(xi), tol)
        for xi in arr
    ])
    return float(out[0]) if np.ndim(x) == 0 else out


def f1_density(pair: AdversarialPair, x, tol: float = 1e-13):
    """``q(x) + delta (q * rho_M)(x)`` with the convolution done by quadrature."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValidationError("x must be positive")
    base = q_density(pair.beta_angle, arr)
    if pair.delta == 0.0:
        return base
    out = base + pair.delta * perturbation(pair.beta_angle, pair.M, arr, tol)
    if np.any(np.asarray(out) < 0):
        raise ValidationError(f"f1 is negative for delta={pair.delta}; choose a smaller delta")
    return out


def sup_distance(pair: AdversarialPair, refine: bool = True) -> tuple[float, float]:
    """``(sup_x |f1 - f0|, argmax x)``.

    The maximum is located on the validation grid and, with ``refine``,
    polished by bounded scalar maximization of the quadrature value.
    """
    if pair.delta == 0.0:
        return 0.0, 1.0
    u, h = pair._grid_u, pair._grid_h
    k = int(np.argmax(np.abs(h)))
    best_u, best = u[k], abs(h[k])
    if refine:
        from scipy.optimize import minimize_scalar

        lo, hi = u[max(k - 1, 0)], u[min(k + 1, u.size - 1)]
        res = minimize_scalar(
            lambda t: -abs(perturbation(pair.beta_angle, pair.M, math.exp(t))),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-10},
        )
        if -res.fun > best:
            best_u, best = float(res.x), -float(res.fun)
    return pair.delta * best, float(math.exp(best_u))


def _marginal_log_density(process: ProcessModel, z: np.ndarray) -> np.ndarray:
    """``log g_1(e^z) + z``: log density of ``log |Y_1|``."""
    y = np.exp(z)
    if process.name in ("bessel", "gaussian_ss"):
        d = process.params.get("d", 1.0)
        return (1.0 - d / 2.0) * math.log(2.0) - math.lgamma(d / 2.0) + d * z - 0.5 * y * y
    sigma = process.params["sigma"]
    return -math.lgamma(sigma) + sigma * z - y


def _log_upper_tail_z(process: ProcessModel) -> float:
    # log of the point beyond which the marginal density is below ~1e-300
    return math.log(40.0) if process.name in ("bessel", "gaussian_ss") else math.log(750.0)


def _small_y_order(process: ProcessModel) -> float:
    return process.params.get("d", 1.0) if process.name in ("bessel", "gaussian_ss") else process.params["sigma"]


@dataclass(frozen=True)
class ObservationGrid:
    """Observation densities of ``|Y_T|`` under both hypotheses on a log grid."""

    y: np.ndarray
    p0: np.ndarray
    diff: np.ndarray  # p1 - p0

    @property
    def p1(self) -> np.ndarray:
        return self.p0 + self.diff


def observation_densities(pair: AdversarialPair, process: ProcessModel, y_lo: float = X_LO,
                          y_hi: float = 1e3, step: float = STEP) -> ObservationGrid:
    """``p0`` and ``p1 - p0`` on a logarithmic ``y`` grid by mixture quadrature.

    ``p(y) = int g_t(y) f(t) dt`` with ``g_t`` the time-``t`` marginal of the
    process, integrated in ``ln t``.  The difference mixes ``delta (q * rho_M)``
    directly.
    """
    if not 0 < y_lo < y_hi:
        raise ValidationError("need 0 < y_lo < y_hi")
    H = process.H
    r = np.arange(math.log(y_lo), math.log(y_hi) + step / 2, step)
    kappa = _small_y_order(process) * H + math.pi / pair.beta_angle - 1.0
    u_lo = (r[0] - _log_upper_tail_z(process)) / H - 2.0
    u_hi = r[-1] / H + 40.0 / kappa
    if u_hi - u_lo > MAX_LOG_SPAN:
        raise NumericalError(
            f"mixture range in log t spans {u_hi - u_lo:.0f} units; the tail of q decays too slowly"
        )
    u = np.arange(u_lo, u_hi + step / 2, step)
    qv = _log_q(pair.beta_angle, u)
    hv = _perturbation_on_grid(pair.beta_angle, pair.M, u) if pair.delta else np.zeros_like(u)
    # density of ln|Y_T| at r:  int phi(r - H u) f(e^u) e^u du  with phi the log-marginal density
    z = r[:, None] - H * u[None, :]
    with np.errstate(under="ignore", over="ignore"):
        kern = np.exp(_marginal_log_density(process, z) + u[None, :])
    wts = np.full(u.size, step)
    wts[[0, -1]] *= 0.5
    y = np.exp(r)
    p0 = (kern @ (wts * qv)) / y
    diff = pair.delta * (kern @ (wts * hv)) / y
    if not (np.all(np.isfinite(p0)) and np.all(p0 > 0)):
        raise NumericalError("observation density underflowed on the grid")
    return ObservationGrid(y, p0, diff)


def observation_mellin(pair: AdversarialPair, process: ProcessModel, which: int):
    """Mellin transform of the observation density under hypothesis ``which``.

    ``M[p_i](s) = M[f_i](H s - H + 1) M[|Y_1|](s)`` with
    ``M[f_1] = M[q] (1 + delta M[rho_M])``.
    """
    if which not in (0, 1):
        raise ValidationError("which must be 0 or 1")
    H, b = process.H, pair.beta_angle
    strip = process.marginal_mellin.strip.intersect(MellinStrip((H - 1.0) / H, (math.pi / b + H - 1.0) / H))

    def func(s):
        z = H * s - H + 1.0
        base = q_mellin(b, z) * process.marginal_mellin(s)
        if which == 0:
            return base
        return base * (1.0 + pair.delta * rho_mellin(pair.M, z))

    return MellinFunction(strip, func, name=f"M[p{which}]")


def observation_density_by_inversion(pair: AdversarialPair, process: ProcessModel, which: int,
                                     y: float, line: float = 1.0, cutoff: float | None = None) -> float:
    """Observation density at ``y`` from truncated inversion of :func:`observation_mellin`.

    An independent route to the mixture densities, used as a cross-check.
    """
    mf = observation_mellin(pair, process, which)
    if cutoff is None:
        cutoff = (pair.M + 12.0) / process.H + 40.0
    return mellin_invert(mf, line, y, cutoff, step_control=0.005)


@dataclass(frozen=True)
class Chi2Result:
    value: float
    error_estimate: float
    x_max: float
    tail_bound: float


def _trapezoid_log(values: np.ndarray, y: np.ndarray, step: float) -> float:
    w = np.full(y.size, step)
    w[[0, -1]] *= 0.5
    return float(np.sum(w * values * y))


def chi2_divergence(pair: AdversarialPair, process: ProcessModel, tol: float = 1e-6,
                    x_lo: float = X_LO, full: bool = False):
    """``int (p0 - p1)^2 / p0`` over ``[x_lo, X_max]``.

    ``tol`` bounds the relative error: the upper limit grows by decades until
    the power-law tail beyond it (decay rate of ``p0``) is below ``tol/10`` of
    the value, and halving the grid step must change the result by less than
    ``tol``.  With ``full=True`` a :class:`Chi2Result` is returned.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if pair.delta == 0.0:
        res = Chi2Result(0.0, 0.0, x_lo, 0.0)
        return res if full else 0.0
    H = process.H
    tail_rate = (math.pi / pair.beta_angle - 1.0) / H  # p0(y) ~ y^(-1 - tail_rate)
    y_hi = 1e3
    for _ in range(12):
        grid = observation_densities(pair, process, x_lo, y_hi, STEP)
        integrand = grid.diff**2 / grid.p0
        value = _trapezoid_log(integrand, grid.y, STEP)
        last = grid.y > grid.y[-1] / 10.0
        envelope = float(np.max(integrand[last] * grid.y[last]))
        tail = envelope / tail_rate
        if tail < 0.1 * tol * value:
            break
        y_hi *= 10.0
    else:
        raise QuadratureError(f"chi-square tail still {tail:.3g} at X_max={y_hi:.3g}")
    coarse = observation_densities(pair, process, x_lo, y_hi, 2 * STEP)
    value_coarse = _trapezoid_log(coarse.diff**2 / coarse.p0, coarse.y, 2 * STEP)
    err = abs(value - value_coarse)
    if not err <= tol * value:
        raise QuadratureError(f"chi-square grid refinement changed the value by {err / value:.3g} (relative)")
    res = Chi2Result(value, err, y_hi, tail)
    return res if full else value


def critical_sample_size(chi2: float, alpha: float = math.e) -> float:
    """Largest ``n`` with ``(1 + chi2)^n <= alpha``; ``inf`` when ``chi2 == 0``."""
    if not chi2 >= 0:
        raise ValidationError("chi2 must be nonnegative")
    if chi2 == 0.0:
        return math.inf
    return float(math.floor(math.log(alpha) / math.log1p(chi2)))

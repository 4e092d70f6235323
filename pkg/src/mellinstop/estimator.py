"""Regularized Mellin-deconvolution estimator of the density of T.

Observations are ``X_k = |Y_T|`` with ``|Y_T| = T^H |Y_1|`` in law.  On the
line ``Re z = gamma`` the Mellin transform of T is the quotient

    M[T](gamma + iv) = M[|Y_T|](s) / M[|Y_1|](s),   s = (gamma + H - 1 + iv) / H,

and the estimate at ``x`` is the truncated inversion

    f_hat(x) = (1/pi) Re int_0^g  M_n(s) / M[|Y_1|](s) * x^(-gamma-iv) dv

where ``M_n`` is the empirical Mellin transform of the batch and ``g`` is the
cut-off.  Conjugate symmetry of the integrand lets the half range stand in
for ``[-g, g]``.

Numerics
--------
The ``v`` integral uses composite Simpson on one uniform grid shared by all
requested ``x`` (step at most 0.005 and never coarser than
:func:`~mellinstop.mellin.inversion_step` asks for, capped at 65 537 nodes).
The empirical transform on that grid is a nonuniform Fourier sum; writing
node ``j = a*B + b`` splits ``exp(i v_j w_k)`` into two short phase tables
whose product over observations is one complex matrix multiply.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import HypothesisViolation, NumericalError, StripError, ValidationError
from .mellin import MellinFunction, MellinStrip, SampleBatch, inversion_step, simpson_weights
from .processes import ProcessModel
from .special_functions import log_gamma
from .stopping_times import StoppingTimeModel

__all__ = [
    "RULE_VARIANTS",
    "CutoffRule",
    "EstimatorConfig",
    "NormalityQuantities",
    "cutoff_value",
    "default_rule",
    "estimate_density",
    "z_integral",
    "z_values",
    "exact_observation_mellin",
    "normality_constant",
    "normality_quantities",
    "asymptotic_variance",
    "z_variance",
    "clip_and_renormalize",
]

RULE_VARIANTS = (
    "bessel_rule",
    "gaussian_rule_hi_gamma",
    "gaussian_rule_lo_gamma",
    "gamma_rule_hi_gamma",
    "gamma_rule_lo_gamma",
    "manual",
)

MASTER_STEP = 0.005
MAX_NODES = 65537
CHUNK = 65536
DELTA_GRID = (0.1, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class CutoffRule:
    """How the cut-off grows with the sample size.

    ``manual`` returns ``value`` regardless of ``n``; the other variants are
    logarithmic in ``n`` (see :func:`cutoff_value`).
    """

    variant: str
    value: float | None = None

    def __post_init__(self):
        if self.variant not in RULE_VARIANTS:
            raise ValidationError(f"unknown cut-off rule {self.variant!r}; choose from {RULE_VARIANTS}")
        if self.variant == "manual":
            if self.value is None or not (math.isfinite(self.value) and self.value >= 0):
                raise ValidationError("manual cut-off needs a finite nonnegative value")


def default_rule(process: ProcessModel, gamma_line: float) -> CutoffRule:
    """The rate-optimal rule for a process, picking the branch by ``gamma_line``."""
    if process.name == "bessel":
        return CutoffRule("bessel_rule")
    if process.name == "gaussian_ss":
        return CutoffRule("gaussian_rule_hi_gamma" if gamma_line >= 1.0 else "gaussian_rule_lo_gamma")
    sigma, H = process.params["sigma"], process.H
    hi = gamma_line >= 1.0 - sigma * H + H / 2.0
    return CutoffRule("gamma_rule_hi_gamma" if hi else "gamma_rule_lo_gamma")


def cutoff_value(
    rule: CutoffRule,
    n: float,
    H: float = 0.5,
    beta_angle: float = 0.0,
    gamma_line: float = 1.0,
    sigma_shape: float | None = None,
) -> float:
    """Evaluate a cut-off rule at sample size ``n``.

    ====================== ===================================================
    bessel_rule            ln n / (pi + 2 beta)
    gaussian_rule_hi_gamma 2H ln n / (pi + 4H beta)
    gaussian_rule_lo_gamma (2H ln n - 2(gamma-1) ln ln n) / (pi + 4H beta)
    gamma_rule_hi_gamma    ln n / (pi/H + 2 beta)
    gamma_rule_lo_gamma    (ln n - (1 - 2(gamma + sigma H - 1)/H) ln ln n)
                           / (pi/H + 2 beta)
    ====================== ===================================================

    A negative value (possible for tiny ``n`` on the low-gamma branches) is
    clipped to 0 with a :class:`RuntimeWarning`.

    Examples
    --------
    >>> round(cutoff_value(CutoffRule("bessel_rule"), 1000), 5)
    2.19881
    """
    if isinstance(n, bool) or not (isinstance(n, (int, float, np.integer, np.floating))
                                   and math.isfinite(n) and n >= 2):
        raise ValidationError(f"n must be a real number >= 2, got {n!r}")
    if not (math.isfinite(beta_angle) and beta_angle >= 0):
        raise ValidationError(f"beta_angle must be finite and >= 0, got {beta_angle}")
    if not (math.isfinite(H) and H > 0):
        raise ValidationError(f"H must be positive, got {H}")
    ln_n = math.log(n)
    lnln = math.log(ln_n)
    v = rule.variant
    if v == "manual":
        return float(rule.value)
    if v == "bessel_rule":
        g = ln_n / (math.pi + 2.0 * beta_angle)
    elif v == "gaussian_rule_hi_gamma":
        g = 2.0 * H * ln_n / (math.pi + 4.0 * H * beta_angle)
    elif v == "gaussian_rule_lo_gamma":
        g = (2.0 * H * ln_n - 2.0 * (gamma_line - 1.0) * lnln) / (math.pi + 4.0 * H * beta_angle)
    else:
        denom = math.pi / H + 2.0 * beta_angle
        if v == "gamma_rule_hi_gamma":
            g = ln_n / denom
        else:
            if sigma_shape is None:
                raise ValidationError("gamma_rule_lo_gamma needs sigma_shape")
            expo = 1.0 - 2.0 * (gamma_line + sigma_shape * H - 1.0) / H
            g = (ln_n - expo * lnln) / denom
    if g < 0:
        warnings.warn(f"cut-off rule {v} is negative at n={n}; using 0", RuntimeWarning, stacklevel=2)
        g = 0.0
    return g


def _lower_gamma_bound(process: ProcessModel) -> float:
    # smallest admissible line: the denominator must stay inside its strip and,
    # for the normal-type marginals, the line must clear 1 - H
    if process.name == "gamma_ss":
        return 1.0 - process.params["sigma"] * process.H
    return 1.0 - process.H


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything besides the data that fixes an estimate.

    Parameters
    ----------
    process : ProcessModel
        Process whose time-one marginal appears in the denominator.
    gamma_line : float
        Real part of the inversion line.
    cutoff : float, optional
        Fixed cut-off.  When omitted, ``rule`` is evaluated at ``n_hint`` or,
        failing that, at the batch size.
    rule : CutoffRule, optional
        Defaults to :func:`default_rule` for the process.
    beta_angle : float
        Sector angle used by the rule.
    n_hint : int, optional
        Sample size at which the rule is evaluated.
    t_strip : MellinStrip, optional
        Mellin strip of T when known; the line must lie inside it.
    """

    process: ProcessModel
    gamma_line: float
    cutoff: float | None = None
    rule: CutoffRule | None = None
    beta_angle: float = 0.0
    n_hint: int | None = None
    t_strip: MellinStrip | None = None
    _rule: CutoffRule = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        gam = self.gamma_line
        if not (isinstance(gam, (int, float)) and math.isfinite(gam)):
            raise ValidationError(f"gamma_line must be a finite real, got {gam!r}")
        lo = _lower_gamma_bound(self.process)
        if not gam > lo:
            raise StripError(
                f"gamma_line={gam} must exceed {lo:.6g} for process {self.process.name}"
            )
        self.process.marginal_mellin.strip.check(self.denominator_point(0.0), "denominator")
        if self.t_strip is not None and not self.t_strip.contains(gam):
            raise StripError(
                f"gamma_line={gam} outside the Mellin strip ({self.t_strip.a}, {self.t_strip.b}) of T"
            )
        if self.cutoff is not None and not (math.isfinite(self.cutoff) and self.cutoff >= 0):
            raise ValidationError(f"cutoff must be finite and >= 0, got {self.cutoff}")
        if not (math.isfinite(self.beta_angle) and self.beta_angle >= 0):
            raise ValidationError(f"beta_angle must be >= 0, got {self.beta_angle}")
        if self.n_hint is not None and self.n_hint < 2:
            raise ValidationError("n_hint must be at least 2")
        object.__setattr__(self, "_rule", self.rule or default_rule(self.process, gam))
        self._warn_side_conditions()

    def _warn_side_conditions(self):
        gam, p = self.gamma_line, self.process
        notes = []
        if p.name == "bessel":
            d = p.params["d"]
            if gam <= (4.0 - d) / 4.0:
                notes.append(f"gamma <= (4-d)/4 = {(4 - d) / 4:.4g}")
        elif p.name == "gaussian_ss":
            if gam <= 0.75:
                notes.append("gamma <= 3/4")
        else:
            sigma = p.params["sigma"]
            if gam <= 1.0 - sigma / 4.0:
                notes.append(f"gamma <= 1 - sigma/4 = {1 - sigma / 4:.4g}")
        if self.t_strip is not None and not self.t_strip.contains(2.0 * gam - 1.0):
            notes.append("2*gamma - 1 outside the Mellin strip of T")
        if notes:
            warnings.warn(
                "rate guarantees do not cover this configuration: " + "; ".join(notes),
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def H(self) -> float:
        return self.process.H

    @property
    def cutoff_rule(self) -> CutoffRule:
        return self._rule

    def denominator_point(self, v):
        return (self.gamma_line + self.H - 1.0 + 1j * np.asarray(v, dtype=float)) / self.H

    def resolved_cutoff(self, n: int | None = None) -> float:
        """The cut-off used for a batch of size ``n``."""
        if self.cutoff is not None:
            return float(self.cutoff)
        size = self.n_hint if self.n_hint is not None else n
        if size is None:
            raise ValidationError("cut-off needs either a fixed value, n_hint, or a batch size")
        sigma = self.process.params.get("sigma")
        return cutoff_value(self._rule, int(size), self.H, self.beta_angle, self.gamma_line, sigma)


@dataclass(frozen=True)
class NormalityQuantities:
    nu_n: float
    c_const: float
    z_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    delta: float = float("nan")

    def __post_init__(self):
        if not self.nu_n > 0:
            raise NumericalError(f"asymptotic variance must be positive, got {self.nu_n}")


def _vgrid(cutoff: float, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    step = min(MASTER_STEP, min(inversion_step(float(x)) for x in xs))
    n_int = max(2, int(math.ceil(cutoff / step)))
    n_int += n_int % 2
    n_int = min(n_int, MAX_NODES - 1)
    v = np.linspace(0.0, cutoff, n_int + 1)
    return v, simpson_weights(n_int, cutoff / n_int)


def _phase_sums(logs: np.ndarray, weights_log: np.ndarray, v: np.ndarray, H: float) -> np.ndarray:
    """``sum_k exp(weights_log_k) * exp(i v_j logs_k / H)`` on the uniform grid ``v``.

    Returns the sums scaled by ``exp(-max(weights_log))``; the caller adds the
    shift back in log space.
    """
    n_nodes = v.size
    h = v[1] - v[0]
    B = int(math.ceil(math.sqrt(n_nodes)))
    A = int(math.ceil(n_nodes / B))
    freq = logs / H
    shift = weights_log.max()
    out = np.zeros(A * B, dtype=complex)
    a_idx = np.arange(A)[:, None]
    b_idx = np.arange(B)[:, None]
    for lo in range(0, logs.size, CHUNK):
        f = freq[lo:lo + CHUNK]
        w = np.exp(weights_log[lo:lo + CHUNK] - shift)
        coarse = np.exp(1j * (h * B) * a_idx * f) * w
        fine = np.exp(1j * h * b_idx * f)
        out += (coarse @ fine.T).ravel()
    return out[:n_nodes]


def _as_points(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).ravel()
    if arr.size == 0:
        raise ValidationError("x is empty")
    if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
        raise ValidationError("x must be positive and finite")
    return arr, scalar


def _quotient_on_grid(config: EstimatorConfig, data, v: np.ndarray) -> np.ndarray:
    """``M_n(s) / M[|Y_1|](s)`` (or the exact quotient in oracle mode) on ``v``."""
    s = config.denominator_point(v)
    log_den = config.process.log_marginal_mellin(s)
    if isinstance(data, SampleBatch):
        H = config.H
        logs = data.log_values
        wlog = ((config.gamma_line - 1.0) / H) * logs
        sums = _phase_sums(logs, wlog, v, H)
        shift = wlog.max() - math.log(len(data))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            quot = sums * np.exp(shift - log_den)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            quot = np.asarray(data(s), dtype=complex) * np.exp(-log_den)
    if not np.all(np.isfinite(quot)):
        raise NumericalError("Mellin quotient overflowed on the inversion grid; lower the cut-off")
    return quot


def _coerce_data(data):
    if isinstance(data, SampleBatch) or callable(data):
        return data
    return SampleBatch(np.asarray(data, dtype=float))


def estimate_density(config: EstimatorConfig, data, x):
    """Raw density estimate of T at ``x``.

    Parameters
    ----------
    config : EstimatorConfig
    data : SampleBatch, array_like, or callable
        Observations of ``|Y_T|``.  A callable is taken to be the exact
        Mellin transform of ``|Y_T|`` (see :func:`exact_observation_mellin`),
        which turns the estimator into plain truncated Mellin inversion.
    x : float or array_like
        Evaluation point(s), all positive.

    Returns
    -------
    float or ndarray
        The estimate, which may be negative.
    """
    data = _coerce_data(data)
    xs, scalar = _as_points(x)
    n = len(data) if isinstance(data, SampleBatch) else None
    g = config.resolved_cutoff(n)
    if g == 0.0:
        out = np.zeros(xs.size)
        return float(out[0]) if scalar else out
    v, w = _vgrid(g, xs)
    quot = _quotient_on_grid(config, data, v) * w
    lx = np.log(xs)
    phase = np.exp(-1j * np.outer(lx, v))
    out = (phase @ quot).real * np.exp(-config.gamma_line * lx) / math.pi
    return float(out[0]) if scalar else out


def z_values(config: EstimatorConfig, observations, x: float, n: int | None = None) -> np.ndarray:
    """Per-observation contributions whose mean is :func:`estimate_density`.

    ``n`` sets the batch size used by a cut-off rule (defaults to the number
    of observations).
    """
    obs = np.asarray(observations, dtype=float).ravel()
    if obs.size == 0:
        raise ValidationError("no observations")
    if not (np.all(np.isfinite(obs)) and np.all(obs > 0)):
        raise ValidationError("observations must be positive and finite")
    xs, _ = _as_points(x)
    if xs.size != 1:
        raise ValidationError("z_values takes a single x")
    g = config.resolved_cutoff(n if n is not None else obs.size)
    if g == 0.0:
        return np.zeros(obs.size)
    v, w = _vgrid(g, xs)
    H = config.H
    s = config.denominator_point(v)
    inv_den = np.exp(-config.process.log_marginal_mellin(s))
    lx = math.log(xs[0])
    kernel = w * inv_den * np.exp(-1j * v * lx)
    logs = np.log(obs)
    out = np.empty(obs.size)
    rows = max(1, CHUNK * 16 // max(v.size, 1))
    for lo in range(0, obs.size, rows):
        lg = logs[lo:lo + rows]
        ph = np.exp(np.outer(lg, ((config.gamma_line - 1.0) + 1j * v) / H))
        out[lo:lo + rows] = (ph @ kernel).real
    return out * math.exp(-config.gamma_line * lx) / math.pi


def z_integral(config: EstimatorConfig, x_obs: float, x: float, n: int | None = None) -> float:
    """Contribution of a single observation ``x_obs`` to the estimate at ``x``."""
    return float(z_values(config, [x_obs], x, n=n)[0])


def exact_observation_mellin(process: ProcessModel, t_model: StoppingTimeModel) -> MellinFunction:
    """Exact ``M[|Y_T|](s) = M[T](H s - H + 1) * M[|Y_1|](s)``."""
    H = process.H
    ts = t_model.mellin.strip
    ys = process.marginal_mellin.strip
    strip = ys.intersect(MellinStrip((ts.a + H - 1.0) / H, (ts.b + H - 1.0) / H))

    def func(s):
        return t_model.mellin(H * s - H + 1.0) * process.marginal_mellin(s)

    return MellinFunction(strip, func, kind=t_model.mellin.kind, name="M[|Y_T|]")


def clip_and_renormalize(x_grid, values) -> np.ndarray:
    """Clip an estimate at zero and rescale it to unit trapezoid mass on ``x_grid``."""
    xg = np.asarray(x_grid, dtype=float)
    vals = np.clip(np.asarray(values, dtype=float), 0.0, None)
    if xg.shape != vals.shape or xg.ndim != 1 or xg.size < 2 or np.any(np.diff(xg) <= 0):
        raise ValidationError("x_grid must be increasing and match the values")
    mass = integrate.trapezoid(vals, xg)
    if not mass > 0:
        raise NumericalError("clipped estimate has no mass on the grid")
    return vals / mass


def normality_constant(d: float, gamma_line: float, t_model: StoppingTimeModel,
                       method: str = "analytic", tol: float = 1e-12) -> float:
    """``(pi/2) Gamma(2 gamma + (d-4)/2) M[T](2 gamma - 1)``.

    ``method="analytic"`` evaluates the gamma factor with :func:`math.lgamma`
    and uses T's closed-form transform; ``method="quadrature"`` uses the
    package's complex ``log_gamma`` and integrates T's density directly.
    """
    arg = 2.0 * gamma_line + (d - 4.0) / 2.0
    if not arg > 0:
        raise HypothesisViolation(f"2*gamma + (d-4)/2 = {arg:.4g} must be positive")
    z = 2.0 * gamma_line - 1.0
    if method == "analytic":
        gam = math.exp(math.lgamma(arg))
        mt = complex(t_model.mellin(z)).real
    elif method == "quadrature":
        from .mellin import mellin_numeric  # local: only this branch needs it

        gam = math.exp(log_gamma(arg).real)
        mt = mellin_numeric(t_model.density, t_model.mellin.strip, z, tol=tol).real
    else:
        raise ValidationError(f"unknown method {method!r}")
    return 0.5 * math.pi * gam * mt


def asymptotic_variance(c_const: float, d: float, gamma_line: float, x: float, cutoff: float) -> float:
    """Leading-order variance of one observation's contribution at cut-off ``cutoff``."""
    if not cutoff > 1.0:
        raise ValidationError(f"the variance formula needs cutoff > 1, got {cutoff}")
    if not x > 0:
        raise ValidationError("x must be positive")
    g = cutoff
    return (
        c_const * math.gamma(d / 2.0) / (2.0 * math.pi**3 * x ** (2.0 * gamma_line))
        * g ** (-2.0 * gamma_line + d - 3.0) * math.exp(math.pi * g) / math.log(g) ** 2
    )


def z_variance(config: EstimatorConfig, t_model: StoppingTimeModel, x: float,
               n: int | None = None, nodes: int | None = None) -> float:
    """Exact variance of one observation's contribution at ``x``.

    Uses the closed-form moments ``E[X^(s-1)] = M[|Y_T|](s)``: the second
    moment is a double integral over ``[-g, g]^2`` evaluated with a Simpson
    product rule, the first moment a single one.  This is the finite-cut-off
    quantity that :func:`asymptotic_variance` approximates to leading order.
    """
    xs, _ = _as_points(x)
    if xs.size != 1:
        raise ValidationError("z_variance takes a single x")
    g = config.resolved_cutoff(n)
    if g == 0.0:
        return 0.0
    lx = math.log(xs[0])
    if nodes is None:
        nodes = int(min(4000, max(400, 150 * g)))
    nodes += nodes % 2
    v = np.linspace(-g, g, nodes + 1)
    w = simpson_weights(nodes, 2.0 * g / nodes)
    H, gam = config.H, config.gamma_line
    obs = exact_observation_mellin(config.process, t_model)
    log_den = config.process.log_marginal_mellin(config.denominator_point(v))
    kern = w * np.exp(-log_den - (gam + 1j * v) * lx) / (2.0 * math.pi)
    first = np.sum(kern * obs(1.0 + (gam - 1.0 + 1j * v) / H))
    s2 = 1.0 + (2.0 * gam - 2.0 + 1j * (v[:, None] + v[None, :])) / H
    second = kern @ obs(s2) @ kern
    return float(second.real - first.real**2)


def _delta_candidates(gamma_line: float) -> list[float]:
    cands = list(DELTA_GRID)
    if gamma_line < 1.0:
        cands.append(2.0 * gamma_line / (1.0 - gamma_line) + 0.1)
    return cands


def _line_integral_finite(t_model: StoppingTimeModel, re: float) -> bool:
    def fn(v):
        return abs(complex(t_model.mellin(complex(re, v))))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(fn, 0.0, np.inf, limit=200)
    return bool(np.isfinite(val) and np.isfinite(err) and err <= 1e-6 * max(1.0, val))


def normality_quantities(config: EstimatorConfig, t_model: StoppingTimeModel, x: float,
                         observations: Sequence[float] | None = None,
                         n: int | None = None) -> NormalityQuantities:
    """Asymptotic-normality constant and variance for a Bessel configuration.

    Checks the feasibility conditions (line and doubled line inside T's
    strip, ``gamma > (4-d)/4``, a valid ``delta`` on a small grid, and
    integrability of ``|M[T]|`` along ``Re z = 2 gamma - 1``) and raises
    :class:`HypothesisViolation` naming every failed one.

    If ``observations`` are given, their per-observation contributions are
    returned in ``z_values``.
    """
    proc = config.process
    if proc.name != "bessel":
        raise HypothesisViolation("asymptotic-normality quantities are defined for Bessel processes only")
    d = proc.params["d"]
    gam = config.gamma_line
    strip = t_model.mellin.strip
    a, b = max(0.0, strip.a), strip.b
    inside = lambda r: a < r < b  # noqa: E731
    failed = []
    if not inside(gam):
        failed.append(f"gamma={gam} not in ({a}, {b})")
    if not inside(2.0 * gam - 1.0):
        failed.append(f"2*gamma-1={2 * gam - 1:.4g} not in ({a}, {b})")
    if not gam > (4.0 - d) / 4.0:
        failed.append(f"gamma must exceed (4-d)/4={(4 - d) / 4:.4g}")
    delta = next((dl for dl in _delta_candidates(gam) if inside((dl + 2.0) * gam - dl - 1.0)), None)
    if delta is None:
        failed.append("no delta on the search grid puts (delta+2)*gamma-delta-1 inside the strip")
    if not failed and not _line_integral_finite(t_model, 2.0 * gam - 1.0):
        failed.append("|M[T]| is not integrable along Re z = 2*gamma-1")
    if failed:
        raise HypothesisViolation("; ".join(failed))
    c = normality_constant(d, gam, t_model)
    size = n if n is not None else (len(observations) if observations is not None else None)
    g = config.resolved_cutoff(size)
    nu = asymptotic_variance(c, d, gam, x, g)
    zs = np.empty(0) if observations is None else z_values(config, observations, x, n=size)
    return NormalityQuantities(nu_n=nu, c_const=c, z_values=zs, delta=delta)

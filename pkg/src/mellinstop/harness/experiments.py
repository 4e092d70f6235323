"""Seeded Monte Carlo experiments.

Every replicate draws from its own Philox stream keyed by
``split_seed(base_seed, experiment_id, n, replicate)`` (with a leading
family index for :func:`run_family_estimates`), so records do not depend on
scheduling.  Replicates run on a thread pool and are sorted before they are
returned.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np
from scipy import stats

from .. import __version__
from ..errors import MellinStopError, ValidationError
from ..estimator import (
    CutoffRule,
    EstimatorConfig,
    RULE_VARIANTS,
    estimate_density,
    normality_quantities,
    z_variance,
)
from ..mellin import mellin_invert
from ..minimax import chi2_divergence, critical_sample_size, make_adversarial_pair, sup_distance
from ..processes import ProcessModel, make_process, sample_observations
from ..seeding import check_seed, split_seed
from ..stopping_times import StoppingTimeModel, make_stopping_time

__all__ = [
    "EXPERIMENTS",
    "ExperimentSpec",
    "ExperimentReport",
    "default_spec",
    "spec_from_dict",
    "run_experiment",
    "run_loss_boxplot",
    "run_rate_slope",
    "run_normality",
    "run_minimax_decay",
    "run_oracle_roundtrip",
    "run_family_estimates",
    "quantile_summary",
    "fit_rate_slope",
    "theoretical_exponent",
]

EXPERIMENTS = (
    "loss_boxplot",
    "rate_slope",
    "normality",
    "minimax_decay",
    "oracle_roundtrip",
    "family_estimates",
)

_FAMILY_DEFAULTS = (
    {"family": "exponential", "rate": 1.0},
    {"family": "gamma", "shape": 2.0, "rate": 1.0},
    {"family": "inverse_gaussian", "mean": 1.0, "shape": 1.0},
    {"family": "weibull", "shape": 2.0, "scale": 1.0},
)
_ROUNDTRIP_FAMILIES = (
    {"family": "gamma", "shape": 2.0, "rate": 1.0},
    {"family": "weibull", "shape": 2.0, "scale": 1.0},
    {"family": "lognormal", "mu": 0.0, "sigma": 1.0},
)


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of an experiment; the JSON config mirrors these fields."""

    experiment: str
    process: dict = field(default_factory=lambda: {"name": "bessel", "d": 5.0})
    t_model: dict = field(default_factory=lambda: {"family": "gamma", "shape": 2.0, "rate": 1.0})
    gamma_line: float = 0.7
    beta_angle: float = 0.0
    rule: str = "auto"
    cutoff: float | None = None
    n_list: tuple = (1000, 5000, 10000, 50000)
    replicates: int = 100
    x_grid: tuple = (0.1, 10.0, 200)
    x_eval: float = 1.0
    base_seed: int = 20240517
    repetitions: int = 1
    m_list: tuple = (4.0, 5.0, 6.0, 7.0, 8.0)
    families: tuple = ()
    include_null_row: bool = True

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "m_list", tuple(float(m) for m in self.m_list))
        object.__setattr__(self, "families", tuple(dict(f) for f in self.families))
        if len(self.x_grid) != 3:
            raise ValidationError("x_grid must be (lo, hi, points)")
        lo, hi, pts = self.x_grid
        object.__setattr__(self, "x_grid", (float(lo), float(hi), int(pts)))
        if not self.n_list:
            raise ValidationError("n_list must not be empty")
        if any(n < 2 for n in self.n_list) or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValidationError("n_list must be strictly ascending integers >= 2")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise ValidationError("replicates must be a positive integer")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise ValidationError("repetitions must be a positive integer")
        if not (0 < lo and (hi > lo or (pts == 1 and hi >= lo)) and pts >= 1):
            raise ValidationError(f"invalid x_grid {self.x_grid}")
        if not self.x_eval > 0:
            raise ValidationError("x_eval must be positive")
        if self.rule != "auto" and self.rule not in RULE_VARIANTS:
            raise ValidationError(f"rule must be 'auto' or one of {RULE_VARIANTS}")
        if self.rule == "manual" and self.cutoff is None:
            raise ValidationError("rule 'manual' needs a cutoff")
        if any(not m > 0 for m in self.m_list):
            raise ValidationError("m_list entries must be positive")
        check_seed(self.base_seed)

    @property
    def experiment_id(self) -> int:
        return EXPERIMENTS.index(self.experiment)

    def x_points(self) -> np.ndarray:
        lo, hi, pts = self.x_grid
        return np.linspace(lo, hi, pts)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("n_list", "m_list", "x_grid", "families"):
            out[key] = list(out[key])
        return out


def default_spec(experiment: str, **overrides) -> ExperimentSpec:
    """Defaults for each experiment, mirroring the published simulation setup."""
    base: dict[str, Any] = {"experiment": experiment}
    if experiment == "rate_slope":
        base.update(beta_angle=math.pi / 2 - 0.05, n_list=(1000, 10000, 100000), replicates=50)
    elif experiment == "normality":
        base.update(n_list=(100, 10000), replicates=200, repetitions=5)
    elif experiment == "minimax_decay":
        base.update(process={"name": "bessel", "d": 1.0}, beta_angle=math.pi / 2, n_list=(2,),
                    replicates=1)
    elif experiment == "oracle_roundtrip":
        base.update(gamma_line=1.5, rule="manual", cutoff=60.0, x_grid=(0.05, 10.0, 50),
                    n_list=(2,), replicates=1, families=_ROUNDTRIP_FAMILIES)
    elif experiment == "family_estimates":
        base.update(gamma_line=0.8, n_list=(500,), replicates=50, families=_FAMILY_DEFAULTS)
    base.update(overrides)
    return ExperimentSpec(**base)


def spec_from_dict(data: dict, experiment: str | None = None) -> ExperimentSpec:
    """Build a spec from a JSON-style mapping, filling gaps from :func:`default_spec`."""
    data = dict(data)
    exp = data.pop("experiment", None) or experiment
    if exp is None:
        raise ValidationError("config does not name an experiment")
    if experiment is not None and exp != experiment:
        raise ValidationError(f"config is for {exp!r}, not {experiment!r}")
    known = {f.name for f in dataclasses.fields(ExperimentSpec)} - {"experiment"}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    return default_spec(exp, **data)


@dataclass
class ExperimentReport:
    experiment: str
    spec: dict
    columns: tuple
    records: list
    summary: dict
    code_version: str = __version__
    curves: dict = field(default_factory=dict, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)


# ---------------------------------------------------------------------------
# shared helpers

def build_models(spec: ExperimentSpec) -> tuple[ProcessModel, StoppingTimeModel]:
    proc = dict(spec.process)
    name = proc.pop("name", None)
    if name is None:
        raise ValidationError("process config needs a 'name'")
    return make_process(name, **proc), _make_t(spec.t_model)


def _make_t(cfg: dict) -> StoppingTimeModel:
    cfg = dict(cfg)
    family = cfg.pop("family", None)
    if family is None:
        raise ValidationError("t_model config needs a 'family'")
    return make_stopping_time(family, cfg)


def build_config(spec: ExperimentSpec, process: ProcessModel, t_model: StoppingTimeModel | None,
                 gamma_line: float | None = None) -> EstimatorConfig:
    rule = None
    cutoff = None
    if spec.rule == "manual" or (spec.rule == "auto" and spec.cutoff is not None):
        cutoff = spec.cutoff
    elif spec.rule != "auto":
        rule = CutoffRule(spec.rule)
    return EstimatorConfig(
        process,
        spec.gamma_line if gamma_line is None else gamma_line,
        cutoff=cutoff,
        rule=rule,
        beta_angle=spec.beta_angle,
        t_strip=None if t_model is None else t_model.mellin.strip,
    )


def _pmap(fn: Callable, tasks: list, threads: int) -> list:
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    if threads == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _failure(base: dict, exc: Exception, nan_fields: Iterable[str]) -> dict:
    row = dict(base)
    for name in nan_fields:
        row[name] = math.nan
    row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row


def quantile_summary(values) -> dict:
    """Min, quartiles and max of the finite values (NaN entries are failures)."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return {"count": 0}
    q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"count": int(arr.size), "min": float(q[0]), "q25": float(q[1]), "median": float(q[2]),
            "q75": float(q[3]), "max": float(q[4])}


def theoretical_exponent(process: ProcessModel, beta_angle: float, gamma_line: float = 1.0) -> float:
    """Polynomial part of the rate exponent of the RMSE in ``n`` (negative)."""
    b, H = beta_angle, process.H
    if process.name == "bessel":
        return -b / (math.pi + 2 * b)
    if process.name == "gaussian_ss":
        return -2 * H * b / (math.pi + 4 * H * b)
    return -b / (math.pi / H + 2 * b)


def fit_rate_slope(n_values, sq_errors_by_n) -> dict:
    """Least-squares slope of ``ln RMSE`` on ``ln n`` with a 95% half-width.

    The variance of each ``ln RMSE`` is propagated from the sample variance
    of the squared errors by the delta method,
    ``Var(ln RMSE) ~ Var(err^2) / (4 R MSE^2)``.
    """
    xs = np.log(np.asarray(n_values, dtype=float))
    ys, vs = [], []
    for errs in sq_errors_by_n:
        e = np.asarray(errs, dtype=float)
        e = e[np.isfinite(e)]
        mse = e.mean()
        ys.append(0.5 * math.log(mse))
        vs.append(e.var(ddof=1) / (4.0 * e.size * mse * mse) if e.size > 1 else math.nan)
    ys, vs = np.array(ys), np.array(vs)
    if xs.size < 2:
        return {"slope": math.nan, "half_width": math.nan, "intercept": math.nan}
    xc = xs - xs.mean()
    sxx = float(np.sum(xc * xc))
    slope = float(np.sum(xc * (ys - ys.mean())) / sxx)
    coef = xc / sxx
    sd = math.sqrt(float(np.sum(coef * coef * vs)))
    return {"slope": slope, "half_width": 1.96 * sd, "intercept": float(ys.mean() - slope * xs.mean()),
            "rmse": [math.exp(y) for y in ys]}


def _finite(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[np.isfinite(arr)]


# ---------------------------------------------------------------------------
# experiments

def run_loss_boxplot(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Sup-norm loss over ``x_grid`` for each (n, replicate)."""
    process, t_model = build_models(spec)
    config = build_config(spec, process, t_model)
    xs = spec.x_points()
    truth = t_model.density(xs)

    def one(task):
        n, k = task
        seed = split_seed(spec.base_seed, spec.experiment_id, n, k)
        base = {"n": n, "replicate": k, "seed": seed}
        try:
            batch = sample_observations(process, t_model, n, seed)
            est = estimate_density(config, batch, xs)
            return {**base, "loss": float(np.max(np.abs(est - truth))), "status": "ok"}
        except (MellinStopError, FloatingPointError) as exc:
            return _failure(base, exc, ["loss"])

    tasks = [(n, k) for n in spec.n_list for k in range(spec.replicates)]
    records = sorted(_pmap(one, tasks, threads), key=lambda r: (r["n"], r["replicate"]))
    summary = {
        "by_n": {str(n): quantile_summary([r["loss"] for r in records if r["n"] == n]) for n in spec.n_list},
        "failures": sum(r["status"] != "ok" for r in records),
    }
    return ExperimentReport(spec.experiment, spec.to_dict(),
                            ("n", "replicate", "seed", "loss", "status"), records, summary)


def run_rate_slope(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Squared error at ``x_eval`` per replicate and the fitted log-log slope."""
    process, t_model = build_models(spec)
    config = build_config(spec, process, t_model)
    x = spec.x_eval
    truth = float(t_model.density(x))

    def one(task):
        n, k = task
        seed = split_seed(spec.base_seed, spec.experiment_id, n, k)
        base = {"n": n, "replicate": k, "seed": seed}
        try:
            est = estimate_density(config, sample_observations(process, t_model, n, seed), x)
            return {**base, "estimate": est, "sq_error": (est - truth) ** 2, "status": "ok"}
        except (MellinStopError, FloatingPointError) as exc:
            return _failure(base, exc, ["estimate", "sq_error"])

    tasks = [(n, k) for n in spec.n_list for k in range(spec.replicates)]
    records = sorted(_pmap(one, tasks, threads), key=lambda r: (r["n"], r["replicate"]))
    by_n = [[r["sq_error"] for r in records if r["n"] == n] for n in spec.n_list]
    fit = fit_rate_slope(spec.n_list, by_n)
    summary = {
        "fit": fit,
        "theoretical_slope": theoretical_exponent(process, spec.beta_angle, spec.gamma_line),
        "cutoffs": {str(n): config.resolved_cutoff(n) for n in spec.n_list},
        "true_density": truth,
        "failures": sum(r["status"] != "ok" for r in records),
    }
    return ExperimentReport(spec.experiment, spec.to_dict(),
                            ("n", "replicate", "seed", "estimate", "sq_error", "status"), records, summary)


def ks_standardized(values) -> float:
    """KS distance of ensemble-standardized values from the standard normal."""
    arr = _finite(values)
    if arr.size < 2:
        raise ValidationError("cannot standardize fewer than two replicate estimates")
    sd = arr.std(ddof=1)
    if not sd > 0:
        raise ValidationError("replicate estimates have zero spread")
    return float(stats.kstest((arr - arr.mean()) / sd, "norm").statistic)


def run_normality(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Replicate estimates at ``x_eval``, standardized and compared with N(0, 1)."""
    if spec.replicates < 2:
        raise ValidationError("normality needs at least two replicates: cannot standardize")
    process, t_model = build_models(spec)
    config = build_config(spec, process, t_model)
    x = spec.x_eval
    theory = {}
    for n in spec.n_list:
        nq = normality_quantities(config, t_model, x, n=n)
        theory[str(n)] = {
            "cutoff": config.resolved_cutoff(n),
            "nu_n": nq.nu_n,
            "c_const": nq.c_const,
            "delta": nq.delta,
            "exact_z_variance": z_variance(config, t_model, x, n=n),
        }

    def one(task):
        n, rep, k = task
        seed = split_seed(spec.base_seed, spec.experiment_id, n, rep * spec.replicates + k)
        base = {"n": n, "repetition": rep, "replicate": k, "seed": seed}
        try:
            est = estimate_density(config, sample_observations(process, t_model, n, seed), x)
            return {**base, "estimate": est, "status": "ok"}
        except (MellinStopError, FloatingPointError) as exc:
            return _failure(base, exc, ["estimate"])

    tasks = [(n, rep, k) for n in spec.n_list for rep in range(spec.repetitions)
             for k in range(spec.replicates)]
    records = sorted(_pmap(one, tasks, threads), key=lambda r: (r["n"], r["repetition"], r["replicate"]))
    by_n = {}
    for n in spec.n_list:
        ks = []
        for rep in range(spec.repetitions):
            ks.append(ks_standardized([r["estimate"] for r in records
                                       if r["n"] == n and r["repetition"] == rep]))
        ests = _finite([r["estimate"] for r in records if r["n"] == n])
        by_n[str(n)] = {
            "ks": ks,
            "median_ks": float(np.median(ks)),
            "n_times_variance": float(n * ests.var(ddof=1)),
            **theory[str(n)],
        }
    summary = {"by_n": by_n, "failures": sum(r["status"] != "ok" for r in records)}
    return ExperimentReport(spec.experiment, spec.to_dict(),
                            ("n", "repetition", "replicate", "seed", "estimate", "status"),
                            records, summary)


def run_minimax_decay(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Sup-distance and chi-square divergence of the adversarial pair across ``m_list``."""
    process, _ = build_models(spec)
    if not process.minimax_h_ok:
        raise ValidationError(f"lower-bound construction needs H in (0, 2), got {process.H}")
    b = spec.beta_angle
    if not 0 < b < math.pi:
        raise ValidationError("beta_angle must lie in (0, pi) for the lower-bound construction")

    def one(task):
        M, null = task
        base = {"M": M}
        try:
            pair = make_adversarial_pair(b, M, 0.0 if null else None)
            sup, where = sup_distance(pair)
            chi2 = chi2_divergence(pair, process)
            return {**base, "delta": pair.delta, "sup_distance": sup, "argmax_x": where,
                    "scaled_sup": sup * math.exp(M * b), "chi2": chi2,
                    "n_critical": critical_sample_size(chi2), "status": "ok"}
        except (MellinStopError, FloatingPointError) as exc:
            return _failure({**base, "delta": 0.0 if null else math.nan}, exc,
                            ["sup_distance", "argmax_x", "scaled_sup", "chi2", "n_critical"])

    tasks = [(M, False) for M in spec.m_list]
    if spec.include_null_row:
        tasks.insert(0, (spec.m_list[0], True))
    records = sorted(_pmap(one, tasks, threads), key=lambda r: (r["M"], r["delta"] != 0.0))
    live = [r for r in records if r["status"] == "ok" and r["delta"] > 0 and r["chi2"] > 0]
    summary: dict[str, Any] = {"theoretical_slope": -(math.pi + 2 * b),
                               "failures": sum(r["status"] != "ok" for r in records)}
    if len(live) >= 2:
        m = np.array([r["M"] for r in live])
        lc = np.log([r["chi2"] for r in live])
        slope, intercept = np.polyfit(m, lc, 1)
        summary["chi2_slope"] = float(slope)
        summary["chi2_intercept"] = float(intercept)
        summary["min_scaled_sup"] = float(min(r["scaled_sup"] for r in live))
    return ExperimentReport(
        spec.experiment, spec.to_dict(),
        ("M", "delta", "sup_distance", "argmax_x", "scaled_sup", "chi2", "n_critical", "status"),
        records, summary,
    )


def run_oracle_roundtrip(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Invert each family's closed-form transform and compare with its density."""
    families = spec.families or _ROUNDTRIP_FAMILIES
    cutoff = spec.cutoff if spec.cutoff is not None else 60.0
    xs = spec.x_points()
    models = [(i, f["family"], _make_t(f)) for i, f in enumerate(families)]
    for _, name, m in models:
        if not m.mellin.strip.contains(spec.gamma_line):
            raise ValidationError(f"gamma_line={spec.gamma_line} outside the strip of {name}")

    def one(task):
        i, name, model, x = task
        base = {"family_index": i, "family": name, "x": float(x)}
        try:
            inv = mellin_invert(model.mellin, spec.gamma_line, float(x), cutoff)
            dens = float(model.density(x))
            return {**base, "inverse": inv, "density": dens, "abs_error": abs(inv - dens), "status": "ok"}
        except (MellinStopError, FloatingPointError) as exc:
            return _failure(base, exc, ["inverse", "density", "abs_error"])

    tasks = [(i, name, m, x) for i, name, m in models for x in xs]
    records = sorted(_pmap(one, tasks, threads), key=lambda r: (r["family_index"], r["x"]))
    summary = {
        "max_abs_error": {name: float(np.nanmax([r["abs_error"] for r in records if r["family_index"] == i]))
                          for i, name, _ in models},
        "failures": sum(r["status"] != "ok" for r in records),
    }
    return ExperimentReport(spec.experiment, spec.to_dict(),
                            ("family_index", "family", "x", "inverse", "density", "abs_error", "status"),
                            records, summary)


def run_family_estimates(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Sup-loss of the estimator across several families of T."""
    process, _ = build_models(spec)
    families = spec.families or _FAMILY_DEFAULTS
    xs = spec.x_points()
    models = []
    for i, f in enumerate(families):
        model = _make_t(f)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            config = build_config(spec, process, model)
        models.append((i, f["family"], model, config, model.density(xs)))

    def one(task):
        (i, name, model, config, truth), n, k = task
        seed = split_seed(spec.base_seed, spec.experiment_id, i, n, k)
        base = {"family_index": i, "family": name, "n": n, "replicate": k, "seed": seed}
        try:
            est = estimate_density(config, sample_observations(process, model, n, seed), xs)
            return {**base, "loss": float(np.max(np.abs(est - truth))), "status": "ok"}, est
        except (MellinStopError, FloatingPointError) as exc:
            return _failure(base, exc, ["loss"]), None

    tasks = [(m, n, k) for m in models for n in spec.n_list for k in range(spec.replicates)]
    results = _pmap(one, tasks, threads)
    order = sorted(range(len(results)), key=lambda j: (results[j][0]["family_index"], results[j][0]["n"],
                                                      results[j][0]["replicate"]))
    records = [results[j][0] for j in order]
    curves = {}
    for i, name, _, _, truth in models:
        ests = [results[j][1] for j in order
                if results[j][0]["family_index"] == i and results[j][1] is not None
                and results[j][0]["n"] == spec.n_list[-1]]
        curves[name] = {"x": xs, "truth": truth, "estimates": ests}
    summary = {
        "by_family": {name: quantile_summary([r["loss"] for r in records if r["family_index"] == i])
                      for i, name, *_ in models},
        "failures": sum(r["status"] != "ok" for r in records),
    }
    return ExperimentReport(spec.experiment, spec.to_dict(),
                            ("family_index", "family", "n", "replicate", "seed", "loss", "status"),
                            records, summary, curves=curves)


RUNNERS = {
    "loss_boxplot": run_loss_boxplot,
    "rate_slope": run_rate_slope,
    "normality": run_normality,
    "minimax_decay": run_minimax_decay,
    "oracle_roundtrip": run_oracle_roundtrip,
    "family_estimates": run_family_estimates,
}


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    return RUNNERS[spec.experiment](spec, threads=threads)

import math

import numpy as np
import pytest
from scipy import integrate

from mellinstop.errors import StripError, ValidationError
from mellinstop.mellin import MellinStrip, mellin_numeric
from mellinstop.minimax import (
    AdversarialPair,
    critical_sample_size,
    chi2_divergence,
    f1_density,
    make_adversarial_pair,
    observation_densities,
    observation_density_by_inversion,
    perturbation,
    q_density,
    q_mellin,
    rho_density,
    rho_mellin,
    sup_distance,
)
from mellinstop.processes import bessel, gamma_ss, gaussian_ss, stopped_density

HALF_PI = math.pi / 2


def log_quad(fn, lo=-60.0, hi=60.0):
    """Integral of ``fn(x) dx`` over (0, inf) in the variable ``w = ln x``."""
    def integrand(w):
        x = math.exp(w) if w < 700 else math.inf
        return 0.0 if x in (0.0, math.inf) else fn(x) * x

    val, _ = integrate.quad(integrand, lo, hi, limit=500,
                            epsabs=1e-13, epsrel=1e-12)
    return val


def rho_mellin_by_quadrature(M, z):
    f = lambda w, part: (rho_density(M, math.exp(w)) * np.exp(z * w)).__getattribute__(part)  # noqa: E731
    re = integrate.quad(f, -40, 40, args=("real",), limit=500, epsabs=1e-12)[0]
    im = integrate.quad(f, -40, 40, args=("imag",), limit=500, epsabs=1e-12)[0]
    return complex(re, im)


# ---------------------------------------------------------------------------
# base density q

def test_q_examples():
    assert q_density(HALF_PI, 1.0) == pytest.approx(1 / math.pi, rel=1e-14)
    assert q_density(HALF_PI, 1.0) == pytest.approx(0.3183099, abs=1e-7)
    big = 1e6
    assert q_density(HALF_PI, big) * big**2 == pytest.approx(2 / math.pi, rel=1e-9)


@pytest.mark.parametrize("beta", [math.pi / 4, HALF_PI, 3 * math.pi / 4, 2.9])
def test_q_is_a_density(beta):
    # heavy tails for angles near pi: integrate over the whole line in ln x
    assert log_quad(lambda x: q_density(beta, x), -np.inf, np.inf) == pytest.approx(1.0, abs=1e-8)
    assert np.all(q_density(beta, np.logspace(-10, 10, 200)) >= 0)


def test_q_rejects_bad_angle():
    with pytest.raises(ValidationError):
        q_density(math.pi, 1.0)
    with pytest.raises(ValidationError):
        q_density(0.0, 1.0)


def test_q_mellin_examples():
    assert q_mellin(1.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    sqrt2 = log_quad(lambda x: q_density(HALF_PI, x) * x**-0.5, -200, 200)
    assert q_mellin(HALF_PI, 0.5) == pytest.approx(math.sqrt(2), rel=1e-14)
    assert sqrt2 == pytest.approx(math.sqrt(2), rel=1e-10)
    beta = math.pi / 3
    z = 1 + 2j
    numeric = mellin_numeric(lambda x: q_density(beta, x), MellinStrip(0.0, 3.0), z)
    assert q_mellin(beta, z) == pytest.approx(numeric, abs=1e-6)


@pytest.mark.parametrize("beta", [math.pi / 4, HALF_PI, 3 * math.pi / 4])
def test_q_mellin_against_quadrature(beta):
    rng = np.random.default_rng(int(100 * beta))
    top = math.pi / beta
    strip = MellinStrip(0.0, top)
    for re, im in zip(rng.uniform(0.1 * top, 0.9 * top, 20), rng.uniform(-6, 6, 20)):
        z = complex(re, im)
        numeric = mellin_numeric(lambda x: q_density(beta, x), strip, z, tol=1e-9)
        assert q_mellin(beta, z) == pytest.approx(numeric, abs=1e-6)


def test_q_mellin_strip():
    with pytest.raises(StripError):
        q_mellin(HALF_PI, 2.0)


# ---------------------------------------------------------------------------
# perturbation kernel rho

def test_rho_mellin_examples():
    for M in (0.5, 3.0, 7.0):
        assert abs(rho_mellin(M, 1.0)) < 1e-15
        assert rho_mellin(M, 1 + 1j * M) == pytest.approx((math.exp(-2 * M * M) - 1) / 2j, abs=1e-15)
    assert rho_mellin(2.0, 2.0) == pytest.approx(rho_mellin_by_quadrature(2.0, 2.0), abs=1e-6)


@pytest.mark.parametrize("M", [1.0, 3.0, 6.0])
def test_rho_mellin_against_quadrature(M):
    rng = np.random.default_rng(int(M))
    for re, im in zip(rng.uniform(-1, 3, 20), rng.uniform(-4, 4, 20)):
        z = complex(re, im)
        assert rho_mellin(M, z) == pytest.approx(rho_mellin_by_quadrature(M, z), abs=1e-6)


def test_rho_integrates_to_zero():
    assert abs(log_quad(lambda x: rho_density(4.0, x), -40, 40)) < 1e-12


# ---------------------------------------------------------------------------
# adversarial pair

def test_zero_delta_pair_is_identical():
    pair = AdversarialPair(HALF_PI, 6.0, 0.0)
    xs = np.logspace(-3, 3, 30)
    assert np.array_equal(f1_density(pair, xs), q_density(HALF_PI, xs))
    assert sup_distance(pair)[0] == 0.0
    assert chi2_divergence(pair, bessel(1)) == 0.0


@pytest.mark.parametrize("M", [4.0, 7.0])
def test_f1_is_a_density(M):
    pair = make_adversarial_pair(HALF_PI, M)
    x, f0, f1 = pair.validation_grid()
    assert x.size == 2000
    assert np.all(f1 >= 0)
    assert log_quad(pair.f0, -200, 200) == pytest.approx(1.0, abs=1e-8)
    assert log_quad(pair.f1, -60, 60) == pytest.approx(1.0, abs=1e-6)


def test_grid_perturbation_matches_quadrature():
    pair = make_adversarial_pair(HALF_PI, 5.0)
    x, f0, f1 = pair.validation_grid()
    idx = np.arange(0, 2000, 97)
    quad = perturbation(HALF_PI, 5.0, x[idx])
    assert np.allclose((f1 - f0)[idx], pair.delta * quad, atol=1e-12)


def test_large_delta_is_rejected():
    with pytest.raises(ValidationError, match="smaller delta"):
        AdversarialPair(HALF_PI, 1.0, 50.0)


def test_delta_search_halves_from_one_half():
    pair = make_adversarial_pair(HALF_PI, 6.0)
    assert pair.delta in {0.5 / 2**k for k in range(30)}
    if pair.delta < 0.5:
        with pytest.raises(ValidationError):
            AdversarialPair(HALF_PI, 6.0, 2 * pair.delta)


def test_sup_distance_lower_envelope():
    beta = HALF_PI
    scaled = []
    for M in range(4, 11):
        pair = make_adversarial_pair(beta, float(M))
        sup, where = sup_distance(pair)
        assert where > 0
        scaled.append(sup * math.exp(M * beta))
    scaled = np.array(scaled)
    assert scaled.min() > 0
    # no downward trend: the smallest value is within a modest factor of the largest
    assert scaled.min() >= 0.2 * scaled.max()


@pytest.mark.parametrize("M", [4.0, 6.0, 8.0])
def test_sup_distance_fitted_constant(M):
    # kappa fitted at M = 5 bounds the other values from below up to a factor 2
    ref = make_adversarial_pair(HALF_PI, 5.0)
    kappa = sup_distance(ref)[0] * math.exp(5.0 * HALF_PI)
    pair = make_adversarial_pair(HALF_PI, M)
    assert sup_distance(pair)[0] >= 0.5 * kappa * math.exp(-M * HALF_PI)


# ---------------------------------------------------------------------------
# observation densities and chi-square

def test_observation_density_matches_mixture_quadrature():
    pair = make_adversarial_pair(HALF_PI, 5.0)
    proc = bessel(1)
    grid = observation_densities(pair, proc, 1e-2, 50.0)
    idx = np.linspace(0, grid.y.size - 1, 10).astype(int)
    for i in idx:
        ref = stopped_density(proc, lambda t: q_density(HALF_PI, t), grid.y[i], tol=1e-12)
        assert grid.p0[i] == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("proc", [bessel(1), bessel(3), gaussian_ss(0.7), gamma_ss(1.0, 2.0)],
                         ids=["bessel1", "bessel3", "gauss", "gamma"])
def test_observation_densities_match_mellin_inversion(proc):
    pair = make_adversarial_pair(HALF_PI, 4.0)
    grid = observation_densities(pair, proc, 1e-2, 50.0)
    idx = np.linspace(20, grid.y.size - 20, 10).astype(int)
    for i in idx:
        y = grid.y[i]
        p0 = observation_density_by_inversion(pair, proc, 0, y)
        p1 = observation_density_by_inversion(pair, proc, 1, y)
        assert grid.p0[i] == pytest.approx(p0, rel=1e-6)
        assert grid.diff[i] == pytest.approx(p1 - p0, abs=1e-8 * grid.p0[i])


def test_chi2_decreases_between_m6_and_m8():
    proc = bessel(1)
    c6 = chi2_divergence(make_adversarial_pair(HALF_PI, 6.0), proc)
    c8 = chi2_divergence(make_adversarial_pair(HALF_PI, 8.0), proc)
    assert c6 > c8 > 0


@pytest.mark.parametrize("d", [1, 3, 5])
def test_chi2_decay_rate_band(d):
    ms = np.arange(4, 9, dtype=float)
    chi2 = [chi2_divergence(make_adversarial_pair(HALF_PI, M), bessel(d)) for M in ms]
    slope = np.polyfit(ms, np.log(chi2), 1)[0]
    rate = math.pi + 2 * HALF_PI
    assert 0.8 * rate <= -slope <= 1.2 * rate


def test_chi2_result_details():
    res = chi2_divergence(make_adversarial_pair(HALF_PI, 5.0), bessel(1), full=True)
    assert res.value > 0
    assert res.error_estimate <= 1e-6 * res.value
    assert res.tail_bound < 1e-7 * res.value
    assert res.x_max >= 1e3


def test_chi2_other_processes_positive():
    pair = make_adversarial_pair(HALF_PI, 5.0)
    for proc in (gaussian_ss(0.5), gamma_ss(1.0, 2.0)):
        assert chi2_divergence(pair, proc) > 0


def test_critical_sample_size():
    assert critical_sample_size(0.0) == math.inf
    assert critical_sample_size(1e-3) == math.floor(1 / math.log1p(1e-3))
    chi2 = 1e-6
    n = critical_sample_size(chi2)
    assert (1 + chi2) ** n <= math.e < (1 + chi2) ** (n + 1)
    with pytest.raises(ValidationError):
        critical_sample_size(-1.0)

"""Smoothed density/score/Fisher engine against independent oracles."""

import math

import numpy as np
import pytest
from scipy import integrate

from smoothloc import (
    ConfigurationError,
    Gaussian,
    GaussianMixture,
    GaussianSawtooth,
    Laplace,
    PreconditionError,
    RngSeed,
    SmoothedModel1d,
    SmoothedModelHd,
    TailUnderflowError,
    check_score_inversion_bias,
    fisher_1d,
    fisher_hd,
    parse_model,
    smoothed_pdf_1d,
    smoothed_score_1d,
    smoothed_score_hd,
)
from smoothloc.smoothing import (
    expected_score_taylor_check,
    expected_shifted_score,
    score_moment_check,
)

MIX = GaussianMixture((0.3, 0.7), (-1.0, 2.0), (0.5, 1.5))
SAW = GaussianSawtooth(0.05, 4.0)


def convolve_oracle(base, r, x):
    """Direct adaptive quadrature of (f * N(0, r^2))(x), kink-aware."""
    def integrand(z):
        return base.pdf(x - z) * math.exp(-0.5 * (z / r) ** 2) / (
            r * math.sqrt(2 * math.pi))
    kinks = sorted(x - b for b in base.breakpoints()
                   if abs(x - b) < 10 * r)
    val, err = integrate.quad(integrand, -10 * r, 10 * r,
                              points=kinks or None, limit=300,
                              epsabs=1e-13, epsrel=1e-12)
    assert err < 1e-10
    return val


# -- smoothed pdf ----------------------------------------------------------


def test_gaussian_smoothing_closed_forms():
    mu, sigma, r = 0.7, 1.3, 0.8
    m = SmoothedModel1d(Gaussian(mu, sigma), r)
    s2 = sigma**2 + r**2
    xs = np.linspace(mu - 6 * math.sqrt(s2), mu + 6 * math.sqrt(s2), 61)
    pdf_exact = np.exp(-0.5 * (xs - mu) ** 2 / s2) / math.sqrt(2 * math.pi * s2)
    assert np.max(np.abs(m.pdf(xs) - pdf_exact)) < 1e-8
    assert np.max(np.abs(m.score(xs) + (xs - mu) / s2)) < 1e-8
    assert abs(m.fisher() - 1.0 / s2) < 1e-6


def test_smoothed_pdf_laplace_against_quadrature():
    m = SmoothedModel1d(Laplace(0, 1), 0.5)
    for x in (0.0, 0.7, -2.3):
        oracle = convolve_oracle(Laplace(0, 1), 0.5, x)
        assert abs(smoothed_pdf_1d(m, x) - oracle) < 1e-8 * max(1.0, oracle)


def test_smoothed_pdf_symmetry_around_shift():
    lam = 2.0
    for base in (Gaussian(0, 1).shifted(lam), Laplace(0, 1).shifted(lam)):
        m = SmoothedModel1d(base, 0.7)
        for t in (0.3, 1.1, 2.6):
            a, b = smoothed_pdf_1d(m, lam + t), smoothed_pdf_1d(m, lam - t)
            assert abs(a - b) <= 1e-9 * a


@pytest.mark.parametrize("base,r", [(Laplace(0, 1), 0.5), (SAW, 0.2), (MIX, 1.0)])
def test_smoothed_pdf_normalized(base, r):
    m = SmoothedModel1d(base, r)
    lo, hi, sig = base.quadrature_extent()
    grid = np.linspace(lo - 10 * sig - 10 * r, hi + 10 * sig + 10 * r, 20001)
    total = integrate.simpson(smoothed_pdf_1d(m, grid), x=grid)
    assert abs(total - 1.0) < 1e-5


# -- smoothed score --------------------------------------------------------


def test_score_gaussian_closed_form():
    m = SmoothedModel1d(Gaussian(0, 1), 1.0)
    assert abs(smoothed_score_1d(m, 1.0) - (-0.5)) < 1e-9


def test_score_laplace_symmetry_point():
    m = SmoothedModel1d(Laplace(0, 1), 0.5)
    assert abs(smoothed_score_1d(m, 0.0)) < 1e-10


def test_score_laplace_matches_log_density_slope():
    # oracle: central difference of log f_r from direct quadrature
    base, r, x, h = Laplace(0, 1), 0.5, 1.0, 1e-5
    lo = math.log(convolve_oracle(base, r, x - h))
    hi = math.log(convolve_oracle(base, r, x + h))
    m = SmoothedModel1d(base, r)
    assert abs(smoothed_score_1d(m, x) - (hi - lo) / (2 * h)) < 1e-6


@pytest.mark.parametrize("base", [Gaussian(0, 1), Laplace(0, 1), MIX, SAW],
                         ids=lambda b: type(b).__name__)
def test_score_zero_mean(base):
    for r in (0.1, 0.5, 1.0, 2.0):
        m = SmoothedModel1d(base, r)
        assert abs(expected_shifted_score(m, 0.0)) < 1e-6


def test_score_batch_matches_pointwise():
    # large batches ride a dense interpolation table; must agree with
    # the direct quadrature path used for small inputs
    cases = [(Laplace(0, 1), 0.3), (MIX, 0.5), (SAW, 0.2)]
    xs = np.linspace(-6.0, 6.0, 6000)
    for base, r in cases:
        m = SmoothedModel1d(base, r)
        batch = smoothed_score_1d(m, xs)
        direct = np.concatenate(
            [smoothed_score_1d(m, xs[i:i + 1000]) for i in range(0, 6000, 1000)]
        )
        assert np.max(np.abs(batch - direct)) < 5e-9
    m = SmoothedModel1d(Gaussian(0, 1), 1.0)
    batch = smoothed_score_1d(m, xs)
    assert np.max(np.abs(batch + xs / 2.0)) < 1e-9


def test_score_tail_underflow():
    m = SmoothedModel1d(Laplace(0, 1), 0.1)
    with pytest.raises(TailUnderflowError) as exc:
        smoothed_score_1d(m, 900.0)
    assert exc.value.x == 900.0 and exc.value.r == 0.1
    assert smoothed_pdf_1d(m, 900.0) == 0.0  # pdf clamps, score refuses


# -- fisher information ----------------------------------------------------


def test_fisher_gaussian_closed_form():
    assert abs(fisher_1d(SmoothedModel1d(Gaussian(0, 1), 0.5)) - 0.8) < 1e-6


def test_fisher_laplace_sandwich_and_monotone():
    i_05 = fisher_1d(SmoothedModel1d(Laplace(0, 1), 0.5))
    assert 1.0 / 2.25 - 1e-6 <= i_05 <= 4.0 + 1e-6
    assert fisher_1d(SmoothedModel1d(Laplace(0, 1), 0.1)) > fisher_1d(
        SmoothedModel1d(Laplace(0, 1), 1.0))


@pytest.mark.parametrize("base", [Gaussian(0, 1), Laplace(0, 1), MIX, SAW],
                         ids=lambda b: type(b).__name__)
def test_fisher_monotone_in_r(base):
    vals = [fisher_1d(SmoothedModel1d(base, r))
            for r in (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) <= 1e-12)


def test_fisher_monte_carlo_cross_check():
    base, r, n = Laplace(0, 1), 0.5, 200_000
    m = SmoothedModel1d(base, r)
    seed = RngSeed(314)
    x = base.sample(n, seed.derive(1))
    noise = seed.derive(2).generator().standard_normal(n)
    sq = smoothed_score_1d(m, x + r * noise) ** 2
    se = sq.std(ddof=1) / math.sqrt(n)
    assert abs(sq.mean() - fisher_1d(m)) < 4 * se


# -- high-dimensional paths --------------------------------------------------


def test_fisher_hd_product_gaussian():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^8)"), 1.0)
    f = fisher_hd(m)
    assert np.max(np.abs(f.matrix - 0.5 * np.eye(8))) < 1e-9
    assert f.relative_se == 0.0


def test_fisher_hd_matches_coordinates():
    m = SmoothedModelHd(parse_model("product(laplace(0,1)^4)"), 0.5)
    f = fisher_hd(m)
    i1 = fisher_1d(SmoothedModel1d(Laplace(0, 1), 0.5))
    assert np.allclose(np.diag(f.matrix), i1, atol=1e-12)
    assert np.allclose(f.matrix, np.diag(np.diag(f.matrix)))


def test_fisher_hd_monte_carlo_path():
    m = SmoothedModelHd(parse_model("product(laplace(0,1)^3)"), 0.5)
    exact = fisher_hd(m)
    mc = fisher_hd(m, method="mc", n_mc=40_000, seed=RngSeed(99))
    tol = 4 * mc.relative_se * np.max(np.diag(exact.matrix)) + 4e-3
    assert np.max(np.abs(mc.matrix - exact.matrix)) < tol
    with pytest.raises(ConfigurationError):
        fisher_hd(m, method="mc", n_mc=500, seed=RngSeed(1))


def test_score_hd_gaussian_closed_form():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^8)"), 1.0)
    s = smoothed_score_hd(m, np.ones(8))
    assert np.max(np.abs(s + 0.5)) < 1e-9
    assert np.max(np.abs(smoothed_score_hd(m, np.zeros(8)))) < 1e-10


def test_score_hd_importance_sampling_oracle():
    r, n = 0.5, 2_000_000
    m = SmoothedModelHd(parse_model("product(laplace(0,1)^4)"), r)
    x = np.array([1.0, 0.0, -1.0, 2.0])
    s = smoothed_score_hd(m, x)
    gen = RngSeed(2718).generator()
    base = Laplace(0, 1)
    for j in range(4):
        z = r * gen.standard_normal(n)
        w = base.pdf(x[j] - z)
        ratio = np.sum(w * z) / np.sum(w)
        est = -ratio / r**2
        resid = z * w - ratio * w
        se = (np.std(resid, ddof=1) * math.sqrt(n) / np.sum(w)) / r**2
        assert abs(s[j] - est) < 3 * se


# -- diagnostics -------------------------------------------------------------


def test_inversion_bias_gaussian_zero():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^2)"), 1.0)
    chk = check_score_inversion_bias(m, np.array([0.3, 0.1]))
    assert chk.bias_norm < 1e-8
    assert check_score_inversion_bias(m, np.zeros(2)).bias_norm == 0.0


def test_inversion_bias_laplace_under_ceiling():
    m = SmoothedModelHd(parse_model("product(laplace(0,1)^2)"), 1.0)
    scales = (0.05, 0.1, 0.2)
    norms, biases = [], []
    for s in scales:
        chk = check_score_inversion_bias(m, np.array([s, 0.0]))
        assert chk.bias_norm <= chk.predicted_ceiling
        norms.append(s)
        biases.append(chk.bias_norm)
    slope = np.polyfit(np.log(norms), np.log(biases), 1)[0]
    # symmetric base kills the quadratic term, so decay is at least
    # quadratic (here cubic); the ceiling above is the actual contract
    assert slope >= 2.0


def test_inversion_bias_quadratic_on_asymmetric_base():
    # skewed base: the quadratic term survives and sets the decay rate,
    # unlike symmetric bases where it cancels and the decay is cubic
    m = SmoothedModelHd(parse_model(
        "product(mixture(0.8*gaussian(0,0.3)+0.2*gaussian(2,0.6))^2)"), 1.0)
    scales = (0.05, 0.1, 0.2)
    biases = [check_score_inversion_bias(m, np.array([s, 0.0])).bias_norm
              for s in scales]
    slope = np.polyfit(np.log(scales), np.log(biases), 1)[0]
    assert 1.8 <= slope <= 2.3


def test_inversion_bias_precondition():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^2)"), 1.0)
    with pytest.raises(PreconditionError):
        check_score_inversion_bias(m, np.array([0.6, 0.6]))


def test_taylor_check():
    g = SmoothedModel1d(Gaussian(0, 1), 1.0)
    assert abs(expected_score_taylor_check(g, 0.3).residual) < 1e-8
    lap = SmoothedModel1d(Laplace(0, 1), 1.0)
    assert abs(expected_score_taylor_check(lap, 0.0).lhs) < 1e-10
    i_r = fisher_1d(lap)
    for eps in (0.05, 0.1, 0.2):
        chk = expected_score_taylor_check(lap, eps)
        assert abs(chk.residual) / (math.sqrt(i_r) * eps**2) <= 10.0
    with pytest.raises(PreconditionError):
        expected_score_taylor_check(lap, 0.6)


def test_score_moments_gaussian():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^2)"), 1.0)
    chk = score_moment_check(m, np.array([1.0, 0.0]), 4, 100_000, RngSeed(5))
    assert chk.ceiling == pytest.approx(1.6**2 * 16 * 0.5, rel=1e-9)
    assert chk.moment_abs == pytest.approx(0.75, abs=5 * chk.se_abs)
    assert chk.moment_abs <= chk.ceiling
    chk3 = score_moment_check(m, np.array([1.0, 0.0]), 3, 100_000, RngSeed(6))
    assert abs(chk3.moment_signed) <= 3 * chk3.se_signed


def test_score_moments_laplace():
    m = SmoothedModelHd(parse_model("product(laplace(0,1)^2)"), 0.5)
    chk = score_moment_check(m, np.array([1.0, 0.0]), 4, 100_000, RngSeed(7))
    assert chk.moment_abs <= chk.ceiling + 3 * chk.se_abs


def test_score_moments_preconditions():
    m = SmoothedModelHd(parse_model("product(gaussian(0,1)^2)"), 1.0)
    v = np.array([1.0, 0.0])
    with pytest.raises(PreconditionError):
        score_moment_check(m, 2 * v, 4, 100_000, RngSeed(1))
    with pytest.raises(PreconditionError):
        score_moment_check(m, v, 9, 100_000, RngSeed(1))
    with pytest.raises(PreconditionError):
        score_moment_check(m, v, 4, 5000, RngSeed(1))


def test_smoothed_model_validation():
    with pytest.raises(PreconditionError):
        SmoothedModel1d(Gaussian(0, 1), 0.0)
    with pytest.raises(PreconditionError):
        SmoothedModel1d(Gaussian(0, 1), 1.0, nodes=8)

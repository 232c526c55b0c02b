"""Two-stage 1-d estimator: collapse identity, init stage, coverage."""

import math

import numpy as np
import pytest

from smoothloc import (
    Config1d,
    ConfigurationError,
    EstimationError,
    Gaussian,
    GaussianMixture,
    Laplace,
    PreconditionError,
    RngSeed,
    choose_alpha,
    fisher_1d,
    global_mle_1d,
    local_mle_1d,
    quantile_initial_estimate,
    SmoothedModel1d,
)

LOG20 = math.log(20.0)


# -- local step --------------------------------------------------------------


def test_local_step_collapses_to_mean_for_gaussian():
    # linear score: the Newton step lands on mean(perturbed) - mu exactly
    base, r, lam1 = Gaussian(0.4, 1.3), 0.8, 0.9
    for s in range(20):
        seed = RngSeed(s)
        x = RngSeed(1000 + s).generator().uniform(-1.0, 3.0, size=600)
        lam_hat = local_mle_1d(base, r, x, lam1, seed)
        noise = seed.generator().standard_normal(x.shape)
        expected = float(np.mean(x + r * noise)) - 0.4
        assert abs(lam_hat - expected) <= 1e-12 * max(1.0, abs(expected))


def test_local_step_fixed_point():
    # craft samples whose perturbed versions sit exactly at lam1 + mu
    base, r, lam1 = Gaussian(0.0, 1.0), 0.5, 1.7
    seed = RngSeed(123)
    noise = seed.generator().standard_normal(400)
    x = lam1 - r * noise
    lam_hat = local_mle_1d(base, r, x, lam1, RngSeed(123))
    assert abs(lam_hat - lam1) < 1e-13


def test_local_step_quantile_within_radius():
    base, n, r, lam, lam1 = Laplace(0, 1), 10**4, 0.3, 3.0, 3.05
    root = RngSeed(55)
    errs = []
    for t in range(400):
        ts = root.derive(t)
        x = base.sample(n, ts.derive(1)) + lam
        errs.append(abs(local_mle_1d(base, r, x, lam1, ts.derive(2)) - lam))
    i_r = fisher_1d(SmoothedModel1d(base, r))
    radius = 1.3 * math.sqrt(2.0 * LOG20 / (n * i_r))
    assert np.quantile(errs, 0.9) <= radius


def test_local_step_validation():
    with pytest.raises(PreconditionError):
        local_mle_1d(Gaussian(0, 1), 0.0, [1.0, 2.0], 0.0, RngSeed(1))
    with pytest.raises(PreconditionError):
        local_mle_1d(Gaussian(0, 1), 0.5, [], 0.0, RngSeed(1))


def test_local_step_underflow_reports_bad_init():
    with pytest.raises(EstimationError, match="underflowed"):
        local_mle_1d(Laplace(0, 1), 0.1, [1000.0, 1000.5], 0.0, RngSeed(3))


# -- initialization stage -----------------------------------------------------


def test_choose_alpha_symmetric_families():
    assert choose_alpha(Gaussian(0, 1), 0.1) == 0.5
    assert choose_alpha(Laplace(0, 1), 0.05) == 0.5


def test_choose_alpha_asymmetric_matches_grid_argmin():
    base = GaussianMixture((0.9, 0.1), (0.0, 5.0), (0.1, 1.0))
    q, step = 0.1, 1e-3
    got = choose_alpha(base, q, step)
    alphas = q + step * np.arange(int((1 - 2 * q) / step) + 1)
    ok = (alphas - q > 0) & (alphas + q < 1)
    widths = np.where(
        ok, base.quantile(np.minimum(alphas + q, 1 - 1e-12))
        - base.quantile(np.maximum(alphas - q, 1e-12)), np.inf)
    assert abs(base.quantile(got + q) - base.quantile(got - q)
               - widths.min()) < 1e-12
    assert got != 0.5  # main mass sits off the median of the mixture


def test_choose_alpha_validation():
    with pytest.raises(PreconditionError):
        choose_alpha(Gaussian(0, 1), 0.5)
    with pytest.raises(PreconditionError):
        choose_alpha(Gaussian(0, 1), 0.1, grid_step=0.0)


def test_quantile_init_plugin_shift():
    base, lam, m, alpha = Laplace(0, 1), 7.0, 101, 0.25
    grid = base.quantile(np.arange(1, m + 1) / (m + 1.0)) + lam
    est = quantile_initial_estimate(base, grid, alpha)
    idx = math.ceil(alpha * m)
    assert est == float(grid[idx - 1]) - base.quantile(alpha)
    assert abs(est - lam) < 0.05


def test_quantile_init_symmetric_median_exact():
    base, lam = Gaussian(0, 1), -2.5
    sym = np.array([-1.1, -0.4, 0.0, 0.4, 1.1]) + lam
    assert quantile_initial_estimate(base, sym, 0.5) == lam


def test_quantile_init_two_samples_takes_lower():
    base = Gaussian(0, 1)
    # ceil(0.5 * 2) = 1, so the smaller order statistic is used
    assert quantile_initial_estimate(base, [3.0, 9.0], 0.5) == 3.0


def test_quantile_init_validation():
    with pytest.raises(PreconditionError):
        quantile_initial_estimate(Gaussian(0, 1), [1.0], 0.5)
    with pytest.raises(PreconditionError):
        quantile_initial_estimate(Gaussian(0, 1), [1.0, 2.0], 1.5)


# -- full pipeline ------------------------------------------------------------


def reference_report():
    base = Gaussian(0, 1)
    ts = RngSeed(2026).derive(1)
    x = base.sample(10**4, ts.derive(2))
    return global_mle_1d(base, x, Config1d(delta=0.1), ts.derive(3))


def test_global_reference_run_frozen():
    rep = reference_report()
    assert rep.n_used_init == 4443 and rep.n_used_local == 5557
    assert rep.lambda_hat == pytest.approx(0.008739659139116097, rel=1e-6)
    assert rep.lambda_initial == pytest.approx(0.0003835620901188376, rel=1e-6)
    assert rep.r_used == pytest.approx(0.24464606182595766, rel=1e-6)
    assert rep.fisher_at_r == pytest.approx(0.9435282353018896, rel=1e-6)
    assert rep.theoretical_radius == pytest.approx(0.03380405876387601, rel=1e-6)
    assert abs(rep.lambda_hat) < 0.1


def test_global_report_internal_consistency():
    rep = reference_report()
    base = Gaussian(0, 1)
    n = rep.n_used_init + rep.n_used_local
    assert n == 10**4
    # documented schedules, recomputed from scratch
    assert rep.r_used == pytest.approx(
        0.5 * (LOG20 / n) ** 0.125 * base.iqr(), rel=1e-12)
    assert rep.fisher_at_r == pytest.approx(
        fisher_1d(SmoothedModel1d(base, rep.r_used)), rel=1e-12)
    assert rep.theoretical_radius == pytest.approx(
        math.sqrt(2.0 * LOG20 / (rep.n_used_local * rep.fisher_at_r)),
        rel=1e-12)
    assert rep.n_used_init == math.ceil((LOG20 / n) ** 0.1 * n)


def test_global_collapse_identity():
    # gaussian base: final estimate equals mean of the perturbed local
    # slice minus the base mean, whatever the initializer did
    base = Gaussian(0, 1)
    ts = RngSeed(2026).derive(1)
    x = base.sample(10**4, ts.derive(2))
    rep = reference_report()
    noise = ts.derive(3).generator().standard_normal(rep.n_used_local)
    perturbed = x[rep.n_used_init:] + rep.r_used * noise
    expected = float(np.mean(perturbed))
    assert abs(rep.lambda_hat - expected) <= 1e-12 * max(1.0, abs(expected))


def test_global_r_override():
    base = Gaussian(0, 1)
    x = base.sample(2000, RngSeed(4).derive(1))
    rep = global_mle_1d(base, x, Config1d(delta=0.1, r_override=0.5), RngSeed(5))
    assert rep.r_used == 0.5
    assert rep.fisher_at_r == pytest.approx(0.8, abs=1e-6)


def test_global_shift_equivariance():
    base, lam = Laplace(0, 1), 0.5
    x = base.sample(3000, RngSeed(6).derive(1))
    cfg = Config1d(delta=0.1)
    rep0 = global_mle_1d(base, x, cfg, RngSeed(7))
    rep1 = global_mle_1d(base, x + lam, cfg, RngSeed(7))
    assert abs((rep1.lambda_hat - rep0.lambda_hat) - lam) < 1e-9
    assert rep1.r_used == rep0.r_used


def test_global_radius_scales_like_root_n():
    base = Gaussian(0, 1)
    scaled = []
    for n in (10**3, 10**4, 10**5):
        x = base.sample(n, RngSeed(7).derive(n))
        rep = global_mle_1d(base, x, Config1d(delta=0.1), RngSeed(8).derive(n))
        scaled.append(rep.theoretical_radius * math.sqrt(n))
    # slowly varying split/radius factors allowed, sqrt(n) must dominate
    for a, b in zip(scaled, scaled[1:]):
        assert max(a, b) / min(a, b) < 1.2


def test_global_small_budget_names_minimum():
    x = Gaussian(0, 1).sample(50, RngSeed(9))
    with pytest.raises(ConfigurationError, match="need n >= 300"):
        global_mle_1d(Gaussian(0, 1), x, Config1d(delta=0.1), RngSeed(10))


def test_config_validation():
    for bad in (dict(delta=0.0), dict(delta=0.6),
                dict(delta=0.1, r_override=-1.0),
                dict(delta=0.1, min_n_factor=0.0)):
        with pytest.raises(ConfigurationError):
            Config1d(**bad)


def test_global_coverage_laplace():
    base, n, delta = Laplace(0, 1), 10**4, 0.1
    root = RngSeed(77)
    misses = 0
    trials = 300
    for t in range(trials):
        ts = root.derive(t)
        lam = ts.derive(1).generator().uniform(-2.0, 2.0)
        x = base.sample(n, ts.derive(2)) + lam
        rep = global_mle_1d(base, x, Config1d(delta=delta), ts.derive(3))
        if abs(rep.lambda_hat - lam) > 1.3 * rep.theoretical_radius:
            misses += 1
    assert misses / trials <= 0.12

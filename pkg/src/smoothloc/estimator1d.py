"""Two-stage smoothed maximum-likelihood location estimator in one dimension.

Stage one pins down a crude location guess from a sample quantile on a
small slice of the data.  Stage two perturbs the remaining samples with
N(0, r^2) noise and takes a single Newton step on the smoothed score at
the guess.  The smoothing radius follows the schedule
r* = c * (log(2/delta)/n)^{1/8} * IQR unless overridden.

The two stages never share samples: the Newton-step analysis needs the
score evaluations to be independent of the initializer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimationError, PreconditionError, TailUnderflowError
from .models import Density1d
from .rng import RngSeed
from .smoothing import SmoothedModel1d, fisher_1d, smoothed_score_1d

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class Config1d:
    """Knobs of the two-stage estimator.

    delta is the failure probability of the coverage guarantee.  The
    multipliers expose constants that the analysis fixes only up to
    order: the r* schedule constant, the exponent of the sample split,
    the quantile half-width q, and the minimal-sample guard factor.
    """

    delta: float
    r_star_multiplier: float = 0.5
    init_fraction_exponent: float = 0.1
    q_multiplier: float = math.sqrt(2.0)
    alpha_grid_step: float = 1e-3
    r_override: float | None = None
    min_n_factor: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.5:
            raise ConfigurationError("delta must be in (0, 0.5]")
        for name in ("r_star_multiplier", "init_fraction_exponent",
                     "q_multiplier", "alpha_grid_step", "min_n_factor"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.r_override is not None and not self.r_override > 0:
            raise ConfigurationError("r_override must be positive when set")


@dataclass(frozen=True)
class EstimateReport:
    lambda_hat: float
    lambda_initial: float
    r_used: float
    fisher_at_r: float
    theoretical_radius: float
    n_used_local: int
    n_used_init: int


def local_mle_1d(base: Density1d, r: float, samples, lambda1: float,
                 seed: RngSeed) -> float:
    """One Newton step on the empirical smoothed score, from lambda1.

    Each sample is perturbed by independent N(0, r^2) noise drawn from
    `seed`, so the perturbed points are distributed exactly per the
    smoothed density and the population score identities apply verbatim.
    """
    if not r > 0:
        raise PreconditionError("smoothing radius r must be > 0")
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise PreconditionError("samples must be a nonempty 1-d sequence")
    noise = seed.generator().standard_normal(x.shape)
    perturbed = x + r * noise
    engine = SmoothedModel1d(base, r)
    try:
        score_mean = float(np.mean(smoothed_score_1d(engine, perturbed - lambda1)))
    except TailUnderflowError as exc:
        raise EstimationError(
            f"smoothed score underflowed at perturbed sample {exc.x} "
            f"(r={r}, lambda1={lambda1}); initialization is likely far off"
        ) from exc
    return lambda1 - score_mean / fisher_1d(engine)


def choose_alpha(base: Density1d, q: float, grid_step: float = 1e-3) -> float:
    """Quantile level whose central 2q-interval is narrowest.

    Scans alpha over the grid q + k*grid_step inside [q, 1-q] and
    returns the argmin of quantile(alpha+q) - quantile(alpha-q).  Grid
    points whose interval would touch probability 0 or 1 count as
    infinitely wide.  Ties (within 1e-12 relative) break toward 0.5,
    then toward the smaller alpha, so symmetric densities return 0.5
    exactly.
    """
    if not 0.0 < q < 0.5:
        raise PreconditionError("quantile half-width q must be in (0, 1/2)")
    if not grid_step > 0:
        raise PreconditionError("grid_step must be positive")
    n_steps = int(math.floor((1.0 - 2.0 * q) / grid_step + 1e-12))
    alphas = q + grid_step * np.arange(n_steps + 1)
    lo_p = alphas - q
    hi_p = alphas + q
    valid = (lo_p > 0.0) & (hi_p < 1.0)
    if not np.any(valid):
        raise PreconditionError("quantile grid is empty; q too close to 1/2")
    widths = np.full(alphas.shape, np.inf)
    widths[valid] = base.quantile(hi_p[valid]) - base.quantile(lo_p[valid])
    wmin = float(np.min(widths))
    near = widths <= wmin + _TIE_TOL * max(1.0, abs(wmin))
    candidates = alphas[near]
    dist = np.abs(candidates - 0.5)
    best = candidates[dist == dist.min()]
    return float(best.min())


def quantile_initial_estimate(base: Density1d, samples_init, alpha: float) -> float:
    """Crude location from the sample alpha-quantile.

    Uses the order statistic at 1-based index ceil(alpha*m), no
    interpolation, minus the model's alpha-quantile at shift zero; the
    difference is the shift that aligns the model quantile with the
    sample one.
    """
    x = np.sort(np.asarray(samples_init, dtype=float))
    m = x.size
    if m < 2:
        raise PreconditionError("initialization stage needs at least 2 samples")
    if not 0.0 < alpha < 1.0:
        raise PreconditionError("alpha must be in (0, 1)")
    idx = int(math.ceil(alpha * m))
    idx = min(max(idx, 1), m)
    return float(x[idx - 1]) - base.quantile(alpha)


def _minimal_n(cfg: Config1d) -> int:
    """Smallest n passing both the guard and the q < 1/2 constraint."""
    log_term = math.log(2.0 / cfg.delta)
    n_guard = cfg.min_n_factor * log_term
    n_q = log_term * (2.0 * cfg.q_multiplier) ** 2.5
    return int(math.ceil(max(n_guard, n_q, 2.0)))


def global_mle_1d(base: Density1d, samples, cfg: Config1d,
                  seed: RngSeed) -> EstimateReport:
    """Quantile initialization, then one smoothed-score Newton step.

    Splits off the first ceil((log(2/delta)/n)^e * n) samples for the
    quantile stage and runs the Newton step on the rest at radius
    r* = c * (log(2/delta)/n)^{1/8} * IQR (or cfg.r_override).  The
    reported theoretical_radius is the leading-order deviation bound
    sqrt(2 log(2/delta) / (n_local * I_{r*})).
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    log_term = math.log(2.0 / cfg.delta)
    if n < cfg.min_n_factor * log_term:
        raise ConfigurationError(
            f"sample budget too small: n={n} < {cfg.min_n_factor} * log(2/delta); "
            f"need n >= {_minimal_n(cfg)}"
        )
    q = cfg.q_multiplier * (log_term / n) ** 0.4
    if q >= 0.5:
        raise ConfigurationError(
            f"sample budget too small: quantile half-width q={q:.4f} >= 1/2; "
            f"need n >= {_minimal_n(cfg)}"
        )
    n_init = int(math.ceil((log_term / n) ** cfg.init_fraction_exponent * n))
    if n_init < 2 or n - n_init < 1:
        raise ConfigurationError(
            f"sample budget too small: initialization split {n_init} of {n} "
            f"leaves no usable stage; need n >= {_minimal_n(cfg)}"
        )
    alpha = choose_alpha(base, q, cfg.alpha_grid_step)
    lambda1 = quantile_initial_estimate(base, x[:n_init], alpha)
    if cfg.r_override is not None:
        r_star = cfg.r_override
    else:
        r_star = cfg.r_star_multiplier * (log_term / n) ** 0.125 * base.iqr()
    lambda_hat = local_mle_1d(base, r_star, x[n_init:], lambda1, seed)
    fisher = fisher_1d(SmoothedModel1d(base, r_star))
    n_local = n - n_init
    radius = math.sqrt(2.0 * log_term / (n_local * fisher))
    return EstimateReport(
        lambda_hat=float(lambda_hat),
        lambda_initial=float(lambda1),
        r_used=float(r_star),
        fisher_at_r=float(fisher),
        theoretical_radius=float(radius),
        n_used_local=int(n_local),
        n_used_init=int(n_init),
    )

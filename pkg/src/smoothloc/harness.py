"""Experiment drivers with deterministic CSV output.

Four batch studies (fisher sweep, 1-d coverage, sawtooth phase scan,
norm-concentration sweep) plus the config-file grammar that describes
them.  Every driver returns a :class:`CsvTable` whose bytes depend only
on the configuration and the root seed: trials are parallelized as
whole units, each trial derives its own RNG stream from (seed, trial
index), and results are reassembled in trial order before emission.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .concentration import (
    VectorGenerator,
    empirical_norm_quantile,
    exponential_generator,
    gaussian_generator,
    gaussian_tail,
    norm_bound,
    rademacher_generator,
)
from .errors import (
    ConfigurationError,
    EstimationError,
    PreconditionError,
    TailUnderflowError,
)
from .estimator1d import Config1d, global_mle_1d
from .estimatorhd import ConfigHd, global_mle_hd, m_norm
from .models import Density1d, GaussianSawtooth, ProductDensity, parse_model
from .rng import RngSeed
from .smoothing import SmoothedModel1d, fisher_1d

# Exceptions that turn a single trial into an error row instead of a crash.
_TRIAL_ERRORS = (
    EstimationError,
    TailUnderflowError,
    PreconditionError,
    ConfigurationError,
)


# -- CSV emission ------------------------------------------------------


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # fixed 9-significant-digit decimal form: reproducible diffs
        return "%.9g" % float(value)
    return str(value)


@dataclass(frozen=True)
class CsvTable:
    """Header plus rows, rendered with LF endings and UTF-8 bytes."""

    header: tuple
    rows: tuple

    def __post_init__(self):
        width = len(self.header)
        for row in self.rows:
            if len(row) != width:
                raise PreconditionError(
                    f"row width {len(row)} != header width {width}"
                )

    def to_csv(self) -> str:
        lines = [",".join(str(h) for h in self.header)]
        lines.extend(",".join(_fmt_cell(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def _table(header: Sequence[str], rows) -> CsvTable:
    return CsvTable(header=tuple(header), rows=tuple(tuple(r) for r in rows))


# -- config files ------------------------------------------------------
#
# Line-oriented `key = value` text.  `#` starts a comment, blank lines
# are ignored, keys may not repeat, and every key must belong to the
# schema of the declared experiment.  Lists are comma-separated.

_SCALAR_KINDS = ("int", "float", "str")


def _parse_scalar(kind: str, raw: str, key: str):
    raw = raw.strip()
    if not raw:
        raise ConfigurationError(f"empty value for key '{key}'")
    if kind == "str":
        return raw
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigurationError(
            f"key '{key}' expects {kind}, got {raw!r}"
        ) from None


def _parse_value(kind: str, raw: str, key: str):
    if kind in _SCALAR_KINDS:
        return _parse_scalar(kind, raw, key)
    base = kind[: -len("-list")]
    parts = [p.strip() for p in raw.split(",")]
    if any(not p for p in parts):
        raise ConfigurationError(f"key '{key}' has an empty list entry")
    return tuple(_parse_scalar(base, p, key) for p in parts)


def _format_value(kind: str, value) -> str:
    if kind == "int":
        return str(int(value))
    if kind == "float":
        return repr(float(value))
    if kind == "str":
        return str(value)
    base = kind[: -len("-list")]
    return ",".join(_format_value(base, v) for v in value)


_COMMON_KEYS = {"experiment": "str", "seed": "int", "threads": "int", "out": "str"}

_EXPERIMENT_KEYS = {
    "estimate": {
        "model": "str", "n": "int", "delta": "float", "r": "float",
        "lambda-true": "float",
    },
    "estimate-hd": {
        "model": "str", "n": "int", "delta": "float", "r": "float",
        "eta": "float", "lambda-true": "float-list",
    },
    "fisher-sweep": {"model": "str", "r-grid": "float-list"},
    "coverage": {
        "model": "str", "n": "int", "trials": "int", "delta": "float",
        "r": "float", "lambda-scale": "float",
    },
    "coverage-hd": {
        "model": "str", "n": "int", "trials": "int", "delta": "float",
        "r": "float", "eta": "float", "lambda-scale": "float",
    },
    "sawtooth-phase": {
        "w": "float", "slope": "float", "n-grid": "int-list",
        "trials": "int", "delta": "float", "min-n-factor": "float",
        "lambda-scale": "float",
    },
    "concentration": {
        "families": "str-list", "d-grid": "int-list",
        "delta-grid": "float-list", "trials": "int",
    },
}

# Light range screening at parse time; the target modules stay
# authoritative and re-check on use.
_RANGE_CHECKS: Mapping[str, Callable[[object], bool]] = {
    "n": lambda v: v >= 1,
    "trials": lambda v: v >= 1,
    "threads": lambda v: v >= 1,
    "delta": lambda v: 0.0 < v < 1.0,
    "r": lambda v: v > 0.0,
    "eta": lambda v: 0.0 < v < 1.0,
    "w": lambda v: v > 0.0,
    "slope": lambda v: v >= 0.0,
    "min-n-factor": lambda v: v > 0.0,
    "lambda-scale": lambda v: v >= 0.0,
    "n-grid": lambda v: all(x >= 1 for x in v),
    "r-grid": lambda v: all(x > 0.0 for x in v),
    "d-grid": lambda v: all(x >= 1 for x in v),
    "delta-grid": lambda v: all(0.0 < x < 1.0 for x in v),
    "families": lambda v: len(v) >= 1,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed experiment description: name plus typed key/value pairs."""

    experiment: str
    values: Mapping[str, object]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigurationError(
                f"experiment '{self.experiment}' needs key '{key}'"
            )
        return self.values[key]


def _schema_for(experiment: str) -> Mapping[str, str]:
    if experiment not in _EXPERIMENT_KEYS:
        known = ", ".join(sorted(_EXPERIMENT_KEYS))
        raise ConfigurationError(
            f"unknown experiment '{experiment}' (expected one of {known})"
        )
    schema = dict(_COMMON_KEYS)
    schema.update(_EXPERIMENT_KEYS[experiment])
    return schema


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigurationError(f"line {lineno}: missing key")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = value

    if "experiment" not in raw:
        raise ConfigurationError("config must declare 'experiment'")
    schema = _schema_for(raw["experiment"])

    values: dict[str, object] = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigurationError(
                f"unknown key '{key}' for experiment '{raw['experiment']}'"
            )
        parsed = _parse_value(schema[key], value, key)
        check = _RANGE_CHECKS.get(key)
        if check is not None and not check(parsed):
            raise ConfigurationError(f"key '{key}' out of range: {value}")
        values[key] = parsed
    return ExperimentConfig(experiment=raw["experiment"], values=values)


def format_config(cfg: ExperimentConfig) -> str:
    schema = _schema_for(cfg.experiment)
    lines = [f"experiment = {cfg.experiment}"]
    for key in sorted(k for k in cfg.values if k != "experiment"):
        if key not in schema:
            raise ConfigurationError(
                f"unknown key '{key}' for experiment '{cfg.experiment}'"
            )
        lines.append(f"{key} = {_format_value(schema[key], cfg.values[key])}")
    return "\n".join(lines) + "\n"


# -- parallel trial execution ------------------------------------------


def _map_trials(fn: Callable[[int], tuple], count: int, threads: int):
    # Whole trials (never pieces of one) go to the pool; ex.map keeps
    # submission order, so output is independent of the thread count.
    if threads <= 1:
        return [fn(t) for t in range(count)]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, range(count)))


def _median_or_none(values):
    return float(np.median(values)) if values else None


# -- fisher sweep ------------------------------------------------------


def run_fisher_sweep(model_spec: str, r_grid) -> CsvTable:
    """One row (r, fisher) per grid point for a 1-d model spec."""
    base = parse_model(model_spec)
    if not isinstance(base, Density1d):
        raise PreconditionError("fisher sweep needs a one-dimensional model")
    grid = [float(r) for r in r_grid]
    if not grid or any(r <= 0.0 for r in grid):
        raise PreconditionError("r grid must be non-empty and positive")
    rows = [(r, fisher_1d(SmoothedModel1d(base, r))) for r in grid]
    return _table(("r", "fisher"), rows)


# -- 1-d coverage ------------------------------------------------------


def _coverage_note(failures: int, errors: int, trials: int) -> str:
    rate = (failures + errors) / trials
    return (f"failure_rate={rate:.9g} failures={failures} "
            f"errors={errors} trials={trials}")


def run_coverage(model_spec: str, n: int, trials: int, delta: float,
                 seed: int, threads: int = 1, lambda_scale: float = 2.0,
                 r_override=None) -> CsvTable:
    """Monte Carlo coverage of the two-stage 1-d estimator.

    Each trial draws a uniform shift, samples the shifted model, and
    records |lambda_hat - lambda| against the reported radius plus a
    sample-mean baseline on the same local-stage data.  Failed trials
    become error rows; the trailing summary row reports the failure
    rate with errors counted against coverage.
    """
    base = parse_model(model_spec)
    if not isinstance(base, Density1d):
        raise PreconditionError("coverage needs a one-dimensional model")
    cfg = Config1d(delta=float(delta), r_override=r_override)
    root = RngSeed(int(seed))
    base_mean = base.mean()

    def one(t: int) -> tuple:
        ts = root.derive(t)
        lam = float(ts.derive(1).generator().uniform(-lambda_scale,
                                                     lambda_scale))
        x = base.sample(int(n), ts.derive(2)) + lam
        try:
            rep = global_mle_1d(base, x, cfg, ts.derive(3))
        except _TRIAL_ERRORS as e:
            return (t, lam, None, None, None, None, None, f"error: {e}")
        abs_err = abs(rep.lambda_hat - lam)
        baseline = abs(float(np.mean(x[rep.n_used_init:])) - base_mean - lam)
        within = abs_err <= rep.theoretical_radius
        return (t, lam, rep.lambda_hat, abs_err, baseline,
                rep.theoretical_radius, int(within), "")

    rows = _map_trials(one, int(trials), threads)
    ok = [r for r in rows if r[7] == ""]
    errors = len(rows) - len(ok)
    failures = sum(1 for r in ok if r[6] == 0)
    note = _coverage_note(failures, errors, len(rows))
    rows.append(("summary", None, None,
                 _median_or_none([r[3] for r in ok]),
                 _median_or_none([r[4] for r in ok]),
                 ok[0][5] if ok else None, None, note))
    return _table(("trial", "lambda_true", "lambda_hat", "abs_err",
                   "baseline_abs_err", "theoretical_radius", "within_flag",
                   "note"), rows)


# -- high-dimensional coverage -----------------------------------------


def run_coverage_hd(model_spec: str, n: int, trials: int, delta: float,
                    r: float, seed: int, eta: float = 0.25,
                    threads: int = 1, lambda_scale: float = 2.0) -> CsvTable:
    """Monte Carlo coverage of the product-model estimator in M-norm."""
    base = parse_model(model_spec)
    if not isinstance(base, ProductDensity):
        raise PreconditionError("coverage-hd needs a product model")
    cfg = ConfigHd(delta=float(delta), r=float(r), eta=float(eta))
    M = cfg.norm_matrix(base.dim)
    root = RngSeed(int(seed))

    def one(t: int) -> tuple:
        ts = root.derive(t)
        lam = ts.derive(1).generator().uniform(-lambda_scale, lambda_scale,
                                               size=base.dim)
        x = base.sample(int(n), ts.derive(2)) + lam
        try:
            rep = global_mle_hd(base, x, cfg, ts.derive(3))
        except _TRIAL_ERRORS as e:
            return (t, None, None, None, f"error: {e}")
        err = m_norm(rep.lambda_hat - lam, M)
        within = err <= rep.m_norm_error_bound
        return (t, err, rep.m_norm_error_bound, int(within), "")

    rows = _map_trials(one, int(trials), threads)
    ok = [r for r in rows if r[4] == ""]
    errors = len(rows) - len(ok)
    failures = sum(1 for r in ok if r[3] == 0)
    note = _coverage_note(failures, errors, len(rows))
    rows.append(("summary",
                 _median_or_none([r[1] for r in ok]),
                 ok[0][2] if ok else None, None, note))
    return _table(("trial", "err_norm", "error_bound", "within_flag",
                   "note"), rows)


# -- sawtooth phase scan -----------------------------------------------


def run_sawtooth_phase(w: float, slope: float, n_grid, trials: int,
                       delta: float, seed: int, threads: int = 1,
                       min_n_factor: float = 30.0,
                       lambda_scale: float = 2.0) -> CsvTable:
    """Normalized error of the 1-d estimator across sample sizes.

    One row per n in the grid with the median |lambda_hat - lambda|
    scaled by sqrt(n) and sqrt(n_local); the falling sqrt(n) column is
    the phase-transition direction, the sqrt(n_local) column is the
    schedule-free control normalization.
    """
    base = GaussianSawtooth(float(w), float(slope))
    cfg = Config1d(delta=float(delta), min_n_factor=float(min_n_factor))
    root = RngSeed(int(seed))
    rows = []
    for i_n, n in enumerate(int(v) for v in n_grid):

        def one(t: int, i_n=i_n, n=n) -> tuple:
            ts = root.derive(i_n, t)
            lam = float(ts.derive(1).generator().uniform(-lambda_scale,
                                                         lambda_scale))
            x = base.sample(n, ts.derive(2)) + lam
            try:
                rep = global_mle_1d(base, x, cfg, ts.derive(3))
            except _TRIAL_ERRORS as e:
                return (None, f"error: {e}")
            return (abs(rep.lambda_hat - lam), rep)

        results = _map_trials(one, int(trials), threads)
        errs = [a for a, _ in results if a is not None]
        n_errors = len(results) - len(errs)
        rep = next((r for _, r in results if not isinstance(r, str)), None)
        if rep is None:
            rows.append((n, None, None, None, None, None, None,
                         int(trials), n_errors))
            continue
        med = float(np.median(errs))
        rows.append((n, med * math.sqrt(n), rep.r_used, rep.fisher_at_r,
                     med, med * math.sqrt(rep.n_used_local),
                     rep.n_used_local, int(trials), n_errors))
    return _table(("n", "med_sqrt_n", "r_star", "fisher_at_r",
                   "median_abs_err", "med_sqrt_n_local", "n_local",
                   "trials", "errors"), rows)


# -- concentration sweep -----------------------------------------------

_UNIT_FAMILIES: Mapping[str, Callable[[int], VectorGenerator]] = {
    "gaussian": lambda d: gaussian_generator(np.eye(d)),
    "exponential": lambda d: exponential_generator(np.ones(d)),
    "rademacher": lambda d: rademacher_generator(np.ones(d)),
}


def run_concentration(families, d_grid, delta_grid, trials: int,
                      seed: int, threads: int = 1) -> CsvTable:
    """Empirical norm quantiles vs both bounds over a (family, d, delta) grid.

    Families use unit parameters at each dimension (identity covariance,
    unit scales, unit bounds).  Each cell is a single vectorized Monte
    Carlo batch on its own derived stream; cells parallelize as units.
    """
    for fam in families:
        if fam not in _UNIT_FAMILIES:
            known = ", ".join(sorted(_UNIT_FAMILIES))
            raise ConfigurationError(
                f"unknown family '{fam}' (expected one of {known})"
            )
    cells = [(fam, int(d), float(dl))
             for fam in families for d in d_grid for dl in delta_grid]
    root = RngSeed(int(seed))

    def one(i: int) -> tuple:
        fam, d, dl = cells[i]
        gen = _UNIT_FAMILIES[fam](d)
        q = empirical_norm_quantile(gen, int(trials), dl, root.derive(i))
        return (fam, d, dl, int(trials), q, norm_bound(gen.claimed, dl),
                gaussian_tail(gen.claimed.sigma, dl), int(seed))

    rows = _map_trials(one, len(cells), threads)
    return _table(("family", "d", "delta", "trials", "empirical_q",
                   "bound_subgamma", "bound_gaussian", "seed"), rows)


# -- config-driven dispatch --------------------------------------------


def run_experiment(cfg: ExperimentConfig, threads=None) -> CsvTable:
    """Run a batch experiment described by a parsed config."""
    threads = int(cfg.get("threads", 1) if threads is None else threads)
    if cfg.experiment == "fisher-sweep":
        return run_fisher_sweep(cfg.require("model"), cfg.require("r-grid"))
    if cfg.experiment == "coverage":
        return run_coverage(
            cfg.require("model"), n=cfg.require("n"),
            trials=cfg.require("trials"), delta=cfg.require("delta"),
            seed=cfg.require("seed"), threads=threads,
            lambda_scale=cfg.get("lambda-scale", 2.0),
            r_override=cfg.get("r"),
        )
    if cfg.experiment == "coverage-hd":
        return run_coverage_hd(
            cfg.require("model"), n=cfg.require("n"),
            trials=cfg.require("trials"), delta=cfg.require("delta"),
            r=cfg.require("r"), seed=cfg.require("seed"),
            eta=cfg.get("eta", 0.25), threads=threads,
            lambda_scale=cfg.get("lambda-scale", 2.0),
        )
    if cfg.experiment == "sawtooth-phase":
        return run_sawtooth_phase(
            w=cfg.require("w"), slope=cfg.require("slope"),
            n_grid=cfg.require("n-grid"), trials=cfg.require("trials"),
            delta=cfg.require("delta"), seed=cfg.require("seed"),
            threads=threads, min_n_factor=cfg.get("min-n-factor", 30.0),
            lambda_scale=cfg.get("lambda-scale", 2.0),
        )
    if cfg.experiment == "concentration":
        return run_concentration(
            families=cfg.require("families"), d_grid=cfg.require("d-grid"),
            delta_grid=cfg.require("delta-grid"),
            trials=cfg.require("trials"), seed=cfg.require("seed"),
            threads=threads,
        )
    raise ConfigurationError(
        f"experiment '{cfg.experiment}' is not a batch experiment"
    )

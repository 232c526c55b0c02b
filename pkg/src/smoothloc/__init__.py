"""Smoothed maximum-likelihood location estimation.

Estimate the translation lambda of a known density shape from samples,
using quadrature-backed smoothed scores and Fisher information, with
finite-sample error radii and subgamma norm-concentration bounds.
"""

from .errors import (
    ConfigurationError,
    EstimationError,
    ModelSpecError,
    PreconditionError,
    TailUnderflowError,
)
from .rng import RngSeed
from .models import (
    Density1d,
    DensityHd,
    Gaussian,
    GaussianMixture,
    GaussianSawtooth,
    Laplace,
    ProductDensity,
    covariance,
    format_model,
    iqr,
    parse_model,
    quantile,
    sample,
)
from .smoothing import (
    FisherMatrix,
    SmoothedModel1d,
    SmoothedModelHd,
    check_score_inversion_bias,
    fisher_1d,
    fisher_hd,
    smoothed_pdf_1d,
    smoothed_score_1d,
    smoothed_score_hd,
)
from .estimator1d import (
    Config1d,
    EstimateReport,
    choose_alpha,
    global_mle_1d,
    local_mle_1d,
    quantile_initial_estimate,
)
from .estimatorhd import (
    ConfigHd,
    ReportHd,
    geometric_median_of_means,
    global_mle_hd,
    local_mle_hd,
    m_norm,
    theoretical_bound_hd,
)
from .concentration import (
    SubgammaSpec,
    VectorGenerator,
    empirical_norm_quantile,
    exponential_generator,
    gaussian_generator,
    gaussian_tail,
    mgf_check,
    norm_bound,
    rademacher_generator,
    score_vector_generator,
    tail_bound,
)
from .harness import (
    CsvTable,
    ExperimentConfig,
    format_config,
    parse_config,
    run_concentration,
    run_coverage,
    run_coverage_hd,
    run_experiment,
    run_fisher_sweep,
    run_sawtooth_phase,
)

__all__ = [
    "ConfigurationError",
    "EstimationError",
    "ModelSpecError",
    "PreconditionError",
    "TailUnderflowError",
    "RngSeed",
    "Density1d",
    "DensityHd",
    "Gaussian",
    "GaussianMixture",
    "GaussianSawtooth",
    "Laplace",
    "ProductDensity",
    "covariance",
    "format_model",
    "iqr",
    "parse_model",
    "quantile",
    "sample",
    "FisherMatrix",
    "SmoothedModel1d",
    "SmoothedModelHd",
    "check_score_inversion_bias",
    "fisher_1d",
    "fisher_hd",
    "smoothed_pdf_1d",
    "smoothed_score_1d",
    "smoothed_score_hd",
    "Config1d",
    "EstimateReport",
    "choose_alpha",
    "global_mle_1d",
    "local_mle_1d",
    "quantile_initial_estimate",
    "ConfigHd",
    "ReportHd",
    "geometric_median_of_means",
    "global_mle_hd",
    "local_mle_hd",
    "m_norm",
    "theoretical_bound_hd",
    "SubgammaSpec",
    "VectorGenerator",
    "empirical_norm_quantile",
    "exponential_generator",
    "gaussian_generator",
    "gaussian_tail",
    "mgf_check",
    "norm_bound",
    "rademacher_generator",
    "score_vector_generator",
    "tail_bound",
    "CsvTable",
    "ExperimentConfig",
    "format_config",
    "parse_config",
    "run_concentration",
    "run_coverage",
    "run_coverage_hd",
    "run_experiment",
    "run_fisher_sweep",
    "run_sawtooth_phase",
]

__version__ = "0.1.0"

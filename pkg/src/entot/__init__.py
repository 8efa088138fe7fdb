"""Entropic optimal transport between empirical measures, CLT-based
inference, and entropy estimation for gaussian-noise-corrupted variables."""

__version__ = "0.1.0"

from .measures import (
    DiscreteMeasure,
    GaussianMixture,
    NoiseModel,
    UnsupportedDimensionError,
    add_gaussian_noise,
    convolve_with_noise,
    entropy_by_quadrature,
    mixture_density,
    quadrature_measure,
    rescale_measure,
    sample_mixture,
    subgaussian_proxy,
)
from .sinkhorn import (
    CostSpec,
    DualPotentials,
    NumericFailureError,
    SinkhornSolution,
    brute_force_value_2x2,
    extend_potential,
    potential_bound_check,
    primal_value,
    solve,
)
from .estimators import (
    EstimateReport,
    asymptotic_variance_noise,
    entropic_cost_estimate,
    entropy_estimate_ind,
    entropy_estimate_mg,
    entropy_estimate_paired,
)
from .experiments import (
    CltResult,
    CompareResult,
    ExperimentConfig,
    RateResult,
    compare_entropy_estimators,
    fit_loglog_slope,
    ks_test_normal,
    run_clt_experiment,
    run_rate_experiment,
)
from .seeding import derive_rng, derive_seed

__all__ = [
    "DiscreteMeasure",
    "GaussianMixture",
    "NoiseModel",
    "UnsupportedDimensionError",
    "add_gaussian_noise",
    "convolve_with_noise",
    "entropy_by_quadrature",
    "mixture_density",
    "quadrature_measure",
    "rescale_measure",
    "sample_mixture",
    "subgaussian_proxy",
    "CostSpec",
    "DualPotentials",
    "NumericFailureError",
    "SinkhornSolution",
    "brute_force_value_2x2",
    "extend_potential",
    "potential_bound_check",
    "primal_value",
    "solve",
    "EstimateReport",
    "asymptotic_variance_noise",
    "entropic_cost_estimate",
    "entropy_estimate_ind",
    "entropy_estimate_mg",
    "entropy_estimate_paired",
    "CltResult",
    "CompareResult",
    "ExperimentConfig",
    "RateResult",
    "compare_entropy_estimators",
    "fit_loglog_slope",
    "ks_test_normal",
    "run_clt_experiment",
    "run_rate_experiment",
    "derive_rng",
    "derive_seed",
]

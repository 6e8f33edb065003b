"""Bayesian global optimization for expensive noisy objectives.

A fully Bayesian squared-exponential GP surrogate (hyperparameters
marginalized by adaptive MCMC), a noise-filtered expected-improvement
acquisition averaged over the hyperparameter particles, and epistemic
uncertainty quantification of the optimum's location and value.
"""

from .acquisition import AcquisitionScores, eei, ei_closed_form, filtered_min
from .benchmarks import NoiseModel, benchmark_bounds, make_objective, oracle_optimum, true_mean
from .design import BoxBounds, lhs
from .gp import (
    Dataset,
    Hyperparameters,
    NumericalError,
    PosteriorGp,
    cov_matrix,
    gp_fit,
    point_predict,
    posterior_cov,
    posterior_mean,
    sample_functions,
    se_cov,
)
from .hyper import (
    McmcConfig,
    McmcDiagnostics,
    ParticleSet,
    log_marginal_likelihood,
    log_posterior,
    log_prior,
    map_estimate,
    sample_particles,
)
from .optimize import BgoConfig, IterationRecord, ObjectiveError, RunTrace, recommend, run
from .uq import QDistribution, argmin_histogram, pboo, q_distribution

__version__ = "0.1.0"

__all__ = [
    "AcquisitionScores",
    "BgoConfig",
    "BoxBounds",
    "Dataset",
    "Hyperparameters",
    "IterationRecord",
    "McmcConfig",
    "McmcDiagnostics",
    "NoiseModel",
    "NumericalError",
    "ObjectiveError",
    "ParticleSet",
    "PosteriorGp",
    "QDistribution",
    "RunTrace",
    "argmin_histogram",
    "benchmark_bounds",
    "cov_matrix",
    "eei",
    "ei_closed_form",
    "filtered_min",
    "gp_fit",
    "lhs",
    "log_marginal_likelihood",
    "log_posterior",
    "log_prior",
    "make_objective",
    "map_estimate",
    "oracle_optimum",
    "pboo",
    "point_predict",
    "posterior_cov",
    "posterior_mean",
    "q_distribution",
    "recommend",
    "run",
    "sample_functions",
    "sample_particles",
    "se_cov",
    "true_mean",
]

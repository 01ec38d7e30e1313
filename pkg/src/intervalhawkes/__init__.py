"""Multivariate Hawkes processes fitted to interval count data.

The likelihood of aggregated counts is intractable; this package estimates
it unbiasedly with a guided sequential Monte Carlo filter and samples
parameters with a pseudo-marginal Metropolis-Hastings chain.  It also
simulates processes exactly, computes the complete-data MLE when event
times are observed, and emits chain and fit diagnostics.
"""

from .dataio import (
    ChainDiagnostics,
    IntervalCounts,
    chain_diagnostics,
    effective_sample_size,
    read_counts_csv,
    read_events_csv,
    write_counts_csv,
    write_events_csv,
)
from .errors import ComputationError, InvalidInput
from .exact import complete_loglik, complete_loglik_grad, mle_fit
from .model import (
    EXPONENTIAL,
    GAMMA,
    ConstantBaseline,
    EpsilonMatrix,
    EventSequence,
    ModelSpec,
    ParameterVector,
    SplineBaseline,
    ValidationResult,
    baseline_integral,
    baseline_value,
    epsilon_advance,
    epsilon_from_history,
    epsilon_intensity,
    excitation_antiderivative,
    exponential_model,
    flat_parameter_labels,
    full_parameter_labels,
    gamma_model,
    intensity,
    kernel_row_ties,
    spectral_radius,
    stationary_mean_rates,
    total_intensity,
    validate,
)
from .pmmh import (
    ChainRecord,
    EnvelopeBands,
    ParameterSummary,
    PmmhConfig,
    default_init,
    load_chain,
    posterior_predictive_envelope,
    run_chain,
    save_chain,
    summarize,
    summarize_samples,
)
from .simulate import (
    AggregationGrid,
    aggregate,
    replicate_rng,
    simulate_counts,
    simulate_path,
    simulate_paths,
)
from .smc import (
    ParticleCloud,
    ParticleState,
    SmcConfig,
    SmcResult,
    interval_log_weight,
    propose_times_poisson,
    propose_times_uniform,
    propose_types,
    resample,
    smc_log_likelihood,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationGrid",
    "ChainDiagnostics",
    "ChainRecord",
    "ComputationError",
    "ConstantBaseline",
    "EnvelopeBands",
    "EpsilonMatrix",
    "EventSequence",
    "EXPONENTIAL",
    "GAMMA",
    "IntervalCounts",
    "InvalidInput",
    "ModelSpec",
    "ParameterSummary",
    "ParameterVector",
    "ParticleCloud",
    "ParticleState",
    "PmmhConfig",
    "SmcConfig",
    "SmcResult",
    "SplineBaseline",
    "ValidationResult",
    "aggregate",
    "baseline_integral",
    "baseline_value",
    "chain_diagnostics",
    "complete_loglik",
    "complete_loglik_grad",
    "default_init",
    "effective_sample_size",
    "epsilon_advance",
    "epsilon_from_history",
    "epsilon_intensity",
    "excitation_antiderivative",
    "exponential_model",
    "flat_parameter_labels",
    "full_parameter_labels",
    "gamma_model",
    "intensity",
    "interval_log_weight",
    "kernel_row_ties",
    "load_chain",
    "mle_fit",
    "posterior_predictive_envelope",
    "propose_times_poisson",
    "propose_times_uniform",
    "propose_types",
    "read_counts_csv",
    "read_events_csv",
    "replicate_rng",
    "resample",
    "run_chain",
    "save_chain",
    "simulate_counts",
    "simulate_path",
    "simulate_paths",
    "smc_log_likelihood",
    "spectral_radius",
    "stationary_mean_rates",
    "summarize",
    "summarize_samples",
    "total_intensity",
    "validate",
    "write_counts_csv",
    "write_events_csv",
]

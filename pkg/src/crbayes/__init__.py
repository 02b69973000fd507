"""Bayesian population-size posteriors and propriety diagnostics for closed
capture-recapture models with constant or Beta-heterogeneous detection."""

from .data import (
    CaptureHistory,
    InvalidHistoryError,
    SufficientStats,
    load_history,
    simulate_m0,
    simulate_mh,
    store_history,
    summarize,
)
from .gibbs import DaChains, DaConfig, SweepReport, da_gibbs, effective_sample_size, m_sweep
from .likelihoods import (
    BetaParams,
    HeterogeneityParams,
    NoFiniteMLEError,
    kahn_log_prob,
    m0_log_prob,
    m0_profile_log_lik,
    m0_profile_mle,
    mh_integrated_log_prob,
    mh_summary_log_prob,
    york_madigan_log_kernel,
)
from .posterior import (
    GammaPriors,
    MhMarginalKernel,
    PosteriorTable,
    PriorSpec,
    QuadratureConvergenceError,
    beta_expectation,
    log_beta_expectation,
    m0_marginal_log_kernel,
    mh_marginal_log_kernel,
    posterior_table,
)
from .propriety import (
    FitConfig,
    ProprietyReport,
    TailFitError,
    fit_tail_exponent,
    gamma_ratio_asymptotic_check,
    local_exponent,
    m0_propriety_condition,
    mh_propriety_condition,
    propriety_report,
    ym_propriety_condition,
)

__version__ = "0.1.0"

__all__ = [
    "BetaParams",
    "CaptureHistory",
    "DaChains",
    "DaConfig",
    "FitConfig",
    "GammaPriors",
    "HeterogeneityParams",
    "InvalidHistoryError",
    "MhMarginalKernel",
    "NoFiniteMLEError",
    "PosteriorTable",
    "PriorSpec",
    "ProprietyReport",
    "QuadratureConvergenceError",
    "SufficientStats",
    "SweepReport",
    "TailFitError",
    "beta_expectation",
    "da_gibbs",
    "effective_sample_size",
    "fit_tail_exponent",
    "gamma_ratio_asymptotic_check",
    "kahn_log_prob",
    "load_history",
    "local_exponent",
    "log_beta_expectation",
    "m0_log_prob",
    "m0_marginal_log_kernel",
    "m0_profile_log_lik",
    "m0_profile_mle",
    "m0_propriety_condition",
    "m_sweep",
    "mh_integrated_log_prob",
    "mh_marginal_log_kernel",
    "mh_propriety_condition",
    "mh_summary_log_prob",
    "posterior_table",
    "propriety_report",
    "simulate_m0",
    "simulate_mh",
    "store_history",
    "summarize",
    "ym_propriety_condition",
    "york_madigan_log_kernel",
]

"""Pliable rejection sampling: rejection sampling with a kernel-estimated proposal."""

from .diagnostics import (
    GofResult,
    GridSpec,
    chi2_grid_test,
    envelope_scan,
    integrate_grid,
    ks_test,
    rate_fit,
)
from .exceptions import (
    BudgetExhaustedError,
    InsufficientMassError,
    InvalidParameterError,
    PliableError,
)
from .kernel import (
    GAUSSIAN_KERNEL,
    KernelDensity,
    KernelEstimate,
    KernelRegression,
    KernelSpec,
    bandwidth,
    build_density_estimate,
    build_regression_estimate,
    eval_estimate,
    kernel_value,
)
from .proposal import (
    ExtendedPliableProposal,
    IsotropicGaussian,
    PliableProposal,
    build_pliable_proposal,
    empirical_mass,
    envelope,
    radius_r,
    rejection_constant,
    sample_proposal,
    tail_mass_gaussian,
)
from .sampler import (
    ExtendedPliableRejectionSampler,
    PliableRejectionSampler,
    RunReport,
    SamplerConfig,
    SimpleRejectionSampler,
    accept_test,
    eprs_run,
    eprs_schedule,
    phase_split_prs,
    prs_run,
    srs_run,
)
from .targets import (
    BudgetMeter,
    ClutterDataset,
    TargetDensity,
    clutter_data_gen,
    clutter_target,
    gaussian_target,
    make_target,
    numeric_cdf,
    peakiness_target,
    sin2d_target,
)

__version__ = "0.1.0"

__all__ = [
    "GofResult",
    "GridSpec",
    "chi2_grid_test",
    "envelope_scan",
    "integrate_grid",
    "ks_test",
    "rate_fit",
    "BudgetExhaustedError",
    "InsufficientMassError",
    "InvalidParameterError",
    "PliableError",
    "GAUSSIAN_KERNEL",
    "KernelDensity",
    "KernelEstimate",
    "KernelRegression",
    "KernelSpec",
    "bandwidth",
    "build_density_estimate",
    "build_regression_estimate",
    "eval_estimate",
    "kernel_value",
    "ExtendedPliableProposal",
    "IsotropicGaussian",
    "PliableProposal",
    "build_pliable_proposal",
    "empirical_mass",
    "envelope",
    "radius_r",
    "rejection_constant",
    "sample_proposal",
    "tail_mass_gaussian",
    "ExtendedPliableRejectionSampler",
    "PliableRejectionSampler",
    "RunReport",
    "SamplerConfig",
    "SimpleRejectionSampler",
    "accept_test",
    "eprs_run",
    "eprs_schedule",
    "phase_split_prs",
    "prs_run",
    "srs_run",
    "BudgetMeter",
    "ClutterDataset",
    "TargetDensity",
    "clutter_data_gen",
    "clutter_target",
    "gaussian_target",
    "make_target",
    "numeric_cdf",
    "peakiness_target",
    "sin2d_target",
]

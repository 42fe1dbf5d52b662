"""Two-regime threshold factor models for matrix-valued time series.

A p1 x p2 matrix observation X_t follows one of two loading configurations
depending on whether an observed scalar z_t falls below or above an unknown
threshold.  This package estimates the loading spaces, the threshold, and
the factor counts from lagged cross-covariance kernels; simulates the
generating processes at prescribed factor/threshold strengths; and runs
seeded Monte Carlo experiment grids over both.
"""

from .core import (
    EstimationConfig,
    MatrixSeries,
    RegimeMask,
    ThresholdSeries,
    build_dataset,
    quantile,
    regime_mask,
)
from .estimate import (
    CandidateScore,
    FactorCountEstimate,
    FittedModel,
    ThresholdEstimate,
    estimate_factor_counts,
    estimate_loadings,
    estimate_threshold,
    fit,
    g_hat,
    residual_E,
    select_threshold_variable,
)
from .harness import (
    ExperimentGrid,
    MetricsRow,
    MetricsTable,
    run_monte_carlo,
    summarize_distance_boxes,
)
from .lagcov import LagCovKernel, OmegaBlock, m_hat, m_hat_sweep, omega_hat
from .simulate import (
    DgpSpec,
    DgpTruth,
    SimulatedDataset,
    gen_factors_var1,
    gen_loading,
    gen_loading_pair,
    gen_noise_kronecker,
    make_rng,
    simulate_dataset,
    stream_seed,
)
from .spectral import (
    EigenDecomposition,
    LoadingSpace,
    complement,
    orthonormal_basis,
    space_distance,
    sym_eigen,
    top_k,
)

__version__ = "0.1.0"

__all__ = [
    "EstimationConfig",
    "MatrixSeries",
    "RegimeMask",
    "ThresholdSeries",
    "build_dataset",
    "quantile",
    "regime_mask",
    "CandidateScore",
    "FactorCountEstimate",
    "FittedModel",
    "ThresholdEstimate",
    "estimate_factor_counts",
    "estimate_loadings",
    "estimate_threshold",
    "fit",
    "g_hat",
    "residual_E",
    "select_threshold_variable",
    "ExperimentGrid",
    "MetricsRow",
    "MetricsTable",
    "run_monte_carlo",
    "summarize_distance_boxes",
    "LagCovKernel",
    "OmegaBlock",
    "m_hat",
    "m_hat_sweep",
    "omega_hat",
    "DgpSpec",
    "DgpTruth",
    "SimulatedDataset",
    "gen_factors_var1",
    "gen_loading",
    "gen_loading_pair",
    "gen_noise_kronecker",
    "make_rng",
    "simulate_dataset",
    "stream_seed",
    "EigenDecomposition",
    "LoadingSpace",
    "complement",
    "orthonormal_basis",
    "space_distance",
    "sym_eigen",
    "top_k",
    "__version__",
]

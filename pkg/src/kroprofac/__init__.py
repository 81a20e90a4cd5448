"""Regression for matrix-valued responses via Kronecker-product
factorization: estimation, baselines, simulation benchmarks, and a
two-group channel-effect testing pipeline."""

__version__ = "0.1.0"

from .tensor_core import Dims, kron, rearrange, rearrange_inv, vec, vec_inv
from .linalg import (
    SvdFactors,
    gram_schmidt,
    ols_solve,
    sin_theta,
    svd_full,
    svd_randomized,
    svd_truncated,
)
from .estimator import (
    FitReport,
    KroneckerCoefficients,
    fit_ols_nu,
    kro_pro_fac,
    kro_pro_fac_from_nu,
    predict,
    select_rank,
    variant_low_rank_response,
    variant_reduced_rank_ols,
)
from .baseline_mle import MleState, log_likelihood, mle_fit
from .simgen import (
    Dataset,
    NoiseModelSpec,
    gen_coefficients,
    gen_dataset,
    gen_design,
    gen_noise,
)
from .metrics import (
    ErrorReport,
    cumulative_singular_fraction,
    relative_error,
    subspace_errors,
)
from .analysis import (
    ChannelTestResult,
    GroupData,
    by_adjust,
    channel_effects,
    channel_t_tests,
    fit_group_mean,
    two_group_analysis,
)
from .errors import ConfigError, DimensionError, NumericError, SingularDesignError

__all__ = [
    "__version__",
    "Dims", "kron", "rearrange", "rearrange_inv", "vec", "vec_inv",
    "SvdFactors", "gram_schmidt", "ols_solve", "sin_theta",
    "svd_full", "svd_randomized", "svd_truncated",
    "FitReport", "KroneckerCoefficients", "fit_ols_nu", "kro_pro_fac",
    "kro_pro_fac_from_nu", "predict", "select_rank",
    "variant_low_rank_response", "variant_reduced_rank_ols",
    "MleState", "log_likelihood", "mle_fit",
    "Dataset", "NoiseModelSpec", "gen_coefficients", "gen_dataset",
    "gen_design", "gen_noise",
    "ErrorReport", "cumulative_singular_fraction", "relative_error",
    "subspace_errors",
    "ChannelTestResult", "GroupData", "by_adjust", "channel_effects",
    "channel_t_tests", "fit_group_mean", "two_group_analysis",
    "ConfigError", "DimensionError", "NumericError", "SingularDesignError",
]

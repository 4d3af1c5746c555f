"""Intrinsic local polynomial regression for SPD-valued responses.

Public surface: the flat-chart metrics and manifold operations (`spd`),
the closed-form estimators (`regression`), LOOCV bandwidth selection
(`bandwidth`), synthetic benchmarks (`simulation`), and the t-SNE / PGA
inspection tools (`embedding`). The `manifold-ilpr` CLI wires them into
file-based pipelines.
"""

from . import accel, bandwidth, embedding, errors, linalg, regression, simulation, spd
from .bandwidth import CvResult, GridSpec, loocv_score, select_bandwidth
from .embedding import EmbedConfig, Embedding, linearized_pga, pairwise_epm_distances, rie_tsne
from .regression import (
    Dataset,
    ExtrinsicAi,
    FitConfig,
    extrinsic_ai_fit,
    fit_at,
    gaussian_kernel,
    ilpr_epm_fit,
    ilpr_epm_fit_many,
    wls_oracle,
)
from .simulation import (
    McConfig,
    McReport,
    TrueModel,
    add_lognormal_noise,
    bias_scaling_experiment,
    gen_covariates,
    rmse_ai,
    run_monte_carlo,
    run_realization,
    true_response,
)
from .spd import AiMetric, EpmMetric, ai_distance, ai_exp, ai_log, epm_distance, epm_forward, epm_inverse, karcher_mean

__version__ = "0.1.0"

__all__ = [
    "accel",
    "bandwidth",
    "embedding",
    "errors",
    "linalg",
    "regression",
    "simulation",
    "spd",
    "AiMetric",
    "CvResult",
    "Dataset",
    "EmbedConfig",
    "Embedding",
    "EpmMetric",
    "ExtrinsicAi",
    "FitConfig",
    "GridSpec",
    "McConfig",
    "McReport",
    "TrueModel",
    "add_lognormal_noise",
    "ai_distance",
    "ai_exp",
    "ai_log",
    "bias_scaling_experiment",
    "epm_distance",
    "epm_forward",
    "epm_inverse",
    "extrinsic_ai_fit",
    "fit_at",
    "gaussian_kernel",
    "gen_covariates",
    "ilpr_epm_fit",
    "ilpr_epm_fit_many",
    "karcher_mean",
    "linearized_pga",
    "loocv_score",
    "pairwise_epm_distances",
    "rie_tsne",
    "rmse_ai",
    "run_monte_carlo",
    "run_realization",
    "select_bandwidth",
    "true_response",
    "wls_oracle",
]

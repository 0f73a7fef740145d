"""Fused low-rank and kernel attention: forwards, costs, errors, gradients."""

__version__ = "0.1.0"

from .analysis import (
    ErrorBoundRecord,
    RankRecord,
    UnbiasednessResult,
    error_bound_experiment,
    kernelized_rank_profile,
    unbiasedness_test,
)
from .attention import (
    AttentionConfig,
    FeatureMapSpec,
    HeadWeights,
    LowRankProjections,
    ModelParams,
    apply_feature_map,
    full_attention,
    kernel_attention,
    linformer_attention,
    sample_model_params,
    sample_params,
)
from .costmodel import (
    CostBreakdown,
    crossover_n,
    flops_flurka,
    flops_full,
    flops_kernel,
    flops_lowrank,
)
from .fusion import (
    flurka_attention,
    flurka_naive_attention,
    make_theorem_projections,
    theorem_k_dim,
    uptrain_transfer,
    variant_forward,
)
from .grad import attention_backward, flurka_backward, gradient_check, toy_train
from .rng import RngStream
from .tensor import (
    Matrix,
    SpectralEstimate,
    gaussian,
    matmul,
    norm_inf,
    norm_spectral,
    row_softmax,
    singular_values,
)

__all__ = [
    "AttentionConfig",
    "CostBreakdown",
    "ErrorBoundRecord",
    "FeatureMapSpec",
    "HeadWeights",
    "LowRankProjections",
    "Matrix",
    "ModelParams",
    "RankRecord",
    "RngStream",
    "SpectralEstimate",
    "UnbiasednessResult",
    "apply_feature_map",
    "attention_backward",
    "crossover_n",
    "error_bound_experiment",
    "flops_flurka",
    "flops_full",
    "flops_kernel",
    "flops_lowrank",
    "flurka_attention",
    "flurka_backward",
    "flurka_naive_attention",
    "full_attention",
    "gaussian",
    "gradient_check",
    "kernel_attention",
    "kernelized_rank_profile",
    "linformer_attention",
    "make_theorem_projections",
    "matmul",
    "norm_inf",
    "norm_spectral",
    "row_softmax",
    "sample_model_params",
    "sample_params",
    "singular_values",
    "theorem_k_dim",
    "toy_train",
    "unbiasedness_test",
    "uptrain_transfer",
    "variant_forward",
    "__version__",
]

"""Fused low-rank + kernel attention and its supporting constructions.

The fused operator contracts k and v along the sequence axis first (d_k
rows), then kernelizes the contracted projections. Cost therefore never
scales with n in the attention products themselves. A naive variant that
kernelizes at full sequence length before contracting is kept as a
reference point; it is mathematically distinct and strictly more work.
"""

from __future__ import annotations

import math

import numpy as np

from .attention import (
    VARIANT_FLURKA,
    VARIANT_FULL,
    VARIANT_KERNEL,
    VARIANT_LOWRANK,
    AttentionConfig,
    FeatureMapSpec,
    HeadWeights,
    LowRankProjections,
    ModelParams,
    _check_inputs,
    _check_proj,
    _clamp_denominator,
    _finish,
    _kernelized_head,
    apply_feature_map,
    full_attention,
    kernel_attention,
    linformer_attention,
)
from .errors import ConfigurationError, TransferError
from .rng import RngStream
from .tensor import gaussian, norm_inf


def flurka_attention(
    q,
    k,
    v,
    heads: tuple[HeadWeights, ...],
    proj: LowRankProjections,
    spec: FeatureMapSpec,
    cfg: AttentionConfig,
) -> np.ndarray:
    """Fused attention: contract first, kernelize the contracted tensors.

    Per head: phi(q Wq) (phi((e1 k) Wk)^T ((e2 v) Wv)), row-normalized by
    phi(q Wq) (phi((e1 k) Wk)^T 1). The d_k x d_model contractions are the
    only place the sequence axis is touched before the final applicator.
    """
    q, k, v = _check_inputs(q, k, v, cfg, heads)
    _check_proj(proj, cfg)
    kd = proj.e1 @ k
    vd = proj.e2 @ v
    scale = 1.0 / math.sqrt(cfg.d_head) if spec.scale_inputs else 1.0
    out = np.empty((cfg.n, cfg.d_model))
    for i, hw in enumerate(heads):
        block = slice(i * cfg.d_head, (i + 1) * cfg.d_head)
        out[:, block] = _kernelized_head(
            scale * (q @ hw.wq), kd @ hw.wk, vd @ hw.wv, spec, "flurka_attention"
        )
    return _finish(out, "flurka_attention")


def flurka_naive_attention(
    q,
    k,
    v,
    heads: tuple[HeadWeights, ...],
    proj: LowRankProjections,
    spec: FeatureMapSpec,
    cfg: AttentionConfig,
) -> np.ndarray:
    """Fusion in the written-down order: kernelize at full length, then contract.

    As written the composition does not type-check (the contraction meets a
    d_p x d_h product), so the contracted feature block is transposed before
    the applicator: phi(q Wq) (e1 phi(k Wk))^T (e2 (v Wv)). Intermediate
    kernelized tensors are materialized at full sequence length, which is
    exactly the cost the fused form above avoids.
    """
    q, k, v = _check_inputs(q, k, v, cfg, heads)
    _check_proj(proj, cfg)
    scale = 1.0 / math.sqrt(cfg.d_head) if spec.scale_inputs else 1.0
    out = np.empty((cfg.n, cfg.d_model))
    for i, hw in enumerate(heads):
        block = slice(i * cfg.d_head, (i + 1) * cfg.d_head)
        pq = apply_feature_map(scale * (q @ hw.wq), spec)
        pk = apply_feature_map(k @ hw.wk, spec)  # (n, d_p), full length
        kd = proj.e1 @ pk  # (d_k, d_p)
        vd = proj.e2 @ (v @ hw.wv)  # (d_k, d_h)
        num = pq @ (kd.T @ vd)
        den = _clamp_denominator(pq @ kd.sum(axis=0), "flurka_naive_attention")
        out[:, block] = num / den[:, None]
    return _finish(out, "flurka_naive_attention")


def error_decomposition(
    full_out: np.ndarray, lowrank_out: np.ndarray, fused_out: np.ndarray
) -> tuple[float, float, float]:
    """Triangle split of the fused error against the exact softmax output.

    Returns (err_fused, err_kernel_term, err_lowrank_term) in the induced
    infinity norm, where err_fused = |fused - full|, err_kernel_term =
    |fused - lowrank| (same projections), err_lowrank_term = |lowrank -
    full|. By the triangle inequality err_fused <= sum of the two terms.
    """
    return (
        norm_inf(fused_out - full_out),
        norm_inf(fused_out - lowrank_out),
        norm_inf(lowrank_out - full_out),
    )


def theorem_k_dim(d: int, eps2: float, eps3: float) -> int:
    """Projection rows k = ceil(5 ln(d) / (eps2^2 - eps3^2))."""
    if d < 2:
        raise ConfigurationError("theorem_k_dim needs d >= 2")
    gap = eps2 * eps2 - eps3 * eps3
    if gap <= 0.0:
        raise ConfigurationError("theorem_k_dim needs eps2^2 > eps3^2")
    return math.ceil(5.0 * math.log(d) / gap)


def make_theorem_projections(
    n: int, k_dim: int, delta: float, seed: int
) -> LowRankProjections:
    """Theorem-style pair e1 = delta*R, e2 = exp(-delta)*R with shared R.

    R is (k_dim, n) with i.i.d. N(0, 1/k_dim) entries, stored in the same
    (d_k, n) orientation as the practical projections.
    """
    if n < 1 or k_dim < 1:
        raise ConfigurationError("make_theorem_projections needs n >= 1 and k_dim >= 1")
    if not (delta > 0.0 and math.isfinite(delta)):
        raise ConfigurationError(f"delta must be positive and finite, got {delta}")
    r = gaussian(RngStream(seed), k_dim, n, std=1.0 / math.sqrt(k_dim))
    return LowRankProjections(
        e1=delta * r, e2=math.exp(-delta) * r, mode="theorem", delta=delta
    )


def uptrain_transfer(
    base: ModelParams, cfg: AttentionConfig, feature_map: FeatureMapSpec | None = None
) -> ModelParams:
    """Re-package a trained low-rank or kernel model as a fused model.

    Pieces that exist in the base are copied bit-exactly; missing pieces
    are drawn fresh from cfg.seed (projections) or default to a PRF map
    seeded by cfg.seed (feature map). Shape mismatches raise TransferError
    naming the offending tensor.
    """
    if base.kind not in (VARIANT_LOWRANK, VARIANT_KERNEL):
        raise TransferError(f"can only up-train from lowrank or kernel, got {base.kind!r}")
    if len(base.heads) != cfg.heads:
        raise TransferError(f"base has {len(base.heads)} heads, config wants {cfg.heads}")
    want = (cfg.d_model, cfg.d_head)
    for i, hw in enumerate(base.heads):
        for name in ("wq", "wk", "wv"):
            got = getattr(hw, name).shape
            if got != want:
                raise TransferError(f"head {i} {name} has shape {got}, expected {want}")

    if base.kind == VARIANT_LOWRANK:
        if base.proj is None:
            raise TransferError("lowrank base is missing projections")
        got = base.proj.e1.shape
        if got != (cfg.d_k, cfg.n):
            raise TransferError(f"projection e1 has shape {got}, expected {(cfg.d_k, cfg.n)}")
        proj = base.proj
        fmap = feature_map if feature_map is not None else FeatureMapSpec(seed=cfg.seed)
    else:
        if base.feature_map is None:
            raise TransferError("kernel base is missing a feature map spec")
        if feature_map is not None and feature_map != base.feature_map:
            raise TransferError("kernel base already pins the feature map")
        fmap = base.feature_map
        rng = RngStream(cfg.seed)
        e_std = 1.0 / math.sqrt(cfg.d_k)
        proj = LowRankProjections(
            e1=gaussian(rng, cfg.d_k, cfg.n, std=e_std),
            e2=gaussian(rng, cfg.d_k, cfg.n, std=e_std),
            mode="practical",
        )
    return ModelParams(kind=VARIANT_FLURKA, heads=base.heads, proj=proj, feature_map=fmap)


def variant_forward(q, k, v, params: ModelParams, cfg: AttentionConfig) -> np.ndarray:
    """Dispatch q/k/v through whichever variant params describes."""
    if params.kind == VARIANT_FULL:
        return full_attention(q, k, v, params.heads, cfg)
    if params.kind == VARIANT_LOWRANK:
        return linformer_attention(q, k, v, params.heads, params.proj, cfg)
    if params.kind == VARIANT_KERNEL:
        return kernel_attention(q, k, v, params.heads, params.feature_map, cfg)
    if params.kind == VARIANT_FLURKA:
        return flurka_attention(q, k, v, params.heads, params.proj, params.feature_map, cfg)
    raise ConfigurationError(f"unknown model kind {params.kind!r}")

"""Attention variants: full softmax, low-rank projected, and kernelized.

Conventions shared by every variant:
  - inputs q, k, v are (n, d_model); outputs are (n, d_model) head concats
  - no output projection after the concat
  - query projections are scaled by 1/sqrt(d_head) (for kernelized paths
    only when the feature map spec asks for it)
  - kernelized paths compute right-to-left and never build an n x n matrix
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DenominatorClampWarning, FeatureMapOverflowError
from .rng import RngStream
from .tensor import as_matrix, gaussian

DENOM_CLAMP = 1e-12
_PRF_EXP_LIMIT = 700.0

PRF = "prf"
ELU = "elu"
FEATURE_KINDS = (PRF, ELU)

VARIANT_FULL = "full"
VARIANT_LOWRANK = "lowrank"
VARIANT_KERNEL = "kernel"
VARIANT_FLURKA = "flurka"
MODEL_KINDS = (VARIANT_FULL, VARIANT_LOWRANK, VARIANT_KERNEL, VARIANT_FLURKA)


@dataclass(frozen=True)
class AttentionConfig:
    """Dimensions and seed for one attention problem instance."""

    n: int
    d_model: int
    d_head: int
    heads: int
    d_k: int
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "d_model", "d_head", "heads", "d_k"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model != self.heads * self.d_head:
            raise ConfigurationError(
                f"d_model={self.d_model} must equal heads*d_head={self.heads * self.d_head}"
            )
        if self.d_k > self.n:
            raise ConfigurationError(f"d_k={self.d_k} must not exceed n={self.n}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass(frozen=True)
class HeadWeights:
    """Per-head projection matrices, each (d_model, d_head)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wq", as_matrix(self.wq))
        object.__setattr__(self, "wk", as_matrix(self.wk))
        object.__setattr__(self, "wv", as_matrix(self.wv))


@dataclass(frozen=True)
class LowRankProjections:
    """Sequence-length contraction pair, each (d_k, n)."""

    e1: np.ndarray
    e2: np.ndarray
    mode: str = "practical"
    delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "e1", as_matrix(self.e1))
        object.__setattr__(self, "e2", as_matrix(self.e2))
        if self.mode not in ("practical", "theorem", "identity"):
            raise ConfigurationError(f"unknown projection mode {self.mode!r}")
        if self.e1.shape != self.e2.shape:
            raise ConfigurationError(
                f"e1 shape {self.e1.shape} != e2 shape {self.e2.shape}"
            )


@dataclass(frozen=True)
class FeatureMapSpec:
    """Kernel feature map choice.

    kind "prf": positive random features, m features (default d_head),
    weights drawn once from `seed`. kind "elu": elu(x)+1 elementwise,
    feature dim pinned to d_head.
    """

    kind: str = PRF
    m: int | None = None
    seed: int = 0
    scale_inputs: bool = True

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown feature map kind {self.kind!r}")
        if self.m is not None and self.m < 1:
            raise ConfigurationError(f"feature count m must be >= 1, got {self.m}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


@dataclass(frozen=True)
class ModelParams:
    """Everything a variant forward needs besides the q/k/v inputs."""

    kind: str
    heads: tuple[HeadWeights, ...]
    proj: LowRankProjections | None = None
    feature_map: FeatureMapSpec | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "heads", tuple(self.heads))
        if self.kind in (VARIANT_LOWRANK, VARIANT_FLURKA) and self.proj is None:
            raise ConfigurationError(f"{self.kind} params need projections")
        if self.kind in (VARIANT_KERNEL, VARIANT_FLURKA) and self.feature_map is None:
            raise ConfigurationError(f"{self.kind} params need a feature map spec")


def sample_params(cfg: AttentionConfig) -> tuple[tuple[HeadWeights, ...], LowRankProjections]:
    """Draw head weights and projections from cfg.seed.

    Draw order is pinned: per head wq, wk, wv with entries N(0, 1/d_model),
    then e1 and e2 with entries N(0, 1/d_k).
    """
    rng = RngStream(cfg.seed)
    w_std = 1.0 / math.sqrt(cfg.d_model)
    heads = tuple(
        HeadWeights(
            wq=gaussian(rng, cfg.d_model, cfg.d_head, std=w_std),
            wk=gaussian(rng, cfg.d_model, cfg.d_head, std=w_std),
            wv=gaussian(rng, cfg.d_model, cfg.d_head, std=w_std),
        )
        for _ in range(cfg.heads)
    )
    e_std = 1.0 / math.sqrt(cfg.d_k)
    e1 = gaussian(rng, cfg.d_k, cfg.n, std=e_std)
    e2 = gaussian(rng, cfg.d_k, cfg.n, std=e_std)
    return heads, LowRankProjections(e1=e1, e2=e2, mode="practical")


def sample_model_params(
    cfg: AttentionConfig, kind: str, feature_map: FeatureMapSpec | None = None
) -> ModelParams:
    """Bundle sampled parameters for the requested variant."""
    if kind not in MODEL_KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}")
    heads, proj = sample_params(cfg)
    needs_map = kind in (VARIANT_KERNEL, VARIANT_FLURKA)
    if feature_map is None and needs_map:
        feature_map = FeatureMapSpec(kind=PRF, seed=cfg.seed)
    return ModelParams(
        kind=kind,
        heads=heads,
        proj=proj if kind in (VARIANT_LOWRANK, VARIANT_FLURKA) else None,
        feature_map=feature_map if needs_map else None,
    )


@functools.lru_cache(maxsize=64)
def _prf_weights(seed: int, m: int, d_h: int) -> np.ndarray:
    """PRF weight rows w_i ~ N(0, I_{d_h}), drawn once per (seed, m, d_h)."""
    return RngStream(seed).gaussians(m * d_h).reshape(m, d_h)


def feature_dim(spec: FeatureMapSpec, d_head: int) -> int:
    if spec.kind == ELU:
        if spec.m is not None and spec.m != d_head:
            raise ConfigurationError("elu feature dim is fixed at d_head")
        return d_head
    return spec.m if spec.m is not None else d_head


def apply_feature_map(x: np.ndarray, spec: FeatureMapSpec) -> np.ndarray:
    """Map rows of x through the configured kernel feature map.

    Output is (rows, d_p), strictly positive. PRF raises when any exponent
    exceeds 700; rescale the inputs (see FeatureMapSpec.scale_inputs).
    """
    x = as_matrix(x)
    if spec.kind == ELU:
        feature_dim(spec, x.shape[1])
        return np.where(x >= 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))
    m = feature_dim(spec, x.shape[1])
    w = _prf_weights(spec.seed, m, x.shape[1])
    args = x @ w.T
    args -= 0.5 * np.einsum("ij,ij->i", x, x)[:, None]
    peak = float(args.max())
    if peak > _PRF_EXP_LIMIT:
        raise FeatureMapOverflowError(
            f"PRF exponent {peak:.1f} exceeds {_PRF_EXP_LIMIT:.0f}; "
            "scale the inputs down (FeatureMapSpec.scale_inputs)"
        )
    np.exp(args, out=args)
    args *= 1.0 / math.sqrt(m)
    return args


def _check_inputs(q, k, v, cfg: AttentionConfig, heads: tuple[HeadWeights, ...]):
    q = as_matrix(q, cfg.n, cfg.d_model)
    k = as_matrix(k, cfg.n, cfg.d_model)
    v = as_matrix(v, cfg.n, cfg.d_model)
    if len(heads) != cfg.heads:
        raise ConfigurationError(f"expected {cfg.heads} head weight sets, got {len(heads)}")
    for hw in heads:
        for name in ("wq", "wk", "wv"):
            w = getattr(hw, name)
            if w.shape != (cfg.d_model, cfg.d_head):
                raise ConfigurationError(
                    f"{name} shape {w.shape} != {(cfg.d_model, cfg.d_head)}"
                )
    return q, k, v


def _check_proj(proj: LowRankProjections, cfg: AttentionConfig):
    if proj.e1.shape != (cfg.d_k, cfg.n):
        raise ConfigurationError(
            f"projection shape {proj.e1.shape} != {(cfg.d_k, cfg.n)}"
        )


def _finish(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"{op} produced non-finite entries")
    return out


def _softmax_head(qs: np.ndarray, kp: np.ndarray, vp: np.ndarray) -> np.ndarray:
    """softmax(qs kp^T) vp with the softmax taken in place, row-wise."""
    logits = qs @ kp.T
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits @ vp


def _clamp_denominator(den: np.ndarray, op: str) -> np.ndarray:
    if den.min() < DENOM_CLAMP:
        warnings.warn(
            f"{op}: {int((den < DENOM_CLAMP).sum())} row denominators clamped to {DENOM_CLAMP}",
            DenominatorClampWarning,
            stacklevel=4,
        )
        den = np.maximum(den, DENOM_CLAMP)
    return den


def _kernelized_head(
    qs: np.ndarray, kp: np.ndarray, vp: np.ndarray, spec: FeatureMapSpec, op: str
) -> np.ndarray:
    """phi(qs) (phi(kp)^T vp) with row normalization, right-to-left."""
    pq = apply_feature_map(qs, spec)
    pk = apply_feature_map(kp, spec)
    num = pq @ (pk.T @ vp)
    den = _clamp_denominator(pq @ pk.sum(axis=0), op)
    return num / den[:, None]


def full_attention(q, k, v, heads: tuple[HeadWeights, ...], cfg: AttentionConfig) -> np.ndarray:
    """Quadratic softmax attention, heads concatenated."""
    q, k, v = _check_inputs(q, k, v, cfg, heads)
    scale = 1.0 / math.sqrt(cfg.d_head)
    out = np.empty((cfg.n, cfg.d_model))
    for i, hw in enumerate(heads):
        block = slice(i * cfg.d_head, (i + 1) * cfg.d_head)
        out[:, block] = _softmax_head(scale * (q @ hw.wq), k @ hw.wk, v @ hw.wv)
    return _finish(out, "full_attention")


def linformer_attention(
    q, k, v, heads: tuple[HeadWeights, ...], proj: LowRankProjections, cfg: AttentionConfig
) -> np.ndarray:
    """Low-rank attention: contract k and v along the sequence axis first."""
    q, k, v = _check_inputs(q, k, v, cfg, heads)
    _check_proj(proj, cfg)
    kd = proj.e1 @ k
    vd = proj.e2 @ v
    scale = 1.0 / math.sqrt(cfg.d_head)
    out = np.empty((cfg.n, cfg.d_model))
    for i, hw in enumerate(heads):
        block = slice(i * cfg.d_head, (i + 1) * cfg.d_head)
        out[:, block] = _softmax_head(scale * (q @ hw.wq), kd @ hw.wk, vd @ hw.wv)
    return _finish(out, "linformer_attention")


def kernel_attention(
    q, k, v, heads: tuple[HeadWeights, ...], spec: FeatureMapSpec, cfg: AttentionConfig
) -> np.ndarray:
    """Kernelized attention in feature space; cost linear in n."""
    q, k, v = _check_inputs(q, k, v, cfg, heads)
    scale = 1.0 / math.sqrt(cfg.d_head) if spec.scale_inputs else 1.0
    out = np.empty((cfg.n, cfg.d_model))
    for i, hw in enumerate(heads):
        block = slice(i * cfg.d_head, (i + 1) * cfg.d_head)
        out[:, block] = _kernelized_head(
            scale * (q @ hw.wq), k @ hw.wk, v @ hw.wv, spec, "kernel_attention"
        )
    return _finish(out, "kernel_attention")

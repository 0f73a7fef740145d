"""Reverse-mode gradients for every attention variant, and a toy trainer.

All backward passes are hand-derived (no autograd) and are held to central
finite differences at 1e-5 by the test suite. Projections e1/e2 are frozen
unless learn_projections is set; PRF feature weights are always frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .attention import (
    MODEL_KINDS,
    VARIANT_FLURKA,
    VARIANT_KERNEL,
    VARIANT_LOWRANK,
    AttentionConfig,
    FeatureMapSpec,
    HeadWeights,
    LowRankProjections,
    ModelParams,
    _check_inputs,
    _check_proj,
    _prf_weights,
    apply_feature_map,
    sample_model_params,
)
from .errors import ConfigurationError, TransferError
from .fusion import uptrain_transfer, variant_forward
from .rng import RngStream
from .tensor import as_matrix, gaussian

DENOM_CLAMP = 1e-12


@dataclass(frozen=True)
class HeadGrads:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray


@dataclass(frozen=True)
class AttentionGrads:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    heads: tuple[HeadGrads, ...]
    e1: np.ndarray | None = None
    e2: np.ndarray | None = None


def _feature_map_backward(x, spec: FeatureMapSpec, phi_x, d_phi):
    """d(loss)/dx given d(loss)/d(phi(x)); phi_x is the cached forward value."""
    if spec.kind == "elu":
        return d_phi * np.where(x >= 0.0, 1.0, np.exp(np.minimum(x, 0.0)))
    m = phi_x.shape[1]
    w = _prf_weights(spec.seed, m, x.shape[1])
    t = d_phi * phi_x  # d psi_i(x)/dx = psi_i(x) (w_i - x)
    return t @ w - t.sum(axis=1)[:, None] * x


def _kernelized_head_backward(qs, kp, vp, spec, d_out):
    """Backward through phi(qs)(phi(kp)^T vp) with row normalization."""
    pq = apply_feature_map(qs, spec)
    pk = apply_feature_map(kp, spec)
    z = pk.T @ vp
    u = pk.sum(axis=0)
    num = pq @ z
    den_raw = pq @ u
    den = np.maximum(den_raw, DENOM_CLAMP)
    d_num = d_out / den[:, None]
    d_den = -(d_out * num).sum(axis=1) / (den * den)
    d_den[den_raw < DENOM_CLAMP] = 0.0  # clamped rows are flat in den
    d_pq = d_num @ z.T + d_den[:, None] * u[None, :]
    d_z = pq.T @ d_num
    d_u = pq.T @ d_den
    d_pk = vp @ d_z.T + d_u[None, :]
    d_vp = pk @ d_z
    d_qs = _feature_map_backward(qs, spec, pq, d_pq)
    d_kp = _feature_map_backward(kp, spec, pk, d_pk)
    return d_qs, d_kp, d_vp


def _softmax_head_backward(qs, kp, vp, d_out):
    """Backward through row_softmax(qs kp^T) vp."""
    logits = qs @ kp.T
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    a = logits
    d_a = d_out @ vp.T
    d_vp = a.T @ d_out
    d_logits = a * (d_a - (d_a * a).sum(axis=1, keepdims=True))
    d_qs = d_logits @ kp
    d_kp = d_logits.T @ qs
    return d_qs, d_kp, d_vp


def attention_backward(
    q,
    k,
    v,
    params: ModelParams,
    cfg: AttentionConfig,
    upstream: np.ndarray,
    learn_projections: bool = False,
) -> AttentionGrads:
    """Gradients of sum(upstream * output) for any variant.

    Returns gradients for q, k, v and every head's wq/wk/wv; projection
    gradients are populated only when learn_projections is set.
    """
    q, k, v = _check_inputs(q, k, v, cfg, params.heads)
    upstream = as_matrix(upstream, cfg.n, cfg.d_model)
    kind = params.kind
    contracted = kind in (VARIANT_LOWRANK, VARIANT_FLURKA)
    kernelized = kind in (VARIANT_KERNEL, VARIANT_FLURKA)
    spec = params.feature_map
    if contracted:
        _check_proj(params.proj, cfg)
        k_in = params.proj.e1 @ k
        v_in = params.proj.e2 @ v
    else:
        k_in, v_in = k, v
    if kernelized:
        scale = 1.0 / math.sqrt(cfg.d_head) if spec.scale_inputs else 1.0
    else:
        scale = 1.0 / math.sqrt(cfg.d_head)

    d_q = np.zeros_like(q)
    d_k_in = np.zeros_like(k_in)
    d_v_in = np.zeros_like(v_in)
    head_grads = []
    for i, hw in enumerate(params.heads):
        d_out = upstream[:, i * cfg.d_head : (i + 1) * cfg.d_head]
        qs = scale * (q @ hw.wq)
        kp = k_in @ hw.wk
        vp = v_in @ hw.wv
        if kernelized:
            d_qs, d_kp, d_vp = _kernelized_head_backward(qs, kp, vp, spec, d_out)
        else:
            d_qs, d_kp, d_vp = _softmax_head_backward(qs, kp, vp, d_out)
        d_qp = scale * d_qs
        d_q += d_qp @ hw.wq.T
        d_k_in += d_kp @ hw.wk.T
        d_v_in += d_vp @ hw.wv.T
        head_grads.append(
            HeadGrads(wq=q.T @ d_qp, wk=k_in.T @ d_kp, wv=v_in.T @ d_vp)
        )
    if contracted:
        d_k = params.proj.e1.T @ d_k_in
        d_v = params.proj.e2.T @ d_v_in
        d_e1 = d_k_in @ k.T if learn_projections else None
        d_e2 = d_v_in @ v.T if learn_projections else None
    else:
        d_k, d_v, d_e1, d_e2 = d_k_in, d_v_in, None, None
    return AttentionGrads(q=d_q, k=d_k, v=d_v, heads=tuple(head_grads), e1=d_e1, e2=d_e2)


def flurka_backward(
    q,
    k,
    v,
    heads: tuple[HeadWeights, ...],
    proj: LowRankProjections,
    spec: FeatureMapSpec,
    cfg: AttentionConfig,
    upstream: np.ndarray,
    learn_projections: bool = False,
) -> AttentionGrads:
    """Backward pass mirroring flurka_attention's signature."""
    params = ModelParams(
        kind=VARIANT_FLURKA, heads=tuple(heads), proj=proj, feature_map=spec
    )
    return attention_backward(q, k, v, params, cfg, upstream, learn_projections)


@dataclass(frozen=True)
class GradCheckResult:
    variant: str
    kernel: str | None
    max_rel_err: float
    worst_param: str


def gradient_check(
    cfg: AttentionConfig,
    kind: str,
    kernel: str = "prf",
    input_seed: int = 1,
    step: float = 1e-5,
) -> GradCheckResult:
    """Compare attention_backward against central finite differences.

    The probe is f = sum(output). Relative error per entry uses
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    fmap = FeatureMapSpec(kind=kernel, seed=cfg.seed) if kind in (VARIANT_KERNEL, VARIANT_FLURKA) else None
    params = sample_model_params(cfg, kind, feature_map=fmap)
    rng = RngStream(input_seed)
    q = gaussian(rng, cfg.n, cfg.d_model)
    k = gaussian(rng, cfg.n, cfg.d_model)
    v = gaussian(rng, cfg.n, cfg.d_model)
    upstream = np.ones((cfg.n, cfg.d_model))
    grads = attention_backward(q, k, v, params, cfg, upstream)

    tensors: list[tuple[str, np.ndarray, np.ndarray]] = [
        ("q", q, grads.q), ("k", k, grads.k), ("v", v, grads.v)
    ]
    for i, (hw, hg) in enumerate(zip(params.heads, grads.heads)):
        tensors.append((f"head{i}.wq", hw.wq, hg.wq))
        tensors.append((f"head{i}.wk", hw.wk, hg.wk))
        tensors.append((f"head{i}.wv", hw.wv, hg.wv))

    def probe() -> float:
        return float(variant_forward(q, k, v, params, cfg).sum())

    worst = 0.0
    worst_param = ""
    for name, tensor, analytic in tensors:
        flat = tensor.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = probe()
            flat[idx] = orig - step
            f_minus = probe()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic.reshape(-1)[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
                worst_param = f"{name}[{idx}]"
    return GradCheckResult(
        variant=kind, kernel=kernel if fmap is not None else None,
        max_rel_err=worst, worst_param=worst_param,
    )


LOSS_CSV_HEADER = ["step", "loss"]


@dataclass(frozen=True)
class TrainResult:
    losses: list[float]
    variant: str
    transferred_at: int | None = None


def neighborhood_targets(x: np.ndarray, radius: int = 2) -> np.ndarray:
    """Per-position mean over neighbors within `radius`, self masked out."""
    n = x.shape[0]
    y = np.empty_like(x)
    for i in range(n):
        lo, hi = max(0, i - radius), min(n, i + radius + 1)
        idx = [j for j in range(lo, hi) if j != i]
        y[i] = x[idx].mean(axis=0)
    return y


def make_task(task_seed: int, n: int, d_model: int, radius: int = 2):
    """Synthetic sequence with positional columns and neighborhood targets.

    Half the columns carry i.i.d. signal, half carry sinusoidal position
    codes so content attention can discover locality.
    """
    rng = RngStream(task_seed)
    d_pos = d_model // 2
    x = gaussian(rng, n, d_model)
    pos = np.arange(n)[:, None]
    freq = np.arange(1, d_pos + 1)[None, :]
    x[:, d_model - d_pos :] = np.sin(pos * freq * (2.0 * math.pi / n)) * 1.5
    return x, neighborhood_targets(x, radius=radius)


def toy_train(
    task_seed: int,
    variant: str,
    steps: int,
    lr: float,
    cfg: AttentionConfig | None = None,
    alpha: float | None = None,
    kernel: str = "prf",
) -> TrainResult:
    """Plain full-batch gradient descent on the neighborhood-mean task.

    The model is one attention layer (q = k = v = x) plus a linear readout.
    With alpha set, `variant` names the up-training base (lowrank or
    kernel): it trains for ceil(alpha*steps) steps, transfers into the
    fused parameterization, and finishes the budget as flurka. A NaN loss
    raises immediately with the failing step index.
    """
    if steps < 1:
        raise ConfigurationError("toy_train needs steps >= 1")
    if variant not in MODEL_KINDS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if alpha is not None:
        if not (0.0 < alpha < 1.0):
            raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")
        if variant not in (VARIANT_LOWRANK, VARIANT_KERNEL):
            raise TransferError("up-training starts from a lowrank or kernel base")
    if cfg is None:
        cfg = AttentionConfig(n=32, d_model=16, d_head=8, heads=2, d_k=8, seed=task_seed)

    x, y = make_task(task_seed, cfg.n, cfg.d_model)
    fmap = FeatureMapSpec(kind=kernel, seed=cfg.seed)
    params = sample_model_params(cfg, variant, feature_map=fmap)
    readout = gaussian(RngStream(task_seed).fork(), cfg.d_model, cfg.d_model,
                       std=1.0 / math.sqrt(cfg.d_model))
    switch_at = math.ceil(alpha * steps) if alpha is not None else None
    transferred_at = None

    losses: list[float] = []
    for step_i in range(steps):
        if switch_at is not None and step_i == switch_at and transferred_at is None:
            params = uptrain_transfer(params, cfg, feature_map=fmap)
            transferred_at = step_i
        hidden = variant_forward(x, x, x, params, cfg)
        pred = hidden @ readout
        resid = pred - y
        loss = float((resid * resid).mean())
        if not math.isfinite(loss):
            raise FloatingPointError(f"loss diverged at step {step_i}")
        losses.append(loss)

        d_pred = (2.0 / resid.size) * resid
        d_readout = hidden.T @ d_pred
        d_hidden = d_pred @ readout.T
        grads = attention_backward(x, x, x, params, cfg, d_hidden)
        new_heads = tuple(
            HeadWeights(
                wq=hw.wq - lr * hg.wq,
                wk=hw.wk - lr * hg.wk,
                wv=hw.wv - lr * hg.wv,
            )
            for hw, hg in zip(params.heads, grads.heads)
        )
        params = replace(params, heads=new_heads)
        readout = readout - lr * d_readout
    return TrainResult(losses=losses, variant=variant, transferred_at=transferred_at)

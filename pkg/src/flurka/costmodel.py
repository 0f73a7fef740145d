"""Analytic FLOP counts for the attention variants and regime predicates.

Counts follow the source cost algebra exactly: one FLOP per scalar product
as written, no multiply-add doubling, softmax charged N*H*d_k. All counts
are exact integers and must fit in unsigned 64 bits.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, fields

from .errors import ConfigurationError, FlopOverflowError

_U64_MAX = 2**64 - 1

CSV_HEADER = [
    "N", "d_m", "d_k", "d_h", "H",
    "flops_full", "flops_lowrank", "flops_kernel", "flops_flurka",
    "claim1", "claim2", "claim3",
]


@dataclass(frozen=True)
class CostBreakdown:
    downsampling: int = 0
    linear_transform: int = 0
    qk_product: int = 0
    kernel_map: int = 0
    softmax: int = 0
    av_product: int = 0

    @property
    def total(self) -> int:
        return sum(getattr(self, f.name) for f in fields(self))

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ConfigurationError(f"negative FLOP component {f.name}={v}")
        if self.total > _U64_MAX:
            raise FlopOverflowError(f"FLOP total {self.total} exceeds unsigned 64-bit range")


def _dims(*values: int) -> tuple[int, ...]:
    out = []
    for v in values:
        v = operator.index(v)
        if v < 1:
            raise ConfigurationError(f"dimensions must be >= 1, got {v}")
        out.append(v)
    return tuple(out)


def flops_lowrank(n: int, d_m: int, d_k: int, h: int) -> CostBreakdown:
    """Low-rank (projected softmax) attention cost."""
    n, d_m, d_k, h = _dims(n, d_m, d_k, h)
    return CostBreakdown(
        downsampling=2 * n * d_k * d_m,
        linear_transform=n * d_m * d_m + 2 * d_k * d_m * d_m,
        qk_product=n * d_m * d_k,
        softmax=n * h * d_k,
        av_product=n * d_k * d_m,
    )


def flops_kernel(n: int, d_m: int, d_h: int) -> CostBreakdown:
    """Kernelized attention cost (feature dim taken at head width)."""
    n, d_m, d_h = _dims(n, d_m, d_h)
    return CostBreakdown(
        linear_transform=3 * n * d_m * d_m,
        kernel_map=2 * n * d_m,
        av_product=2 * n * d_m * d_h,
    )


def flops_flurka(n: int, d_m: int, d_k: int, d_h: int) -> CostBreakdown:
    """Fused low-rank + kernel attention cost."""
    n, d_m, d_k, d_h = _dims(n, d_m, d_k, d_h)
    return CostBreakdown(
        downsampling=2 * n * d_k * d_m,
        linear_transform=n * d_m * d_m + 2 * d_k * d_m * d_m,
        kernel_map=n * d_m + d_m * d_k,
        av_product=d_k * d_m * d_h + n * d_h * d_m,
    )


def flops_full(n: int, d_m: int, h: int) -> CostBreakdown:
    """Quadratic softmax attention baseline."""
    n, d_m, h = _dims(n, d_m, h)
    return CostBreakdown(
        linear_transform=3 * n * d_m * d_m,
        qk_product=n * n * d_m,
        softmax=n * n * h,
        av_product=n * n * d_m,
    )


def claim1_regime(n: int, d_m: int, d_k: int, d_h: int, h: int) -> bool:
    """Strict chain N > d_k(H+2) > d_m > d_k > d_h."""
    n, d_m, d_k, d_h, h = _dims(n, d_m, d_k, d_h, h)
    return n > d_k * (h + 2) > d_m > d_k > d_h


def claim2_regime(n: int, d_k: int, d_h: int) -> bool:
    """N - 1 > d_k > d_h."""
    n, d_k, d_h = _dims(n, d_k, d_h)
    return (n - 1) > d_k > d_h


def claim3_regime(n: int, d_m: int, d_k: int, h: int) -> bool:
    """N > d_k(H+2) and d_m > d_k."""
    n, d_m, d_k, h = _dims(n, d_m, d_k, h)
    return n > d_k * (h + 2) and d_m > d_k


def crossover_n(d_m: int, d_k: int, d_h: int, h: int, n_max: int) -> int | None:
    """Smallest n <= n_max where the fused cost beats both baselines.

    Both cost gaps are linear in n, so the minimum is found exactly from
    the integer slopes and intercepts; None when no such n exists.
    """
    d_m, d_k, d_h, h, n_max = _dims(d_m, d_k, d_h, h, n_max)
    # lowrank(n) - flurka(n) = n*slope_l - const_l
    slope_l = d_m * d_k + h * d_k + d_k * d_m - d_m - d_h * d_m
    const_l = d_m * d_k + d_k * d_m * d_h
    # kernel(n) - flurka(n) = n*slope_k - const_k
    slope_k = d_m * (2 * d_m + 1 + d_h - 2 * d_k)
    const_k = d_k * d_m * (2 * d_m + 1 + d_h)
    if slope_l <= 0 or slope_k <= 0:
        return None
    n_star = max(const_l // slope_l + 1, const_k // slope_k + 1, 1)
    if n_star > n_max:
        return None
    # cross-check against the direct formulas at the boundary
    assert flops_flurka(n_star, d_m, d_k, d_h).total < min(
        flops_lowrank(n_star, d_m, d_k, h).total, flops_kernel(n_star, d_m, d_h).total
    )
    return n_star


def csv_row(n: int, d_m: int, d_k: int, d_h: int, h: int) -> list[str]:
    """One sweep row matching CSV_HEADER; claim flags rendered as 0/1."""
    return [
        str(n), str(d_m), str(d_k), str(d_h), str(h),
        str(flops_full(n, d_m, h).total),
        str(flops_lowrank(n, d_m, d_k, h).total),
        str(flops_kernel(n, d_m, d_h).total),
        str(flops_flurka(n, d_m, d_k, d_h).total),
        str(int(claim1_regime(n, d_m, d_k, d_h, h))),
        str(int(claim2_regime(n, d_k, d_h))),
        str(int(claim3_regime(n, d_m, d_k, h))),
    ]

"""Cost model: exact FLOP algebra, regime predicates, crossover search.

Totals are checked against an in-test oracle that re-states every cost
term independently, and against hand-expanded integers for the reference
configurations.
"""

import pytest

from flurka.costmodel import (
    CostBreakdown,
    claim1_regime,
    claim2_regime,
    claim3_regime,
    crossover_n,
    csv_row,
    CSV_HEADER,
    flops_flurka,
    flops_full,
    flops_kernel,
    flops_lowrank,
)
from flurka.errors import ConfigurationError, FlopOverflowError
from flurka.rng import RngStream


def oracle_lowrank(n, dm, dk, h):
    return (2 * n * dk * dm) + (n * dm * dm + 2 * dk * dm * dm) \
        + (n * dm * dk) + (n * h * dk) + (n * dk * dm)


def oracle_kernel(n, dm, dh):
    return (3 * n * dm * dm) + (2 * n * dm) + (2 * n * dm * dh)


def oracle_flurka(n, dm, dk, dh):
    return (2 * n * dk * dm) + (n * dm * dm + 2 * dk * dm * dm) \
        + (n * dm + dm * dk) + (dk * dm * dh + n * dh * dm)


def oracle_full(n, dm, h):
    return (3 * n * dm * dm) + (n * n * dm) + (n * n * h) + (n * n * dm)


SMALL_GRID = [
    (2, 1, 1, 1, 1), (7, 3, 2, 1, 2), (64, 16, 8, 4, 4),
    (1000, 256, 64, 64, 4), (20000, 2600, 1500, 325, 8),
]


@pytest.mark.parametrize("n,dm,dk,dh,h", SMALL_GRID)
def test_totals_match_term_oracle(n, dm, dk, dh, h):
    assert flops_lowrank(n, dm, dk, h).total == oracle_lowrank(n, dm, dk, h)
    assert flops_kernel(n, dm, dh).total == oracle_kernel(n, dm, dh)
    assert flops_flurka(n, dm, dk, dh).total == oracle_flurka(n, dm, dk, dh)
    assert flops_full(n, dm, h).total == oracle_full(n, dm, h)


def test_degenerate_config_golden():
    # all dims 1, n=2: three variants coincide at 14, full pays the n^2 terms
    assert flops_lowrank(2, 1, 1, 1).total == 14
    assert flops_kernel(2, 1, 1).total == 14
    assert flops_flurka(2, 1, 1, 1).total == 14
    assert flops_full(2, 1, 1).total == 18


def test_full_small_config_golden():
    assert flops_full(128, 64, 1).total == 3_686_400


def test_reference_sweep_config():
    # the 20k-token configuration used for the headline comparison
    n, dm, dk, dh, h = 20000, 2600, 1500, 325, 8
    lr = flops_lowrank(n, dm, dk, h).total
    ke = flops_kernel(n, dm, dh).total
    fl = flops_flurka(n, dm, dk, dh).total
    assert lr == 467_720_000_000
    assert ke == 439_504_000_000
    assert fl == 329_703_400_000
    assert fl < min(lr, ke, flops_full(n, dm, h).total)
    assert claim1_regime(n, dm, dk, dh, h)


def test_breakdown_total_is_component_sum():
    b = flops_flurka(64, 16, 8, 4)
    assert b.total == (b.downsampling + b.linear_transform + b.qk_product
                       + b.kernel_map + b.softmax + b.av_product)


def test_breakdown_rejects_negative():
    with pytest.raises(ConfigurationError):
        CostBreakdown(downsampling=-1)


def test_breakdown_rejects_u64_overflow():
    with pytest.raises(FlopOverflowError):
        CostBreakdown(av_product=2**64)


def test_flops_overflow_propagates():
    with pytest.raises(FlopOverflowError):
        flops_full(99_999_999_999, 99_999_999, 1)


def test_dims_must_be_positive_integers():
    with pytest.raises(ConfigurationError):
        flops_kernel(0, 1, 1)
    with pytest.raises(TypeError):
        flops_kernel(2.5, 1, 1)


# ---------------------------------------------------------------- claims


def test_claim1_chain_boundaries():
    # chain N > d_k(H+2) > d_m > d_k > d_h, every link strict
    assert claim1_regime(97, 20, 16, 8, 4)  # 97 > 96 > 20 > 16 > 8
    assert not claim1_regime(96, 20, 16, 8, 4)  # N == d_k(H+2)
    assert not claim1_regime(97, 96, 16, 8, 4)  # d_k(H+2) == d_m
    assert not claim1_regime(97, 16, 16, 8, 4)  # d_m == d_k
    assert not claim1_regime(97, 20, 16, 16, 4)  # d_k == d_h


def test_claim2_boundaries():
    assert claim2_regime(10, 8, 4)
    assert not claim2_regime(9, 8, 4)  # needs N-1 > d_k
    assert not claim2_regime(10, 8, 8)


def test_claim3_boundaries():
    assert claim3_regime(97, 20, 16, 4)
    assert not claim3_regime(96, 20, 16, 4)
    assert not claim3_regime(97, 16, 16, 4)
    # large-model configuration: premises hold, so the predicate is true
    assert claim3_regime(20000, 2600, 1500, 8)


def test_claim2_cost_ordering_holds_when_premises_do():
    # fused < lowrank whenever N-1 > d_k > d_h and d_m = H*d_h; the gap
    # N*d_m*(d_k-d_h) + d_k*d_m*(N-1-d_h) + N*H*(d_k-d_h) is then positive
    rng = RngStream(0)
    checked = 0
    while checked < 20_000:
        h = 1 + rng.next_u64() % 16
        dh = 1 + rng.next_u64() % 64
        dm = h * dh
        dk = 1 + rng.next_u64() % (dm + 8)
        n = 2 + rng.next_u64() % 100_000
        if not claim2_regime(n, dk, dh):
            continue
        checked += 1
        assert flops_flurka(n, dm, dk, dh).total < flops_lowrank(n, dm, dk, h).total, \
            (n, dm, dk, dh, h)


def test_claim1_has_a_counterexample():
    # d_k close to d_m defeats the kernel-side ordering even though the
    # premise chain holds; keep one concrete instance pinned
    n, dm, dk, dh, h = 3191, 320, 319, 40, 8
    assert claim1_regime(n, dm, dk, dh, h)
    assert claim3_regime(n, dm, dk, h)
    assert flops_flurka(n, dm, dk, dh).total == 1_089_615_360
    assert flops_kernel(n, dm, dh).total == 1_064_007_040
    assert flops_flurka(n, dm, dk, dh).total > flops_kernel(n, dm, dh).total


def test_kernel_side_ordering_condition_is_exact():
    # fused < kernel iff n*(S - 2*d_k) > d_k*S with S = 2*d_m + 1 + d_h
    rng = RngStream(1)
    for _ in range(2000):
        dm = 1 + rng.next_u64() % 300
        dk = 1 + rng.next_u64() % (dm + 8)
        dh = 1 + rng.next_u64() % 64
        n = 1 + rng.next_u64() % 50_000
        s = 2 * dm + 1 + dh
        predicted = n * (s - 2 * dk) > dk * s
        actual = flops_flurka(n, dm, dk, dh).total < flops_kernel(n, dm, dh).total
        assert predicted == actual, (n, dm, dk, dh)


# ---------------------------------------------------------------- crossover


def scan_crossover(dm, dk, dh, h, n_max):
    for n in range(1, n_max + 1):
        fl = flops_flurka(n, dm, dk, dh).total
        if fl < flops_lowrank(n, dm, dk, h).total and fl < flops_kernel(n, dm, dh).total:
            return n
    return None


@pytest.mark.parametrize("dm,dk,dh,h", [
    (16, 8, 4, 4), (16, 4, 4, 4), (64, 16, 16, 4), (1, 1, 1, 1),
    (320, 192, 40, 8), (12, 11, 2, 6),
])
def test_crossover_matches_exhaustive_scan(dm, dk, dh, h):
    assert crossover_n(dm, dk, dh, h, 5000) == scan_crossover(dm, dk, dh, h, 5000)


def test_crossover_minimality():
    x = crossover_n(256, 64, 64, 4, 10**6)
    fl = flops_flurka(x, 256, 64, 64).total
    assert fl < min(flops_lowrank(x, 256, 64, 4).total, flops_kernel(x, 256, 64).total)
    prev = flops_flurka(x - 1, 256, 64, 64).total
    assert prev >= min(flops_lowrank(x - 1, 256, 64, 4).total,
                       flops_kernel(x - 1, 256, 64).total)


def test_crossover_all_ones_is_three():
    assert crossover_n(1, 1, 1, 1, 10) == 3
    assert scan_crossover(1, 1, 1, 1, 10) == 3


def test_crossover_none_when_fused_never_wins():
    # d_h*d_m term dominates the lowrank gap slope
    assert crossover_n(4, 1, 100, 1, 10**6) is None


def test_crossover_none_when_beyond_n_max():
    full = crossover_n(256, 64, 64, 4, 10**6)
    assert full is not None
    assert crossover_n(256, 64, 64, 4, full - 1) is None


# ---------------------------------------------------------------- csv


def test_csv_row_shape_and_flags():
    row = csv_row(97, 20, 16, 8, 4)
    assert len(row) == len(CSV_HEADER)
    assert row[:5] == ["97", "20", "16", "8", "4"]
    assert row[9:] == ["1", "1", "1"]
    assert all("," not in field for field in row)

import math

import numpy as np
import pytest

from flurka.analysis import gram_rank_tol
from flurka.errors import ConfigurationError
from flurka.rng import RngStream
from flurka.tensor import (
    gaussian,
    matmul,
    norm_inf,
    norm_spectral,
    row_softmax,
    singular_values,
)


def triple_loop_matmul(a, b):
    """Naive row-major product, inner loop ascending over k."""
    r, kk = a.shape
    c = b.shape[1]
    out = np.zeros((r, c))
    for i in range(r):
        for j in range(c):
            acc = 0.0
            for k in range(kk):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    m = gaussian(RngStream(0), 3, 3)
    assert np.array_equal(matmul(np.eye(3), m), m)


def test_matmul_hand_example():
    out = matmul([[1, 2], [3, 4]], [[5], [6]])
    assert out.tolist() == [[17], [39]]


def test_matmul_matches_triple_loop_oracle():
    rng = RngStream(1)
    a = gaussian(rng, 8, 8)
    b = gaussian(rng, 8, 8)
    assert np.max(np.abs(matmul(a, b) - triple_loop_matmul(a, b))) <= 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ConfigurationError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associativity_tolerance():
    rng = RngStream(2)
    for _ in range(5):
        a = gaussian(rng, 16, 16)
        b = gaussian(rng, 16, 16)
        c = gaussian(rng, 16, 16)
        lhs = matmul(matmul(a, b), c)
        rhs = matmul(a, matmul(b, c))
        bound = 1e-9 * norm_inf(a) * norm_inf(b) * norm_inf(c)
        assert norm_inf(lhs - rhs) <= bound


# ---------------------------------------------------------------- softmax


def test_row_softmax_uniform_on_zero_row():
    np.testing.assert_allclose(row_softmax(np.zeros((1, 4))), np.full((1, 4), 0.25))


def test_row_softmax_shift_invariance():
    np.testing.assert_allclose(row_softmax([[1000.0, 1000.0]]), [[0.5, 0.5]])
    a = gaussian(RngStream(3), 5, 7)
    shifted = a + np.full((5, 1), 13.7)
    assert np.max(np.abs(row_softmax(a) - row_softmax(shifted))) <= 1e-12


def test_row_softmax_closed_form():
    np.testing.assert_allclose(row_softmax([[0.0, math.log(3.0)]]), [[0.25, 0.75]])


def test_row_softmax_rows_sum_to_one():
    out = row_softmax(gaussian(RngStream(4), 20, 9) * 50.0)
    np.testing.assert_allclose(out.sum(axis=1), np.ones(20), atol=1e-12)


# ---------------------------------------------------------------- gaussian


def test_gaussian_determinism():
    assert np.array_equal(gaussian(RngStream(5), 2, 2), gaussian(RngStream(5), 2, 2))


def test_gaussian_fills_row_major_from_stream():
    flat = RngStream(6).gaussians(6)
    assert np.array_equal(gaussian(RngStream(6), 2, 3), flat.reshape(2, 3))


# ---------------------------------------------------------------- norms


def test_norm_inf_cases():
    assert norm_inf(np.zeros((3, 3))) == 0.0
    assert norm_inf([[1.0, -2.0], [3.0, 0.5]]) == 3.5
    a = gaussian(RngStream(7), 16, 16)
    brute = max(sum(abs(x) for x in row) for row in a.tolist())
    assert norm_inf(a) == brute


def test_norm_spectral_diagonal():
    est = norm_spectral(np.diag([3.0, 1.0]))
    assert est.converged
    assert abs(est.value - 3.0) <= 1e-9


def test_norm_spectral_rank_one():
    u = np.array([[2.0], [0.0], [0.0]])  # norm 2
    v = np.array([[3.0, 4.0, 0.0, 0.0]])  # norm 5
    est = norm_spectral(u @ v)
    assert abs(est.value - 10.0) <= 1e-9


def test_norm_spectral_matches_jacobi():
    a = gaussian(RngStream(8), 12, 12)
    sv = singular_values(a)
    est = norm_spectral(a)
    assert est.converged
    assert abs(est.value - sv[0]) <= 1e-7 * sv[0]


def test_norm_spectral_holder_bound():
    rng = RngStream(9)
    for _ in range(10):
        a = gaussian(rng, 11, 17)
        est = norm_spectral(a)
        assert est.value <= math.sqrt(norm_inf(a) * norm_inf(a.T)) + 1e-12


def test_norm_spectral_reports_non_convergence():
    a = gaussian(RngStream(10), 30, 30)
    est = norm_spectral(a, max_iters=1, tol=1e-16)
    assert not est.converged
    assert est.iterations == 1


# ---------------------------------------------------------------- svd


def test_singular_values_identity():
    np.testing.assert_allclose(singular_values(np.eye(4)), np.ones(4))


def test_singular_values_diagonal_with_zero():
    np.testing.assert_allclose(singular_values(np.diag([2.0, 0.0])), [2.0, 0.0])


def test_singular_values_descending():
    sv = singular_values(gaussian(RngStream(11), 20, 13))
    assert np.all(np.diff(sv) <= 0.0)


def test_singular_values_match_lapack():
    # cross-check against an unrelated implementation
    for seed, shape in ((12, (15, 15)), (13, (24, 10)), (14, (9, 31))):
        a = gaussian(RngStream(seed), *shape)
        mine = singular_values(a)
        ref = np.linalg.svd(a, compute_uv=False)
        np.testing.assert_allclose(mine, ref, rtol=1e-10, atol=1e-10 * ref[0])


def test_singular_values_orthogonal_all_one():
    a = gaussian(RngStream(15), 32, 32)
    q, _ = np.linalg.qr(a)
    np.testing.assert_allclose(singular_values(q), np.ones(32), atol=1e-10)


def test_low_rank_product_has_bounded_rank():
    rng = RngStream(16)
    b = gaussian(rng, 32, 4)
    c = gaussian(rng, 4, 32)
    sv = singular_values(b @ c)
    tol = gram_rank_tol(sv, 32, 32)
    assert int((sv > tol).sum()) <= 4


def test_singular_values_python_path_agrees():
    a = gaussian(RngStream(17), 18, 7)
    np.testing.assert_allclose(
        singular_values(a, use_numba=False), singular_values(a, use_numba=True),
        rtol=0, atol=0)


def test_singular_values_size_cap():
    with pytest.raises(ConfigurationError):
        singular_values(np.zeros((513, 513)))

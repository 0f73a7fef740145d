"""Dense float64 matrix ops with pinned, verifiable algorithms.

Matrices are C-contiguous 2-D float64 numpy arrays. Every public op checks
its output for NaN/Inf and raises immediately on violation. The product
kernel is BLAS-backed; tests hold it to 1e-12 of a fixed-order reference.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .rng import RngStream

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

Matrix = np.ndarray

_JACOBI_MAX_DIM = 512
_JACOBI_MAX_SWEEPS = 60
_JACOBI_OFF_THRESHOLD = 1e-14


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Validate (and coerce) a value as a float64 matrix."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ConfigurationError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ConfigurationError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ConfigurationError(f"expected {cols} cols, got {m.shape[1]}")
    return m


def _check_finite(a: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(a).all():
        raise FloatingPointError(f"{op} produced non-finite entries")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product. Shapes (r, k) x (k, c) -> (r, c)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _check_finite(a @ b, "matmul")


def row_softmax(a: Matrix) -> Matrix:
    """Softmax along each row, shifted by the row max for stability."""
    a = as_matrix(a)
    shifted = a - a.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return _check_finite(shifted, "row_softmax")


def gaussian(rng: RngStream, rows: int, cols: int, std: float = 1.0) -> Matrix:
    """Matrix of i.i.d. N(0, std^2) entries, filled row-major from the stream."""
    if rows < 1 or cols < 1:
        raise ConfigurationError("gaussian needs rows >= 1 and cols >= 1")
    out = rng.gaussians(rows * cols, std=std).reshape(rows, cols)
    return _check_finite(out, "gaussian")


def norm_inf(a: Matrix) -> float:
    """Induced infinity norm: max absolute row sum."""
    a = as_matrix(a)
    return float(np.abs(a).sum(axis=1).max())


class SpectralEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def norm_spectral(a: Matrix, max_iters: int = 200, tol: float = 1e-10) -> SpectralEstimate:
    """Largest singular value by power iteration on a^T a.

    The start vector is drawn from a seed-0 stream so runs are repeatable.
    Stops when the estimate moves by less than tol (relatively); if max_iters
    is exhausted first, the best estimate is returned with converged=False.
    """
    a = as_matrix(a)
    v = RngStream(0).gaussians(a.shape[1])
    nv = np.linalg.norm(v)
    if nv == 0.0:  # pragma: no cover
        v[0] = 1.0
        nv = 1.0
    v /= nv
    estimate = 0.0
    for it in range(1, max_iters + 1):
        w = a.T @ (a @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return SpectralEstimate(0.0, True, it)
        new_estimate = float(np.sqrt(v @ w)) if (v @ w) > 0.0 else float(np.sqrt(norm_w))
        v = w / norm_w
        if abs(new_estimate - estimate) < tol * max(new_estimate, 1e-300):
            return SpectralEstimate(new_estimate, True, it)
        estimate = new_estimate
    return SpectralEstimate(estimate, False, max_iters)


def _jacobi_sweeps_py(g: np.ndarray, max_sweeps: int, threshold: float) -> int:
    """Cyclic two-sided Jacobi on a symmetric matrix, in place."""
    p = g.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(p - 1):
            for j in range(i + 1, p):
                gij = g[i, j]
                if abs(gij) <= threshold * np.sqrt(abs(g[i, i] * g[j, j])) or gij == 0.0:
                    continue
                rotated = True
                tau = (g[j, j] - g[i, i]) / (2.0 * gij)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_i = g[:, i].copy()
                col_j = g[:, j].copy()
                g[:, i] = c * col_i - s * col_j
                g[:, j] = s * col_i + c * col_j
                row_i = g[i, :].copy()
                row_j = g[j, :].copy()
                g[i, :] = c * row_i - s * row_j
                g[j, :] = s * row_i + c * row_j
                g[i, j] = 0.0
                g[j, i] = 0.0
        if not rotated:
            return sweep
    return max_sweeps


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _jacobi_sweeps_numba(g: np.ndarray, max_sweeps: int, threshold: float) -> int:  # pragma: no cover
        p = g.shape[0]
        for sweep in range(1, max_sweeps + 1):
            rotated = False
            for i in range(p - 1):
                for j in range(i + 1, p):
                    gij = g[i, j]
                    if abs(gij) <= threshold * np.sqrt(abs(g[i, i] * g[j, j])) or gij == 0.0:
                        continue
                    rotated = True
                    tau = (g[j, j] - g[i, i]) / (2.0 * gij)
                    if tau >= 0.0:
                        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                    else:
                        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    col_i = g[:, i].copy()
                    col_j = g[:, j].copy()
                    for k in range(p):
                        g[k, i] = c * col_i[k] - s * col_j[k]
                        g[k, j] = s * col_i[k] + c * col_j[k]
                    row_i = g[i, :].copy()
                    row_j = g[j, :].copy()
                    for k in range(p):
                        g[i, k] = c * row_i[k] - s * row_j[k]
                        g[j, k] = s * row_i[k] + c * row_j[k]
                    g[i, j] = 0.0
                    g[j, i] = 0.0
            if not rotated:
                return sweep
        return max_sweeps


def singular_values(a: Matrix, use_numba: bool | None = None) -> np.ndarray:
    """All singular values, descending, via cyclic Jacobi on the Gram matrix.

    Limited to min(rows, cols) <= 512. Small singular values inherit the
    Gram squaring floor of roughly norm * sqrt(dim * eps); rank decisions
    must use a threshold above that floor (see analysis.gram_rank_tol).
    """
    a = as_matrix(a)
    p = min(a.shape)
    if p > _JACOBI_MAX_DIM:
        raise ConfigurationError(
            f"singular_values supports min(rows, cols) <= {_JACOBI_MAX_DIM}, got {p}"
        )
    g = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    g = np.ascontiguousarray(g)
    run_numba = _HAVE_NUMBA if use_numba is None else (use_numba and _HAVE_NUMBA)
    if run_numba:
        _jacobi_sweeps_numba(g, _JACOBI_MAX_SWEEPS, _JACOBI_OFF_THRESHOLD)
    else:
        _jacobi_sweeps_py(g, _JACOBI_MAX_SWEEPS, _JACOBI_OFF_THRESHOLD)
    eigs = np.diag(g).copy()
    eigs[eigs < 0.0] = 0.0
    values = np.sort(np.sqrt(eigs))[::-1].copy()
    return _check_finite(values, "singular_values")

"""Numba-compiled implementations of the replicate-statistic kernels.

Same surface and semantics as :mod:`hetmats.kernels.numpy_backend`, with the
per-replicate reductions fused into single compiled loops. Compilation is
cached on disk, so the first call per interpreter pays the JIT cost once.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

EPS = float(np.finfo(np.float64).eps)


@njit(cache=True)
def moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate means and ddof-1 variances of an (R, n, d) stack."""
    R, n, d = x.shape
    means = np.zeros((R, d))
    variances = np.zeros((R, d))
    for r in range(R):
        for k in range(n):
            for s in range(d):
                means[r, s] += x[r, k, s]
        for s in range(d):
            means[r, s] /= n
        for k in range(n):
            for s in range(d):
                dev = x[r, k, s] - means[r, s]
                variances[r, s] += dev * dev
        for s in range(d):
            variances[r, s] /= n - 1
    return means, variances


@njit(cache=True)
def covariances(x: np.ndarray) -> np.ndarray:
    """Per-replicate ddof-1 covariance matrices of an (R, n, d) stack."""
    R, n, d = x.shape
    out = np.zeros((R, d, d))
    mu = np.zeros(d)
    row = np.zeros(d)
    for r in range(R):
        for s in range(d):
            mu[s] = 0.0
        for k in range(n):
            for s in range(d):
                mu[s] += x[r, k, s]
        for s in range(d):
            mu[s] /= n
        for k in range(n):
            for s in range(d):
                row[s] = x[r, k, s] - mu[s]
            for i in range(d):
                for j in range(i, d):
                    out[r, i, j] += row[i] * row[j]
        for i in range(d):
            for j in range(i, d):
                val = out[r, i, j] / (n - 1)
                out[r, i, j] = val
                out[r, j, i] = val
    return out


@njit(cache=True)
def mats_quadform(m: np.ndarray, gram_diag: np.ndarray) -> np.ndarray:
    """sum_s m_s^2 / g_s over entries of the PSD diagonal pencil above cutoff."""
    R, k = m.shape
    out = np.zeros(R)
    for r in range(R):
        top = 0.0
        for s in range(k):
            if gram_diag[r, s] > top:
                top = gram_diag[r, s]
        cut = k * EPS * top
        acc = 0.0
        for s in range(k):
            if gram_diag[r, s] > cut:
                acc += m[r, s] * m[r, s] / gram_diag[r, s]
        out[r] = acc
    return out


@njit(cache=True)
def pinv_quadform(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """v' A^+ v for a stack of symmetric PSD pencils A, spectral cutoff."""
    R, k, _ = A.shape
    out = np.zeros(R)
    for r in range(R):
        vals, vecs = np.linalg.eigh(A[r])
        top = abs(vals[0])
        if abs(vals[k - 1]) > top:
            top = abs(vals[k - 1])
        cut = k * EPS * top
        acc = 0.0
        for j in range(k):
            if vals[j] > cut:
                p = 0.0
                for i in range(k):
                    p += vecs[i, j] * v[r, i]
                acc += p * p / vals[j]
        out[r] = acc
    return out

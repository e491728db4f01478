"""Pure-numpy implementations of the replicate-statistic kernels.

Everything is vectorized over the replicate axis; see the package docstring
in :mod:`hetmats.kernels` for the shared backend surface.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

EPS = float(np.finfo(np.float64).eps)


def moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-replicate means and ddof-1 variances of an (R, n, d) stack."""
    n = x.shape[1]
    means = x.mean(axis=1)
    centered = x - means[:, None, :]
    variances = np.einsum("rnd,rnd->rd", centered, centered) / (n - 1)
    return means, variances


def covariances(x: np.ndarray) -> np.ndarray:
    """Per-replicate ddof-1 covariance matrices of an (R, n, d) stack."""
    n = x.shape[1]
    centered = x - x.mean(axis=1)[:, None, :]
    return centered.transpose(0, 2, 1) @ centered / (n - 1)


def mats_quadform(m: np.ndarray, gram_diag: np.ndarray) -> np.ndarray:
    """sum_s m_s^2 / g_s over entries of the PSD diagonal pencil above cutoff."""
    k = m.shape[1]
    cut = k * EPS * gram_diag.max(axis=1)
    mask = gram_diag > cut[:, None]
    safe = np.where(mask, gram_diag, 1.0)
    return np.where(mask, m * m / safe, 0.0).sum(axis=1)


def pinv_quadform(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """v' A^+ v for a stack of symmetric PSD pencils A, spectral cutoff."""
    k = A.shape[1]
    vals, vecs = np.linalg.eigh(A)
    proj = np.einsum("rij,ri->rj", vecs, v)
    cut = k * EPS * np.abs(vals).max(axis=1)
    mask = vals > cut[:, None]
    safe = np.where(mask, vals, 1.0)
    return np.where(mask, proj * proj / safe, 0.0).sum(axis=1)

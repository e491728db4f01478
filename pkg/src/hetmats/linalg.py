"""Dense symmetric-matrix kernels shared by every statistical module.

Spectral decomposition, Moore-Penrose pseudoinverse, PSD square root, and the
structured matrices (centering P_d, all-ones J_d, Kronecker products, direct
sums) from which contrast hypotheses are assembled. Everything here is a pure
function on small dense arrays; matrices of interest are at most a few hundred
rows, so no sparse or iterative machinery is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

if TYPE_CHECKING:
    from collections.abc import Iterable

    from numpy.typing import ArrayLike, NDArray

EPS = float(np.finfo(np.float64).eps)

# |M - M.T| tolerated relative to max(1, |M|_max).
SYMMETRY_TOL = 1e-10
# Row sums of a contrast matrix must vanish to this tolerance.
CONTRAST_TOL = 1e-10
# Relative floor below which a negative eigenvalue still counts as zero.
PSD_TOL = 1e-10


def _as_square(M: ArrayLike) -> NDArray[np.float64]:
    out = np.asarray(M, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] != out.shape[1]:
        msg = f"expected a square matrix, got shape {out.shape}"
        raise ValueError(msg)
    return out


def check_symmetric(M: ArrayLike, tol: float = SYMMETRY_TOL) -> NDArray[np.float64]:
    """Validate symmetry within tolerance and return the array as float64."""
    out = _as_square(M)
    scale = max(1.0, float(np.max(np.abs(out))) if out.size else 0.0)
    skew = float(np.max(np.abs(out - out.T))) if out.size else 0.0
    if skew > tol * scale:
        msg = f"matrix is not symmetric: max |M - M.T| = {skew:.3e} exceeds {tol * scale:.3e}"
        raise ValueError(msg)
    return out


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted descending; ``eigenvectors`` holds the matching
    orthonormal eigenvectors as columns, so ``Q @ diag(vals) @ Q.T``
    reconstructs the input.
    """

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]

    def reconstruct(self) -> NDArray[np.float64]:
        """Return Q diag(vals) Q.T."""
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def eigen_sym(M: ArrayLike, tol: float = SYMMETRY_TOL) -> SpectralDecomp:
    """Spectral decomposition of a symmetric matrix, eigenvalues descending.

    Raises ``ValueError`` if the input violates the symmetry tolerance. The
    symmetric part (M + M.T)/2 is decomposed so that roundoff-level skew in
    the input cannot leak into the result.
    """
    sym = check_symmetric(M, tol)
    vals, vecs = np.linalg.eigh((sym + sym.T) / 2.0)
    order = np.arange(vals.shape[0] - 1, -1, -1)
    return SpectralDecomp(np.ascontiguousarray(vals[order]), np.ascontiguousarray(vecs[:, order]))


def spectral_cutoff(eigenvalues: NDArray[np.float64], dim: int) -> float:
    """Rank cutoff dim * eps * max|eigenvalue| (0 for the zero matrix)."""
    if eigenvalues.size == 0:
        return 0.0
    return dim * EPS * float(np.max(np.abs(eigenvalues)))


def pinv_sym(M: ArrayLike, rank_tol: float | None = None) -> NDArray[np.float64]:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Eigenvalues with ``|lam| <= rank_tol`` are treated as exactly zero; the
    default tolerance is ``dim * eps * max|lam|``, the standard spectral
    convention. The zero matrix maps to the zero matrix.
    """
    dec = eigen_sym(M)
    cutoff = spectral_cutoff(dec.eigenvalues, dec.eigenvalues.shape[0]) if rank_tol is None else float(rank_tol)
    if cutoff < 0.0:
        msg = f"rank_tol must be nonnegative, got {rank_tol}"
        raise ValueError(msg)
    inv = np.where(np.abs(dec.eigenvalues) > cutoff, 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(inv > 0.0, 1.0 / np.where(dec.eigenvalues == 0.0, 1.0, dec.eigenvalues), 0.0)
    q = dec.eigenvectors
    out = (q * inv) @ q.T
    return (out + out.T) / 2.0


def projection_from_contrast(H: ArrayLike) -> NDArray[np.float64]:
    """Unique orthogonal projection T = H.T (H H.T)^+ H with ker T = ker H.

    ``H`` must be a contrast matrix: every row sums to zero (checked within
    tolerance). T is symmetric and idempotent, and T @ mu = 0 exactly when
    H @ mu = 0, so hypotheses may be stated through either matrix.
    """
    h = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if h.ndim != 2:
        msg = f"contrast matrix must be 2-dimensional, got shape {h.shape}"
        raise ValueError(msg)
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 0.0)
    row_sums = h.sum(axis=1)
    worst = float(np.max(np.abs(row_sums))) if row_sums.size else 0.0
    if worst > CONTRAST_TOL * scale:
        msg = f"not a contrast matrix: max |row sum| = {worst:.3e}"
        raise ValueError(msg)
    gram_inv = pinv_sym(h @ h.T)
    t = h.T @ gram_inv @ h
    return (t + t.T) / 2.0


def projection_basis(T: ArrayLike, tol: float = 0.5) -> NDArray[np.float64]:
    """Orthonormal rows spanning range(T) for an orthogonal projection T.

    Eigenvalues of a projection are 0 or 1, so ``tol`` = 0.5 separates them
    robustly. Returns W with shape (rank, dim) and T = W.T @ W.
    """
    dec = eigen_sym(T)
    keep = dec.eigenvalues > tol
    return np.ascontiguousarray(dec.eigenvectors[:, keep].T)


def psd_sqrt(V: ArrayLike) -> NDArray[np.float64]:
    """Symmetric PSD square root R with R @ R = V; singular V is allowed.

    Eigenvalues in [-PSD_TOL * max|lam|, 0) are clamped to zero; anything
    further below zero raises ``ValueError``.
    """
    dec = eigen_sym(V)
    vals = dec.eigenvalues
    if vals.size:
        floor = -PSD_TOL * float(np.max(np.abs(vals)))
        low = float(vals.min())
        if low < floor:
            msg = f"matrix is not positive semidefinite: eigenvalue {low:.3e} below {floor:.3e}"
            raise ValueError(msg)
    roots = np.sqrt(np.clip(vals, 0.0, None))
    q = dec.eigenvectors
    out = (q * roots) @ q.T
    return (out + out.T) / 2.0


def kron(A: ArrayLike, B: ArrayLike) -> NDArray[np.float64]:
    """Kronecker product."""
    return np.kron(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64))


def direct_sum(blocks: Iterable[ArrayLike]) -> NDArray[np.float64]:
    """Block-diagonal direct sum of the given square blocks."""
    mats = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in blocks]
    if not mats:
        return np.zeros((0, 0))
    return scipy.linalg.block_diag(*mats).astype(np.float64, copy=False)


def ones(d: int) -> NDArray[np.float64]:
    """All-ones matrix J_d."""
    if d < 1:
        msg = f"dimension must be positive, got {d}"
        raise ValueError(msg)
    return np.ones((d, d))


def centering(d: int) -> NDArray[np.float64]:
    """Centering projection P_d = I_d - J_d / d."""
    return np.eye(d) - ones(d) / d

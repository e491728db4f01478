"""Confidence regions and simultaneous confidence intervals.

A bootstrap quantile ``c*`` of the quadratic-form statistic inverts into an
ellipsoidal confidence region for the contrast values ``H mu``: the region is
centred at ``H`` times the pooled mean vector, with semi-axes along the
eigenvectors of ``H D H^T`` (``D`` the diagonal covariance estimator) of
length ``sqrt(lambda_s * c* / N)``.  Simultaneous confidence intervals for a
family of scalar contrasts come from bootstrapping an aggregate (sum or max)
of the per-contrast statistics and sharing its quantile across the family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import linalg as la
from .model import EstimatorSet, GroupedSample, estimate
from .resample import (
    BootstrapConfig,
    bootstrap_aggregate,
    bootstrap_test,
    replicate_quantile,
)
from .stats import HypothesisSpec

__all__ = [
    "ConfidenceEllipsoid",
    "SimultaneousCIs",
    "confidence_region_test",
    "ellipsoid",
    "ellipsoid_at_quantile",
    "simultaneous_cis",
]


@dataclass(frozen=True, eq=False)
class ConfidenceEllipsoid:
    """Ellipsoidal confidence region for the contrast values ``H mu``.

    ``center`` is the estimated contrast vector, ``axes`` holds orthonormal
    eigenvectors of ``H D H^T`` as columns (matching ``axis_lengths``, which
    are nonnegative and descending), ``quantile`` is the critical value the
    region inverts and ``level`` the nominal confidence level.
    """

    center: np.ndarray
    axis_lengths: np.ndarray
    axes: np.ndarray
    level: float
    quantile: float

    def contains(self, point: ArrayLike) -> bool:
        """Return True when ``point`` lies inside (or on) the ellipsoid.

        Along axes of zero length the ellipsoid is flat, so the point must
        match the center in those directions up to a tiny rounding margin.
        """
        offset = np.asarray(point, dtype=np.float64) - self.center
        coords = self.axes.T @ offset
        scale = max(1.0, float(np.max(np.abs(self.center), initial=0.0)))
        total = 0.0
        for coord, length in zip(coords, self.axis_lengths):
            if length > 0.0:
                total += (coord / length) ** 2
            elif abs(coord) > 64.0 * la.EPS * scale:
                return False
        return bool(total <= 1.0)


@dataclass(frozen=True, eq=False)
class SimultaneousCIs:
    """Simultaneous confidence intervals ``estimates +- half_widths``.

    All intervals share the bootstrap quantile of the aggregated statistic
    (``statistic_kind`` is ``"sum"`` or ``"max"``), which is what makes the
    family simultaneous rather than pointwise.
    """

    contrasts: np.ndarray
    estimates: np.ndarray
    half_widths: np.ndarray
    level: float
    statistic_kind: str
    quantile: float

    @property
    def lower(self) -> np.ndarray:
        return self.estimates - self.half_widths

    @property
    def upper(self) -> np.ndarray:
        return self.estimates + self.half_widths


def _contrast_matrix(H: ArrayLike) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(H, dtype=np.float64))
    la.projection_from_contrast(matrix)  # validates the contrast property
    return matrix


def confidence_region_test(
    est: EstimatorSet, H: ArrayLike, mu0: ArrayLike, quantile: float
) -> bool:
    """Return True when ``mu0`` lies inside the confidence region.

    Membership means ``N (H xbar - H mu0)^T (H D H^+) (H xbar - H mu0)`` does
    not exceed ``quantile``; ``mu0`` is a full-length mean vector.
    """
    matrix = np.atleast_2d(np.asarray(H, dtype=np.float64))
    target = np.asarray(mu0, dtype=np.float64)
    dim = est.mean_vector.size
    if matrix.shape[1] != dim:
        raise ValueError(
            f"hypothesis matrix has {matrix.shape[1]} columns but the "
            f"estimators are {dim}-dimensional"
        )
    if target.shape != (dim,):
        raise ValueError(
            f"mu0 must be a length-{dim} vector, got shape {target.shape}"
        )
    offset = matrix @ (est.mean_vector - target)
    middle = la.pinv_sym(matrix @ est.d_hat @ matrix.T)
    statistic = est.N * float(offset @ middle @ offset)
    return bool(statistic <= quantile)


def ellipsoid_at_quantile(
    est: EstimatorSet, H: ArrayLike, quantile: float, level: float
) -> ConfidenceEllipsoid:
    """Build the confidence ellipsoid for ``H mu`` at a known critical value."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    if quantile < 0.0:
        raise ValueError(f"quantile must be nonnegative, got {quantile}")
    matrix = _contrast_matrix(H)
    dim = est.mean_vector.size
    if matrix.shape[1] != dim:
        raise ValueError(
            f"hypothesis matrix has {matrix.shape[1]} columns but the "
            f"estimators are {dim}-dimensional"
        )
    center = matrix @ est.mean_vector
    decomp = la.eigen_sym(matrix @ est.d_hat @ matrix.T)
    values = np.maximum(decomp.eigenvalues, 0.0)
    lengths = np.sqrt(values * quantile / est.N)
    return ConfidenceEllipsoid(
        center=center,
        axis_lengths=lengths,
        axes=decomp.eigenvectors,
        level=float(level),
        quantile=float(quantile),
    )


def ellipsoid(
    sample: GroupedSample, H: ArrayLike, level: float, config: BootstrapConfig
) -> ConfidenceEllipsoid:
    """Bootstrap-calibrated confidence ellipsoid for the contrast values."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    matrix = _contrast_matrix(H)
    hyp = HypothesisSpec.from_contrast(matrix)
    result = bootstrap_test(sample, hyp, config)
    quantile = replicate_quantile(result.replicates, level)
    return ellipsoid_at_quantile(estimate(sample), matrix, quantile, level)


def simultaneous_cis(
    sample: GroupedSample,
    contrasts: ArrayLike,
    level: float,
    config: BootstrapConfig,
    kind: str = "sum",
) -> SimultaneousCIs:
    """Simultaneous confidence intervals sharing one aggregate quantile.

    Each scalar contrast ``h`` gets the interval ``h^T xbar +-
    sqrt(q* h^T D h / N)`` where ``q*`` is the bootstrap ``level``-quantile
    of the aggregated (sum or max) per-contrast statistics.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    result = bootstrap_aggregate(sample, contrasts, config, kind=kind)
    quantile = replicate_quantile(result.replicates, level)
    est = estimate(sample)
    matrix = np.atleast_2d(np.asarray(contrasts, dtype=np.float64))
    estimates = matrix @ est.mean_vector
    denominators = np.square(matrix) @ est.d_diag
    half_widths = np.sqrt(quantile * denominators / est.N)
    return SimultaneousCIs(
        contrasts=matrix,
        estimates=estimates,
        half_widths=half_widths,
        level=float(level),
        statistic_kind=kind,
        quantile=float(quantile),
    )

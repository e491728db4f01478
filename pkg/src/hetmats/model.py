"""Grouped multivariate samples and their moment estimators.

A :class:`GroupedSample` holds ``a`` independent groups of ``d``-variate
observations. :func:`estimate` produces the estimator set every statistic is
built from: stacked group means, per-group empirical covariances with divisor
``n_i - 1``, the block-diagonal pooled covariance ``sigma_hat`` with blocks
``(N / n_i) * V_i``, and its diagonal part ``d_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from hetmats import linalg as la

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray

# Multiple of the worst-case roundoff variance of a constant column below
# which an empirical variance counts as degenerate.
_DEGENERATE_GUARD = 64.0


class DegenerateVarianceError(ValueError):
    """A component has (numerically) zero empirical variance in some group."""


@dataclass(frozen=True, eq=False)
class GroupedSample:
    """Observations from ``a`` groups, group ``i`` an ``(n_i, d)`` array.

    Invariants checked at construction: every group has at least two rows (so
    covariances are estimable), all groups share the dimension ``d``, and all
    values are finite. One-dimensional groups may be passed as flat arrays.
    """

    groups: tuple[NDArray[np.float64], ...]
    labels: tuple[str, ...] = ()

    def __init__(self, groups: Sequence[ArrayLike], labels: Sequence[str] | None = None) -> None:
        blocks = []
        for i, g in enumerate(groups):
            arr = np.asarray(g, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2:
                msg = f"group {i} must be a 2-d array of observations, got shape {arr.shape}"
                raise ValueError(msg)
            if arr.shape[0] < 2:
                msg = f"group {i} has {arr.shape[0]} observation(s); at least 2 are required"
                raise ValueError(msg)
            if not np.all(np.isfinite(arr)):
                msg = f"group {i} contains non-finite values"
                raise ValueError(msg)
            blocks.append(np.ascontiguousarray(arr))
        if not blocks:
            msg = "at least one group is required"
            raise ValueError(msg)
        dims = {b.shape[1] for b in blocks}
        if len(dims) != 1:
            msg = f"groups disagree on dimension: {sorted(dims)}"
            raise ValueError(msg)
        if labels is None:
            labels = tuple(f"g{i + 1}" for i in range(len(blocks)))
        else:
            labels = tuple(str(s) for s in labels)
            if len(labels) != len(blocks):
                msg = f"got {len(labels)} labels for {len(blocks)} groups"
                raise ValueError(msg)
        object.__setattr__(self, "groups", tuple(blocks))
        object.__setattr__(self, "labels", labels)

    @property
    def a(self) -> int:
        """Number of groups."""
        return len(self.groups)

    @property
    def d(self) -> int:
        """Dimension of each observation."""
        return self.groups[0].shape[1]

    @property
    def n(self) -> tuple[int, ...]:
        """Group sizes (n_1, ..., n_a)."""
        return tuple(g.shape[0] for g in self.groups)

    @property
    def total(self) -> int:
        """Total sample size N."""
        return sum(self.n)


@dataclass(frozen=True, eq=False)
class EstimatorSet:
    """Moment estimators of a grouped sample.

    ``sigma_hat`` is the block-diagonal matrix of the ``(N / n_i) * V_i`` and
    ``d_hat`` its diagonal part; both are dense ``(a d, a d)`` arrays.
    """

    mean_vector: NDArray[np.float64]
    group_covs: tuple[NDArray[np.float64], ...]
    sigma_hat: NDArray[np.float64]
    d_hat: NDArray[np.float64]
    n: tuple[int, ...]
    N: int

    @property
    def a(self) -> int:
        return len(self.group_covs)

    @property
    def d(self) -> int:
        return self.group_covs[0].shape[0]

    @property
    def group_means(self) -> NDArray[np.float64]:
        """Group means as an (a, d) array."""
        return self.mean_vector.reshape(self.a, self.d)

    @property
    def group_vars(self) -> NDArray[np.float64]:
        """Empirical variances sigma^2_{is} as an (a, d) array."""
        return np.stack([np.diag(v) for v in self.group_covs])

    @property
    def d_diag(self) -> NDArray[np.float64]:
        """Diagonal of d_hat as a flat length-ad vector."""
        return np.diag(self.d_hat).copy()


def _degenerate_components(mean: NDArray[np.float64], var: NDArray[np.float64], n: int) -> NDArray[np.bool_]:
    # Worst-case accumulated roundoff for the variance of a constant column.
    floor = _DEGENERATE_GUARD * n * (la.EPS * (1.0 + np.abs(mean))) ** 2
    return var <= floor


def estimate(sample: GroupedSample) -> EstimatorSet:
    """Compute means, covariances V_i, sigma_hat, and d_hat for a sample.

    Covariances use divisor ``n_i - 1``; the empirical variances are read off
    the diagonal of V_i so that ``d_hat`` is exactly the diagonal part of
    ``sigma_hat``. A component whose empirical variance is indistinguishable
    from the roundoff of a constant column raises
    :class:`DegenerateVarianceError`, since the statistics require strictly
    positive component variances in every group.
    """
    N = sample.total
    means = []
    covs = []
    for i, g in enumerate(sample.groups):
        n_i = g.shape[0]
        mean = g.mean(axis=0)
        centered = g - mean
        cov = centered.T @ centered / (n_i - 1)
        cov = (cov + cov.T) / 2.0
        var = np.diag(cov)
        bad = _degenerate_components(mean, var, n_i)
        if np.any(bad):
            comps = ", ".join(str(s) for s in np.flatnonzero(bad))
            msg = f"group {sample.labels[i]!r} has zero empirical variance in component(s) {comps}"
            raise DegenerateVarianceError(msg)
        means.append(mean)
        covs.append(cov)
    sigma = la.direct_sum([(N / n_i) * cov for n_i, cov in zip(sample.n, covs)])
    d_hat = np.diag(np.diag(sigma))
    return EstimatorSet(
        mean_vector=np.concatenate(means),
        group_covs=tuple(covs),
        sigma_hat=sigma,
        d_hat=d_hat,
        n=sample.n,
        N=N,
    )

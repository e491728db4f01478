"""Bootstrap calibration of the quadratic-form statistics.

Three resampling schemes approximate the null distribution of the statistics
conditionally on the data:

* **parametric** — per group, draw i.i.d. centered normal vectors with the
  estimated covariance ``V_hat_i`` (singular covariances allowed);
* **wild** — multiply the centered original rows by i.i.d. mean-0/variance-1
  weights (standard normal by default, Rademacher optionally);
* **nonparametric** — resample each group's rows with replacement; replicate
  statistics recenter the bootstrap means at the original group means, which
  is what makes the scheme mimic the *null* distribution whatever the true
  means are.

Every replicate recomputes the full estimator set (means, variances and — for
the Wald-type statistic — covariances) from its bootstrap sample.  The
engine evaluates replicates in fixed-size batches of :data:`CHUNK`; each
batch owns a counter-based generator derived from ``(seed, method, batch)``,
so results are bit-identical however the batches are scheduled.

P-values follow the empirical-distribution convention ``(1/B) * #{b : observed
<= replicate_b}`` (ties count toward the p-value) and quantiles use the
``ceil(level * B)``-th order statistic, which makes the quantile test
``observed > c*`` exactly equivalent to ``pvalue <= alpha``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from hetmats import kernels
from hetmats import linalg as la
from hetmats.model import EstimatorSet, GroupedSample, estimate
from hetmats.stats import HypothesisSpec, mats, wts

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

METHODS = ("parametric", "wild", "nonparametric")
WILD_WEIGHT_LAWS = ("standard_normal", "rademacher")
STATISTICS = ("mats", "wts")

# Replicates per RNG stream / vectorised batch. Fixed so that the mapping
# from replicate index to random stream never depends on scheduling.
CHUNK = 256

# Distinct stream families keep the three methods' draws unrelated even for
# equal seeds.
_STREAM_FAMILY = {"parametric": 1, "wild": 2, "nonparametric": 3}

# Element budget for temporaries in the generic (non-Kronecker) path.
_BATCH_ELEMS = 4_000_000


@dataclass(frozen=True, eq=False)
class BootstrapConfig:
    """Method, replication count, weight law (wild only) and seed."""

    method: str
    B: int = 1000
    wild_weights: str = "standard_normal"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            msg = f"method must be one of {METHODS}, got {self.method!r}"
            raise ValueError(msg)
        if self.B < 1:
            msg = f"B must be a positive integer, got {self.B}"
            raise ValueError(msg)
        if self.wild_weights not in WILD_WEIGHT_LAWS:
            msg = f"wild_weights must be one of {WILD_WEIGHT_LAWS}, got {self.wild_weights!r}"
            raise ValueError(msg)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Observed statistic, its replicate distribution and derived summaries.

    ``n_degenerate_replicates`` counts replicates whose recomputed variance
    diagonal had a (numerically) zero entry; their statistics are still
    computed through the spectral cutoff, since discarding them would bias
    the p-value.
    """

    observed: float
    replicates: NDArray[np.float64]
    pvalue: float
    quantile_95: float
    method: BootstrapConfig
    n_degenerate_replicates: int = 0


def replicate_quantile(replicates: ArrayLike, level: float) -> float:
    """``ceil(level * B)``-th order statistic of the replicates.

    With the tie-inclusive p-value convention this makes ``observed >
    quantile`` equivalent to ``pvalue <= 1 - level``.
    """
    if not 0.0 < level < 1.0:
        msg = f"level must lie in (0, 1), got {level}"
        raise ValueError(msg)
    values = np.sort(np.asarray(replicates, dtype=np.float64))
    if values.ndim != 1 or values.size == 0:
        msg = "replicates must be a non-empty vector"
        raise ValueError(msg)
    # Guard the ceiling against floating-point noise in level * B
    # (e.g. 0.9 * 10 -> 9.000000000000002 must still give rank 9).
    rank = math.ceil(level * values.size - 1e-9)
    rank = min(max(rank, 1), values.size)
    return float(values[rank - 1])


def parametric_resample(est: EstimatorSet, sample_sizes: Sequence[int], rng: np.random.Generator) -> GroupedSample:
    """Draw group ``i`` as ``n_i`` i.i.d. N(0, V_hat_i) vectors.

    Draws are generated as ``z @ psd_sqrt(V_hat_i)`` so singular covariance
    estimates are handled exactly: draws stay in the range of ``V_hat_i``.
    """
    if len(sample_sizes) != est.a:
        msg = f"got {len(sample_sizes)} sample sizes for {est.a} groups"
        raise ValueError(msg)
    groups = []
    for cov, n_i in zip(est.group_covs, sample_sizes):
        root = la.psd_sqrt(cov)
        groups.append(rng.standard_normal((int(n_i), est.d)) @ root)
    return GroupedSample(groups)


def wild_resample(
    sample: GroupedSample,
    config: BootstrapConfig,
    rng: np.random.Generator,
    *,
    weight_draw=None,
) -> GroupedSample:
    """Multiply each centered row by an i.i.d. mean-0/variance-1 weight.

    ``weight_draw(rng, n)`` overrides the weight law (testing hook); by
    default ``config.wild_weights`` selects standard normal or Rademacher
    weights.
    """
    groups = []
    for g in sample.groups:
        residuals = g - g.mean(axis=0)
        if weight_draw is not None:
            w = np.asarray(weight_draw(rng, g.shape[0]), dtype=np.float64)
        else:
            w = _draw_weights(rng, (g.shape[0],), config.wild_weights)
        groups.append(w[:, None] * residuals)
    return GroupedSample(groups)


def nonparametric_resample(sample: GroupedSample, rng: np.random.Generator) -> GroupedSample:
    """Resample each group's rows with replacement, sizes preserved."""
    return GroupedSample([_resample_group(g, g.shape[0], rng) for g in sample.groups])


def _resample_group(rows: NDArray[np.float64], size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    return rows[rng.integers(0, rows.shape[0], size=size)]


def _draw_weights(rng: np.random.Generator, shape, law: str) -> NDArray[np.float64]:
    if law == "standard_normal":
        return rng.standard_normal(shape)
    return 2.0 * rng.integers(0, 2, size=shape).astype(np.float64) - 1.0


def bootstrap_test(
    sample: GroupedSample,
    hyp: HypothesisSpec,
    config: BootstrapConfig,
    statistic: str = "mats",
) -> BootstrapResult:
    """Calibrate a quadratic-form statistic by one of the bootstrap schemes.

    Computes the observed statistic, ``config.B`` bootstrap replicates (each
    recomputing the estimator set from its bootstrap sample), the
    tie-inclusive p-value and the 95% replicate quantile. Fully deterministic
    given ``config.seed``.
    """
    if statistic not in STATISTICS:
        msg = f"statistic must be one of {STATISTICS}, got {statistic!r}"
        raise ValueError(msg)
    est = estimate(sample)
    observed = mats(est, hyp) if statistic == "mats" else wts(est, hyp)
    plan = _reduction_plan(hyp, est.a, est.d)
    need_covs = statistic == "wts"
    replicates = np.empty(config.B, dtype=np.float64)
    n_degenerate = 0
    start = 0
    for means, dstar, covs in _bootstrap_moments(sample, est, config, need_covs=need_covs):
        r = means.shape[0]
        n_degenerate += _count_degenerate(dstar)
        replicates[start : start + r] = _batch_statistic(plan, statistic, means, dstar, covs, est)
        start += r
    if n_degenerate:
        logger.debug(
            "%d of %d %s replicates had a degenerate variance diagonal",
            n_degenerate,
            config.B,
            config.method,
        )
    return BootstrapResult(
        observed=observed,
        replicates=replicates,
        pvalue=float(np.count_nonzero(replicates >= observed)) / config.B,
        quantile_95=replicate_quantile(replicates, 0.95),
        method=config,
        n_degenerate_replicates=n_degenerate,
    )


def bootstrap_aggregate(
    sample: GroupedSample,
    contrasts: ArrayLike,
    config: BootstrapConfig,
    kind: str = "sum",
) -> BootstrapResult:
    """Bootstrap the sum or max of single-contrast statistics.

    For each contrast row ``h`` the single-contrast statistic is ``N (h'
    xbar)^2 / (h' D_hat h)``; the replicates aggregate the per-contrast
    statistics by ``kind`` (``"sum"`` or ``"max"``). The replicate quantile
    is the critical value for simultaneous confidence intervals.
    """
    if kind not in ("sum", "max"):
        msg = f"kind must be 'sum' or 'max', got {kind!r}"
        raise ValueError(msg)
    est = estimate(sample)
    h = _validated_contrasts(contrasts, est.a * est.d)
    h_sq = np.square(h)
    observed = _aggregate(_contrast_statistics(est.mean_vector[None, :], est.d_diag[None, :], h, h_sq, est.N), kind)[0]
    replicates = np.empty(config.B, dtype=np.float64)
    n_degenerate = 0
    start = 0
    for means, dstar, _ in _bootstrap_moments(sample, est, config, need_covs=False):
        r = means.shape[0]
        n_degenerate += _count_degenerate(dstar)
        replicates[start : start + r] = _aggregate(_contrast_statistics(means, dstar, h, h_sq, est.N), kind)
        start += r
    return BootstrapResult(
        observed=float(observed),
        replicates=replicates,
        pvalue=float(np.count_nonzero(replicates >= observed)) / config.B,
        quantile_95=replicate_quantile(replicates, 0.95),
        method=config,
        n_degenerate_replicates=n_degenerate,
    )


def _validated_contrasts(contrasts: ArrayLike, dim: int) -> NDArray[np.float64]:
    h = np.atleast_2d(np.asarray(contrasts, dtype=np.float64))
    if h.ndim != 2 or h.shape[1] != dim:
        msg = f"contrast matrix must have {dim} columns, got shape {h.shape}"
        raise ValueError(msg)
    scale = max(1.0, float(np.abs(h).max()) if h.size else 1.0)
    if np.any(np.abs(h).max(axis=1) == 0.0):
        msg = "contrast rows must be non-zero"
        raise ValueError(msg)
    if float(np.abs(h.sum(axis=1)).max()) > la.CONTRAST_TOL * scale:
        msg = f"not a contrast matrix: max |row sum| = {np.abs(h.sum(axis=1)).max():.3e}"
        raise ValueError(msg)
    return h


def _contrast_statistics(
    means: NDArray[np.float64],
    dstar: NDArray[np.float64],
    h: NDArray[np.float64],
    h_sq: NDArray[np.float64],
    total: int,
) -> NDArray[np.float64]:
    numer = np.square(means @ h.T)
    denom = dstar @ h_sq.T
    # 1x1 pseudo-inverse semantics: a vanished denominator kills the term.
    return total * np.divide(numer, denom, out=np.zeros_like(numer), where=denom > 0.0)


def _aggregate(per_contrast: NDArray[np.float64], kind: str) -> NDArray[np.float64]:
    return per_contrast.sum(axis=1) if kind == "sum" else per_contrast.max(axis=1)


@dataclass(frozen=True, eq=False)
class _FastPlan:
    """Hypothesis of the form (u u') x I_d: reduced denominators are diagonal."""

    u: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class _GenericPlan:
    """Arbitrary projection, reduced through an orthonormal row basis."""

    basis: NDArray[np.float64]


def _reduction_plan(hyp: HypothesisSpec, a: int, d: int) -> _FastPlan | _GenericPlan:
    """Detect T = C x I_d with rank-1 C; otherwise fall back to a basis of T.

    Both reductions are exact: for any orthonormal row basis W of range(T),
    ``xbar' T (T M T)^+ T xbar = (W xbar)' (W M W')^+ (W xbar)`` for every
    symmetric PSD M (the Moore-Penrose identities carry the pseudo-inverse
    through the change of basis). With C = u u' the reduced middle matrix
    ``W D W'`` is diagonal, which is the hot path for two-group designs and
    2x2 layouts.
    """
    if hyp.dim == a * d:
        blocks = hyp.T.reshape(a, d, a, d)
        c = np.trace(blocks, axis1=1, axis2=3) / d
        if np.allclose(hyp.T, np.kron(c, np.eye(d)), rtol=0.0, atol=1e-10):
            decomp = la.eigen_sym(c)
            vals = decomp.eigenvalues
            if abs(vals[0] - 1.0) <= 1e-10 and np.all(np.abs(vals[1:]) <= 1e-10):
                return _FastPlan(u=np.ascontiguousarray(decomp.eigenvectors[:, 0]))
    return _GenericPlan(basis=la.projection_basis(hyp.T))


def _bootstrap_moments(
    sample: GroupedSample,
    est: EstimatorSet,
    config: BootstrapConfig,
    *,
    need_covs: bool,
) -> Iterator[tuple[NDArray[np.float64], NDArray[np.float64], list[NDArray[np.float64]] | None]]:
    """Yield per-batch bootstrap moments: means (r, ad), D* diagonals (r, ad),
    and per-group covariance stacks (r, d, d) when requested.

    Batch ``c`` draws from a Philox stream seeded by ``(seed, method, c)``;
    within a batch groups are processed in order, so the stream-to-moment
    mapping is a pure function of the configuration.
    """
    backend = kernels.active_backend()
    a, d = est.a, est.d
    ratios = np.asarray([est.N / n_i for n_i in est.n])
    family = _STREAM_FAMILY[config.method]
    roots = [la.psd_sqrt(cov) for cov in est.group_covs] if config.method == "parametric" else None
    residuals = (
        [g - m for g, m in zip(sample.groups, est.group_means)] if config.method == "wild" else None
    )
    for chunk_index, start in enumerate(range(0, config.B, CHUNK)):
        r = min(CHUNK, config.B - start)
        seq = np.random.SeedSequence(config.seed, spawn_key=(family, chunk_index))
        rng = np.random.Generator(np.random.Philox(seq))
        means = np.empty((r, a * d), dtype=np.float64)
        dstar = np.empty((r, a * d), dtype=np.float64)
        covs: list[NDArray[np.float64]] | None = [] if need_covs else None
        for i in range(a):
            n_i = est.n[i]
            if config.method == "parametric":
                draws = rng.standard_normal((r, n_i, d)) @ roots[i]
            elif config.method == "wild":
                w = _draw_weights(rng, (r, n_i), config.wild_weights)
                draws = w[:, :, None] * residuals[i][None, :, :]
            else:
                idx = rng.integers(0, n_i, size=(r, n_i))
                draws = sample.groups[i][idx]
            draws = np.ascontiguousarray(draws)
            m_i, v_i = backend.moments(draws)
            if config.method == "nonparametric":
                m_i = m_i - est.group_means[i]
            means[:, i * d : (i + 1) * d] = m_i
            dstar[:, i * d : (i + 1) * d] = ratios[i] * v_i
            if need_covs:
                covs.append(backend.covariances(draws))
        yield means, dstar, covs


def _count_degenerate(dstar: NDArray[np.float64]) -> int:
    cut = dstar.shape[1] * la.EPS * dstar.max(axis=1)
    return int(np.count_nonzero(dstar.min(axis=1) <= cut))


def _batch_statistic(
    plan: _FastPlan | _GenericPlan,
    statistic: str,
    means: NDArray[np.float64],
    dstar: NDArray[np.float64],
    covs: list[NDArray[np.float64]] | None,
    est: EstimatorSet,
) -> NDArray[np.float64]:
    backend = kernels.active_backend()
    r = means.shape[0]
    a, d, total = est.a, est.d, est.N
    if isinstance(plan, _FastPlan):
        u = plan.u
        u_sq = np.square(u)
        m = np.einsum("i,rid->rd", u, means.reshape(r, a, d))
        m = np.ascontiguousarray(m)
        if statistic == "mats":
            g = np.einsum("i,rid->rd", u_sq, dstar.reshape(r, a, d))
            return total * backend.mats_quadform(m, np.ascontiguousarray(g))
        middle = np.zeros((r, d, d), dtype=np.float64)
        for i in range(a):
            middle += (u_sq[i] * est.N / est.n[i]) * covs[i]
        return total * backend.pinv_quadform(middle, m)
    w = plan.basis
    k = w.shape[0]
    v = np.ascontiguousarray(means @ w.T)
    out = np.empty(r, dtype=np.float64)
    step = max(1, _BATCH_ELEMS // (k * w.shape[1]))
    for s in range(0, r, step):
        rows = slice(s, min(s + step, r))
        if statistic == "mats":
            middle = (w[None, :, :] * dstar[rows, None, :]) @ w.T
        else:
            middle = np.zeros((v[rows].shape[0], k, k), dtype=np.float64)
            for i in range(a):
                w_i = w[:, i * d : (i + 1) * d]
                middle += (est.N / est.n[i]) * (w_i @ (covs[i][rows] @ w_i.T))
        out[rows] = backend.pinv_quadform(np.ascontiguousarray(middle), v[rows])
    return total * out

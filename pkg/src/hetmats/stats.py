"""Test statistics for mean comparisons and their reference distributions.

Hypotheses about the stacked mean vector are phrased as ``H mu = 0`` and
carried around as a :class:`HypothesisSpec`, which pairs the contrast matrix
``H`` with the orthogonal projection ``T`` onto its row space.  Three
statistics operate on an :class:`~hetmats.model.EstimatorSet`:

* :func:`mats` — the quadratic form ``N xbar' T (T D_hat T)^+ T xbar`` whose
  denominator uses only the component variances, so it tolerates singular
  covariance matrices and is invariant under rescaling single components;
* :func:`wts` — the Wald-type form with the full ``sigma_hat`` in the middle,
  asymptotically chi-squared with ``rank(T)`` degrees of freedom when all
  covariances are regular (:func:`wts_chi2_pvalue`);
* :func:`ats_f` — the trace-normalised form with an ``F(df, inf)``
  approximation, included as the comparison target that is *not* invariant
  under component rescaling.

:func:`limit_weights` exposes the weighted chi-square limit law of the MATS
under the null (eigenvalues of ``T (T D T)^+ T Sigma`` with plug-in
estimates), and :func:`sample_limit` draws from it.  These serve as testing
oracles: the limit law is not a practical calibration device because the
weights depend on unknown variances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammaincc

from hetmats import linalg as la
from hetmats.model import EstimatorSet

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

# Eigenvalues of a projection are 0 or 1; anything above this counts as 1.
_PROJECTION_EIG_THRESHOLD = 0.5

# Draws per block when sampling the limit law, bounding peak memory.
_SAMPLE_BLOCK = 1 << 16


@dataclass(frozen=True, eq=False)
class HypothesisSpec:
    """A linear hypothesis ``H mu = 0`` together with its projection ``T``.

    ``T = H' (H H')^+ H`` is the unique orthogonal projection with the same
    row space as ``H``; every statistic depends on ``H`` only through ``T``.
    Build instances with :meth:`from_contrast` (or the layout helpers
    :func:`one_way_hypothesis` / :func:`two_way_hypotheses`), which derive
    ``T`` and validate the contrast property.
    """

    H: NDArray[np.float64]
    T: NDArray[np.float64]
    label: str = "contrast"

    def __post_init__(self) -> None:
        H = np.atleast_2d(np.asarray(self.H, dtype=np.float64))
        T = np.asarray(self.T, dtype=np.float64)
        if not np.all(np.isfinite(H)):
            msg = "contrast matrix contains non-finite values"
            raise ValueError(msg)
        if T.shape != (H.shape[1], H.shape[1]):
            msg = f"projection shape {T.shape} does not match contrast with {H.shape[1]} columns"
            raise ValueError(msg)
        la.check_symmetric(T, tol=1e-8)
        if not np.allclose(T @ T, T, rtol=0.0, atol=1e-8):
            msg = "projection matrix is not idempotent"
            raise ValueError(msg)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "T", T)

    @classmethod
    def from_contrast(cls, H: ArrayLike, label: str = "contrast") -> HypothesisSpec:
        """Build a spec from a contrast matrix, deriving ``T``."""
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        return cls(H=H, T=la.projection_from_contrast(H), label=label)

    @property
    def dim(self) -> int:
        """Length of the stacked mean vector the hypothesis applies to."""
        return self.T.shape[0]

    @property
    def rank(self) -> int:
        """Rank of ``T``, the degrees of freedom of the hypothesis."""
        vals = la.eigen_sym(self.T).eigenvalues
        return int(np.count_nonzero(vals > _PROJECTION_EIG_THRESHOLD))


@dataclass(frozen=True, eq=False)
class LimitSpec:
    """Plug-in weighted chi-square limit law of the MATS under the null.

    ``weights`` are the ``ad`` eigenvalues of ``T (T D_hat T)^+ T sigma_hat``
    (non-negative, descending); ``kappa`` the group proportions ``n_i / N``
    entering the plug-in. The limit variable is ``sum_j weights_j * Z_j`` with
    ``Z_j`` i.i.d. chi-square(1).
    """

    weights: NDArray[np.float64]
    kappa: NDArray[np.float64]


def one_way_hypothesis(a: int, d: int) -> HypothesisSpec:
    """No-group-effect hypothesis ``mu_1 = ... = mu_a`` (H = P_a x I_d)."""
    if a < 2 or d < 1:
        msg = f"need at least 2 groups and dimension 1, got a={a}, d={d}"
        raise ValueError(msg)
    H = la.kron(la.centering(a), np.eye(d))
    return HypothesisSpec.from_contrast(H, label="group")


def two_way_hypotheses(a: int, b: int, d: int) -> dict[str, HypothesisSpec]:
    """Main and interaction effect hypotheses of an ``a x b`` crossed layout.

    Groups are indexed in row-major cell order ``(1,1), (1,2), ..., (a,b)``.
    Returns specs keyed ``"A"`` (H_A = P_a x J_b/b x I_d), ``"B"``
    (H_B = J_a/a x P_b x I_d) and ``"AB"`` (H_AB = P_a x P_b x I_d).
    """
    if a < 2 or b < 2 or d < 1:
        msg = f"need at least 2 levels per factor and dimension 1, got a={a}, b={b}, d={d}"
        raise ValueError(msg)
    eye = np.eye(d)
    h_a = la.kron(la.centering(a), la.kron(la.ones(b) / b, eye))
    h_b = la.kron(la.ones(a) / a, la.kron(la.centering(b), eye))
    h_ab = la.kron(la.centering(a), la.kron(la.centering(b), eye))
    return {
        "A": HypothesisSpec.from_contrast(h_a, label="factorA"),
        "B": HypothesisSpec.from_contrast(h_b, label="factorB"),
        "AB": HypothesisSpec.from_contrast(h_ab, label="interaction"),
    }


def _check_dims(est: EstimatorSet, hyp: HypothesisSpec) -> None:
    if hyp.dim != est.a * est.d:
        msg = f"hypothesis is {hyp.dim}-dimensional but the estimators have a*d = {est.a * est.d}"
        raise ValueError(msg)


def mats(est: EstimatorSet, hyp: HypothesisSpec) -> float:
    """Quadratic form ``N xbar' T (T D_hat T)^+ T xbar``.

    The middle matrix only involves the diagonal ``D_hat``, so the statistic
    is well defined for singular covariance matrices and invariant under
    positive rescaling of individual components (when ``T`` commutes with the
    rescaling, e.g. for hypotheses of the form ``C x I_d``).
    """
    _check_dims(est, hyp)
    v = hyp.T @ est.mean_vector
    middle = la.pinv_sym(hyp.T @ est.d_hat @ hyp.T)
    return float(est.N * (v @ middle @ v))


def wts(est: EstimatorSet, hyp: HypothesisSpec) -> float:
    """Wald-type quadratic form ``N xbar' T (T sigma_hat T)^+ T xbar``."""
    _check_dims(est, hyp)
    v = hyp.T @ est.mean_vector
    middle = la.pinv_sym(hyp.T @ est.sigma_hat @ hyp.T)
    return float(est.N * (v @ middle @ v))


def wts_chi2_pvalue(t: float, hyp: HypothesisSpec) -> float:
    """Upper-tail probability of ``chi2_rank(T)`` at ``t``.

    This is the classical asymptotic calibration of the Wald-type statistic.
    It requires ``rank(T sigma T) = rank(T)``; under rank jumps (singular
    covariances) it becomes conservative, which is exactly the behaviour the
    bootstrap calibrations avoid.
    """
    if t < 0:
        msg = f"statistic must be non-negative, got {t}"
        raise ValueError(msg)
    f = hyp.rank
    if f == 0:
        return 1.0
    return float(gammaincc(f / 2.0, t / 2.0))


def ats_f(est: EstimatorSet, hyp: HypothesisSpec) -> tuple[float, float, float]:
    """Trace-normalised statistic with its ``F(df, inf)`` approximation.

    Returns ``(statistic, df, pvalue)`` where the statistic is
    ``N xbar' T xbar / tr(T sigma_hat)``, ``df = tr(T sigma_hat)^2 /
    tr((T sigma_hat)^2)``, and the p-value is the upper tail of
    ``chi2_df / df``. Unlike :func:`mats`, this statistic changes under
    componentwise rescaling of the data (its numerator and denominator scale
    differently), so it is unsuitable when components carry different units.
    """
    _check_dims(est, hyp)
    ts = hyp.T @ est.sigma_hat
    tr1 = float(np.trace(ts))
    if tr1 <= 0.0:
        msg = f"tr(T sigma_hat) must be positive, got {tr1}"
        raise ValueError(msg)
    tr2 = float(np.trace(ts @ ts))
    stat = float(est.N * (est.mean_vector @ hyp.T @ est.mean_vector) / tr1)
    df = tr1 * tr1 / tr2
    pvalue = float(gammaincc(df / 2.0, df * stat / 2.0))
    return stat, df, pvalue


def limit_weights(est: EstimatorSet, hyp: HypothesisSpec) -> LimitSpec:
    """Plug-in weights of the null limit law of :func:`mats`.

    The weights are the eigenvalues of ``T (T D_hat T)^+ T sigma_hat``,
    computed via the symmetric pencil ``S K S`` with ``S = sigma_hat^{1/2}``
    and ``K = T (T D_hat T)^+ T`` so they come out real and non-negative
    (tiny negative roundoff is clamped to zero). Their number of strictly
    positive entries is the rank of the pencil, which can be smaller than
    ``rank(T)`` when covariance matrices are singular — the rank-jump
    phenomenon that breaks the chi-square calibration of :func:`wts`.
    """
    _check_dims(est, hyp)
    kernel = hyp.T @ la.pinv_sym(hyp.T @ est.d_hat @ hyp.T) @ hyp.T
    root = la.psd_sqrt(est.sigma_hat)
    vals = la.eigen_sym(root @ kernel @ root).eigenvalues
    return LimitSpec(
        weights=np.maximum(vals, 0.0),
        kappa=np.asarray(est.n, dtype=np.float64) / est.N,
    )


def sample_limit(spec: LimitSpec, draws: int, seed: int) -> NDArray[np.float64]:
    """Draw i.i.d. samples of ``sum_j weights_j * Z_j``, ``Z_j ~ chi2(1)``.

    Deterministic given ``seed``; owns its generator. Only strictly positive
    weights contribute, so degenerate specs are handled exactly.
    """
    if draws < 1:
        msg = f"draws must be positive, got {draws}"
        raise ValueError(msg)
    weights = spec.weights[spec.weights > 0.0]
    out = np.zeros(draws, dtype=np.float64)
    if weights.size == 0:
        return out
    rng = np.random.Generator(np.random.Philox(seed))
    for start in range(0, draws, _SAMPLE_BLOCK):
        stop = min(start + _SAMPLE_BLOCK, draws)
        z = rng.standard_normal((stop - start, weights.size))
        out[start:stop] = np.square(z) @ weights
    return out

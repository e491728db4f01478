"""Monte Carlo study harness for the quadratic-form tests.

Provides the covariance settings S1-S11 (compound symmetry, autoregressive,
heteroscedastic, and singular variants for two-group and crossed 2x2
designs), five standardized error laws, dataset generation of the form
``X = mu + V^{1/2} eps``, and rejection-rate studies (type-I error for shift
0, power otherwise) over any subset of the implemented test methods.

Reproducibility contract: every replication derives its own random streams
from ``(seed, stream id, replication index)``, so reports are bit-identical
for a given configuration regardless of how replications are scheduled, and
all methods within one replication test the same dataset.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la
from .model import GroupedSample, estimate
from .resample import BootstrapConfig, bootstrap_test
from .stats import (
    HypothesisSpec,
    one_way_hypothesis,
    two_way_hypotheses,
    wts,
    wts_chi2_pvalue,
)

__all__ = [
    "COV_SETTINGS",
    "ERROR_LAWS",
    "METHODS",
    "SimulationConfig",
    "StudyReport",
    "covariance_setting",
    "error_sampler",
    "generate_dataset",
    "run_power_study",
    "run_study",
]

ONE_WAY_SETTINGS = ("S1", "S2", "S3", "S4", "S5", "S6", "S7")
TWO_WAY_SETTINGS = ("S8", "S9", "S10", "S11")
COV_SETTINGS = ONE_WAY_SETTINGS + TWO_WAY_SETTINGS
ERROR_LAWS = ("normal", "chi2_3", "lognormal", "t3", "double_exponential")
METHODS = ("mats_npbs", "mats_pbs", "mats_wild", "wts_chi2", "wts_pbs")
LAYOUTS = ("one_way", "two_way_2x2")
HYPOTHESES = ("group", "factorA", "factorB", "interaction")

# Stream identifiers separating the dataset draw from each method's
# bootstrap streams within one replication.
_STREAM_DATA = 0
_STREAM_PBS = 1
_STREAM_WILD = 2
_STREAM_NPBS = 3

_SQRT_E = math.sqrt(math.e)
_LOGNORMAL_SD = math.sqrt((math.e - 1.0) * math.e)

# Singular 4x4 covariance (rank 2): all entries 1 except the off-diagonal
# entries of the second row/column, which are 1/2.
_SINGULAR_BASE = np.array(
    [
        [1.0, 0.5, 1.0, 1.0],
        [0.5, 1.0, 0.5, 0.5],
        [1.0, 0.5, 1.0, 1.0],
        [1.0, 0.5, 1.0, 1.0],
    ]
)


def _compound_symmetry(d: int) -> np.ndarray:
    v = np.full((d, d), 0.5)
    np.fill_diagonal(v, 1.0)
    return v


def _autoregressive(d: int, rho: float = 0.6) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _halve_last_row_and_column(v: np.ndarray) -> np.ndarray:
    """Replace the last row by half the previous row, then the last column by
    half the previous column of the already-modified matrix."""
    out = v.copy()
    out[-1, :] = 0.5 * v[-2, :]
    out[:, -1] = 0.5 * out[:, -2]
    return out


def covariance_setting(setting: str, d: int, index: int) -> np.ndarray:
    """Covariance matrix of one group (or one cell) under a study setting.

    ``index`` is 1-based: groups 1..2 for the two-group settings S1-S7 and
    cells 1..4 (row-major over the 2x2 layout) for S8-S11, so the scale
    factor in S10/S11 is the cell number itself.
    """
    if setting not in COV_SETTINGS:
        raise ValueError(
            f"unknown covariance setting {setting!r}; expected one of {COV_SETTINGS}"
        )
    if d < 2:
        raise ValueError(f"covariance settings need dimension >= 2, got {d}")
    n_groups = 2 if setting in ONE_WAY_SETTINGS else 4
    if not 1 <= index <= n_groups:
        raise ValueError(
            f"setting {setting} has {n_groups} groups, got index {index}"
        )
    if setting == "S1":
        return _compound_symmetry(d)
    if setting == "S2":
        return _autoregressive(d)
    if setting == "S3":
        extra = 0.0 if index == 1 else 2.0
        return _compound_symmetry(d) + extra * np.eye(d)
    if setting == "S4":
        extra = 0.0 if index == 1 else 2.0
        return _autoregressive(d) + extra * np.eye(d)
    if setting == "S5":
        if d == 4:
            base = _SINGULAR_BASE.copy()
        elif d == 8:
            base = la.direct_sum([_SINGULAR_BASE, _SINGULAR_BASE])
        else:
            raise ValueError(f"setting S5 is defined for d in (4, 8), got {d}")
        return base if index == 1 else base + 0.5 * np.ones((d, d))
    if setting == "S6":
        base = _halve_last_row_and_column(_autoregressive(d))
        return base if index == 1 else base + 0.5 * np.ones((d, d))
    if setting == "S7":
        base = _halve_last_row_and_column(
            np.diag(np.sqrt(2.0 ** np.arange(d, dtype=np.float64)))
        )
        return base if index == 1 else base + 0.5 * np.ones((d, d))
    if setting == "S8":
        return _compound_symmetry(d)
    if setting == "S9":
        return _autoregressive(d)
    if setting == "S10":
        return _compound_symmetry(d) + (index - 1.0) * np.eye(d)
    # S11
    return _autoregressive(d) + float(index) * np.eye(d)


def error_sampler(law: str, rng: np.random.Generator, size=None):
    """Draw standardized errors (exact mean 0, variance 1) from ``law``.

    Standardization constants: chi-square(3) has mean 3 and variance 6; the
    log-normal LN(0, 1) has mean sqrt(e) and variance (e - 1)e; Student t(3)
    has variance 3; the double exponential with scale 1 has variance 2.
    """
    if law == "normal":
        return rng.standard_normal(size)
    if law == "chi2_3":
        return (rng.chisquare(3.0, size) - 3.0) / math.sqrt(6.0)
    if law == "lognormal":
        return (rng.lognormal(0.0, 1.0, size) - _SQRT_E) / _LOGNORMAL_SD
    if law == "t3":
        return rng.standard_t(3.0, size) / math.sqrt(3.0)
    if law == "double_exponential":
        return rng.laplace(0.0, 1.0, size) / math.sqrt(2.0)
    raise ValueError(f"unknown error law {law!r}; expected one of {ERROR_LAWS}")


@dataclass(frozen=True)
class SimulationConfig:
    """Full description of one rejection-rate study cell."""

    layout: str
    d: int
    cov_setting: str
    error_law: str
    sample_sizes: tuple[int, ...]
    shift: float = 0.0
    hypothesis: str = "group"
    nsim: int = 2000
    nboot: int = 1000
    methods: tuple[str, ...] = METHODS
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.layout not in LAYOUTS:
            raise ValueError(
                f"layout must be one of {LAYOUTS}, got {self.layout!r}"
            )
        object.__setattr__(
            self, "sample_sizes", tuple(int(n) for n in self.sample_sizes)
        )
        wanted = tuple(sorted(set(self.methods)))
        if not wanted:
            raise ValueError("methods must not be empty")
        unknown = [m for m in wanted if m not in METHODS]
        if unknown:
            raise ValueError(
                f"unknown methods {unknown}; expected a subset of {METHODS}"
            )
        object.__setattr__(self, "methods", wanted)
        if self.layout == "one_way":
            if self.cov_setting not in ONE_WAY_SETTINGS:
                raise ValueError(
                    f"one_way layouts use settings {ONE_WAY_SETTINGS}, "
                    f"got {self.cov_setting!r}"
                )
            if len(self.sample_sizes) != 2:
                raise ValueError(
                    f"one_way layouts take 2 sample sizes, got {len(self.sample_sizes)}"
                )
            if self.hypothesis != "group":
                raise ValueError(
                    f"one_way layouts test the 'group' hypothesis, got {self.hypothesis!r}"
                )
        else:
            if self.cov_setting not in TWO_WAY_SETTINGS:
                raise ValueError(
                    f"two_way_2x2 layouts use settings {TWO_WAY_SETTINGS}, "
                    f"got {self.cov_setting!r}"
                )
            if len(self.sample_sizes) != 4:
                raise ValueError(
                    f"two_way_2x2 layouts take 4 sample sizes, got {len(self.sample_sizes)}"
                )
            if self.hypothesis not in ("factorA", "factorB", "interaction"):
                raise ValueError(
                    "two_way_2x2 layouts test 'factorA', 'factorB' or "
                    f"'interaction', got {self.hypothesis!r}"
                )
        if self.error_law not in ERROR_LAWS:
            raise ValueError(
                f"unknown error law {self.error_law!r}; expected one of {ERROR_LAWS}"
            )
        if any(n < 2 for n in self.sample_sizes):
            raise ValueError("every group needs at least 2 observations")
        if not self.shift >= 0.0:
            raise ValueError(f"shift must be nonnegative, got {self.shift}")
        if self.nsim < 1 or self.nboot < 1:
            raise ValueError("nsim and nboot must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        # Surface dimension incompatibilities (e.g. S5 away from d=4/8) now
        # rather than in the middle of a study.
        covariance_setting(self.cov_setting, self.d, 1)


@dataclass(frozen=True)
class StudyReport:
    """Rejection rates of one study cell with their Monte Carlo error."""

    config: SimulationConfig
    rejection_rates: Mapping[str, float]
    monte_carlo_ses: Mapping[str, float]
    rejection_counts: Mapping[str, int]
    elapsed_seconds: float


def _hypothesis_for(config: SimulationConfig) -> HypothesisSpec:
    if config.layout == "one_way":
        return one_way_hypothesis(2, config.d)
    key = {"factorA": "A", "factorB": "B", "interaction": "AB"}[config.hypothesis]
    return two_way_hypotheses(2, 2, config.d)[key]


def _group_parameters(config: SimulationConfig):
    a = len(config.sample_sizes)
    roots = [
        la.psd_sqrt(covariance_setting(config.cov_setting, config.d, i + 1))
        for i in range(a)
    ]
    means = [np.zeros(config.d) for _ in range(a)]
    if config.shift > 0.0:
        means[1] = np.full(config.d, config.shift)
    return means, roots


def generate_dataset(config: SimulationConfig, replication_index: int) -> GroupedSample:
    """Generate the dataset of one replication: ``X = mu + eps V^{1/2}``.

    The draw is a pure function of ``(config.seed, replication_index)``;
    group 1 has mean zero and group 2 mean ``(shift, ..., shift)``.
    """
    if replication_index < 0:
        raise ValueError("replication_index must be nonnegative")
    seq = np.random.SeedSequence((config.seed, _STREAM_DATA, replication_index))
    rng = np.random.Generator(np.random.Philox(seq))
    means, roots = _group_parameters(config)
    groups = [
        mean + error_sampler(config.error_law, rng, (n_i, config.d)) @ root
        for mean, root, n_i in zip(means, roots, config.sample_sizes)
    ]
    return GroupedSample(groups)


def _method_seed(config: SimulationConfig, stream: int, replication_index: int) -> int:
    seq = np.random.SeedSequence((config.seed, stream, replication_index))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _replication_rejections(
    config: SimulationConfig, hyp: HypothesisSpec, replication_index: int
) -> dict[str, bool]:
    sample = generate_dataset(config, replication_index)
    est = estimate(sample)
    alpha = config.alpha
    out: dict[str, bool] = {}
    if "wts_chi2" in config.methods:
        out["wts_chi2"] = wts_chi2_pvalue(wts(est, hyp), hyp) <= alpha
    if "mats_pbs" in config.methods or "wts_pbs" in config.methods:
        # Both parametric-bootstrap methods share one replicate stream so
        # they are compared on identical resamples.
        pbs = BootstrapConfig(
            method="parametric",
            B=config.nboot,
            seed=_method_seed(config, _STREAM_PBS, replication_index),
        )
        if "mats_pbs" in config.methods:
            out["mats_pbs"] = bootstrap_test(sample, hyp, pbs).pvalue <= alpha
        if "wts_pbs" in config.methods:
            out["wts_pbs"] = (
                bootstrap_test(sample, hyp, pbs, statistic="wts").pvalue <= alpha
            )
    if "mats_wild" in config.methods:
        wild = BootstrapConfig(
            method="wild",
            B=config.nboot,
            seed=_method_seed(config, _STREAM_WILD, replication_index),
        )
        out["mats_wild"] = bootstrap_test(sample, hyp, wild).pvalue <= alpha
    if "mats_npbs" in config.methods:
        npbs = BootstrapConfig(
            method="nonparametric",
            B=config.nboot,
            seed=_method_seed(config, _STREAM_NPBS, replication_index),
        )
        out["mats_npbs"] = bootstrap_test(sample, hyp, npbs).pvalue <= alpha
    return out


def run_study(config: SimulationConfig, workers: int | None = None) -> StudyReport:
    """Estimate rejection rates over ``config.nsim`` replications.

    ``workers`` sizes the thread pool scheduling replications; the report is
    bit-identical for any worker count because each replication owns its
    random streams and aggregation is an order-independent count.
    """
    start = time.perf_counter()
    hyp = _hypothesis_for(config)
    methods = config.methods
    flags = np.zeros((config.nsim, len(methods)), dtype=bool)

    def one(replication_index: int) -> None:
        rejections = _replication_rejections(config, hyp, replication_index)
        flags[replication_index] = [rejections[m] for m in methods]

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(config.nsim)))
    else:
        for replication_index in range(config.nsim):
            one(replication_index)

    counts = flags.sum(axis=0)
    rates = counts / config.nsim
    return StudyReport(
        config=config,
        rejection_rates={m: float(r) for m, r in zip(methods, rates)},
        monte_carlo_ses={
            m: float(np.sqrt(r * (1.0 - r) / config.nsim))
            for m, r in zip(methods, rates)
        },
        rejection_counts={m: int(c) for m, c in zip(methods, counts)},
        elapsed_seconds=time.perf_counter() - start,
    )


def run_power_study(
    config: SimulationConfig,
    delta_grid: Sequence[float],
    workers: int | None = None,
) -> list[StudyReport]:
    """One report per shift in ``delta_grid`` (0 reproduces the null study).

    All shifts reuse the same error draws, so the reports form a paired
    comparison along the grid.
    """
    grid = [float(delta) for delta in delta_grid]
    if not grid:
        raise ValueError("delta_grid must not be empty")
    if any(delta < 0.0 for delta in grid):
        raise ValueError("shifts must be nonnegative")
    return [
        run_study(replace(config, shift=delta), workers=workers) for delta in grid
    ]

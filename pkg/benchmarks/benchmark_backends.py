#!/usr/bin/env python3
"""Benchmark: numpy vs numba kernel backends.

Times the four replicate kernels (group moments, group covariances, and the
two quadratic forms) and a full bootstrap run under both backends, then
prints a comparison table. The numba rows include a warmup call so that JIT
compilation is not billed to the timed loop.

Usage:
    python3 benchmarks/benchmark_backends.py [--replicates N] [--boot B] [--repeats K]
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from hetmats import kernels
from hetmats.model import GroupedSample
from hetmats.resample import BootstrapConfig, bootstrap_test
from hetmats.stats import one_way_hypothesis


@dataclass
class BenchmarkResult:
    """Timing of one kernel on one backend."""

    name: str
    backend: str
    calls: int
    total_s: float

    @property
    def per_call_ms(self) -> float:
        return 1000.0 * self.total_s / self.calls


def time_callable(fn, repeats: int) -> float:
    fn()  # warmup; compiles the numba kernels on first use
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return time.perf_counter() - start


def kernel_workload(replicates: int, n: int, d: int):
    rng = np.random.default_rng(42)
    x = rng.standard_normal((replicates, n, d))
    m = rng.standard_normal((replicates, d))
    g = rng.uniform(0.5, 2.0, size=(replicates, d))
    roots = rng.standard_normal((replicates, d, d))
    a = roots @ np.swapaxes(roots, 1, 2)
    return x, m, g, a


def bench_kernels(backend_name: str, replicates: int, repeats: int) -> list[BenchmarkResult]:
    kernels.set_backend(backend_name)
    backend = kernels.active_backend()
    x, m, g, a = kernel_workload(replicates, n=20, d=8)
    cases = [
        ("moments", lambda: backend.moments(x)),
        ("covariances", lambda: backend.covariances(x)),
        ("mats_quadform", lambda: backend.mats_quadform(m, g)),
        ("pinv_quadform", lambda: backend.pinv_quadform(a, m)),
    ]
    return [
        BenchmarkResult(name, backend_name, repeats, time_callable(fn, repeats))
        for name, fn in cases
    ]


def bench_bootstrap(backend_name: str, nboot: int, repeats: int) -> BenchmarkResult:
    kernels.set_backend(backend_name)
    rng = np.random.default_rng(7)
    sample = GroupedSample([rng.standard_normal((20, 8)), rng.standard_normal((10, 8))])
    hyp = one_way_hypothesis(2, 8)
    config = BootstrapConfig(method="parametric", B=nboot, seed=3)
    total = time_callable(lambda: bootstrap_test(sample, hyp, config), repeats)
    return BenchmarkResult(f"bootstrap_test (B={nboot})", backend_name, repeats, total)


def print_table(rows_by_name: dict[str, dict[str, BenchmarkResult]]) -> None:
    print(f"{'kernel':<24} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    print("-" * 56)
    for name, rows in rows_by_name.items():
        base = rows.get("numpy")
        jit = rows.get("numba")
        base_ms = f"{base.per_call_ms:10.3f}" if base else " " * 10
        jit_ms = f"{jit.per_call_ms:10.3f}" if jit else "       n/a"
        speedup = (
            f"{base.per_call_ms / jit.per_call_ms:7.2f}x" if base and jit else "     n/a"
        )
        print(f"{name:<24} {base_ms} {jit_ms} {speedup}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--replicates", type=int, default=4096, help="replicates per kernel call"
    )
    parser.add_argument(
        "--boot", type=int, default=2000, help="bootstrap replicates for the end-to-end row"
    )
    parser.add_argument(
        "--repeats", type=int, default=20, help="timed calls per measurement"
    )
    args = parser.parse_args()

    backends = ["numpy"]
    try:
        import numba  # noqa: F401

        backends.append("numba")
    except ImportError:
        print("numba is not importable; benchmarking the numpy backend only\n")

    rows_by_name: dict[str, dict[str, BenchmarkResult]] = {}
    for backend_name in backends:
        for result in bench_kernels(backend_name, args.replicates, args.repeats):
            rows_by_name.setdefault(result.name, {})[backend_name] = result
        boot = bench_bootstrap(backend_name, args.boot, max(3, args.repeats // 4))
        rows_by_name.setdefault(boot.name, {})[backend_name] = boot

    kernels.set_backend()  # restore env/default resolution
    print(
        f"replicates={args.replicates}, repeats={args.repeats}, "
        f"per-call milliseconds (lower is better)\n"
    )
    print_table(rows_by_name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

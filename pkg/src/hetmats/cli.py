"""Command line interface.

Subcommands:

``test``
    Run a hypothesis test on grouped CSV data and print the statistic,
    p-value, bootstrap quantile and replicate diagnostics.
``ci``
    Build a confidence ellipsoid for a contrast of the group means (with a
    plot-ready 360-point boundary polyline when the contrast is 2-dim), or —
    with ``--contrasts`` — simultaneous confidence intervals for a family of
    scalar contrasts.
``simulate`` / ``power``
    Run a rejection-rate study described by a JSON configuration file and
    stream the report rows.

Exit codes: 0 on success, 2 on input errors (bad flags, malformed files,
invalid configurations), 1 on internal errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .inference import ellipsoid, simultaneous_cis
from .model import GroupedSample, estimate
from .resample import BootstrapConfig, bootstrap_test
from .simstudy import SimulationConfig, StudyReport, run_power_study, run_study
from .stats import (
    HypothesisSpec,
    one_way_hypothesis,
    two_way_hypotheses,
    wts,
    wts_chi2_pvalue,
)

__all__ = ["AnalysisRequest", "ingest_csv", "main", "write_normalized_csv"]

# CLI method name -> (statistic, resampling method); None means asymptotic.
_METHODS = {
    "pbs": ("mats", "parametric"),
    "wild": ("mats", "wild"),
    "npbs": ("mats", "nonparametric"),
    "wts-pbs": ("wts", "parametric"),
    "wts-chi2": ("wts", None),
}

_EFFECT_KEYS = {"A": "A", "B": "B", "AB": "AB"}

_DEFAULT_DELTA_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0)

_STUDY_COLUMNS = (
    "layout",
    "d",
    "cov_setting",
    "error_law",
    "sample_sizes",
    "shift",
    "hypothesis",
    "nsim",
    "nboot",
    "alpha",
    "seed",
    "method",
    "rejection_rate",
    "monte_carlo_se",
    "rejection_count",
    "elapsed_seconds",
)


class InputError(ValueError):
    """User-facing input problem; mapped to exit code 2."""


@dataclass(frozen=True)
class AnalysisRequest:
    """Parsed invocation of one subcommand."""

    subcommand: str
    data_path: str | None = None
    group_column: str | None = None
    value_columns: tuple[str, ...] = ()
    hypothesis: str = "one-way"
    effect: str = "AB"
    method: str = "pbs"
    B: int = 1000
    alpha: float = 0.05
    seed: int = 0
    output_format: str = "text"
    contrasts_path: str | None = None
    agg: str = "sum"
    config_path: str | None = None
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.subcommand in ("test", "ci"):
            if not self.data_path:
                raise InputError(f"{self.subcommand} requires --data")
        elif self.subcommand in ("simulate", "power"):
            if not self.config_path:
                raise InputError(f"{self.subcommand} requires --config")
        else:
            raise InputError(f"unknown subcommand {self.subcommand!r}")


def ingest_csv(
    path: str, group_column: str, value_columns: Sequence[str]
) -> GroupedSample:
    """Read grouped observations from a CSV file.

    Groups follow the order in which their labels first appear; every value
    must parse as a finite real, and errors carry the file coordinates of
    the offending cell (1-based line numbers, the header being line 1).
    """
    value_columns = list(value_columns)
    if not value_columns:
        raise InputError("at least one value column is required")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: file is empty")
        missing = [
            column
            for column in [group_column, *value_columns]
            if column not in reader.fieldnames
        ]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        order: list[str] = []
        rows: dict[str, list[list[float]]] = {}
        for line_number, row in enumerate(reader, start=2):
            label = row[group_column]
            if label is None:
                raise InputError(f"{path}, row {line_number}: missing group label")
            values = []
            for column in value_columns:
                cell = (row[column] or "").strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise InputError(
                        f"{path}, row {line_number}, column {column!r}: "
                        f"could not parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(value):
                    raise InputError(
                        f"{path}, row {line_number}, column {column!r}: "
                        f"value {cell!r} is not finite"
                    )
                values.append(value)
            if label not in rows:
                rows[label] = []
                order.append(label)
            rows[label].append(values)
    if not order:
        raise InputError(f"{path}: no data rows")
    small = [label for label in order if len(rows[label]) < 2]
    if small:
        raise InputError(
            f"{path}: every group needs at least 2 rows; too few for {small}"
        )
    return GroupedSample(
        [np.asarray(rows[label], dtype=np.float64) for label in order],
        labels=order,
    )


def write_normalized_csv(
    sample: GroupedSample, group_column: str, value_columns: Sequence[str]
) -> str:
    """Emit the sample as CSV text that ingests back bit-identically."""
    value_columns = list(value_columns)
    if len(value_columns) != sample.d:
        raise InputError(
            f"need {sample.d} value column names, got {len(value_columns)}"
        )
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow([group_column, *value_columns])
    for label, group in zip(sample.labels, sample.groups):
        for row in group:
            writer.writerow([label, *[repr(float(v)) for v in row]])
    return buffer.getvalue()


def _split_columns(tokens: Sequence[str]) -> tuple[str, ...]:
    columns = [part for token in tokens for part in token.split(",") if part]
    if not columns:
        raise InputError("at least one value column is required")
    return tuple(columns)


def _load_matrix(path: str, width: int, what: str) -> np.ndarray:
    try:
        matrix = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as exc:
        raise InputError(str(exc)) from None
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if matrix.shape[1] != width:
        raise InputError(
            f"{path}: {what} needs {width} columns "
            f"(groups x variables), got {matrix.shape[1]}"
        )
    return matrix


def _build_hypothesis(request: AnalysisRequest, sample: GroupedSample) -> HypothesisSpec:
    a, d = sample.a, sample.d
    text = request.hypothesis
    if text == "one-way":
        return one_way_hypothesis(a, d)
    if text.startswith("two-way="):
        shape = text[len("two-way=") :]
        parts = shape.lower().split("x")
        if len(parts) != 2 or not all(p.isdigit() and int(p) >= 2 for p in parts):
            raise InputError(
                f"--hypothesis two-way expects AxB with A,B >= 2, got {shape!r}"
            )
        rows, cols = int(parts[0]), int(parts[1])
        if rows * cols != a:
            raise InputError(
                f"two-way={shape} implies {rows * cols} cells "
                f"but the data has {a} groups"
            )
        return two_way_hypotheses(rows, cols, d)[_EFFECT_KEYS[request.effect]]
    if text.startswith("matrix="):
        matrix = _load_matrix(text[len("matrix=") :], a * d, "hypothesis matrix")
        try:
            return HypothesisSpec.from_contrast(matrix, label="custom")
        except ValueError as exc:
            raise InputError(str(exc)) from None
    raise InputError(
        "--hypothesis must be 'one-way', 'two-way=AxB' or 'matrix=<file>', "
        f"got {text!r}"
    )


def _ellipsoid_contrast(request: AnalysisRequest, sample: GroupedSample) -> np.ndarray:
    a, d = sample.a, sample.d
    text = request.hypothesis
    if text == "one-way" and a == 2:
        # Two groups: the d-dimensional mean difference, which gives a
        # full-rank ellipsoid (and the boundary polyline when d = 2).
        return np.hstack([np.eye(d), -np.eye(d)])
    if text.startswith("matrix="):
        return _load_matrix(text[len("matrix=") :], a * d, "contrast matrix")
    return np.asarray(_build_hypothesis(request, sample).H, dtype=np.float64)


def _print_flat(payload: dict, output_format: str) -> None:
    if output_format == "json":
        print(json.dumps(payload))
    elif output_format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(payload.keys())
        writer.writerow(payload.values())
    else:
        for key, value in payload.items():
            name = key.replace("_", " ")
            if isinstance(value, float):
                print(f"{name}: {value:.6g}")
            else:
                print(f"{name}: {value}")


def _run_test(request: AnalysisRequest) -> None:
    sample = ingest_csv(request.data_path, request.group_column, request.value_columns)
    hyp = _build_hypothesis(request, sample)
    statistic_kind, boot_method = _METHODS[request.method]
    if boot_method is None:
        est = estimate(sample)
        observed = wts(est, hyp)
        payload = {
            "statistic": float(observed),
            "p_value": float(wts_chi2_pvalue(observed, hyp)),
            "method": request.method,
            "B": 0,
            "seed": request.seed,
            "quantile_95": float(2.0 * special.gammainccinv(hyp.rank / 2.0, 0.05))
            if hyp.rank > 0
            else 0.0,
            "n_degenerate_replicates": 0,
        }
    else:
        config = BootstrapConfig(method=boot_method, B=request.B, seed=request.seed)
        result = bootstrap_test(sample, hyp, config, statistic=statistic_kind)
        payload = {
            "statistic": float(result.observed),
            "p_value": float(result.pvalue),
            "method": request.method,
            "B": request.B,
            "seed": request.seed,
            "quantile_95": float(result.quantile_95),
            "n_degenerate_replicates": int(result.n_degenerate_replicates),
        }
    _print_flat(payload, request.output_format)


def _ellipse_boundary(center, lengths, axes, points: int = 360) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return center + (circle * lengths) @ axes.T


def _run_ci_ellipsoid(request: AnalysisRequest, sample: GroupedSample) -> None:
    contrast = _ellipsoid_contrast(request, sample)
    config = BootstrapConfig(
        method=_METHODS[request.method][1], B=request.B, seed=request.seed
    )
    level = 1.0 - request.alpha
    region = ellipsoid(sample, contrast, level, config)
    boundary = (
        _ellipse_boundary(region.center, region.axis_lengths, region.axes)
        if region.center.size == 2
        else None
    )
    if request.output_format == "json":
        payload = {
            "center": region.center.tolist(),
            "axis_lengths": region.axis_lengths.tolist(),
            "axes": region.axes.tolist(),
            "level": region.level,
            "quantile": region.quantile,
        }
        if boundary is not None:
            payload["boundary"] = boundary.tolist()
        print(json.dumps(payload))
    elif request.output_format == "csv":
        writer = csv.writer(sys.stdout)
        if boundary is not None:
            writer.writerow(["x", "y"])
            for point in boundary:
                writer.writerow([repr(float(point[0])), repr(float(point[1]))])
        else:
            writer.writerow(["quantity", "values"])
            writer.writerow(["center", " ".join(map(repr, region.center))])
            writer.writerow(["axis_lengths", " ".join(map(repr, region.axis_lengths))])
            for s, axis in enumerate(region.axes.T, start=1):
                writer.writerow([f"axis_{s}", " ".join(map(repr, axis))])
            writer.writerow(["level", repr(region.level)])
            writer.writerow(["quantile", repr(region.quantile)])
    else:
        print(f"confidence level: {region.level:.6g}")
        print(f"bootstrap quantile: {region.quantile:.6g}")
        print("center:", " ".join(f"{v:.6g}" for v in region.center))
        for s, (length, axis) in enumerate(
            zip(region.axis_lengths, region.axes.T), start=1
        ):
            direction = " ".join(f"{v:.6g}" for v in axis)
            print(f"axis {s}: extent {length:.6g} along ({direction})")
        if boundary is not None:
            print("(re-run with --out csv for the 360-point boundary polyline)")


def _run_ci_intervals(request: AnalysisRequest, sample: GroupedSample) -> None:
    matrix = _load_matrix(
        request.contrasts_path, sample.a * sample.d, "contrast matrix"
    )
    config = BootstrapConfig(
        method=_METHODS[request.method][1], B=request.B, seed=request.seed
    )
    level = 1.0 - request.alpha
    cis = simultaneous_cis(sample, matrix, level, config, kind=request.agg)
    rows = [
        {
            "contrast": " ".join(f"{v:g}" for v in h),
            "estimate": float(est),
            "half_width": float(hw),
            "lower": float(lo),
            "upper": float(hi),
        }
        for h, est, hw, lo, hi in zip(
            cis.contrasts, cis.estimates, cis.half_widths, cis.lower, cis.upper
        )
    ]
    if request.output_format == "json":
        print(
            json.dumps(
                {
                    "level": cis.level,
                    "statistic_kind": cis.statistic_kind,
                    "quantile": cis.quantile,
                    "intervals": rows,
                }
            )
        )
    elif request.output_format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(["contrast", "estimate", "half_width", "lower", "upper"])
        for row in rows:
            writer.writerow(
                [
                    row["contrast"],
                    repr(row["estimate"]),
                    repr(row["half_width"]),
                    repr(row["lower"]),
                    repr(row["upper"]),
                ]
            )
    else:
        print(
            f"simultaneous {cis.level:.6g} intervals "
            f"({cis.statistic_kind} statistic, quantile {cis.quantile:.6g})"
        )
        for row in rows:
            print(
                f"  [{row['contrast']}]: {row['estimate']:.6g} "
                f"+- {row['half_width']:.6g} "
                f"-> ({row['lower']:.6g}, {row['upper']:.6g})"
            )


def _run_ci(request: AnalysisRequest) -> None:
    if _METHODS[request.method][1] is None:
        raise InputError("ci requires a bootstrap method (pbs, wild or npbs)")
    sample = ingest_csv(request.data_path, request.group_column, request.value_columns)
    if request.contrasts_path:
        _run_ci_intervals(request, sample)
    else:
        _run_ci_ellipsoid(request, sample)


def _load_study_config(path: str) -> tuple[SimulationConfig, list[float]]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(str(exc)) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: expected a JSON object of config fields")
    if "seed" not in raw:
        raise InputError(
            f"{path}: a 'seed' entry is required so runs are reproducible"
        )
    delta_grid = raw.pop("delta_grid", list(_DEFAULT_DELTA_GRID))
    if not isinstance(delta_grid, list) or not delta_grid:
        raise InputError(f"{path}: delta_grid must be a non-empty list")
    known = {field.name for field in dataclasses.fields(SimulationConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(f"{path}: unknown config keys {unknown}")
    if "sample_sizes" in raw:
        raw["sample_sizes"] = tuple(raw["sample_sizes"])
    if "methods" in raw:
        raw["methods"] = tuple(raw["methods"])
    try:
        config = SimulationConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return config, [float(delta) for delta in delta_grid]


def _study_rows(report: StudyReport):
    config = report.config
    for method in config.methods:
        yield {
            "layout": config.layout,
            "d": config.d,
            "cov_setting": config.cov_setting,
            "error_law": config.error_law,
            "sample_sizes": "x".join(str(n) for n in config.sample_sizes),
            "shift": config.shift,
            "hypothesis": config.hypothesis,
            "nsim": config.nsim,
            "nboot": config.nboot,
            "alpha": config.alpha,
            "seed": config.seed,
            "method": method,
            "rejection_rate": report.rejection_rates[method],
            "monte_carlo_se": report.monte_carlo_ses[method],
            "rejection_count": report.rejection_counts[method],
            "elapsed_seconds": report.elapsed_seconds,
        }


def _print_reports(reports: Sequence[StudyReport], output_format: str) -> None:
    if output_format == "json":
        for report in reports:
            print(
                json.dumps(
                    {
                        "config": dataclasses.asdict(report.config),
                        "rejection_rates": dict(report.rejection_rates),
                        "monte_carlo_ses": dict(report.monte_carlo_ses),
                        "rejection_counts": dict(report.rejection_counts),
                        "elapsed_seconds": report.elapsed_seconds,
                    }
                )
            )
    elif output_format == "csv":
        writer = csv.DictWriter(sys.stdout, fieldnames=_STUDY_COLUMNS)
        writer.writeheader()
        for report in reports:
            for row in _study_rows(report):
                writer.writerow(row)
    else:
        for report in reports:
            config = report.config
            print(
                f"shift={config.shift:g} nsim={config.nsim} nboot={config.nboot} "
                f"alpha={config.alpha:g} ({report.elapsed_seconds:.2f}s)"
            )
            for method in config.methods:
                rate = report.rejection_rates[method]
                se = report.monte_carlo_ses[method]
                print(f"  {method:<10} {100 * rate:6.2f}% (se {100 * se:.2f} pp)")


def _run_simulate(request: AnalysisRequest) -> None:
    config, _ = _load_study_config(request.config_path)
    report = run_study(config, workers=request.workers)
    _print_reports([report], request.output_format)


def _run_power(request: AnalysisRequest) -> None:
    config, delta_grid = _load_study_config(request.config_path)
    reports = run_power_study(config, delta_grid, workers=request.workers)
    _print_reports(reports, request.output_format)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="CSV file of observations")
    parser.add_argument(
        "--group-col", required=True, help="column holding the group label"
    )
    parser.add_argument(
        "--value-cols",
        required=True,
        nargs="+",
        help="response columns (space- or comma-separated)",
    )
    parser.add_argument(
        "--hypothesis",
        default="one-way",
        help="'one-way', 'two-way=AxB' (cells in first-appearance order, "
        "row-major) or 'matrix=<csv file>' with one contrast row per line",
    )
    parser.add_argument(
        "--effect",
        choices=sorted(_EFFECT_KEYS),
        default="AB",
        help="two-way effect: main effect A or B, or the interaction AB",
    )
    parser.add_argument("--B", type=int, default=1000, help="bootstrap replicates")
    parser.add_argument("--alpha", type=float, default=0.05, help="test level")
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument(
        "--out",
        choices=("json", "csv", "text"),
        default="text",
        help="output format",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetmats",
        description="Mean-vector tests for grouped multivariate data with "
        "unequal, possibly singular covariance matrices.",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    test = subparsers.add_parser("test", help="run a hypothesis test on CSV data")
    _add_data_flags(test)
    test.add_argument(
        "--method",
        choices=sorted(_METHODS),
        default="pbs",
        help="pbs/wild/npbs bootstrap the quadratic form with diagonal "
        "weighting; wts-pbs bootstraps the fully weighted statistic; "
        "wts-chi2 uses its chi-square approximation",
    )

    ci = subparsers.add_parser(
        "ci", help="confidence ellipsoid or simultaneous intervals"
    )
    _add_data_flags(ci)
    ci.add_argument(
        "--method",
        choices=("pbs", "wild", "npbs"),
        default="pbs",
        help="bootstrap method calibrating the region",
    )
    ci.add_argument(
        "--contrasts",
        help="CSV file of scalar contrast rows; switches to simultaneous "
        "confidence intervals",
    )
    ci.add_argument(
        "--agg",
        choices=("sum", "max"),
        default="sum",
        help="aggregate statistic calibrating the simultaneous intervals",
    )

    for name, description in (
        ("simulate", "run a rejection-rate study from a JSON config"),
        ("power", "run a power study over a shift grid"),
    ):
        sub = subparsers.add_parser(name, help=description)
        sub.add_argument(
            "--config",
            required=True,
            help="JSON file of study fields (seed required; power reads an "
            "optional delta_grid list)",
        )
        sub.add_argument(
            "--out", choices=("json", "csv", "text"), default="csv"
        )
        sub.add_argument(
            "--workers", type=int, default=None, help="thread pool size"
        )

    return parser


def _request_from_args(args: argparse.Namespace) -> AnalysisRequest:
    if args.subcommand in ("test", "ci"):
        return AnalysisRequest(
            subcommand=args.subcommand,
            data_path=args.data,
            group_column=args.group_col,
            value_columns=_split_columns(args.value_cols),
            hypothesis=args.hypothesis,
            effect=args.effect,
            method=args.method,
            B=args.B,
            alpha=args.alpha,
            seed=args.seed,
            output_format=args.out,
            contrasts_path=getattr(args, "contrasts", None),
            agg=getattr(args, "agg", "sum"),
        )
    return AnalysisRequest(
        subcommand=args.subcommand,
        config_path=args.config,
        output_format=args.out,
        workers=args.workers,
    )


_RUNNERS = {
    "test": _run_test,
    "ci": _run_ci,
    "simulate": _run_simulate,
    "power": _run_power,
}


def run(request: AnalysisRequest) -> int:
    """Execute a parsed request, printing results; returns the exit code."""
    try:
        _RUNNERS[request.subcommand](request)
        return 0
    except (InputError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        request = _request_from_args(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(request)


if __name__ == "__main__":
    sys.exit(main())

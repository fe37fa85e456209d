#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
import os
import tempfile
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from scanshear.matcher import Matcher, build_matcher, naive_scan, scan_bytes
from scanshear.parameters import ScanPolicy, ScanShearParameters
from scanshear.planner import (
    Baseline,
    CriticalSet,
    ScanReport,
    build_plan,
    execute_plan,
    resolve_workers,
)
from scanshear.statestore import StateStore

from .corpus import clean_buffer, clean_signature_db
from .cost_model import CostModel, count_methods, reference_model
from .report import BenchReport, BenchRow, compare_runs

log = logging.getLogger(__name__)


def time_call(fn: Callable[[], object], repeat: int = 1) -> float:
    """Median wall time of ``repeat`` calls, in seconds."""
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


@dataclass(frozen=True)
class ScalingResult:
    """Scan time against signature count, for the automaton and the naive search.

    Attributes:
        sizes (tuple[int, ...]): Signature counts
        buffer_bytes (int): Size of the scanned clean buffer
        automaton_seconds (tuple[float, ...]): Automaton scan time per count
        naive_seconds (tuple[float, ...]): Per-signature search time per count
        automaton_exponent (float): Fitted power-law exponent; below 1 is sublinear
        naive_exponent (float): Fitted power-law exponent of the naive search
    """

    sizes: tuple[int, ...]
    buffer_bytes: int
    automaton_seconds: tuple[float, ...]
    naive_seconds: tuple[float, ...]
    automaton_exponent: float
    naive_exponent: float

    @property
    def automaton_growth(self) -> float:
        """Time at the largest count over time at the smallest."""
        return self.automaton_seconds[-1] / self.automaton_seconds[0]

    @property
    def naive_growth(self) -> float:
        return self.naive_seconds[-1] / self.naive_seconds[0]

    def format_table(self) -> str:
        lines = [f"{'signatures':>10} {'automaton_s':>12} {'naive_s':>12}"]
        for n, a, b in zip(self.sizes, self.automaton_seconds, self.naive_seconds, strict=True):
            lines.append(f"{n:>10} {a:>12.4f} {b:>12.4f}")
        lines.append(
            f"exponent: automaton {self.automaton_exponent:.3f}, naive {self.naive_exponent:.3f}",
        )
        return "\n".join(lines) + "\n"


def fit_exponent(sizes: Sequence[int], seconds: Sequence[float]) -> float:
    """Slope of log(seconds) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(seconds, dtype=np.float64), 1e-9))
    return float(stats.linregress(x, y).slope)


def signature_scaling(
    sizes: Sequence[int] = (10, 100, 1000),
    buffer_bytes: int = 16 * 1024 * 1024,
    *,
    seed: int = 0,
    repeat: int = 1,
    include_naive: bool = True,
) -> ScalingResult:
    """Time scanning one clean buffer with growing signature databases.

    Args:
        sizes (Sequence[int], optional): Signature counts, at least two
        buffer_bytes (int, optional): Size of the clean buffer. Defaults to 16 MiB.
        seed (int, optional): Seed for the synthetic signatures and buffer
        repeat (int, optional): Timings per point; the median is kept
        include_naive (bool, optional): Also time the per-signature search

    Returns:
        ScalingResult: Timings and fitted exponents
    """
    if len(sizes) < 2:
        raise ValueError("signature_scaling needs at least two sizes")
    rng = np.random.default_rng(seed)
    buffer = clean_buffer(rng, buffer_bytes)
    automaton, naive = [], []
    for n in sizes:
        db = clean_signature_db(rng, n)
        matcher = build_matcher(db)
        automaton.append(time_call(lambda m=matcher: scan_bytes(m, buffer), repeat))
        if include_naive:
            naive.append(time_call(lambda d=db: naive_scan(d, buffer), repeat))
        else:
            naive.append(float("nan"))
        log.info("%d signatures: automaton %.4f s, naive %.4f s", n, automaton[-1], naive[-1])
    return ScalingResult(
        tuple(sizes),
        buffer_bytes,
        tuple(automaton),
        tuple(naive),
        fit_exponent(sizes, automaton),
        fit_exponent(sizes, naive) if include_naive else float("nan"),
    )


def policy_comparison(
    root: str | os.PathLike,
    matcher: Matcher,
    params: ScanShearParameters | None = None,
    *,
    critical: CriticalSet | None = None,
    baseline: Baseline | None = None,
    model: CostModel | None = None,
) -> BenchReport:
    """Measure a full scan against smart and boot scans of the same tree.

    Runs, in order: ``full``; ``smart-first`` over an empty store;
    ``smart-repeat`` right after it; and ``boot`` when a critical set and a
    baseline are given. Each run uses its own temporary state store. Wall times
    are the median of ``params.bench.repeat`` runs.

    Args:
        root (str | os.PathLike): Tree to scan
        matcher (Matcher): Signatures
        params (ScanShearParameters, optional): Scan, budget and bench settings
        critical (CriticalSet, optional): Critical set for the boot run
        baseline (Baseline, optional): Baseline for the boot run
        model (CostModel, optional): Rate for predictions; defaults to the
            reference calibration

    Returns:
        BenchReport: Rows compared against the full scan
    """
    params = params or ScanShearParameters()
    model = model or reference_model(params.bench)
    workers = resolve_workers(params.scan.workers)

    def run(policy: ScanPolicy, state_dir: Path, fresh: bool) -> ScanReport:
        with StateStore(state_dir, params.state) as store:
            if fresh:
                store.purge()
            plan = build_plan(
                root,
                policy,
                store,
                matcher.version,
                critical,
                params.scan.skip_types,
                baseline=baseline,
            )
            return execute_plan(
                plan,
                matcher,
                store,
                params.budget,
                workers=workers,
                quick=params.scan.quick_mode,
                chunk_size=params.scan.chunk_size,
            )

    def measure(label: str, policy: ScanPolicy, state_dir: Path, fresh: bool) -> BenchRow:
        reports = [run(policy, state_dir, fresh) for _ in range(params.bench.repeat)]
        wall = float(np.median([r.wall_seconds for r in reports]))
        predicted = model.with_inputs(
            n_signatures=len(matcher.db),
            total_bytes=reports[-1].bytes_read,
            n_methods=count_methods(params, policy),
        ).predict()
        return BenchRow.from_scan_report(label, reports[-1], predicted, wall)

    with tempfile.TemporaryDirectory(prefix="scanshear-bench-") as tmp:
        tmp = Path(tmp)
        rows = [
            measure("full", ScanPolicy.FULL, tmp / "full", fresh=True),
            measure("smart-first", ScanPolicy.SMART, tmp / "smart", fresh=True),
        ]
        # Let the racy window pass, so stored digests can be reused
        time.sleep(params.state.racy_window_s)
        rows.append(measure("smart-repeat", ScanPolicy.SMART, tmp / "smart", fresh=False))
        if critical and baseline is not None:
            rows.append(measure("boot", ScanPolicy.BOOT, tmp / "boot", fresh=True))
    return compare_runs(rows, workers)


def plot_report(report: BenchReport, path: str | os.PathLike) -> None:
    """Bar chart of measured and predicted time per run.

    Requires the ``plot`` extra (matplotlib).
    """
    from matplotlib.figure import Figure

    labels = [row.label for row in report.rows]
    x = np.arange(len(labels))
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    ax.bar(x - 0.2, [row.wall_seconds for row in report.rows], 0.4, label="measured")
    ax.bar(x + 0.2, [row.predicted_seconds for row in report.rows], 0.4, label="predicted")
    ax.set_xticks(x, labels)
    ax.set_ylabel("Scan time (s)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)

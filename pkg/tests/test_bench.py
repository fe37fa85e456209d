#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

import json
import math

import numpy as np
import pytest

from scanshear.bench import (
    BenchRow,
    CostModel,
    MeasuredRun,
    calibrate,
    clean_buffer,
    clean_signature_db,
    compare_runs,
    count_methods,
    fit_exponent,
    fit_rate,
    instantiate,
    plot_report,
    policy_comparison,
    predict,
    reference_model,
    signature_scaling,
    speedup,
    time_call,
    write_tree,
)
from scanshear.matcher import build_matcher, scan_bytes
from scanshear.parameters import BenchParameters, ScanPolicy, ScanShearParameters
from scanshear.planner import CriticalSet, create_baseline

from .conftest import settle


def row(label, wall, bytes_read=100, predicted=1.0):
    return BenchRow(label, "full", 1, 0, bytes_read, wall, predicted)


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------


class TestCostModel:
    def test_reference_point(self):
        model = reference_model()
        assert model.rate == 1073741824000.0
        assert predict(model) == 1800.0
        assert model.n_signatures == 90_000
        assert model.n_methods == 2

    def test_custom_reference(self):
        model = reference_model(BenchParameters(reference_seconds=900.0))
        assert predict(model) == pytest.approx(900.0, rel=1e-12)
        assert model.rate == pytest.approx(2 * 1073741824000.0, rel=1e-12)

    @pytest.mark.parametrize(
        "run",
        [
            MeasuredRun(90_000, 10 * 2**30, 2, 1800.0),
            MeasuredRun(17, 12_345, 3, 0.042),
            MeasuredRun(1, 1, 1, 1e-6),
        ],
    )
    def test_calibrate_reproduces_run(self, run):
        model = calibrate(run)
        assert abs(model.predict() - run.observed_seconds) / run.observed_seconds < 1e-12

    def test_linear_in_each_input(self):
        model = reference_model()
        base = model.predict()
        assert model.with_inputs(n_signatures=180_000).predict() == pytest.approx(2 * base)
        assert model.with_inputs(n_methods=4).predict() == pytest.approx(2 * base)
        assert model.with_inputs(total_bytes=0).predict() == 0.0

    def test_fit_rate(self):
        rate = 5e9
        runs = [
            MeasuredRun(n, b, m, n * b * m / rate)
            for n, b, m in [(10, 1000, 2), (100, 5000, 3), (1000, 10**6, 2)]
        ]
        assert fit_rate(runs).rate == pytest.approx(rate, rel=1e-9)

    @pytest.mark.parametrize(
        "run",
        [MeasuredRun(1, 1, 1, 0.0), MeasuredRun(0, 10, 2, 1.0)],
    )
    def test_calibrate_rejects(self, run):
        with pytest.raises(ValueError):
            calibrate(run)

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            CostModel(1, 1, 1, 0.0)
        with pytest.raises(ValueError):
            CostModel(-1, 1, 1, 1.0)
        with pytest.raises(ValueError):
            fit_rate([])

    def test_count_methods(self):
        params = ScanShearParameters()
        assert count_methods(params) == 3
        assert count_methods(params, ScanPolicy.BOOT) == 4
        params.scan.quick_mode = True
        assert count_methods(params) == 2


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class TestBenchReport:
    def test_speedups(self):
        report = compare_runs([row("full", 2.0, 400), row("smart", 1.0, 100), row("x", 0.5, 0)])
        assert report.speedups == [1.0, 2.0, 4.0]
        assert report.bytes_ratios == [1.0, 0.25, 0.0]
        assert report.speedup_of("smart") == 2.0
        with pytest.raises(KeyError):
            report.speedup_of("nope")

    def test_zero_wall_time(self):
        assert math.isfinite(speedup(row("a", 1.0), row("b", 0.0)))

    def test_needs_rows(self):
        with pytest.raises(ValueError):
            compare_runs([])

    def test_table_and_json(self, tmp_path):
        report = compare_runs([row("full", 2.0), row("smart-repeat", 0.5)], workers=4)
        table = report.format_table()
        assert table.splitlines()[0].split()[0] == "label"
        assert "4.00x" in table
        path = tmp_path / "bench.json"
        text = report.to_json(path)
        data = json.loads(path.read_text())
        assert data == json.loads(text)
        assert data["workers"] == 4
        assert data["comparisons"][1]["speedup"] == 4.0
        assert data["comparisons"][1]["baseline"] == "full"

    def test_plot(self, tmp_path):
        pytest.importorskip("matplotlib")
        path = tmp_path / "bench.png"
        plot_report(compare_runs([row("full", 2.0, predicted=3.0), row("smart", 0.5)]), path)
        assert path.stat().st_size > 0


# ---------------------------------------------------------------------------
# Synthetic data and experiments
# ---------------------------------------------------------------------------


class TestCorpus:
    def test_clean_db_never_matches_clean_buffer(self, rng):
        db = clean_signature_db(rng, 200)
        buffer = clean_buffer(rng, 64 * 1024)
        assert scan_bytes(build_matcher(db), buffer) == []

    def test_instantiate_matches(self, rng):
        db = clean_signature_db(rng, 20)
        for sig in db.signatures:
            assert sig.matches_at(instantiate(sig, rng), 0)

    def test_write_tree(self, tmp_path, rng):
        paths = write_tree(tmp_path, rng, 40, min_size=10, max_size=20, fanout=4)
        assert len(paths) == 40
        assert len({p.parent for p in paths}) == 4
        assert all(10 <= p.stat().st_size <= 20 for p in paths)


class TestExperiments:
    def test_time_call(self):
        calls = []
        assert time_call(lambda: calls.append(1), repeat=3) >= 0
        assert len(calls) == 3

    def test_fit_exponent(self):
        sizes = np.array([10, 100, 1000])
        assert fit_exponent(sizes, 2e-3 * np.sqrt(sizes)) == pytest.approx(0.5)
        assert fit_exponent(sizes, 1e-6 * sizes) == pytest.approx(1.0)

    def test_signature_scaling(self):
        result = signature_scaling((5, 50), 32 * 1024, seed=3)
        assert result.sizes == (5, 50)
        assert len(result.automaton_seconds) == len(result.naive_seconds) == 2
        assert all(t > 0 for t in result.automaton_seconds + result.naive_seconds)
        assert math.isfinite(result.automaton_exponent)
        assert result.automaton_growth > 0
        assert "automaton" in result.format_table()

    def test_scaling_without_naive(self):
        result = signature_scaling((5, 50), 1024, include_naive=False)
        assert math.isnan(result.naive_exponent)

    def test_scaling_needs_two_sizes(self):
        with pytest.raises(ValueError):
            signature_scaling((10,))

    def test_policy_comparison(self, scan_tree, matcher, params):
        settle()
        report = policy_comparison(scan_tree, matcher, params)
        assert [r.label for r in report.rows] == ["full", "smart-first", "smart-repeat"]
        full, first, repeat = report.rows
        assert full.files_scanned == first.files_scanned == 4
        assert repeat.files_scanned == 0
        assert repeat.files_skipped == 5
        assert repeat.bytes_read == 0
        assert repeat.predicted_seconds == 0.0
        assert full.predicted_seconds == pytest.approx(3 * full.bytes_read * 3 / 1073741824000.0)
        # The scanned tree is left without state files
        assert sorted(p.name for p in scan_tree.rglob("*")) == [
            "a.bin",
            "b.bin",
            "c.bin",
            "d.bin",
            "notes.txt",
            "sub",
        ]

    def test_policy_comparison_with_boot(self, scan_tree, matcher, params):
        critical = CriticalSet(paths=("a.bin", "sub/c.bin"))
        baseline = create_baseline(critical, matcher, matcher.version, root=scan_tree).baseline
        report = policy_comparison(
            scan_tree,
            matcher,
            params,
            critical=critical,
            baseline=baseline,
        )
        boot = report.rows[-1]
        assert boot.label == "boot"
        assert boot.policy == "boot"
        assert boot.files_scanned == 0

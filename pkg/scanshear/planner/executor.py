#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

from scanshear.container import scan_file
from scanshear.matcher import Matcher
from scanshear.matcher.matcher import DEFAULT_CHUNK_SIZE
from scanshear.parameters import BudgetParameters
from scanshear.statestore import ScanRecord, StateStore, Verdict

from .baseline import IntegrityOutcome, check_integrity
from .plan import Action, ScanPlan, Target
from .report import FileResult, ScanReport

log = logging.getLogger(__name__)


def resolve_workers(workers: int) -> int:
    return workers if workers > 0 else (os.cpu_count() or 1)


class PlanExecutor:
    """Runs the targets of one plan, up to ``workers`` at a time.

    Each full scan reads the file once for both its verdict and its digest, and
    Clean or Infected results are written to the store as they complete.

    Args:
        plan (ScanPlan): Plan to run
        matcher (Matcher): Signatures; must be the version the plan was built for
        store (StateStore | None): Receives results
        budget (BudgetParameters, optional): Container expansion limits
        workers (int, optional): Concurrent files. 0 uses the logical CPU count.
        quick (bool, optional): Skip exact verification of signature hits.
            Quick verdicts are never written to the store.
        chunk_size (int, optional): Read size
    """

    def __init__(
        self,
        plan: ScanPlan,
        matcher: Matcher,
        store: StateStore | None,
        budget: BudgetParameters | None = None,
        *,
        workers: int = 0,
        quick: bool = False,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
    ):
        if plan.sigdb_version != matcher.version:
            raise ValueError(
                f"Plan was built for signature version {plan.sigdb_version}, "
                f"matcher has version {matcher.version}",
            )
        self.plan = plan
        self.matcher = matcher
        self.store = store
        self.budget = budget or BudgetParameters()
        self.workers = resolve_workers(workers)
        self.quick = quick
        self.chunk_size = chunk_size
        self.algorithm = store.digest_algorithm if store is not None else "sha256"

    def run(self) -> ScanReport:
        start = time.perf_counter()
        warm_hits, persistent_reads = self._store_counters()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            results = list(pool.map(self.run_target, self.plan.targets))
        scan_seconds = time.perf_counter() - start
        end_hits, end_reads = self._store_counters()
        planned = self.plan.counters

        report = ScanReport(
            policy=self.plan.policy,
            root=str(self.plan.root),
            sigdb_version=self.plan.sigdb_version,
            results=results,
            workers=self.workers,
            plan_bytes=self.plan.bytes_hashed,
            plan_seconds=self.plan.plan_seconds,
            scan_seconds=scan_seconds,
            counters={
                "warm_hits": planned.get("warm_hits", 0) + end_hits - warm_hits,
                "persistent_reads": planned.get("persistent_reads", 0)
                + end_reads
                - persistent_reads,
            },
        )
        log.info(
            "Finished %s scan: %s in %.3f s",
            self.plan.policy.name.lower(),
            report.summary(),
            scan_seconds,
        )
        return report

    def run_target(self, target: Target) -> FileResult:
        try:
            if target.action == Action.FULL_SCAN:
                return self.full_scan(target)
            if target.action == Action.INTEGRITY_CHECK:
                return self.integrity_check(target)
            if target.action == Action.EXEMPT:
                return FileResult(str(target.path), target.label, Verdict.skipped(target.reason))
            if target.cached_verdict is not None:
                return FileResult(str(target.path), target.label, target.cached_verdict)
            return FileResult(str(target.path), target.label, Verdict.skipped(target.reason))
        except OSError as e:
            log.warning("Cannot scan %s: %s", target.path, e)
            return FileResult(
                str(target.path),
                target.label,
                Verdict.unscannable("io"),
                scanned=target.action == Action.FULL_SCAN,
            )

    def full_scan(
        self,
        target: Target,
        *,
        hashed: int = 0,
        integrity: IntegrityOutcome | None = None,
    ) -> FileResult:
        scan = scan_file(
            target.path,
            self.matcher,
            self.budget,
            algorithm=self.algorithm,
            quick=self.quick,
            chunk_size=self.chunk_size,
        )
        if self.quick:
            log.debug("Quick verdict for %s is not recorded", target.path)
        elif self.store is not None and (scan.verdict.is_clean or scan.verdict.is_infected):
            record = ScanRecord(
                path=str(target.path),
                digest=scan.digest,
                sigdb_version=self.plan.sigdb_version,
                scanned_at=time.time(),
                verdict=scan.verdict,
                fingerprint=scan.fingerprint,
                hashed_at_ns=scan.hashed_at_ns if scan.fingerprint else None,
            )
            try:
                self.store.record_result(record)
            except OSError as e:
                log.warning("Could not record result for %s: %s", target.path, e)
        return FileResult(
            str(target.path),
            target.label,
            scan.verdict,
            hashed + scan.bytes_read,
            integrity,
            scanned=True,
        )

    def integrity_check(self, target: Target) -> FileResult:
        outcome, digest = check_integrity(self.plan.baseline, target.path, self.algorithm)
        hashed = digest.bytes_read if digest else 0
        if outcome == IntegrityOutcome.MODIFIED:
            log.info("%s differs from its baseline, scanning it", target.path)
            return self.full_scan(target, hashed=hashed, integrity=outcome)
        if outcome == IntegrityOutcome.MISSING:
            verdict = Verdict.unscannable("missing")
        else:
            verdict = Verdict.clean()
        return FileResult(str(target.path), target.label, verdict, hashed, outcome)

    def _store_counters(self) -> tuple[int, int]:
        if self.store is None:
            return 0, 0
        return self.store.warm_hits, self.store.persistent_reads


def execute_plan(
    plan: ScanPlan,
    matcher: Matcher,
    store: StateStore | None,
    container_budget: BudgetParameters | None = None,
    **kwargs,
) -> ScanReport:
    """Run a plan and aggregate its results.

    Per-file I/O errors become ``Unscannable(io)`` results and never stop the run.

    Args:
        plan (ScanPlan): Plan built for ``matcher``'s signature version
        matcher (Matcher): Signatures
        store (StateStore | None): Receives Clean and Infected results
        container_budget (BudgetParameters, optional): Container expansion limits
        **kwargs: ``workers``, ``quick`` and ``chunk_size``, see ``PlanExecutor``

    Returns:
        ScanReport: Aggregated results
    """
    return PlanExecutor(plan, matcher, store, container_budget, **kwargs).run()

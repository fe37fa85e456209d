#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
import os
import time
from abc import ABC, abstractmethod
from collections.abc import Iterable
from pathlib import Path
from typing import ClassVar

from scanshear.archiver import SUFFIX, TMP_SUFFIX, walk_regular_files
from scanshear.parameters import ScanPolicy
from scanshear.parameters.scan_parameters import DEFAULT_SKIP_TYPES
from scanshear.statestore import DigestCache, StateStore

from .baseline import Baseline, CriticalSet
from .plan import Action, ScanPlan, Target, order_targets

log = logging.getLogger(__name__)


class BaselineRequiredError(ValueError):
    """Raised when a boot plan is requested without an integrity baseline."""


class IScanPolicy(ABC):
    """Interface for scan policies, which decide each file's action.

    Policies are looked up by their ``policy`` member with ``get_policy``.

    Args:
        store (StateStore): Prior scan results
        sigdb_version (int): Version of the signatures in use
        skip_types (Iterable[str]): Extensions that are never signature scanned
        critical (CriticalSet | None): Critical files
        baseline (Baseline | None): Integrity baseline of critical files
    """

    policy: ClassVar[ScanPolicy]

    def __init__(
        self,
        store: StateStore | None,
        sigdb_version: int,
        skip_types: Iterable[str],
        critical: CriticalSet | None,
        baseline: Baseline | None,
    ):
        self.store = store
        self.sigdb_version = sigdb_version
        self.skip_types = tuple(
            ext.lower() if ext.startswith(".") else f".{ext.lower()}" for ext in skip_types
        )
        self.critical = critical
        self.baseline = baseline
        self.bytes_hashed = 0

    @abstractmethod
    def targets(self, root: Path, excluded: set[Path]) -> list[Target]:
        """Targets for the files under ``root``, in any order."""
        raise NotImplementedError

    @classmethod
    def get_all_subclasses(cls: type, use_base=True) -> list[type]:
        """Returns all subclasses of a type
        Args:
            cls (type): Type to get subclasses of, ignored if use_base is True
            use_base (bool, optional): If set all subclasses of IScanPolicy are
                returned as opposed to of the current type. Defaults to True.

        Returns:
            list[type]: A list of all policy classes.
        """
        root = IScanPolicy if use_base else cls
        subclasses = []
        for subclass in root.__subclasses__():
            subclasses.append(subclass)
            subclasses.extend(subclass.get_all_subclasses(use_base=False))
        return subclasses


class FullPolicy(IScanPolicy):
    """Every file is scanned, except archived containers and filtered types."""

    policy = ScanPolicy.FULL

    def targets(self, root: Path, excluded: set[Path]) -> list[Target]:
        critical = set(self.critical.resolve(root)) if self.critical else set()
        targets = []
        for path, st in walk_regular_files(root, excluded):
            is_critical = path in critical
            if path.name.endswith((SUFFIX, TMP_SUFFIX)):
                targets.append(Target(path, Action.EXEMPT, "archived", st.st_size, is_critical))
            elif path.suffix.lower() in self.skip_types:
                targets.append(Target(path, Action.SKIP, "type-filter", st.st_size, is_critical))
            else:
                targets.append(self.decide(path, st, is_critical))
        return targets

    def decide(self, path: Path, st: os.stat_result, is_critical: bool) -> Target:
        return Target(path, Action.FULL_SCAN, None, st.st_size, is_critical)


class SmartPolicy(FullPolicy):
    """As FULL, but files whose digest and signature version match their stored
    record are skipped."""

    policy = ScanPolicy.SMART

    def __init__(self, store, *args, **kwargs):
        if store is None:
            raise ValueError("The smart policy needs a state store")
        super().__init__(store, *args, **kwargs)
        self.digests = DigestCache(store)

    def decide(self, path: Path, st: os.stat_result, is_critical: bool) -> Target:
        try:
            current = self.digests.digest(path)
        except OSError as e:
            log.warning("Cannot digest %s, it will be scanned: %s", path, e)
            return Target(path, Action.FULL_SCAN, None, st.st_size, is_critical)
        self.bytes_hashed += current.bytes_read
        decision = self.store.should_skip(str(path), current.digest, self.sigdb_version)
        if decision.skip:
            return Target(path, Action.SKIP, "cached", st.st_size, is_critical, decision.verdict)
        return Target(path, Action.FULL_SCAN, decision.reason.value, st.st_size, is_critical)


class BootPolicy(IScanPolicy):
    """Only the critical set. Baselined files are integrity checked."""

    policy = ScanPolicy.BOOT

    def __init__(self, store, sigdb_version, skip_types, critical, baseline):
        if not critical:
            raise ValueError("The boot policy needs a nonempty critical set")
        if baseline is None:
            raise BaselineRequiredError("The boot policy needs an integrity baseline")
        super().__init__(store, sigdb_version, skip_types, critical, baseline)

    def targets(self, root: Path, excluded: set[Path]) -> list[Target]:
        targets = []
        for path in self.critical.resolve(root):
            if path in excluded or any(parent in excluded for parent in path.parents):
                continue
            try:
                size = path.stat().st_size
            except OSError:
                size = 0
            if path.name.endswith((SUFFIX, TMP_SUFFIX)):
                targets.append(Target(path, Action.EXEMPT, "archived", size, critical=True))
                continue
            action = Action.INTEGRITY_CHECK if path in self.baseline else Action.FULL_SCAN
            targets.append(Target(path, action, None, size, critical=True))
        return targets


def store_counters(store: StateStore | None) -> tuple[int, int]:
    if store is None:
        return 0, 0
    return store.warm_hits, store.persistent_reads


def get_policy(policy: ScanPolicy | str) -> type[IScanPolicy]:
    """Policy class for a ``ScanPolicy`` member or its name.

    Raises:
        ValueError: Raised if no policy class implements ``policy``
    """
    if isinstance(policy, str):
        try:
            policy = ScanPolicy[policy.upper()]
        except KeyError:
            raise ValueError(f"Unknown scan policy: {policy}") from None
    policies = {subcls.policy: subcls for subcls in IScanPolicy.get_all_subclasses()}
    if policy not in policies:
        raise ValueError(f"No implementation for scan policy {policy.name}")
    return policies[policy]


def build_plan(
    root: str | os.PathLike,
    policy: ScanPolicy | str,
    store: StateStore | None,
    sigdb_version: int,
    critical: CriticalSet | None = None,
    skip_types: Iterable[str] = DEFAULT_SKIP_TYPES,
    *,
    baseline: Baseline | None = None,
    exclude: Iterable[str | os.PathLike] = (),
) -> ScanPlan:
    """Build the scan plan of ``root`` under ``policy``.

    Args:
        root (str | os.PathLike): Directory to scan
        policy (ScanPolicy | str): Scan policy
        store (StateStore | None): Prior results; required by the smart policy
        sigdb_version (int): Version of the signatures in use
        critical (CriticalSet, optional): Critical files, required by the boot
            policy and scheduled first by the others
        skip_types (Iterable[str], optional): Extensions never signature scanned
        baseline (Baseline, optional): Integrity baseline, required by the boot
            policy
        exclude (Iterable[str | os.PathLike], optional): Files and directories
            left out of the walk (state store, quarantine, baseline file)

    Raises:
        BaselineRequiredError: Raised for the boot policy without a baseline
        ValueError: Raised for the boot policy with an empty critical set

    Returns:
        ScanPlan: The ordered plan
    """
    start = time.perf_counter()
    root = Path(root).resolve()
    impl = get_policy(policy)(store, sigdb_version, skip_types, critical, baseline)
    excluded = {Path(p).resolve() for p in exclude}
    hits, reads = store_counters(store)
    targets = order_targets(impl.targets(root, excluded))
    end_hits, end_reads = store_counters(store)
    plan = ScanPlan(
        policy=impl.policy,
        root=root,
        targets=targets,
        created_at=time.time(),
        sigdb_version=sigdb_version,
        baseline=baseline,
        bytes_hashed=impl.bytes_hashed,
        plan_seconds=time.perf_counter() - start,
        counters={"warm_hits": end_hits - hits, "persistent_reads": end_reads - reads},
    )
    log.info(
        "Planned %s scan of %s: %s",
        plan.policy.name.lower(),
        root,
        dict(sorted(plan.action_counts().items())),
    )
    return plan

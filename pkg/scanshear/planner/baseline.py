#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Critical sets, integrity baselines and the integrity checker.

Baseline file format::

    BASE 1
    ENT <hex digest> <mtime> <path>
    ...
    SIGV <signature database version>
"""

from __future__ import annotations

import glob
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from scanshear.container import scan_file
from scanshear.matcher import Matcher
from scanshear.parameters import BudgetParameters
from scanshear.statestore import FileDigest, Verdict, hash_file

log = logging.getLogger(__name__)

BASELINE_TAG = "BASE 1"
_GLOB_CHARS = frozenset("*?[")


@dataclass(frozen=True)
class CriticalSet:
    """Files that a boot scan covers.

    Attributes:
        paths (tuple[str, ...]): Explicit paths, absolute or relative to the root
        globs (tuple[str, ...]): Glob patterns, absolute or relative to the root
    """

    paths: tuple[str, ...] = ()
    globs: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.paths or self.globs)

    def resolve(self, root: str | os.PathLike) -> list[Path]:
        """Expand to absolute paths, sorted and unique.

        Explicit paths are kept even when missing, so that a boot scan reports
        them. Globs only contribute existing regular files.
        """
        root = Path(root).resolve()
        resolved = {_absolute(root, p) for p in self.paths}
        for pattern in self.globs:
            full = pattern if os.path.isabs(pattern) else str(root / pattern)
            resolved.update(
                Path(match) for match in glob.glob(full, recursive=True) if os.path.isfile(match)
            )
        return sorted(resolved)


def load_critical_set(manifest: str | os.PathLike) -> CriticalSet:
    """Read a critical manifest: one path or glob per line, ``#`` starts a comment."""
    paths, globs = [], []
    for line in Path(manifest).read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if not entry:
            continue
        (globs if _GLOB_CHARS & set(entry) else paths).append(entry)
    return CriticalSet(tuple(paths), tuple(globs))


class IntegrityOutcome(Enum):
    UNMODIFIED = "unmodified"
    MODIFIED = "modified"
    MISSING = "missing"


@dataclass(frozen=True)
class BaselineEntry:
    path: str
    digest: str
    mtime: int


@dataclass
class Baseline:
    """Digests of known-clean copies of critical files.

    Attributes:
        sigdb_version (int): Signature database version at creation
        entries (dict[str, BaselineEntry]): Entries keyed by absolute path
    """

    sigdb_version: int
    entries: dict[str, BaselineEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, path: str | os.PathLike) -> bool:
        return str(path) in self.entries

    def __getitem__(self, path: str | os.PathLike) -> BaselineEntry:
        return self.entries[str(path)]

    def add(self, entry: BaselineEntry) -> None:
        if entry.path in self.entries:
            raise ValueError(f"Duplicate baseline path: {entry.path}")
        self.entries[entry.path] = entry

    def dumps(self) -> str:
        lines = [BASELINE_TAG]
        lines += [
            f"ENT {e.digest} {e.mtime} {e.path}"
            for e in sorted(self.entries.values(), key=lambda e: e.path)
        ]
        lines.append(f"SIGV {self.sigdb_version}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> Baseline:
        """Parse a baseline file.

        Raises:
            ValueError: Raised on a malformed line, with its line number
        """
        lines = text.splitlines()
        if not lines or lines[0].strip() != BASELINE_TAG:
            raise ValueError(f"line 1: expected {BASELINE_TAG!r} header")
        entries = []
        version = None
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            if version is not None:
                raise ValueError(f"line {lineno}: content after SIGV")
            key, _, rest = line.partition(" ")
            try:
                if key == "ENT":
                    digest, mtime, path = rest.split(" ", 2)
                    entries.append(BaselineEntry(path, digest, int(mtime)))
                elif key == "SIGV":
                    version = int(rest)
                else:
                    raise ValueError(f"unknown record {key!r}")
            except ValueError as e:
                raise ValueError(f"line {lineno}: {e}") from e
        if version is None:
            raise ValueError("missing SIGV record")
        baseline = cls(version)
        for entry in entries:
            baseline.add(entry)
        return baseline


def save_baseline(baseline: Baseline, path: str | os.PathLike) -> None:
    tmp = Path(f"{path}.tmp")
    tmp.write_text(baseline.dumps(), encoding="utf-8")
    os.replace(tmp, path)


def load_baseline(path: str | os.PathLike) -> Baseline:
    return Baseline.loads(Path(path).read_text(encoding="utf-8"))


def check_integrity(
    baseline: Baseline,
    path: str | os.PathLike,
    algorithm: str = "sha256",
) -> tuple[IntegrityOutcome, FileDigest | None]:
    """As ``integrity_check``, also returning the digest that was computed."""
    expected = baseline[path].digest
    try:
        current = hash_file(path, algorithm)
    except OSError as e:
        log.info("Integrity check of %s: %s", path, e)
        return IntegrityOutcome.MISSING, None
    if current.digest == expected:
        return IntegrityOutcome.UNMODIFIED, current
    return IntegrityOutcome.MODIFIED, current


def integrity_check(
    baseline: Baseline,
    path: str | os.PathLike,
    algorithm: str = "sha256",
) -> IntegrityOutcome:
    """Compare a file with its known-clean baseline digest.

    Args:
        baseline (Baseline): Baseline holding ``path``
        path (str | os.PathLike): Absolute path of a baselined file
        algorithm (str, optional): Digest algorithm of the baseline

    Raises:
        KeyError: Raised if ``path`` is not in the baseline

    Returns:
        IntegrityOutcome: ``MISSING`` when the file cannot be read
    """
    return check_integrity(baseline, path, algorithm)[0]


@dataclass
class BaselineResult:
    """Outcome of ``create_baseline``.

    Attributes:
        baseline (Baseline): Entries for the clean critical files
        excluded (dict[str, Verdict]): Critical files left out, with their verdicts
    """

    baseline: Baseline
    excluded: dict[str, Verdict] = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.excluded)

    @property
    def infected(self) -> dict[str, Verdict]:
        return {p: v for p, v in self.excluded.items() if v.is_infected}


def create_baseline(
    critical: CriticalSet,
    matcher: Matcher,
    sigdb_version: int,
    *,
    root: str | os.PathLike = ".",
    budget: BudgetParameters | None = None,
    algorithm: str = "sha256",
) -> BaselineResult:
    """Scan the critical files and record the clean ones.

    Args:
        critical (CriticalSet): Files to baseline
        matcher (Matcher): Current signatures
        sigdb_version (int): Version of ``matcher``'s signatures
        root (str | os.PathLike, optional): Root for relative critical entries
        budget (BudgetParameters, optional): Container expansion limits
        algorithm (str, optional): Digest algorithm

    Raises:
        ValueError: Raised if the critical set is empty
        FileNotFoundError: Raised if a critical file does not exist

    Returns:
        BaselineResult: The baseline, plus the files excluded because they were
            not Clean
    """
    paths = critical.resolve(root)
    if not paths:
        raise ValueError("The critical set is empty")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"Critical files not found: {', '.join(missing)}")

    result = BaselineResult(Baseline(sigdb_version))
    for path in paths:
        scan = scan_file(path, matcher, budget, algorithm=algorithm)
        if scan.verdict.is_clean:
            result.baseline.add(BaselineEntry(str(path), scan.digest, int(path.stat().st_mtime)))
        else:
            log.warning("Leaving %s out of the baseline: %s", path, scan.verdict)
            result.excluded[str(path)] = scan.verdict
    log.info(
        "Baseline of %d files at signature version %d (%d excluded)",
        len(result.baseline),
        sigdb_version,
        len(result.excluded),
    )
    return result


def _absolute(root: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else root / p

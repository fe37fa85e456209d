#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import logging
import os
import shutil
import stat
import tempfile
import threading
import time
import weakref
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

from scanshear.container import ContainerFormatError, scan_seekable
from scanshear.matcher import Matcher
from scanshear.parameters import BudgetParameters
from scanshear.statestore import ScanRecord, StateStore, Verdict, hash_file

from .avar import SUFFIX, TMP_SUFFIX, AvarHeader, read_header, read_payload, write_payload

log = logging.getLogger(__name__)

CHUNK_SIZE = 1024 * 1024
QUARANTINE_DIR = "quarantine"


class _PathLock:
    __slots__ = ("lock", "__weakref__")

    def __init__(self):
        self.lock = threading.Lock()


# Entries disappear once no caller holds them
_locks: weakref.WeakValueDictionary[str, _PathLock] = weakref.WeakValueDictionary()
_locks_guard = threading.Lock()


@contextmanager
def path_lock(path: str | os.PathLike) -> Iterator[None]:
    """Serialize archive and restore of one original path within this process."""
    key = os.path.abspath(path)
    with _locks_guard:
        held = _locks.get(key)
        if held is None:
            held = _locks[key] = _PathLock()
    with held.lock:
        yield


@dataclass(frozen=True)
class ArchiveEntry:
    """An archived file.

    Attributes:
        original_path (Path): Where the file lived, and is restored to
        container_path (Path): The ``.avar`` container beside it
        original_digest (str): Hex content digest of the payload
        original_mtime (int): Modification time of the original, whole seconds
        archived_at (float): When the container was written
        length (int): Payload length in bytes
    """

    original_path: Path
    container_path: Path
    original_digest: str
    original_mtime: int
    archived_at: float
    length: int


@dataclass(frozen=True)
class RestoreResult:
    """Outcome of ``restore_and_scan``.

    Attributes:
        verdict (Verdict): Verdict of the payload
        restored_path (Path | None): The recreated original, when Clean
        quarantine_path (Path | None): Where the container went, when Infected
    """

    verdict: Verdict
    restored_path: Path | None = None
    quarantine_path: Path | None = None


@dataclass
class ArchiveRun:
    archived: list[ArchiveEntry] = field(default_factory=list)
    failed: list[tuple[Path, str]] = field(default_factory=list)


def container_path_for(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + SUFFIX)


def select_nru(
    root: str | os.PathLike,
    threshold: timedelta,
    now: float | None = None,
    *,
    exclude: Iterable[str | os.PathLike] = (),
) -> list[Path]:
    """Find non-recently-used regular files under ``root``.

    A file's last use is its access time. Where the filesystem reports no
    access time (zero), the modification time stands in for it.

    Args:
        root (str | os.PathLike): Directory to search
        threshold (timedelta): Files unused for longer than this are selected
        now (float, optional): Reference time, seconds since the epoch.
            Defaults to the current time.
        exclude (Iterable[str | os.PathLike], optional): Files and directories
            never selected (state store, quarantine, baseline)

    Returns:
        list[Path]: Selected files, sorted
    """
    now = time.time() if now is None else now
    cutoff = now - threshold.total_seconds()
    excluded = {Path(p).absolute() for p in exclude}
    selected = []
    for path, st in walk_regular_files(Path(root).absolute(), excluded):
        if path.name.endswith((SUFFIX, TMP_SUFFIX)):
            continue
        last_use = st.st_atime or st.st_mtime
        if last_use < cutoff:
            selected.append(path)
    return sorted(selected)


def archive(
    path: str | os.PathLike,
    *,
    algorithm: str = "sha256",
    fsync: bool = True,
) -> ArchiveEntry:
    """Move a file into an AVAR container beside it.

    The container is written under a temporary name and renamed into place
    before the original is removed. A crash leaves the original, the complete
    container, or both; ``list_entries`` settles the last case.

    Args:
        path (str | os.PathLike): Live regular file
        algorithm (str, optional): Digest algorithm. Defaults to sha256.
        fsync (bool, optional): Flush the container before removing the original

    Raises:
        FileExistsError: Raised if the file is already archived
        ValueError: Raised if ``path`` is not a regular file
        OSError: Raised on I/O failure; the original is left untouched

    Returns:
        ArchiveEntry: The new entry
    """
    path = Path(path).absolute()
    if "\n" in path.name:
        raise ValueError(f"Cannot archive a file whose name contains a newline: {path!r}")
    container = container_path_for(path)
    tmp = container.with_name(path.name + TMP_SUFFIX)
    with path_lock(path):
        st = path.stat()
        if not stat.S_ISREG(st.st_mode):
            raise ValueError(f"{path} is not a regular file")
        if container.exists():
            raise FileExistsError(f"{path} is already archived as {container}")

        digest = hash_file(path, algorithm).digest
        header = AvarHeader(path.name, digest, int(st.st_mtime), st.st_size)
        try:
            with open(path, "rb") as src, open(tmp, "wb") as out:
                out.write(header.encode())
                copied = write_payload(out, src, st.st_size, algorithm, CHUNK_SIZE)
                if copied != digest:
                    raise ContainerFormatError(f"{path} changed while it was being archived")
                out.flush()
                if fsync:
                    os.fsync(out.fileno())
            os.replace(tmp, container)
        except (OSError, ContainerFormatError):
            tmp.unlink(missing_ok=True)
            raise
        if fsync:
            _fsync_dir(container.parent)
        path.unlink()

    log.info("Archived %s (%d bytes)", path, st.st_size)
    return ArchiveEntry(
        path,
        container,
        digest,
        header.mtime,
        container.stat().st_mtime,
        header.length,
    )


def archive_nru(
    root: str | os.PathLike,
    threshold: timedelta,
    now: float | None = None,
    *,
    exclude: Iterable[str | os.PathLike] = (),
    algorithm: str = "sha256",
    fsync: bool = True,
) -> ArchiveRun:
    """Archive every non-recently-used file under ``root``; failures are collected."""
    run = ArchiveRun()
    for path in select_nru(root, threshold, now, exclude=exclude):
        try:
            run.archived.append(archive(path, algorithm=algorithm, fsync=fsync))
        except (OSError, ValueError) as e:
            log.warning("Could not archive %s: %s", path, e)
            run.failed.append((path, str(e)))
    return run


def read_entry(container: str | os.PathLike) -> ArchiveEntry:
    """Entry described by a container's header.

    Raises:
        ContainerFormatError: Raised if the header is unreadable
    """
    container = Path(container).absolute()
    with open(container, "rb") as fh:
        header = read_header(fh)
    original = container.with_name(container.name[: -len(SUFFIX)])
    if header.name != original.name:
        raise ContainerFormatError(
            f"{container} holds {header.name!r}, expected {original.name!r}",
        )
    return ArchiveEntry(
        original,
        container,
        header.digest,
        header.mtime,
        container.stat().st_mtime,
        header.length,
    )


def list_entries(
    root: str | os.PathLike,
    *,
    algorithm: str = "sha256",
    exclude: Iterable[str | os.PathLike] = (),
) -> list[ArchiveEntry]:
    """The archive index, derived from the containers under ``root``.

    Leftovers of interrupted archiving are settled on the way. Temporary
    containers are removed. Where both the original and a container exist, the
    original is removed if its digest matches the container's payload.
    Otherwise both files are kept and the container is left out of the index
    with a warning; it is listed again once the original is gone.

    Returns:
        list[ArchiveEntry]: Entries sorted by original path
    """
    excluded = {Path(p).absolute() for p in exclude}
    entries = []
    for path, _ in walk_regular_files(Path(root).absolute(), excluded):
        if path.name.endswith(TMP_SUFFIX):
            log.info("Removing interrupted archive %s", path)
            path.unlink(missing_ok=True)
            continue
        if not path.name.endswith(SUFFIX):
            continue
        try:
            entry = read_entry(path)
        except ContainerFormatError as e:
            log.warning("Ignoring unreadable container %s: %s", path, e)
            continue
        with path_lock(entry.original_path):
            if entry.original_path.exists():
                if hash_file(entry.original_path, algorithm).digest == entry.original_digest:
                    log.info("Completing interrupted archive of %s", entry.original_path)
                    entry.original_path.unlink()
                else:
                    log.warning(
                        "Both %s and %s exist with different content, leaving both",
                        entry.original_path,
                        path,
                    )
                    continue
        entries.append(entry)
    return sorted(entries, key=lambda e: e.original_path)


def restore_and_scan(
    entry: ArchiveEntry,
    matcher: Matcher,
    current_sigdb_version: int,
    *,
    store: StateStore | None = None,
    budget: BudgetParameters | None = None,
    quarantine_dir: str | os.PathLike | None = None,
    root: str | os.PathLike | None = None,
    algorithm: str = "sha256",
    quick: bool = False,
) -> RestoreResult:
    """Scan an archived payload and make it available only if it is clean.

    The payload is scanned before the original path is recreated.

    - Clean: the original is restored with its modification time, the container
      removed and a Clean record written to ``store``.
    - Infected: the container is moved to the quarantine directory and the
      original path stays absent.
    - Unscannable: the container is left in place.

    Args:
        entry (ArchiveEntry): Entry to restore
        matcher (Matcher): Current signatures
        current_sigdb_version (int): Version recorded for a clean result
        store (StateStore, optional): Receives the Clean record
        budget (BudgetParameters, optional): Container expansion limits
        quarantine_dir (str | os.PathLike, optional): Where an infected
            container is moved. Defaults to ``quarantine/`` beside ``root``.
        root (str | os.PathLike, optional): Scan root the entry was listed
            from; one of ``quarantine_dir`` and ``root`` is required
        algorithm (str, optional): Digest algorithm the container was written with
        quick (bool, optional): Skip exact verification of signature hits

    Raises:
        ValueError: Raised if neither ``quarantine_dir`` nor ``root`` is given
        FileExistsError: Raised if a clean payload's original path was recreated
            by someone else in the meantime

    Returns:
        RestoreResult: Verdict and where things ended up
    """
    if quarantine_dir is None:
        if root is None:
            raise ValueError("restore_and_scan needs a quarantine_dir or the scan root")
        quarantine_dir = default_quarantine_dir(root)
    budget = budget or BudgetParameters()
    with path_lock(entry.original_path), tempfile.SpooledTemporaryFile(
        max_size=budget.max_member_in_memory,
    ) as payload:
        try:
            with open(entry.container_path, "rb") as fh:
                header = read_header(fh)
                read_payload(fh, header, payload, algorithm, CHUNK_SIZE)
        except ContainerFormatError as e:
            log.warning("Cannot restore %s: %s", entry.container_path, e)
            return RestoreResult(Verdict.unscannable("corrupt-container"))

        verdict = scan_seekable(
            payload,
            matcher,
            budget,
            quick=quick,
            name=str(entry.container_path),
        )
        if verdict.is_infected:
            target = _quarantine(entry, quarantine_dir)
            log.info("Quarantined %s as %s: %s", entry.container_path, target, verdict)
            return RestoreResult(verdict, quarantine_path=target)
        if not verdict.is_clean:
            log.info("Leaving %s archived: %s", entry.container_path, verdict)
            return RestoreResult(verdict)

        _restore(entry, header, payload)
        if store is not None:
            store.record_result(
                ScanRecord(
                    path=str(entry.original_path),
                    digest=header.digest,
                    sigdb_version=current_sigdb_version,
                    scanned_at=time.time(),
                    verdict=verdict,
                ),
            )
        log.info("Restored %s", entry.original_path)
        return RestoreResult(verdict, restored_path=entry.original_path)


def default_quarantine_dir(root: str | os.PathLike) -> Path:
    return Path(root).absolute().parent / QUARANTINE_DIR


def _restore(entry: ArchiveEntry, header: AvarHeader, payload) -> None:
    original = entry.original_path
    if original.exists():
        raise FileExistsError(f"{original} exists, refusing to overwrite it")
    tmp = original.with_name(f".{original.name}.restore")
    try:
        payload.seek(0)
        with open(tmp, "wb") as out:
            shutil.copyfileobj(payload, out, CHUNK_SIZE)
            out.flush()
            os.fsync(out.fileno())
        os.utime(tmp, (header.mtime, header.mtime))
        os.replace(tmp, original)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise
    entry.container_path.unlink()


def _quarantine(entry: ArchiveEntry, quarantine_dir: str | os.PathLike) -> Path:
    qdir = Path(quarantine_dir)
    qdir.mkdir(parents=True, exist_ok=True)
    target = qdir / entry.container_path.name
    n = 1
    while target.exists():
        target = qdir / f"{entry.container_path.name}.{n}"
        n += 1
    shutil.move(entry.container_path, target)
    return target


def walk_regular_files(root: Path, excluded: set[Path]) -> Iterator[tuple[Path, os.stat_result]]:
    """Regular files under ``root`` in sorted order, not following symlinks.

    Unreadable entries are logged and left out, as are ``excluded`` files and
    directories.
    """

    def report(error: OSError) -> None:
        log.warning("Cannot read %s: %s", error.filename, error.strerror)

    for dirpath, dirnames, filenames in os.walk(root, onerror=report):
        base = Path(dirpath)
        dirnames[:] = sorted(d for d in dirnames if base / d not in excluded)
        for name in sorted(filenames):
            path = base / name
            if path in excluded:
                continue
            try:
                st = path.lstat()
            except OSError as e:
                report(e)
                continue
            if stat.S_ISREG(st.st_mode):
                yield path, st


def _fsync_dir(path: Path) -> None:
    if os.name != "posix":
        return
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)

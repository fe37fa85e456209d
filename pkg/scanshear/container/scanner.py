#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import gzip
import hashlib
import io
import logging
import os
import tarfile
import tempfile
import time
import zipfile
import zlib
from collections.abc import Iterator
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
from typing import BinaryIO

from scanshear.matcher import Matcher, MatchHit, scan_stream
from scanshear.matcher.matcher import DEFAULT_CHUNK_SIZE
from scanshear.parameters import BudgetParameters
from scanshear.statestore import FileFingerprint, Verdict, combine

from .budget import BudgetExceeded, BudgetTracker
from .formats import (
    HEAD_SIZE,
    ContainerFormatError,
    IContainerFormat,
    Member,
    detect_format,
    has_encrypted_magic,
)

log = logging.getLogger(__name__)

ENCRYPTED = "encrypted"
PLAIN = "plain"

# Raised by the format readers when a member's data is damaged
_MEMBER_ERRORS = (
    zipfile.BadZipFile,
    tarfile.TarError,
    gzip.BadGzipFile,
    zlib.error,
    EOFError,
)


@dataclass(frozen=True)
class ObjectScan:
    """Outcome of scanning one file.

    Attributes:
        verdict (Verdict): Verdict of the object
        digest (str): Hex content digest of the file, from the same read
        bytes_read (int): File bytes read plus container bytes expanded
        fingerprint (FileFingerprint | None): Metadata seen before reading, or
            ``None`` if the file changed while it was read
        hashed_at_ns (int): When reading started, in epoch nanoseconds
        kind (str): Classification of the object
    """

    verdict: Verdict
    digest: str
    bytes_read: int
    fingerprint: FileFingerprint | None
    hashed_at_ns: int
    kind: str


def classify(source: bytes | str | os.PathLike) -> str:
    """Classify an object by its magic bytes.

    Args:
        source (bytes | str | os.PathLike): Leading bytes of the object (at least
            512, or all of it if smaller), or a path to it

    Returns:
        str: A container format name (``zip``, ``tar``, ``gzip``), ``encrypted``
            or ``plain``
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        return _classify(io.BytesIO(bytes(source)))
    with open(source, "rb") as fh:
        return _classify(fh)


def scan_file(
    path: str | os.PathLike,
    matcher: Matcher,
    budget: BudgetParameters | None = None,
    *,
    algorithm: str = "sha256",
    quick: bool = False,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> ObjectScan:
    """Scan a file and digest its content in the same read.

    Plain files are streamed through the matcher. Containers are expanded member
    by member, recursively, within ``budget``.

    Args:
        path (str | os.PathLike): File to scan
        matcher (Matcher): Signatures to look for
        budget (BudgetParameters, optional): Expansion limits
        algorithm (str, optional): hashlib digest algorithm. Defaults to sha256.
        quick (bool, optional): Skip exact verification of signature hits
        chunk_size (int, optional): Read size

    Raises:
        OSError: Raised if the file cannot be read

    Returns:
        ObjectScan: Verdict and digest
    """
    before = FileFingerprint.from_stat(os.stat(path))
    hashed_at_ns = time.time_ns()
    hasher = hashlib.new(algorithm)
    expansion = _Expansion(matcher, budget, quick, chunk_size)
    with expansion, open(path, "rb") as fh:
        head = fh.read(HEAD_SIZE)
        fh.seek(0)
        encrypted = has_encrypted_magic(head)
        fmt = None if encrypted else detect_format(head)
        if fmt is None and not encrypted:
            kind = PLAIN
            verdict = _hits_verdict(
                scan_stream(matcher, fh, chunk_size, quick=quick, on_chunk=hasher.update),
            )
            bytes_read = fh.tell()
        else:
            while chunk := fh.read(chunk_size):
                hasher.update(chunk)
            bytes_read = fh.tell()
            if encrypted:
                kind = ENCRYPTED
                verdict = Verdict.unscannable(ENCRYPTED)
                log.info("%s is encrypted, not scanned", path)
            else:
                kind = fmt.name
                verdict = expansion.expand(fh, fmt, depth=0, name=str(path))
                bytes_read += expansion.tracker.expanded_bytes
    after = FileFingerprint.from_stat(os.stat(path))
    return ObjectScan(
        verdict,
        hasher.hexdigest(),
        bytes_read,
        before if after == before else None,
        hashed_at_ns,
        kind,
    )


def scan_object(
    path: str | os.PathLike,
    matcher: Matcher,
    budget: BudgetParameters | None = None,
    **kwargs,
) -> Verdict:
    """Verdict of the file at ``path``; see ``scan_file``."""
    return scan_file(path, matcher, budget, **kwargs).verdict


def scan_buffer(
    data: bytes,
    matcher: Matcher,
    budget: BudgetParameters | None = None,
    *,
    quick: bool = False,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> Verdict:
    """Verdict of an in-memory object, with the same rules as ``scan_object``."""
    return scan_seekable(io.BytesIO(data), matcher, budget, quick=quick, chunk_size=chunk_size)


def scan_seekable(
    fh: BinaryIO,
    matcher: Matcher,
    budget: BudgetParameters | None = None,
    *,
    quick: bool = False,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    name: str = "<stream>",
) -> Verdict:
    """Verdict of the object held in a seekable stream, read from its start."""
    fh.seek(0)
    with _Expansion(matcher, budget, quick, chunk_size) as expansion:
        return expansion.scan_stream_object(fh, depth=0, name=name)


def _classify(fh: BinaryIO) -> str:
    head = fh.read(HEAD_SIZE)
    if has_encrypted_magic(head):
        return ENCRYPTED
    fmt = detect_format(head)
    if fmt is None:
        return PLAIN
    if fmt.declares_encryption(fh, head):
        return ENCRYPTED
    return fmt.name


def _hits_verdict(hits: list[MatchHit]) -> Verdict:
    if hits:
        return Verdict.infected(hit.signature_id for hit in hits)
    return Verdict.clean()


class _Expansion:
    """Recursive expansion of one top-level object under one budget."""

    def __init__(self, matcher, budget, quick, chunk_size):
        self.matcher = matcher
        self.budget = budget or BudgetParameters()
        self.quick = quick
        self.chunk_size = chunk_size
        self.tracker = BudgetTracker(self.budget)
        self._stack = ExitStack()
        self._spill_dir: str | None = None

    def __enter__(self) -> _Expansion:
        return self

    def __exit__(self, *exc) -> None:
        self._stack.close()

    def scan_stream_object(self, fh: BinaryIO, depth: int, name: str) -> Verdict:
        head = fh.read(HEAD_SIZE)
        fh.seek(0)
        if has_encrypted_magic(head):
            log.info("%s is encrypted, not scanned", name)
            return Verdict.unscannable(ENCRYPTED)
        fmt = detect_format(head)
        if fmt is None:
            return self.scan_raw(fh)
        return self.expand(fh, fmt, depth, name)

    def scan_raw(self, fh: BinaryIO) -> Verdict:
        fh.seek(0)
        return _hits_verdict(scan_stream(self.matcher, fh, self.chunk_size, quick=self.quick))

    def expand(self, fh: BinaryIO, fmt: IContainerFormat, depth: int, name: str) -> Verdict:
        try:
            self.tracker.check_depth(depth + 1)
        except BudgetExceeded as e:
            log.info("Not expanding %s at depth %d: %s", name, depth, e)
            return Verdict.unscannable(e.reason)

        with ExitStack() as stack:
            try:
                members = fmt.members(fh, stack)
            except ContainerFormatError as e:
                log.info("%s looks like %s but is not, scanning raw bytes: %s", name, fmt.name, e)
                return self.scan_raw(fh)
            verdicts = []
            for member in members:
                if self.tracker.exhausted:
                    verdicts.append(Verdict.unscannable(self.tracker.exhausted))
                    break
                verdicts.append(self.scan_member(member, depth + 1, f"{name}!{member.name}"))
            return combine(verdicts)

    def scan_member(self, member: Member, depth: int, name: str) -> Verdict:
        if member.encrypted:
            log.info("%s is encrypted, not scanned", name)
            return Verdict.unscannable(ENCRYPTED)
        try:
            self.tracker.enter_member()
            self.tracker.check_declared(member.size, member.compressed_size)
            with self._materialize(member) as data:
                return self.scan_stream_object(data, depth, name)
        except BudgetExceeded as e:
            log.info("Stopped expanding %s: %s", name, e)
            return Verdict.unscannable(e.reason)
        except NotImplementedError as e:
            log.info("Cannot expand %s: %s", name, e)
            return Verdict.unscannable("unsupported-compression")
        except _MEMBER_ERRORS as e:
            log.info("Damaged member %s: %s", name, e)
            return Verdict.unscannable("corrupt-member")

    @contextmanager
    def _materialize(self, member: Member) -> Iterator[BinaryIO]:
        """Expand a member into memory, or into a spill file once it grows large."""
        with ExitStack() as keep:
            out: BinaryIO = io.BytesIO()
            spilled = False
            kept = 0
            with member.open() as src:
                while True:
                    chunk = src.read(min(self.chunk_size, self.tracker.remaining_bytes + 1))
                    if not chunk:
                        break
                    self.tracker.charge(len(chunk), kept, member.compressed_size)
                    if not spilled and kept + len(chunk) > self.budget.max_member_in_memory:
                        spill = keep.enter_context(tempfile.TemporaryFile(dir=self.spill_dir()))
                        spill.write(out.getbuffer())
                        out = spill
                        spilled = True
                    out.write(chunk)
                    kept += len(chunk)
            out.seek(0)
            yield out

    def spill_dir(self) -> str:
        if self._spill_dir is None:
            self._spill_dir = self._stack.enter_context(
                tempfile.TemporaryDirectory(prefix="scanshear-"),
            )
        return self._spill_dir

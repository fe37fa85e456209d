#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""The AVAR container, a non-executable wrapper for archived files.

Layout::

    AVAR1\\n
    PATH <original file name>\\n
    DIGEST <hex content digest>\\n
    MTIME <original modification time, whole seconds>\\n
    LEN <payload length>\\n
    \\n
    <payload, stored verbatim>
    <CRC-32 of the payload, 4 bytes big endian>
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass
from typing import BinaryIO

from scanshear.container import ContainerFormatError

MAGIC = b"AVAR1\n"
SUFFIX = ".avar"
TMP_SUFFIX = ".avar.tmp"

_CRC = struct.Struct(">I")
_MAX_HEADER_LINE = 4096
_FIELDS = ("PATH", "DIGEST", "MTIME", "LEN")


@dataclass(frozen=True)
class AvarHeader:
    name: str
    digest: str
    mtime: int
    length: int

    def encode(self) -> bytes:
        lines = [
            f"PATH {self.name}",
            f"DIGEST {self.digest}",
            f"MTIME {self.mtime}",
            f"LEN {self.length}",
            "",
            "",
        ]
        return MAGIC + "\n".join(lines).encode("utf-8")


def read_header(fh: BinaryIO) -> AvarHeader:
    """Parse the header, leaving ``fh`` at the start of the payload.

    Raises:
        ContainerFormatError: Raised if the header is missing or malformed
    """
    if fh.read(len(MAGIC)) != MAGIC:
        raise ContainerFormatError("Not an AVAR container")
    fields: dict[str, str] = {}
    while True:
        line = fh.readline(_MAX_HEADER_LINE)
        if not line.endswith(b"\n"):
            raise ContainerFormatError("Truncated AVAR header")
        if line == b"\n":
            break
        try:
            key, _, value = line[:-1].decode("utf-8").partition(" ")
        except UnicodeDecodeError as e:
            raise ContainerFormatError("AVAR header is not UTF-8") from e
        fields[key] = value

    missing = [key for key in _FIELDS if key not in fields]
    if missing:
        raise ContainerFormatError(f"AVAR header lacks {', '.join(missing)}")
    digest = fields["DIGEST"].lower()
    if not digest or any(c not in "0123456789abcdef" for c in digest):
        raise ContainerFormatError(f"Bad AVAR digest: {fields['DIGEST']!r}")
    try:
        mtime, length = int(fields["MTIME"]), int(fields["LEN"])
    except ValueError as e:
        raise ContainerFormatError(f"Bad AVAR header number: {e}") from e
    if mtime < 0 or length < 0 or not fields["PATH"]:
        raise ContainerFormatError("Bad AVAR header values")
    return AvarHeader(fields["PATH"], digest, mtime, length)


def write_payload(out: BinaryIO, src: BinaryIO, length: int, algorithm: str, chunk_size: int) -> str:
    """Copy exactly ``length`` payload bytes followed by their checksum.

    Raises:
        ContainerFormatError: Raised if ``src`` does not hold ``length`` bytes

    Returns:
        str: Hex digest of the copied bytes
    """
    crc = 0
    hasher = hashlib.new(algorithm)
    copied = 0
    while chunk := src.read(chunk_size):
        copied += len(chunk)
        if copied > length:
            raise ContainerFormatError("Source grew while it was being archived")
        crc = zlib.crc32(chunk, crc)
        hasher.update(chunk)
        out.write(chunk)
    if copied != length:
        raise ContainerFormatError("Source shrank while it was being archived")
    out.write(_CRC.pack(crc))
    return hasher.hexdigest()


def read_payload(fh: BinaryIO, header: AvarHeader, out: BinaryIO, algorithm: str, chunk_size: int) -> None:
    """Copy the payload into ``out``, verifying its length, checksum and digest.

    Raises:
        ContainerFormatError: Raised if the payload is damaged
    """
    crc = 0
    hasher = hashlib.new(algorithm)
    remaining = header.length
    while remaining:
        chunk = fh.read(min(chunk_size, remaining))
        if not chunk:
            raise ContainerFormatError("Truncated AVAR payload")
        crc = zlib.crc32(chunk, crc)
        hasher.update(chunk)
        out.write(chunk)
        remaining -= len(chunk)
    trailer = fh.read(_CRC.size)
    if len(trailer) != _CRC.size or _CRC.unpack(trailer)[0] != crc:
        raise ContainerFormatError("AVAR payload checksum mismatch")
    if fh.read(1):
        raise ContainerFormatError("Unexpected data after AVAR payload")
    if hasher.hexdigest() != header.digest:
        raise ContainerFormatError("AVAR payload digest mismatch")

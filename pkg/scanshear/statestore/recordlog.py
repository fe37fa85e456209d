#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Length-prefixed, checksummed record framing shared by ``LOG`` and ``SNAP.<n>``.

Each frame is ``>I`` payload length, the payload, then ``>I`` CRC-32 of the
payload. Readers stop at the first frame that is short or fails its checksum,
so a torn final append costs at most that one record.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any, BinaryIO

_LENGTH = struct.Struct(">I")
_CRC = struct.Struct(">I")
FRAME_OVERHEAD = _LENGTH.size + _CRC.size

# Upper bound on a single record, guards against reading garbage lengths
MAX_PAYLOAD = 16 * 1024 * 1024


@dataclass(frozen=True)
class Frame:
    """One decoded frame.

    Attributes:
        offset (int): File offset of the frame start
        end (int): File offset just past the frame
        entry (dict[str, Any]): Decoded payload
    """

    offset: int
    end: int
    entry: dict[str, Any]


def encode_frame(entry: dict[str, Any]) -> bytes:
    payload = json.dumps(entry, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LENGTH.pack(len(payload)) + payload + _CRC.pack(zlib.crc32(payload))


def read_frame(fh: BinaryIO, offset: int) -> Frame | None:
    """Read and verify the frame at ``offset``; ``None`` if it is not intact."""
    fh.seek(offset)
    head = fh.read(_LENGTH.size)
    if len(head) < _LENGTH.size:
        return None
    (length,) = _LENGTH.unpack(head)
    if length > MAX_PAYLOAD:
        return None
    body = fh.read(length + _CRC.size)
    if len(body) < length + _CRC.size:
        return None
    payload, crc = body[:length], body[length:]
    if _CRC.unpack(crc)[0] != zlib.crc32(payload):
        return None
    try:
        entry = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    return Frame(offset, offset + FRAME_OVERHEAD + length, entry)


def iter_frames(fh: BinaryIO) -> Iterator[Frame]:
    """Yield intact frames from the start of ``fh`` up to the first damaged one."""
    offset = 0
    while True:
        frame = read_frame(fh, offset)
        if frame is None:
            return
        yield frame
        offset = frame.end


def scan_file(path: str | os.PathLike) -> tuple[list[Frame], int]:
    """Read every intact frame of a file.

    Args:
        path (str | os.PathLike): Log or snapshot file

    Returns:
        tuple[list[Frame], int]: The frames, and the offset where intact data
            ends (the file size when nothing is torn)
    """
    path = Path(path)
    if not path.exists():
        return [], 0
    with open(path, "rb") as fh:
        frames = list(iter_frames(fh))
    return frames, frames[-1].end if frames else 0

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Reader and writer for the VDB signature database text format.

::

    VDB <version>
    # comment
    SIG <id> <name> <hexpattern> <offset> [FAM <family>]

``hexpattern`` is a run of hex byte pairs with ``??`` for a wildcard byte and
``offset`` is ``*`` (anywhere) or a decimal byte offset.
"""

from __future__ import annotations

import logging
import os
import re
from typing import BinaryIO

from .signature import (
    MIN_CONCRETE_BYTES,
    MIN_PATTERN_LENGTH,
    MIN_QUICK_PATTERN,
    PatternByte,
    Signature,
    SignatureDb,
)

log = logging.getLogger(__name__)

_HEX_BYTE = re.compile(r"[0-9a-fA-F]{2}", re.ASCII)
_DECIMAL = re.compile(r"[0-9]+", re.ASCII)

ANY_OFFSET = "*"


class SignatureDbError(ValueError):
    """Raised for a malformed signature database.

    Attributes:
        lineno (int): 1-based line of the offending record, 0 if not line specific
    """

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        prefix = f"line {lineno}: " if lineno else ""
        super().__init__(prefix + message)


def load_sigdb(source: BinaryIO) -> SignatureDb:
    """Parse and validate a signature database.

    Args:
        source (BinaryIO): Readable byte stream holding UTF-8 VDB text

    Raises:
        SignatureDbError: Raised for any malformed header or record

    Returns:
        SignatureDb: The validated database, signatures in file order
    """
    try:
        text = source.read().decode("utf-8")
    except UnicodeDecodeError as e:
        raise SignatureDbError(f"database is not UTF-8 text: {e}") from e

    version = None
    signatures: list[Signature] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if version is None:
            version = _parse_header(line, lineno)
            continue
        sig = _parse_record(line, lineno)
        if sig.id in seen:
            raise SignatureDbError(
                f"duplicate signature id '{sig.id}' (first defined on line {seen[sig.id]})",
                lineno,
            )
        seen[sig.id] = lineno
        signatures.append(sig)

    if version is None:
        raise SignatureDbError("missing 'VDB <version>' header")

    db = SignatureDb(version=version, signatures=tuple(signatures))
    log.info("Loaded signature database version %d with %d signatures", version, len(db))
    return db


def load_sigdb_file(path: str | os.PathLike) -> SignatureDb:
    """Load a signature database from a file path."""
    with open(path, "rb") as infile:
        return load_sigdb(infile)


def dump_sigdb(db: SignatureDb) -> str:
    """Serialize a database in canonical VDB form.

    Args:
        db (SignatureDb): Database to write

    Returns:
        str: VDB text that ``load_sigdb`` reads back into an equal database
    """
    lines = [f"VDB {db.version}"]
    for sig in db.signatures:
        offset = ANY_OFFSET if sig.offset is None else str(sig.offset)
        line = f"SIG {sig.id} {sig.name} {sig.hex_pattern} {offset}"
        if sig.family is not None:
            line += f" FAM {sig.family}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_hex_pattern(text: str, lineno: int = 0) -> tuple[PatternByte, ...]:
    """Decode hex pairs with ``??`` wildcards into a pattern.

    Args:
        text (str): Hex pattern text
        lineno (int, optional): Line number used in error messages

    Raises:
        SignatureDbError: Raised for odd length or non-hex pairs

    Returns:
        tuple[PatternByte, ...]: Pattern elements, ``None`` for wildcards
    """
    if len(text) % 2:
        raise SignatureDbError(f"hex pattern '{text}' has an odd number of digits", lineno)
    pattern: list[PatternByte] = []
    for i in range(0, len(text), 2):
        pair = text[i : i + 2]
        if pair == "??":
            pattern.append(None)
            continue
        if not _HEX_BYTE.fullmatch(pair):
            raise SignatureDbError(
                f"'{pair}' in pattern '{text}' is not a hex byte or '??'",
                lineno,
            )
        pattern.append(int(pair, 16))
    return tuple(pattern)


def _parse_header(line: str, lineno: int) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != "VDB":
        raise SignatureDbError(f"expected 'VDB <version>' header, got '{line}'", lineno)
    if not _DECIMAL.fullmatch(parts[1]):
        raise SignatureDbError(
            f"version must be a non-negative integer, got '{parts[1]}'",
            lineno,
        )
    return int(parts[1])


def _parse_record(line: str, lineno: int) -> Signature:
    parts = line.split()
    if parts[0] != "SIG":
        raise SignatureDbError(f"unknown record type '{parts[0]}'", lineno)
    if len(parts) not in (5, 7):
        raise SignatureDbError(
            "expected 'SIG <id> <name> <hexpattern> <offset> [FAM <family>]'",
            lineno,
        )
    _, sig_id, name, hex_pattern, offset_text, *rest = parts

    family = None
    if rest:
        if rest[0] != "FAM":
            raise SignatureDbError(f"expected 'FAM <family>', got '{rest[0]}'", lineno)
        family = rest[1]

    if offset_text == ANY_OFFSET:
        offset = None
    elif _DECIMAL.fullmatch(offset_text):
        offset = int(offset_text)
    else:
        raise SignatureDbError(
            f"offset must be '*' or a non-negative integer, got '{offset_text}'",
            lineno,
        )

    pattern = parse_hex_pattern(hex_pattern.lower(), lineno)
    sig = Signature(id=sig_id, name=name, pattern=pattern, offset=offset, family=family)
    _validate_pattern(sig, lineno)
    return sig


def _validate_pattern(sig: Signature, lineno: int) -> None:
    if sig.length < MIN_PATTERN_LENGTH:
        raise SignatureDbError(
            f"signature '{sig.id}': pattern length {sig.length} < {MIN_PATTERN_LENGTH}",
            lineno,
        )
    if sig.pattern[0] is None:
        raise SignatureDbError(
            f"signature '{sig.id}': pattern must start with a concrete byte",
            lineno,
        )
    if sig.concrete_count < MIN_CONCRETE_BYTES:
        raise SignatureDbError(
            f"signature '{sig.id}': pattern needs at least {MIN_CONCRETE_BYTES} "
            f"concrete bytes",
            lineno,
        )
    if len(sig.quick_pattern[1]) < MIN_QUICK_PATTERN:
        raise SignatureDbError(
            f"signature '{sig.id}': pattern needs a run of at least "
            f"{MIN_QUICK_PATTERN} concrete bytes",
            lineno,
        )

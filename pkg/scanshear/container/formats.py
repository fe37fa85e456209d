#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from __future__ import annotations

import gzip
import struct
import tarfile
import zipfile
from abc import ABC, abstractmethod
from collections.abc import Callable
from contextlib import ExitStack
from dataclasses import dataclass
from functools import partial
from typing import BinaryIO, ClassVar

# Bytes inspected to classify an object
HEAD_SIZE = 512

ENCRYPTED_MAGICS = (
    b"Salted__",  # openssl enc
    b"age-encryption.org/",
    b"-----BEGIN PGP MESSAGE-----",
)

# OpenPGP algorithm ids: public key, symmetric cipher, S2K specifier, hash
_PGP_PUBKEY_ALGOS = frozenset({1, 2, 3, 16, 18, 20, 22, 25})
_PGP_CIPHERS = frozenset(range(1, 14))
_PGP_S2K = frozenset({0, 1, 3})
_PGP_HASHES = frozenset({1, 2, 3, 8, 9, 10, 11, 12, 14})


class ContainerFormatError(ValueError):
    """Raised when an object has a container's magic but cannot be parsed."""


@dataclass(frozen=True)
class Member:
    """One entry of a container.

    Attributes:
        name (str): Name of the entry within its container
        size (int | None): Declared expanded size, if the format records it
        compressed_size (int | None): Stored size, if the format records it
        encrypted (bool): The format marks the entry as encrypted
        open (Callable[[], BinaryIO]): Returns a stream of the expanded bytes
    """

    name: str
    size: int | None
    compressed_size: int | None
    encrypted: bool
    open: Callable[[], BinaryIO]


class IContainerFormat(ABC):
    """Interface for container formats whose members are scanned recursively.

    Subclasses are discovered automatically. ``detect_format`` returns the first
    one whose ``matches`` accepts an object's leading bytes, and ``get_format``
    looks one up by ``name``.
    """

    name: ClassVar[str]

    @classmethod
    @abstractmethod
    def matches(cls, head: bytes) -> bool:
        """Whether ``head`` (the leading bytes of an object) is in this format."""
        raise NotImplementedError

    @abstractmethod
    def members(self, fh: BinaryIO, stack: ExitStack) -> list[Member]:
        """List the members of the container read from ``fh``.

        Args:
            fh (BinaryIO): Seekable stream positioned anywhere
            stack (ExitStack): Receives any resources that members' ``open``
                needs; closed by the caller once all members are read

        Raises:
            ContainerFormatError: Raised if the container cannot be parsed
        """
        raise NotImplementedError

    def declares_encryption(self, fh: BinaryIO, head: bytes) -> bool:
        """Whether the container marks any of its content as encrypted."""
        return False

    @classmethod
    def get_all_subclasses(cls: type, use_base=True) -> list[type]:
        """Returns all subclasses of a type
        Args:
            cls (type): Type to get subclasses of, ignored if use_base is True
            use_base (bool, optional): If set all subclasses of IContainerFormat
                are returned as opposed to of the current type. Defaults to True.

        Returns:
            list[type]: A list of all container format classes.
        """
        root = IContainerFormat if use_base else cls
        subclasses = []
        for subclass in root.__subclasses__():
            subclasses.append(subclass)
            subclasses.extend(subclass.get_all_subclasses(use_base=False))
        return subclasses


class ZipFormat(IContainerFormat):
    """Zip archives, stored or deflated members."""

    name = "zip"
    MAGICS = (b"PK\x03\x04", b"PK\x05\x06")

    @classmethod
    def matches(cls, head: bytes) -> bool:
        return head[:4] in cls.MAGICS

    def members(self, fh: BinaryIO, stack: ExitStack) -> list[Member]:
        fh.seek(0)
        try:
            zf = stack.enter_context(zipfile.ZipFile(fh))
        except (zipfile.BadZipFile, OSError, EOFError) as e:
            raise ContainerFormatError(f"Unreadable zip archive: {e}") from e
        return [
            Member(
                info.filename,
                info.file_size,
                info.compress_size,
                bool(info.flag_bits & 0x1),
                partial(zf.open, info),
            )
            for info in zf.infolist()
            if not info.is_dir()
        ]

    def declares_encryption(self, fh: BinaryIO, head: bytes) -> bool:
        fh.seek(0)
        try:
            with zipfile.ZipFile(fh) as zf:
                return any(info.flag_bits & 0x1 for info in zf.infolist())
        except (zipfile.BadZipFile, OSError, EOFError):
            # Fall back to the first local header's general purpose flags
            return len(head) >= 8 and head[:4] == self.MAGICS[0] and bool(head[6] & 0x1)


class TarFormat(IContainerFormat):
    """Uncompressed POSIX tar archives. Compressed tarballs nest inside gzip."""

    name = "tar"
    MAGIC_OFFSET = 257

    @classmethod
    def matches(cls, head: bytes) -> bool:
        return head[cls.MAGIC_OFFSET : cls.MAGIC_OFFSET + 5] == b"ustar"

    def members(self, fh: BinaryIO, stack: ExitStack) -> list[Member]:
        fh.seek(0)
        try:
            tf = stack.enter_context(tarfile.open(fileobj=fh, mode="r:"))
            infos = tf.getmembers()
        except (tarfile.TarError, EOFError) as e:
            raise ContainerFormatError(f"Unreadable tar archive: {e}") from e
        return [
            Member(info.name, info.size, info.size, False, partial(tf.extractfile, info))
            for info in infos
            if info.isfile()
        ]


class GzipFormat(IContainerFormat):
    """A gzip stream, treated as a container of one member."""

    name = "gzip"
    MAGIC = b"\x1f\x8b\x08"

    @classmethod
    def matches(cls, head: bytes) -> bool:
        return head[:3] == cls.MAGIC

    def members(self, fh: BinaryIO, stack: ExitStack) -> list[Member]:
        compressed_size = fh.seek(0, 2)

        def open_stream() -> BinaryIO:
            fh.seek(0)
            return gzip.GzipFile(fileobj=fh, mode="rb")

        return [Member("<gzip>", None, compressed_size, False, open_stream)]


def get_format(name: str) -> IContainerFormat:
    """Instantiate the container format called ``name``.

    Raises:
        ValueError: Raised when no format has that name
    """
    formats = {subcls.name: subcls for subcls in IContainerFormat.get_all_subclasses()}
    if name not in formats:
        raise ValueError(
            f"Unknown container format {name!r}. "
            f"Either create a new format or choose one of {sorted(formats)}",
        )
    return formats[name]()


def detect_format(head: bytes) -> IContainerFormat | None:
    for subcls in IContainerFormat.get_all_subclasses():
        if subcls.matches(head):
            return subcls()
    return None


def has_encrypted_magic(head: bytes) -> bool:
    """Whether ``head`` starts like a known encrypted envelope."""
    if head.startswith(ENCRYPTED_MAGICS):
        return True
    return _is_binary_pgp(head)


def _is_binary_pgp(head: bytes) -> bool:
    # A binary OpenPGP message opens with a public-key (tag 1) or symmetric-key
    # (tag 3) encrypted session key packet
    packet = _pgp_packet_header(head)
    if packet is None:
        return False
    tag, length, start = packet
    body = head[start : start + min(length, 10)]
    if tag == 1:
        # version 3, 8-byte key id, algorithm, then at least one MPI
        return (
            length >= 12 and len(body) == 10 and body[0] == 3 and body[9] in _PGP_PUBKEY_ALGOS
        )
    if tag == 3:
        # version 4, cipher, then an S2K specifier with its hash
        return (
            length >= 4
            and len(body) >= 4
            and body[0] == 4
            and body[1] in _PGP_CIPHERS
            and body[2] in _PGP_S2K
            and body[3] in _PGP_HASHES
        )
    return False


def _pgp_packet_header(head: bytes) -> tuple[int, int, int] | None:
    """``(tag, body length, body offset)`` of the first packet, or None."""
    if not head or not head[0] & 0x80:
        return None
    first = head[0]
    if first & 0x40:
        tag = first & 0x3F
        if len(head) < 2:
            return None
        octet = head[1]
        if octet < 192:
            return tag, octet, 2
        if octet < 224:
            if len(head) < 3:
                return None
            return tag, ((octet - 192) << 8) + head[2] + 192, 3
        if octet == 255 and len(head) >= 6:
            return tag, struct.unpack(">I", head[2:6])[0], 6
        # Partial lengths are only valid for data packets
        return None
    tag = (first >> 2) & 0x0F
    width = {0: 1, 1: 2, 2: 4}.get(first & 0x03)
    if width is None or len(head) < 1 + width:
        return None
    (length,) = struct.unpack({1: ">B", 2: ">H", 4: ">I"}[width], head[1 : 1 + width])
    return tag, length, 1 + width

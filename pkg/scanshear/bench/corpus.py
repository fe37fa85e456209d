#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Synthetic signatures and corpora for benchmarks and tests."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from scanshear.sigdb import Signature, SignatureDb

FULL_ALPHABET = np.arange(256, dtype=np.uint8)
# Clean buffers use the low half, signatures built for them the high half, so no
# signature can occur in a clean buffer
LOW_ALPHABET = np.arange(0x00, 0x80, dtype=np.uint8)
HIGH_ALPHABET = np.arange(0x80, 0x100, dtype=np.uint8)


def random_signature(
    rng: np.random.Generator,
    sig_id: str,
    *,
    min_length: int = 4,
    max_length: int = 16,
    wildcard_rate: float = 0.2,
    alphabet: np.ndarray = FULL_ALPHABET,
    offset: int | None = None,
    family: str | None = None,
) -> Signature:
    """A random valid signature. The first two bytes are always concrete."""
    length = int(rng.integers(min_length, max_length + 1))
    values = rng.choice(alphabet, size=length)
    wild = rng.random(length) < wildcard_rate
    wild[:2] = False
    pattern = tuple(None if w else int(v) for v, w in zip(values, wild, strict=True))
    return Signature(sig_id, f"Synthetic.{sig_id}", pattern, offset, family)


def random_signature_db(
    rng: np.random.Generator,
    n: int,
    *,
    version: int = 1,
    prefix: str = "s",
    **kwargs,
) -> SignatureDb:
    """``n`` random signatures with ids ``<prefix>0`` .. ``<prefix>{n-1}``.

    Keyword arguments are passed to ``random_signature``.
    """
    return SignatureDb(
        version,
        tuple(random_signature(rng, f"{prefix}{i}", **kwargs) for i in range(n)),
    )


def clean_signature_db(rng: np.random.Generator, n: int, *, version: int = 1) -> SignatureDb:
    """Signatures that never occur in a ``clean_buffer``."""
    return random_signature_db(rng, n, version=version, alphabet=HIGH_ALPHABET)


def clean_buffer(rng: np.random.Generator, size: int) -> bytes:
    return rng.choice(LOW_ALPHABET, size=size).tobytes()


def instantiate(sig: Signature, rng: np.random.Generator) -> bytes:
    """Bytes matching ``sig``, with random values at its wildcards."""
    fill = rng.integers(0, 256, size=sig.length)
    return bytes(int(f) if b is None else b for b, f in zip(sig.pattern, fill, strict=True))


def random_corpus(
    rng: np.random.Generator,
    size: int,
    db: SignatureDb | None = None,
    plants: int = 0,
    *,
    alphabet: np.ndarray = FULL_ALPHABET,
) -> bytes:
    """Random bytes with ``plants`` signature instances written at random places.

    Planted instances may overlap and overwrite each other; fixed-offset
    signatures are planted at their offset.
    """
    data = bytearray(rng.choice(alphabet, size=size).tobytes())
    if db is None or not len(db) or not size:
        return bytes(data)
    for _ in range(plants):
        sig = db.signatures[int(rng.integers(len(db)))]
        if sig.length > size:
            continue
        start = sig.offset if sig.offset is not None else int(rng.integers(size - sig.length + 1))
        if start + sig.length > size:
            continue
        data[start : start + sig.length] = instantiate(sig, rng)
    return bytes(data)


def write_tree(
    root: str | os.PathLike,
    rng: np.random.Generator,
    n_files: int,
    *,
    min_size: int = 256,
    max_size: int = 4096,
    fanout: int = 16,
) -> list[Path]:
    """Write ``n_files`` clean files spread over subdirectories of ``root``."""
    root = Path(root)
    paths = []
    for i in range(n_files):
        directory = root / f"d{i % fanout:02d}"
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"f{i:05d}.bin"
        path.write_bytes(clean_buffer(rng, int(rng.integers(min_size, max_size + 1))))
        paths.append(path)
    return paths

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

import hashlib
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanshear.bench import random_corpus, random_signature, random_signature_db, signature_scaling
from scanshear.matcher import (
    AhoCorasick,
    MatchHit,
    build_matcher,
    naive_scan,
    quick_mode_scan,
    scan_bytes,
    scan_stream,
)
from scanshear.parameters.scan_parameters import MiB
from scanshear.sigdb import Signature, SignatureDb

from .conftest import CLEAN, INFECTED

AB_ALPHABET = np.array([0x61, 0x62], dtype=np.uint8)


def brute_force(db: SignatureDb, data: bytes) -> list[MatchHit]:
    """Every start position where all concrete bytes of a signature match."""
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    hits = set()
    for sig in db.signatures:
        n = len(arr) - sig.length + 1
        if n <= 0:
            continue
        concrete = [(i, b) for i, b in enumerate(sig.pattern) if b is not None]
        i0, b0 = concrete[0]
        starts = np.flatnonzero(arr[i0 : i0 + n] == b0)
        for i, b in concrete[1:]:
            starts = starts[arr[starts + i] == b]
        if sig.offset is not None:
            starts = starts[starts == sig.offset]
        hits.update(MatchHit(int(s), sig.id) for s in starts)
    return sorted(hits)


def with_offsets(db: SignatureDb, rng: np.random.Generator, share: float = 0.1) -> SignatureDb:
    """Give a random share of the signatures a small fixed offset."""
    signatures = []
    for sig in db.signatures:
        offset = int(rng.integers(0, 64)) if rng.random() < share else None
        signatures.append(Signature(sig.id, sig.name, sig.pattern, offset, sig.family))
    return SignatureDb(db.version, tuple(signatures))


class TestAhoCorasick:
    def test_overlapping_patterns(self):
        ac = AhoCorasick([b"he", b"she", b"his", b"hers"])
        assert set(ac.iter_matches(b"ushers")) == {(3, 0), (3, 1), (5, 3)}

    def test_matches_in_end_order(self):
        ac = AhoCorasick([b"aa"])
        assert list(ac.iter_matches(b"aaaa")) == [(1, 0), (2, 0), (3, 0)]

    def test_duplicates_reported_separately(self):
        ac = AhoCorasick([b"ab", b"ab"])
        assert sorted(ac.iter_matches(b"xab")) == [(2, 0), (2, 1)]

    def test_empty_pattern_rejected(self):
        with pytest.raises(ValueError):
            AhoCorasick([b"ok", b""])

    def test_states_shared_by_prefixes(self):
        assert AhoCorasick([b"abc", b"abd"]).n_states == 5


class TestScanBytes:
    def test_plain_signature(self, matcher):
        start = INFECTED.index(b"X5O!P%@A")
        assert scan_bytes(matcher, INFECTED) == [MatchHit(start, "eicar1")]
        assert scan_bytes(matcher, CLEAN) == []

    def test_wildcard(self, matcher):
        data = b"xx" + bytes.fromhex("deadbeef77cafe") + b"yy"
        assert scan_bytes(matcher, data) == [MatchHit(2, "wild1")]
        assert scan_bytes(matcher, bytes.fromhex("deadbeef77cafa")) == []

    def test_fixed_offset(self, matcher):
        boot = bytes.fromhex("33c08ed0")
        assert scan_bytes(matcher, boot + CLEAN) == [MatchHit(0, "boot1")]
        assert scan_bytes(matcher, b"\x00" + boot + CLEAN) == []

    def test_hits_sorted_and_unique(self, matcher):
        data = INFECTED + bytes.fromhex("deadbeef00cafe") + INFECTED
        hits = scan_bytes(matcher, data)
        assert hits == sorted(set(hits))
        assert [h.signature_id for h in hits] == ["eicar1", "wild1", "eicar1"]

    def test_empty_db(self):
        assert scan_bytes(build_matcher(SignatureDb(1)), INFECTED) == []

    def test_matcher_metadata(self, matcher):
        assert matcher.version == 3
        assert matcher.max_pattern_length == 8
        assert matcher.signature_ids == {"eicar1", "wild1", "boot1"}


class TestQuickMode:
    def test_reports_unverified_candidates(self, matcher):
        # The quick-pattern of wild1 is deadbeef; the tail does not match
        data = bytes.fromhex("deadbeef00beef")
        assert scan_bytes(matcher, data) == []
        assert quick_mode_scan(matcher, data) == [MatchHit(0, "wild1")]


class TestScanStream:
    DATA = bytes.fromhex("33c08ed0") + CLEAN + INFECTED + bytes.fromhex("deadbeef11cafe") + CLEAN

    @pytest.mark.parametrize("chunk_size", [1, 3, 7, 8, 64, 4096])
    def test_matches_whole_buffer(self, matcher, chunk_size):
        hits = scan_stream(matcher, io.BytesIO(self.DATA), chunk_size)
        assert hits == scan_bytes(matcher, self.DATA)
        assert {h.signature_id for h in hits} == {"boot1", "eicar1", "wild1"}

    def test_fixed_offset_is_absolute(self, matcher):
        data = CLEAN + bytes.fromhex("33c08ed0")
        assert scan_stream(matcher, io.BytesIO(data), 4) == []

    def test_on_chunk_sees_every_byte(self, matcher):
        hasher = hashlib.sha256()
        scan_stream(matcher, io.BytesIO(self.DATA), 5, on_chunk=hasher.update)
        assert hasher.hexdigest() == hashlib.sha256(self.DATA).hexdigest()

    def test_bad_chunk_size(self, matcher):
        with pytest.raises(ValueError):
            scan_stream(matcher, io.BytesIO(b""), 0)


class TestNaiveScan:
    def test_agrees_on_small_db(self, small_db, matcher):
        data = TestScanStream.DATA
        assert naive_scan(small_db, data) == scan_bytes(matcher, data)


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n_signatures=st.integers(1, 12),
    size=st.integers(0, 300),
)
def test_small_alphabet_matches_brute_force(seed, n_signatures, size):
    # Two symbols make overlapping and repeated quick-patterns the norm
    rng = np.random.default_rng(seed)
    db = SignatureDb(
        1,
        tuple(
            random_signature(
                rng,
                f"s{i}",
                min_length=4,
                max_length=6,
                wildcard_rate=0.3,
                alphabet=AB_ALPHABET,
                offset=int(rng.integers(0, 8)) if i % 5 == 4 else None,
            )
            for i in range(n_signatures)
        ),
    )
    data = random_corpus(rng, size, db, plants=3, alphabet=AB_ALPHABET)
    m = build_matcher(db)
    exact = scan_bytes(m, data)
    assert exact == brute_force(db, data)
    assert exact == naive_scan(db, data)
    assert set(exact) <= set(quick_mode_scan(m, data))


@pytest.mark.slow
def test_random_corpora_match_brute_force():
    rng = np.random.default_rng(500)
    db = with_offsets(random_signature_db(rng, 200), rng)
    m = build_matcher(db)
    mismatches = 0
    not_superset = 0
    planted = 0
    for _ in range(500):
        data = random_corpus(rng, int(rng.integers(0, 64 * 1024 + 1)), db, plants=20)
        exact = scan_bytes(m, data)
        planted += len(exact)
        mismatches += exact != brute_force(db, data)
        not_superset += not set(exact) <= set(quick_mode_scan(m, data))
    assert mismatches == 0
    assert not_superset == 0
    # The corpora must actually exercise hits
    assert planted > 500


@pytest.mark.slow
def test_signature_count_barely_affects_scan_time():
    # One retry absorbs machine noise
    for attempt in range(2):
        result = signature_scaling((10, 1000), 16 * MiB, seed=attempt, include_naive=False)
        if result.automaton_seconds[1] < 5 * result.automaton_seconds[0]:
            break
    assert result.automaton_seconds[1] < 5 * result.automaton_seconds[0]
    assert result.automaton_exponent < 1

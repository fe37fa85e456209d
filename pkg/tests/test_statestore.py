#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

import io
import os
import tempfile

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scanshear.parameters import StateParameters
from scanshear.statestore import (
    DigestCache,
    RescanReason,
    ScanRecord,
    StateStore,
    StateStoreError,
    Verdict,
    VerdictKind,
    combine,
    hash_file,
    is_trusted,
)
from scanshear.statestore.recordlog import encode_frame, iter_frames, read_frame
from scanshear.statestore.store import HEADER_NAME, LOG_NAME, SNAP_PREFIX

from .conftest import CLEAN, INFECTED, settle

DIGEST_A = "a" * 64
DIGEST_B = "b" * 64


def make_record(path, digest=DIGEST_A, version=1, verdict=None, **kwargs):
    return ScanRecord(
        path=str(path),
        digest=digest,
        sigdb_version=version,
        scanned_at=1_700_000_000.5,
        verdict=verdict or Verdict.clean(),
        **kwargs,
    )


def replay(frames) -> dict[str, ScanRecord]:
    """Apply log entries in order, the way a reader of the log must."""
    state = {}
    for frame in frames:
        entry = frame.entry
        if entry["op"] == "put":
            state[entry["record"]["path"]] = ScanRecord.from_dict(entry["record"])
        elif entry["op"] == "del":
            state.pop(entry["path"], None)
        else:
            state.clear()
    return state


def contents(store: StateStore) -> dict[str, ScanRecord]:
    return {r.path: r for r in store.records()}


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


class TestVerdict:
    def test_constructors(self):
        assert Verdict.infected(["b", "a", "b"]).signature_ids == ("a", "b")
        assert str(Verdict.unscannable("encrypted")) == "Unscannable(encrypted)"
        assert str(Verdict.clean()) == "Clean"

    def test_invalid_combinations(self):
        with pytest.raises(ValueError):
            Verdict.infected([])
        with pytest.raises(ValueError):
            Verdict(VerdictKind.CLEAN, ("x",))
        with pytest.raises(ValueError):
            Verdict(VerdictKind.SKIPPED)

    def test_dict_round_trip(self):
        for verdict in (Verdict.clean(), Verdict.infected(["x"]), Verdict.skipped("cached")):
            assert Verdict.from_dict(verdict.as_dict()) == verdict

    def test_combine_precedence(self):
        corrupt = Verdict.unscannable("corrupt-member")
        encrypted = Verdict.unscannable("encrypted")
        assert combine([]) == Verdict.clean()
        assert combine([Verdict.clean(), corrupt, encrypted]) == corrupt
        assert combine([corrupt, Verdict.infected(["b"]), Verdict.infected(["a"])]) == (
            Verdict.infected(["a", "b"])
        )


class TestScanRecord:
    def test_only_clean_or_infected_stored(self):
        with pytest.raises(ValueError):
            make_record("/x", verdict=Verdict.unscannable("io"))
        with pytest.raises(ValueError):
            make_record("/x", verdict=Verdict.skipped("cached"))

    def test_negative_version(self):
        with pytest.raises(ValueError):
            make_record("/x", version=-1)


# ---------------------------------------------------------------------------
# Lookups and skipping
# ---------------------------------------------------------------------------


class TestLookup:
    def test_record_and_lookup(self, tmp_path, state_params):
        with StateStore(tmp_path / "state", state_params) as store:
            record = make_record("/data/a", verdict=Verdict.infected(["sig"]))
            store.record_result(record)
            assert store.warm_lookup("/data/a") == record
            assert store.persistent_lookup("/data/a") == record
            assert store.warm_lookup("/data/missing") is None
            assert "/data/a" in store
            assert len(store) == 1

    def test_latest_record_wins(self, tmp_path, state_params):
        with StateStore(tmp_path / "state", state_params) as store:
            store.record_result(make_record("/a", DIGEST_A))
            store.record_result(make_record("/a", DIGEST_B))
            assert store.warm_lookup("/a").digest == DIGEST_B
        with StateStore(tmp_path / "state", state_params) as store:
            assert store.warm_lookup("/a").digest == DIGEST_B
            assert len(store) == 1

    def test_warm_and_persistent_tiers_agree(self, tmp_path):
        params = StateParameters(fsync=False, cache_size=2)
        with StateStore(tmp_path / "state", params) as store:
            for i in range(6):
                store.record_result(make_record(f"/f{i}", f"{i:064x}"))
            store.record_result(make_record("/f1", DIGEST_B, version=2))
            for _ in range(2):
                for i in range(6):
                    assert store.warm_lookup(f"/f{i}") == store.persistent_lookup(f"/f{i}")
            assert store.warm_hits > 0

    def test_warm_hits_avoid_disk(self, tmp_path, state_params):
        with StateStore(tmp_path / "state", state_params) as store:
            store.record_result(make_record("/a"))
            reads = store.persistent_reads
            store.warm_lookup("/a")
            store.warm_lookup("/a")
            assert store.persistent_reads == reads
            assert store.warm_hits == 2


class TestShouldSkip:
    @pytest.fixture
    def store(self, tmp_path, state_params):
        with StateStore(tmp_path / "state", state_params) as store:
            store.record_result(make_record("/a", DIGEST_A, version=4))
            yield store

    def test_reuse(self, store):
        decision = store.should_skip("/a", DIGEST_A, 4)
        assert decision.skip
        assert decision.verdict == Verdict.clean()
        assert decision.reason is None

    @pytest.mark.parametrize(
        ("path", "digest", "version", "reason"),
        [
            ("/b", DIGEST_A, 4, RescanReason.NO_RECORD),
            ("/a", DIGEST_B, 4, RescanReason.CONTENT_CHANGED),
            ("/a", DIGEST_A, 5, RescanReason.SIGDB_UPDATED),
            ("/a", DIGEST_A, 3, RescanReason.SIGDB_UPDATED),
        ],
    )
    def test_rescan_reasons(self, store, path, digest, version, reason):
        decision = store.should_skip(path, digest, version)
        assert not decision.skip
        assert decision.reason == reason
        assert decision.verdict is None

    def test_store_failure_means_rescan(self, store, monkeypatch):
        def broken(path):
            raise OSError("disk gone")

        monkeypatch.setattr(store, "warm_lookup", broken)
        decision = store.should_skip("/a", DIGEST_A, 4)
        assert not decision.skip
        assert decision.reason == RescanReason.STORE_UNAVAILABLE
        assert decision.reason.value == "store-unavailable"


# ---------------------------------------------------------------------------
# Purge and compaction
# ---------------------------------------------------------------------------


class TestPurge:
    def test_prefix(self, tmp_path, state_params):
        paths = ["/data/a", "/data/a/x", "/data/ab", "/other"]
        with StateStore(tmp_path / "state", state_params) as store:
            for path in paths:
                store.record_result(make_record(path))
            assert store.purge("/data/a/") == 2
            assert sorted(contents(store)) == ["/data/ab", "/other"]
            assert store.warm_lookup("/data/a") is None
        with StateStore(tmp_path / "state", state_params) as store:
            assert sorted(contents(store)) == ["/data/ab", "/other"]

    def test_everything(self, tmp_path, state_params):
        with StateStore(tmp_path / "state", state_params) as store:
            for i in range(3):
                store.record_result(make_record(f"/f{i}"))
            assert store.purge() == 3
            assert len(store) == 0
            store.record_result(make_record("/after"))
        with StateStore(tmp_path / "state", state_params) as store:
            assert list(contents(store)) == ["/after"]


class TestCompaction:
    def test_compaction_preserves_records(self, tmp_path, state_params):
        state = tmp_path / "state"
        with StateStore(state, state_params) as store:
            for i in range(20):
                store.record_result(make_record(f"/f{i % 7}", f"{i:064x}", version=i))
            store.purge("/f3")
            before = contents(store)
            store.compact()
            assert contents(store) == before
            assert (state / LOG_NAME).stat().st_size == 0
            # Appends after compaction land in the emptied log
            store.record_result(make_record("/new"))
            before["/new"] = make_record("/new")
            assert contents(store) == before
        with StateStore(state, state_params) as store:
            assert contents(store) == before

    def test_automatic_compaction(self, tmp_path):
        state = tmp_path / "state"
        params = StateParameters(fsync=False, compact_every=5)
        with StateStore(state, params) as store:
            for i in range(12):
                store.record_result(make_record(f"/f{i}"))
            expected = contents(store)
        snapshots = sorted(p.name for p in state.iterdir() if p.name.startswith(SNAP_PREFIX))
        assert snapshots == [f"{SNAP_PREFIX}2"]
        with StateStore(state, params) as store:
            assert contents(store) == expected

    def test_leftover_temporary_snapshot_ignored(self, tmp_path, state_params):
        state = tmp_path / "state"
        with StateStore(state, state_params) as store:
            store.record_result(make_record("/a"))
        (state / f"{SNAP_PREFIX}1.tmp").write_bytes(b"half written")
        with StateStore(state, state_params) as store:
            assert list(contents(store)) == ["/a"]
        assert not (state / f"{SNAP_PREFIX}1.tmp").exists()

    @pytest.mark.slow
    def test_many_writes_replay(self, tmp_path, rng):
        state = tmp_path / "state"
        params = StateParameters(fsync=False, compact_every=1500, cache_size=64)
        expected = {}
        with StateStore(state, params) as store:
            for i in range(10_000):
                path = f"/tree/d{int(rng.integers(0, 20))}/f{int(rng.integers(0, 200))}"
                record = make_record(path, f"{i:064x}", version=int(rng.integers(0, 5)))
                store.record_result(record)
                expected[path] = record
                if i % 2500 == 2499:
                    doomed = f"/tree/d{int(rng.integers(0, 20))}"
                    store.purge(doomed)
                    expected = {
                        p: r for p, r in expected.items() if not p.startswith(doomed + "/")
                    }
            assert contents(store) == expected
        latest = max(
            (p for p in state.iterdir() if p.name.startswith(SNAP_PREFIX)),
            key=lambda p: int(p.name[len(SNAP_PREFIX) :]),
        )
        with open(latest, "rb") as snap, open(state / LOG_NAME, "rb") as log:
            replayed = replay([*iter_frames(snap), *iter_frames(log)])
        assert replayed == expected
        with StateStore(state, params) as store:
            assert contents(store) == expected

    def test_unrelated_snapshot_names_ignored(self, tmp_path, state_params):
        state = tmp_path / "state"
        with StateStore(state, state_params) as store:
            store.record_result(make_record("/a"))
        (state / f"{SNAP_PREFIX}²").write_bytes(b"not ours")
        (state / f"{SNAP_PREFIX}٣").write_bytes(b"not ours")
        with StateStore(state, state_params) as store:
            assert list(contents(store)) == ["/a"]


# ---------------------------------------------------------------------------
# Crash tolerance
# ---------------------------------------------------------------------------


class TestCrashTolerance:
    def test_frames_detect_damage(self):
        frame = encode_frame({"op": "clear"})
        assert read_frame(io.BytesIO(frame), 0).entry == {"op": "clear"}
        damaged = bytearray(frame)
        damaged[6] ^= 0xFF
        assert read_frame(io.BytesIO(bytes(damaged)), 0) is None
        assert read_frame(io.BytesIO(frame[:-1]), 0) is None

    def test_truncated_log_recovers_prefix(self, tmp_path, rng):
        src = tmp_path / "src"
        params = StateParameters(fsync=False, compact_every=10**6)
        with StateStore(src, params) as store:
            for i in range(40):
                verdict = Verdict.infected([f"s{i}"]) if i % 4 == 0 else Verdict.clean()
                store.record_result(make_record(f"/f/{i % 15}", f"{i:064x}", verdict=verdict))
                if i == 20:
                    store.purge("/f/3")
                if i == 30:
                    store.purge()
        log_bytes = (src / LOG_NAME).read_bytes()
        frames = list(iter_frames(io.BytesIO(log_bytes)))
        assert frames[-1].end == len(log_bytes)

        cuts = sorted(rng.choice(len(frames), size=19, replace=False).tolist()) + [-1]
        for n, k in enumerate(cuts):
            boundary = frames[k].end if k >= 0 else 0
            cut = boundary
            if n % 2 and k + 1 < len(frames):
                # Tear the next frame partway through
                cut += int(rng.integers(1, frames[k + 1].end - boundary))
            dst = tmp_path / f"cut{n}"
            dst.mkdir()
            (dst / HEADER_NAME).write_bytes((src / HEADER_NAME).read_bytes())
            (dst / LOG_NAME).write_bytes(log_bytes[:cut])

            with StateStore(dst, params) as store:
                assert contents(store) == replay(frames[: k + 1])
            assert (dst / LOG_NAME).stat().st_size == boundary

    def test_appends_after_recovery(self, tmp_path, state_params):
        state = tmp_path / "state"
        with StateStore(state, state_params) as store:
            store.record_result(make_record("/a"))
            store.record_result(make_record("/b"))
        with open(state / LOG_NAME, "r+b") as fh:
            fh.truncate(os.path.getsize(state / LOG_NAME) - 3)
        with StateStore(state, state_params) as store:
            assert list(contents(store)) == ["/a"]
            store.record_result(make_record("/c"))
        with StateStore(state, state_params) as store:
            assert sorted(contents(store)) == ["/a", "/c"]


# ---------------------------------------------------------------------------
# Header
# ---------------------------------------------------------------------------


class TestHeader:
    def test_algorithm_fixed_by_header(self, tmp_path, state_params):
        state = tmp_path / "state"
        StateStore(state, state_params).close()
        other = StateParameters(fsync=False, digest_algorithm="sha512")
        with pytest.warns(UserWarning, match="sha256"):
            store = StateStore(state, other)
        assert store.digest_algorithm == "sha256"
        store.close()

    def test_foreign_header(self, tmp_path, state_params):
        state = tmp_path / "state"
        state.mkdir()
        (state / HEADER_NAME).write_text("SOMETHING ELSE\n")
        with pytest.raises(StateStoreError):
            StateStore(state, state_params)

    def test_header_written(self, tmp_path, state_params):
        StateStore(tmp_path / "state", state_params).close()
        lines = (tmp_path / "state" / HEADER_NAME).read_text().splitlines()
        assert lines == ["SCANSTATE 1", "DIGEST sha256"]


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


class TestDigestCache:
    def _store_digest(self, store, path, digest):
        store.record_result(
            make_record(
                path,
                digest.digest,
                fingerprint=digest.fingerprint,
                hashed_at_ns=digest.hashed_at_ns,
            ),
        )

    def test_hash_file(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(INFECTED)
        digest = hash_file(path, chunk_size=7)
        assert digest.bytes_read == len(INFECTED)
        assert digest.fingerprint is not None
        assert digest.fingerprint.size == len(INFECTED)

    def test_untouched_file_not_reread(self, tmp_path, state_params):
        path = tmp_path / "f.bin"
        path.write_bytes(CLEAN)
        settle()
        with StateStore(tmp_path / "state", state_params) as store:
            cache = DigestCache(store)
            first = cache.digest(path)
            assert first.bytes_read == len(CLEAN)
            self._store_digest(store, str(path), first)

            second = cache.digest(path)
            assert second.bytes_read == 0
            assert second.digest == first.digest
            assert cache.reused == 1

    def test_changed_file_rehashed(self, tmp_path, state_params):
        path = tmp_path / "f.bin"
        path.write_bytes(CLEAN)
        settle()
        with StateStore(tmp_path / "state", state_params) as store:
            cache = DigestCache(store)
            self._store_digest(store, str(path), cache.digest(path))
            path.write_bytes(CLEAN.upper())
            again = cache.digest(path)
            assert again.bytes_read == len(CLEAN)
            assert again.digest != store.warm_lookup(str(path)).digest

    def test_recent_change_not_trusted(self, tmp_path, state_params):
        path = tmp_path / "f.bin"
        path.write_bytes(CLEAN)
        with StateStore(tmp_path / "state", state_params) as store:
            cache = DigestCache(store, racy_window_s=60)
            digest = cache.digest(path)
            self._store_digest(store, str(path), digest)
            assert not is_trusted(store.warm_lookup(str(path)), digest.fingerprint, 60 * 10**9)
            assert cache.digest(path).bytes_read == len(CLEAN)

    def test_record_without_fingerprint_not_trusted(self, tmp_path, state_params):
        path = tmp_path / "f.bin"
        path.write_bytes(CLEAN)
        settle()
        with StateStore(tmp_path / "state", state_params) as store:
            digest = hash_file(path)
            store.record_result(make_record(str(path), digest.digest))
            assert DigestCache(store).digest(path).bytes_read == len(CLEAN)


# ---------------------------------------------------------------------------
# Agreement with a plain dict
# ---------------------------------------------------------------------------

PATHS = [f"/d{i % 3}/f{i}" for i in range(8)]

operations = st.lists(
    st.one_of(
        st.tuples(
            st.just("put"),
            st.integers(0, len(PATHS) - 1),
            st.integers(0, 3),
            st.integers(0, 2),
        ),
        st.tuples(st.just("purge"), st.sampled_from(["/d0", "/d1", "/d2", None])),
        st.tuples(st.just("compact")),
        st.tuples(st.just("reopen")),
    ),
    max_size=60,
)


class TestModel:
    @settings(max_examples=60, deadline=None)
    @given(ops=operations, cache_size=st.integers(1, 4), compact_every=st.integers(3, 20))
    def test_tiers_match_dict(self, ops, cache_size, compact_every):
        params = StateParameters(fsync=False, cache_size=cache_size, compact_every=compact_every)
        expected: dict[str, ScanRecord] = {}
        with tempfile.TemporaryDirectory() as tmp:
            state = os.path.join(tmp, "state")
            store = StateStore(state, params)
            try:
                for op in ops:
                    if op[0] == "put":
                        _, i, digest, version = op
                        record = make_record(PATHS[i], f"{digest:064x}", version)
                        store.record_result(record)
                        expected[record.path] = record
                    elif op[0] == "purge":
                        store.purge(op[1])
                        expected = {
                            p: r
                            for p, r in expected.items()
                            if op[1] is not None and not p.startswith(op[1] + "/")
                        }
                    elif op[0] == "compact":
                        store.compact()
                    else:
                        store.close()
                        store = StateStore(state, params)
                    for path in PATHS:
                        assert store.warm_lookup(path) == expected.get(path)
                        assert store.persistent_lookup(path) == expected.get(path)
                assert contents(store) == expected
            finally:
                store.close()

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

import gc
import hashlib
import io
import os
import threading
from datetime import timedelta

import pytest

from scanshear.archiver import lifecycle
from scanshear.archiver import (
    MAGIC,
    AvarHeader,
    archive,
    archive_nru,
    container_path_for,
    default_quarantine_dir,
    list_entries,
    path_lock,
    read_entry,
    read_header,
    restore_and_scan,
    select_nru,
)
from scanshear.bench import write_tree
from scanshear.container import ContainerFormatError
from scanshear.statestore import StateStore, Verdict

from .conftest import CLEAN, INFECTED

NOW = 2_000_000_000.0
DAY = 86_400
OLD_MTIME = 1_600_000_000


def write(path, data, age_days=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    if age_days is not None:
        t = NOW - age_days * DAY
        os.utime(path, (t, t))
    return path


@pytest.fixture
def root(tmp_path):
    return tmp_path / "root"


# ---------------------------------------------------------------------------
# Container format
# ---------------------------------------------------------------------------


class TestHeader:
    def test_round_trip(self):
        header = AvarHeader("a file.bin", "ab" * 32, 1234, 99)
        fh = io.BytesIO(header.encode() + b"payload")
        assert read_header(fh) == header
        assert fh.read() == b"payload"

    @pytest.mark.parametrize(
        "data",
        [
            b"",
            b"AVAR2\nPATH a\n",
            MAGIC + b"PATH a\nDIGEST ab\nMTIME 1\n\n",
            MAGIC + b"PATH a\nDIGEST xyz\nMTIME 1\nLEN 2\n\n",
            MAGIC + b"PATH a\nDIGEST ab\nMTIME -1\nLEN 2\n\n",
            MAGIC + b"PATH a\nDIGEST ab\nMTIME 1\nLEN two\n\n",
            MAGIC + b"PATH a\nDIGEST ab\nMTIME 1\nLEN 2",
        ],
    )
    def test_malformed(self, data):
        with pytest.raises(ContainerFormatError):
            read_header(io.BytesIO(data))


# ---------------------------------------------------------------------------
# Archiving
# ---------------------------------------------------------------------------


class TestArchive:
    def test_moves_file_into_container(self, root):
        path = write(root / "data.bin", CLEAN)
        os.utime(path, (OLD_MTIME, OLD_MTIME + 0.7))
        entry = archive(path, fsync=False)
        assert not path.exists()
        assert entry.container_path == container_path_for(path) == root / "data.bin.avar"
        assert entry.container_path.exists()
        assert entry.original_digest == hashlib.sha256(CLEAN).hexdigest()
        assert entry.original_mtime == OLD_MTIME
        assert entry.length == len(CLEAN)
        assert read_entry(entry.container_path) == entry

    def test_payload_not_executable_in_place(self, root):
        entry = archive(write(root / "evil.exe", INFECTED), fsync=False)
        raw = entry.container_path.read_bytes()
        assert raw.startswith(MAGIC)
        assert INFECTED in raw

    def test_already_archived(self, root):
        path = write(root / "a.bin", CLEAN)
        archive(path, fsync=False)
        write(path, CLEAN)
        with pytest.raises(FileExistsError):
            archive(path, fsync=False)
        assert path.exists()

    def test_not_a_regular_file(self, root):
        (root / "dir").mkdir(parents=True)
        with pytest.raises(ValueError):
            archive(root / "dir", fsync=False)

    def test_renamed_container_rejected(self, root):
        entry = archive(write(root / "a.bin", CLEAN), fsync=False)
        entry.container_path.rename(root / "b.bin.avar")
        with pytest.raises(ContainerFormatError, match="a.bin"):
            read_entry(root / "b.bin.avar")


class TestSelectNru:
    def test_threshold(self, root):
        old = write(root / "old.bin", CLEAN, age_days=10)
        write(root / "recent.bin", CLEAN, age_days=1)
        nested = write(root / "sub" / "older.bin", CLEAN, age_days=30)
        assert select_nru(root, timedelta(days=5), NOW) == [old, nested]

    def test_recent_access_counts_as_use(self, root):
        path = write(root / "read.bin", CLEAN)
        os.utime(path, (NOW - DAY, NOW - 10 * DAY))
        assert select_nru(root, timedelta(days=5), NOW) == []

    def test_recent_modification_alone_is_not_use(self, root):
        path = write(root / "written.bin", CLEAN)
        os.utime(path, (NOW - 10 * DAY, NOW - DAY))
        assert select_nru(root, timedelta(days=5), NOW) == [path]

    def test_missing_access_time_falls_back_to_modification(self, root):
        recent = write(root / "recent.bin", CLEAN)
        os.utime(recent, (0, NOW - DAY))
        old = write(root / "old.bin", CLEAN)
        os.utime(old, (0, NOW - 10 * DAY))
        assert select_nru(root, timedelta(days=5), NOW) == [old]

    def test_containers_and_exclusions_skipped(self, root):
        write(root / "x.bin.avar", b"AVAR", age_days=10)
        write(root / "y.bin.avar.tmp", b"AVAR", age_days=10)
        write(root / ".state" / "LOG", b"", age_days=10)
        keep = write(root / "z.bin", CLEAN, age_days=10)
        selected = select_nru(root, timedelta(days=5), NOW, exclude=[root / ".state"])
        assert selected == [keep]

    def test_archive_nru(self, root):
        write(root / "a.bin", CLEAN, age_days=10)
        write(root / "b.bin", CLEAN, age_days=10)
        write(root / "b.bin.avar", b"in the way")
        write(root / "c.bin", CLEAN, age_days=1)
        run = archive_nru(root, timedelta(days=5), NOW, fsync=False)
        assert [e.original_path for e in run.archived] == [root / "a.bin"]
        assert [p for p, _ in run.failed] == [root / "b.bin"]
        assert (root / "b.bin").exists()
        assert (root / "c.bin").exists()

    def test_matches_brute_force(self, root, rng):
        cutoff_days = 5
        expected = []
        for i in range(120):
            path = write(root / f"d{i % 7}" / f"f{i:03d}.bin", CLEAN)
            atime = 0 if i % 9 == 0 else NOW - float(rng.uniform(0, 10)) * DAY
            mtime = NOW - float(rng.uniform(0, 10)) * DAY
            os.utime(path, (atime, mtime))
            if (atime or mtime) < NOW - cutoff_days * DAY:
                expected.append(path)
        write(root / "d0" / "x.bin.avar", b"AVAR", age_days=30)
        assert select_nru(root, timedelta(days=cutoff_days), NOW) == sorted(expected)


class TestPathLock:
    def test_locks_released_after_use(self, root):
        for i in range(500):
            with path_lock(root / f"f{i}.bin"):
                pass
        gc.collect()
        assert len(lifecycle._locks) == 0

    def test_same_path_serialized(self, root):
        inside = []
        overlap = []

        def worker():
            for _ in range(50):
                with path_lock(root / "a.bin"):
                    inside.append(1)
                    if len(inside) > 1:
                        overlap.append(1)
                    inside.pop()

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert overlap == []


# ---------------------------------------------------------------------------
# Index and crash recovery
# ---------------------------------------------------------------------------


class TestListEntries:
    def test_lists_containers(self, root):
        archive(write(root / "b.bin", CLEAN), fsync=False)
        archive(write(root / "sub" / "a.bin", INFECTED), fsync=False)
        entries = list_entries(root)
        assert [e.original_path for e in entries] == [root / "b.bin", root / "sub" / "a.bin"]

    def test_interrupted_archive_completed(self, root):
        path = write(root / "a.bin", CLEAN)
        entry = archive(path, fsync=False)
        # Crash between rename and unlink: both exist with the same content
        write(path, CLEAN)
        assert list_entries(root) == [read_entry(entry.container_path)]
        assert not path.exists()

    def test_conflicting_container_kept(self, root):
        path = write(root / "a.bin", CLEAN)
        entry = archive(path, fsync=False)
        archived = entry.container_path.read_bytes()
        write(path, CLEAN + b" edited since")
        assert list_entries(root) == []
        assert path.read_bytes() == CLEAN + b" edited since"
        assert entry.container_path.read_bytes() == archived
        # Listed again once the live copy is gone
        path.unlink()
        assert list_entries(root) == [entry]

    def test_listing_twice_changes_nothing(self, root):
        archive(write(root / "a.bin", CLEAN), fsync=False)
        write(root / "a.bin", INFECTED)
        archive(write(root / "b.bin", CLEAN), fsync=False)
        before = sorted(p.name for p in root.iterdir())
        first = list_entries(root)
        assert list_entries(root) == first
        assert sorted(p.name for p in root.iterdir()) == before

    def test_temporary_container_removed(self, root):
        leftover = write(root / "a.bin.avar.tmp", b"AVAR1\nPATH a.bin\n")
        write(root / "a.bin", CLEAN)
        assert list_entries(root) == []
        assert not leftover.exists()
        assert (root / "a.bin").exists()

    def test_unreadable_container_ignored(self, root):
        junk = write(root / "junk.avar", b"not a container")
        assert list_entries(root) == []
        assert junk.exists()


# ---------------------------------------------------------------------------
# Restore
# ---------------------------------------------------------------------------


class TestRestore:
    def test_clean_restored(self, root, tmp_path, matcher, state_params):
        path = write(root / "data.bin", CLEAN * 5)
        os.utime(path, (OLD_MTIME, OLD_MTIME))
        entry = archive(path, fsync=False)
        with StateStore(tmp_path / "state", state_params) as store:
            result = restore_and_scan(entry, matcher, 3, store=store, root=root)
            assert result.verdict == Verdict.clean()
            assert result.restored_path == path
            record = store.warm_lookup(str(path))
        assert path.read_bytes() == CLEAN * 5
        assert path.stat().st_mtime == OLD_MTIME
        assert not entry.container_path.exists()
        assert record.verdict == Verdict.clean()
        assert record.sigdb_version == 3
        assert record.digest == hashlib.sha256(CLEAN * 5).hexdigest()

    def test_infected_quarantined(self, root, tmp_path, matcher):
        path = write(root / "evil.bin", INFECTED)
        entry = archive(path, fsync=False)
        result = restore_and_scan(entry, matcher, 3, quarantine_dir=tmp_path / "q")
        assert result.verdict == Verdict.infected(["eicar1"])
        assert result.restored_path is None
        assert result.quarantine_path == tmp_path / "q" / "evil.bin.avar"
        assert result.quarantine_path.exists()
        assert not path.exists()
        assert not entry.container_path.exists()

    def test_default_quarantine_beside_root(self, root, tmp_path, matcher):
        entry = archive(write(root / "evil.bin", INFECTED), fsync=False)
        result = restore_and_scan(entry, matcher, 3, root=root)
        assert default_quarantine_dir(root) == tmp_path / "quarantine"
        assert result.quarantine_path.parent == tmp_path / "quarantine"

    def test_nested_container_quarantined_outside_root(self, root, tmp_path, matcher):
        entry = archive(write(root / "deep" / "er" / "evil.bin", INFECTED), fsync=False)
        result = restore_and_scan(entry, matcher, 3, root=root)
        assert result.quarantine_path == tmp_path / "quarantine" / "evil.bin.avar"
        assert root not in result.quarantine_path.parents

    def test_quarantine_location_required(self, root, matcher):
        entry = archive(write(root / "evil.bin", INFECTED), fsync=False)
        with pytest.raises(ValueError, match="quarantine_dir"):
            restore_and_scan(entry, matcher, 3)
        assert entry.container_path.exists()

    def test_quarantine_names_do_not_collide(self, root, tmp_path, matcher):
        targets = []
        for _ in range(2):
            entry = archive(write(root / "evil.bin", INFECTED), fsync=False)
            targets.append(restore_and_scan(entry, matcher, 3, root=root).quarantine_path)
        assert targets[0] != targets[1]
        assert all(t.exists() for t in targets)

    def test_encrypted_stays_archived(self, root, matcher):
        path = write(root / "secret.bin", b"Salted__" + INFECTED)
        entry = archive(path, fsync=False)
        result = restore_and_scan(entry, matcher, 3, root=root)
        assert result.verdict == Verdict.unscannable("encrypted")
        assert entry.container_path.exists()
        assert not path.exists()

    def test_corrupt_container_stays_archived(self, root, matcher):
        path = write(root / "data.bin", CLEAN)
        entry = archive(path, fsync=False)
        raw = bytearray(entry.container_path.read_bytes())
        raw[raw.index(CLEAN) + 3] ^= 0x01
        entry.container_path.write_bytes(bytes(raw))
        result = restore_and_scan(entry, matcher, 3, root=root)
        assert result.verdict == Verdict.unscannable("corrupt-container")
        assert entry.container_path.exists()
        assert not path.exists()

    def test_original_recreated_meanwhile(self, root, matcher):
        path = write(root / "data.bin", CLEAN)
        entry = archive(path, fsync=False)
        write(path, b"someone else")
        with pytest.raises(FileExistsError):
            restore_and_scan(entry, matcher, 3, root=root)
        assert path.read_bytes() == b"someone else"
        assert entry.container_path.exists()

    @pytest.mark.slow
    def test_random_files_restored_exactly(self, tmp_path, rng, matcher, state_params):
        root = tmp_path / "many"
        paths = write_tree(root, rng, 100, min_size=1, max_size=8192, fanout=5)
        originals = {}
        for path in paths:
            mtime = OLD_MTIME + int(rng.integers(0, 10**6))
            os.utime(path, (mtime, mtime))
            originals[path] = (path.read_bytes(), mtime)
        for path in paths:
            archive(path, fsync=False)
        entries = list_entries(root)
        assert [e.original_path for e in entries] == sorted(paths)
        with StateStore(tmp_path / "state", state_params) as store:
            for entry in entries:
                result = restore_and_scan(entry, matcher, 3, store=store, root=root)
                assert result.restored_path == entry.original_path
            assert len(store) == 100
        for path, (data, mtime) in originals.items():
            assert path.read_bytes() == data
            assert path.stat().st_mtime == mtime
        assert list_entries(root) == []
        assert not list(root.rglob("*.avar"))

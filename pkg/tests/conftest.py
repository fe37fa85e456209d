#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

import io
import time

import numpy as np
import pytest

from scanshear.matcher import build_matcher
from scanshear.parameters import ScanShearParameters, StateParameters
from scanshear.sigdb import load_sigdb

SIGDB_TEXT = """\
VDB 3
# test signatures
SIG eicar1 Test.Eicar 58354f2150254041 * FAM test
SIG wild1 Test.Wild deadbeef??cafe * FAM test
SIG boot1 Boot.Fixed 33c08ed0 0
"""

# Contains eicar1
INFECTED = b"some leading bytes X5O!P%@A and trailing bytes"
CLEAN = b"nothing to see in here, just ordinary bytes"

# Longer than any racy window used in the tests
RACY_SLEEP = 0.2


@pytest.fixture
def small_db():
    return load_sigdb(io.BytesIO(SIGDB_TEXT.encode()))


@pytest.fixture
def matcher(small_db):
    return build_matcher(small_db)


@pytest.fixture
def sigdb_file(tmp_path):
    path = tmp_path / "signatures.vdb"
    path.write_text(SIGDB_TEXT)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def state_params():
    return StateParameters(fsync=False)


@pytest.fixture
def params():
    p = ScanShearParameters()
    p.state.fsync = False
    p.scan.workers = 2
    return p


@pytest.fixture
def scan_tree(tmp_path):
    """A small tree with two infected files, one skipped type and a nested dir."""
    root = tmp_path / "root"
    (root / "sub").mkdir(parents=True)
    (root / "a.bin").write_bytes(CLEAN)
    (root / "b.bin").write_bytes(INFECTED)
    (root / "notes.txt").write_bytes(INFECTED)
    (root / "sub" / "c.bin").write_bytes(CLEAN * 3)
    (root / "sub" / "d.bin").write_bytes(b"\xde\xad\xbe\xef\x00\xca\xfe")
    return root


def settle():
    """Wait until files written so far are outside the racy window."""
    time.sleep(RACY_SLEEP)

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .signature import PatternByte, Signature, SignatureDb, family_index
from .vdb import (
    SignatureDbError,
    dump_sigdb,
    load_sigdb,
    load_sigdb_file,
    parse_hex_pattern,
)

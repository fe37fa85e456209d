#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .avar import MAGIC, SUFFIX, TMP_SUFFIX, AvarHeader, read_header
from .lifecycle import (
    ArchiveEntry,
    ArchiveRun,
    RestoreResult,
    archive,
    archive_nru,
    container_path_for,
    default_quarantine_dir,
    list_entries,
    path_lock,
    read_entry,
    restore_and_scan,
    select_nru,
    walk_regular_files,
)

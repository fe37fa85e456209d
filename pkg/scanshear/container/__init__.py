#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .budget import BudgetExceeded, BudgetTracker
from .formats import (
    HEAD_SIZE,
    ContainerFormatError,
    GzipFormat,
    IContainerFormat,
    Member,
    TarFormat,
    ZipFormat,
    detect_format,
    get_format,
    has_encrypted_magic,
)
from .scanner import (
    ENCRYPTED,
    PLAIN,
    ObjectScan,
    classify,
    scan_buffer,
    scan_file,
    scan_object,
    scan_seekable,
)

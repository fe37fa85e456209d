#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .automaton import AhoCorasick
from .matcher import (
    MatchHit,
    Matcher,
    build_matcher,
    quick_mode_scan,
    scan_bytes,
    scan_stream,
)
from .naive import naive_scan

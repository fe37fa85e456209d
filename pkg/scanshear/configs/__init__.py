#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from pathlib import Path

CONFIGS_BASE_DIR = Path(__file__).parent

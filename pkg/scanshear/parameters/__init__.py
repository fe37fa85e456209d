#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .base_parameters import BaseParameters, ENV_PREFIX
from .scan_parameters import (
    ArchiveParameters,
    BenchParameters,
    BudgetParameters,
    PathParameters,
    ScanParameters,
    ScanPolicy,
    ScanShearParameters,
    StateParameters,
)

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

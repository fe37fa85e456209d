#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Signature scanning that avoids rescanning what it has already seen."""

import logging

__version__ = "1.0.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Linear scan-time model.

Scan time is modeled as the product of the number of signatures, the bytes
scanned and the number of detection stages, divided by a machine rate::

    seconds = n_signatures * total_bytes * n_methods / rate
"""

from __future__ import annotations

import dataclasses
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from scanshear.parameters import BenchParameters, ScanPolicy, ScanShearParameters


@dataclass(frozen=True)
class CostModel:
    """Inputs of the scan-time formula and the machine rate.

    Attributes:
        n_signatures (int): Number of signatures
        total_bytes (int): Bytes scanned
        n_methods (int): Enabled detection stages, see ``count_methods``
        rate (float): Signature-byte-stages processed per second
    """

    n_signatures: int
    total_bytes: int
    n_methods: int
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        for name in ("n_signatures", "total_bytes", "n_methods"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def work(self) -> int:
        return self.n_signatures * self.total_bytes * self.n_methods

    def predict(self) -> float:
        return self.work / self.rate

    def with_inputs(self, **changes) -> CostModel:
        """Same rate, other inputs."""
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class MeasuredRun:
    n_signatures: int
    total_bytes: int
    n_methods: int
    observed_seconds: float

    @property
    def work(self) -> int:
        return self.n_signatures * self.total_bytes * self.n_methods


def predict(model: CostModel) -> float:
    """Predicted scan time of ``model`` in seconds."""
    return model.predict()


def calibrate(run: MeasuredRun) -> CostModel:
    """Model whose rate reproduces one measured run exactly.

    Raises:
        ValueError: Raised if the observed time is not positive or the run did no
            work
    """
    if run.observed_seconds <= 0:
        raise ValueError(f"Observed time must be positive, got {run.observed_seconds}")
    if run.work == 0:
        raise ValueError("Cannot calibrate from a run with no signatures, bytes or methods")
    return CostModel(
        run.n_signatures,
        run.total_bytes,
        run.n_methods,
        run.work / run.observed_seconds,
    )


def fit_rate(runs: Sequence[MeasuredRun]) -> CostModel:
    """Least-squares rate over several measured runs.

    Fits ``seconds = work / rate`` through the origin.

    Returns:
        CostModel: Inputs of the last run, with the fitted rate
    """
    if not runs:
        raise ValueError("fit_rate needs at least one run")
    work = np.array([run.work for run in runs], dtype=np.float64)
    seconds = np.array([run.observed_seconds for run in runs], dtype=np.float64)
    if np.any(seconds <= 0) or not np.any(work > 0):
        raise ValueError("Runs must have positive times and some work")
    (seconds_per_work,), *_ = np.linalg.lstsq(work[:, None], seconds, rcond=None)
    last = runs[-1]
    return CostModel(last.n_signatures, last.total_bytes, last.n_methods, 1.0 / seconds_per_work)


def reference_model(params: BenchParameters | None = None) -> CostModel:
    """Model calibrated on the reference point, by default 10 GiB against 90,000
    signatures with two stages in 30 minutes."""
    params = params or BenchParameters()
    return calibrate(
        MeasuredRun(
            params.reference_signatures,
            params.reference_bytes,
            params.reference_methods,
            params.reference_seconds,
        ),
    )


def count_methods(params: ScanShearParameters, policy: ScanPolicy | None = None) -> int:
    """Number of detection stages a scan with ``params`` runs.

    Quick-pattern matching counts 1, exact verification 1 unless quick mode is
    on, container expansion 1, and integrity checking 1 under the boot policy.
    """
    policy = params.scan.policy if policy is None else policy
    methods = 1
    if not params.scan.quick_mode:
        methods += 1
    methods += 1
    if policy == ScanPolicy.BOOT:
        methods += 1
    return methods

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .corpus import (
    clean_buffer,
    clean_signature_db,
    instantiate,
    random_corpus,
    random_signature,
    random_signature_db,
    write_tree,
)
from .cost_model import (
    CostModel,
    MeasuredRun,
    calibrate,
    count_methods,
    fit_rate,
    predict,
    reference_model,
)
from .experiments import (
    ScalingResult,
    fit_exponent,
    plot_report,
    policy_comparison,
    signature_scaling,
    time_call,
)
from .report import BenchReport, BenchRow, compare_runs, speedup

#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

from .baseline import (
    Baseline,
    BaselineEntry,
    BaselineResult,
    CriticalSet,
    IntegrityOutcome,
    check_integrity,
    create_baseline,
    integrity_check,
    load_baseline,
    load_critical_set,
    save_baseline,
)
from .executor import PlanExecutor, execute_plan, resolve_workers
from .plan import Action, ScanPlan, Target, order_targets
from .policies import (
    BaselineRequiredError,
    BootPolicy,
    FullPolicy,
    IScanPolicy,
    SmartPolicy,
    build_plan,
    get_policy,
)
from .report import EXIT_CLEAN, EXIT_INFECTED, EXIT_UNSCANNABLE, FileResult, ScanReport

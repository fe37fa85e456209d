#
# Copyright 2024 ScanShear Developers.
#
# See LICENSE for full license details
#

"""Command-line entry point.

Exit codes: 0 when everything is clean or skipped, 1 when infections were found,
2 when some items could not be scanned (and none are infected), 3 for usage and
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from datetime import timedelta
from pathlib import Path
from typing import Any

from scanshear.archiver import (
    SUFFIX,
    archive_nru,
    container_path_for,
    default_quarantine_dir,
    list_entries,
    read_entry,
    restore_and_scan,
)
from scanshear.bench import plot_report, policy_comparison, signature_scaling
from scanshear.container import ContainerFormatError
from scanshear.matcher import Matcher, build_matcher
from scanshear.parameters import ScanPolicy, ScanShearParameters
from scanshear.planner import (
    EXIT_CLEAN,
    EXIT_INFECTED,
    EXIT_UNSCANNABLE,
    Baseline,
    CriticalSet,
    build_plan,
    create_baseline,
    execute_plan,
    load_baseline,
    load_critical_set,
    save_baseline,
)
from scanshear.sigdb import family_index, load_sigdb_file
from scanshear.statestore import StateStore

log = logging.getLogger(__name__)

EXIT_USAGE = 3

STATE_DIR_NAME = ".scanshear"
JSON_STDOUT = "-"
BASELINE_NAME = "baseline"


class UsageError(Exception):
    """Invalid combination of arguments or configuration."""


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit code 3."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options() -> argparse.ArgumentParser:
    # Defaults are suppressed so the options can be given before or after the
    # subcommand without one position overwriting the other
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument(
        "--config",
        help="JSON config file, or the name of a shipped preset (default, fast, paranoid)",
    )
    common.add_argument("--sigdb", help="signature database in VDB format")
    common.add_argument(
        "--state-dir",
        help=f"scan state store directory (default: <root>/{STATE_DIR_NAME})",
    )
    common.add_argument("--root", help="directory to scan (default: current directory)")
    common.add_argument("--workers", type=int, help="files scanned concurrently (0: all CPUs)")
    common.add_argument(
        "--json",
        nargs="?",
        const=JSON_STDOUT,
        metavar="PATH",
        help="write the report as JSON to PATH, or print it as JSON when PATH is omitted or '-'",
    )
    common.add_argument(
        "-v",
        "--verbose",
        action="count",
        help="log progress to standard error (-v info, -vv debug)",
    )
    return common


def build_parser() -> ArgumentParser:
    common = _common_options()
    parser = ArgumentParser(
        prog="scanshear",
        description="Signature scanner that skips what it has already seen.",
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    scan = commands.add_parser("scan", parents=[common], help="scan the root directory")
    scan.add_argument(
        "--policy",
        choices=[p.name.lower() for p in ScanPolicy],
        default=argparse.SUPPRESS,
        help="full, smart (skip unchanged files) or boot (critical set only)",
    )
    scan.add_argument("--critical", default=argparse.SUPPRESS, help="critical manifest")
    scan.add_argument("--baseline", default=argparse.SUPPRESS, help="integrity baseline file")
    scan.add_argument(
        "--skip-types",
        default=argparse.SUPPRESS,
        help="comma-separated extensions that are never signature scanned",
    )
    scan.add_argument(
        "--quick",
        action="store_true",
        default=argparse.SUPPRESS,
        help="report quick-pattern hits without exact verification",
    )
    scan.add_argument("--max-depth", type=int, default=argparse.SUPPRESS)
    scan.add_argument("--max-expanded-bytes", type=int, default=argparse.SUPPRESS)
    scan.set_defaults(func=cmd_scan)

    baseline = commands.add_parser("baseline", help="integrity baselines")
    baseline_commands = baseline.add_subparsers(
        dest="action",
        required=True,
        parser_class=ArgumentParser,
    )
    create = baseline_commands.add_parser(
        "create",
        parents=[common],
        help="scan the critical set and record its clean files",
    )
    create.add_argument("--critical", default=argparse.SUPPRESS, help="critical manifest")
    create.add_argument("--baseline", default=argparse.SUPPRESS, help="baseline file to write")
    create.set_defaults(func=cmd_baseline_create)

    archive = commands.add_parser("archive", help="archive non-recently-used files")
    archive_commands = archive.add_subparsers(
        dest="action",
        required=True,
        parser_class=ArgumentParser,
    )
    run = archive_commands.add_parser("run", parents=[common], help="archive NRU files")
    run.add_argument(
        "--threshold-days",
        type=float,
        default=argparse.SUPPRESS,
        help="files unused for longer than this are archived",
    )
    run.set_defaults(func=cmd_archive_run)
    restore = archive_commands.add_parser(
        "restore",
        parents=[common],
        help="scan an archived file and restore it if clean",
    )
    restore.add_argument("path", help="original path or its .avar container")
    restore.add_argument("--quarantine-dir", default=argparse.SUPPRESS)
    restore.set_defaults(func=cmd_archive_restore)
    listing = archive_commands.add_parser("list", parents=[common], help="list archived files")
    listing.set_defaults(func=cmd_archive_list)

    bench = commands.add_parser("bench", parents=[common], help="compare scan policies")
    bench.add_argument("--critical", default=argparse.SUPPRESS, help="critical manifest")
    bench.add_argument("--baseline", default=argparse.SUPPRESS, help="integrity baseline file")
    bench.add_argument(
        "--scaling",
        action="store_true",
        help="also time the matcher against growing signature counts",
    )
    bench.add_argument("--plot", help="write a bar chart of the runs (needs matplotlib)")
    bench.set_defaults(func=cmd_bench)

    state = commands.add_parser("state", help="inspect the scan state store")
    state_commands = state.add_subparsers(
        dest="action",
        required=True,
        parser_class=ArgumentParser,
    )
    show = state_commands.add_parser("show", parents=[common], help="print stored records")
    show.set_defaults(func=cmd_state_show)
    purge = state_commands.add_parser("purge", parents=[common], help="forget stored records")
    purge.add_argument("--prefix", help="only forget records at or below this path")
    purge.set_defaults(func=cmd_state_purge)
    compact = state_commands.add_parser(
        "compact",
        parents=[common],
        help="rewrite the store as a snapshot",
    )
    compact.set_defaults(func=cmd_state_compact)

    sigdb = commands.add_parser("sigdb", help="signature databases")
    sigdb_commands = sigdb.add_subparsers(
        dest="action",
        required=True,
        parser_class=ArgumentParser,
    )
    check = sigdb_commands.add_parser("check", parents=[common], help="validate a database")
    check.add_argument("file", help="database in VDB format")
    check.set_defaults(func=cmd_sigdb_check)
    return parser


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

# Command-line option -> dotted parameter key
_OVERRIDES = {
    "sigdb": "paths.sigdb",
    "state_dir": "paths.state_dir",
    "root": "paths.root",
    "critical": "paths.critical",
    "baseline": "paths.baseline",
    "quarantine_dir": "paths.quarantine_dir",
    "workers": "scan.workers",
    "policy": "scan.policy",
    "quick": "scan.quick_mode",
    "max_depth": "budget.max_depth",
    "max_expanded_bytes": "budget.max_expanded_bytes",
    "threshold_days": "archive.nru_threshold_days",
}


def load_parameters(
    args: argparse.Namespace,
    environ: dict[str, str] | None = None,
) -> ScanShearParameters:
    """Defaults, overridden by the config file, then the environment, then flags."""
    config = getattr(args, "config", None)
    try:
        params = ScanShearParameters.from_json(config) if config else ScanShearParameters()
    except TypeError as e:
        raise UsageError(f"Invalid config {config}: {e}") from e
    params.update_from_env(environ)

    overrides: dict[str, Any] = {
        key: getattr(args, option)
        for option, key in _OVERRIDES.items()
        if getattr(args, option, None) is not None
    }
    if getattr(args, "json", None) not in (None, JSON_STDOUT):
        overrides["paths.json_out"] = args.json
    if getattr(args, "skip_types", None) is not None:
        overrides["scan.skip_types"] = [t for t in args.skip_types.split(",") if t.strip()]
    params.update(overrides)
    return params


def scan_root(params: ScanShearParameters) -> Path:
    root = Path(params.paths.root or ".").resolve()
    if not root.is_dir():
        raise UsageError(f"Scan root is not a directory: {root}")
    return root


def state_dir(params: ScanShearParameters, root: Path) -> Path:
    if params.paths.state_dir:
        return Path(params.paths.state_dir).resolve()
    return root / STATE_DIR_NAME


def baseline_path(params: ScanShearParameters, root: Path) -> Path:
    if params.paths.baseline:
        return Path(params.paths.baseline).resolve()
    return state_dir(params, root) / BASELINE_NAME


def quarantine_dir(params: ScanShearParameters, root: Path) -> Path:
    if params.paths.quarantine_dir:
        return Path(params.paths.quarantine_dir).resolve()
    return default_quarantine_dir(root)


def excluded_paths(params: ScanShearParameters, root: Path) -> list[Path]:
    """Files and directories of ScanShear's own that walks leave out."""
    excluded = [state_dir(params, root), quarantine_dir(params, root), baseline_path(params, root)]
    if params.paths.json_out:
        excluded.append(Path(params.paths.json_out).resolve())
    return excluded


def load_matcher(params: ScanShearParameters) -> Matcher:
    if not params.paths.sigdb:
        raise UsageError("No signature database given (--sigdb)")
    path = Path(params.paths.sigdb)
    if not path.is_file():
        raise UsageError(f"Signature database not found: {path}")
    return build_matcher(load_sigdb_file(path))


def load_critical(params: ScanShearParameters, required: bool = False) -> CriticalSet | None:
    if not params.paths.critical:
        if required:
            raise UsageError("No critical manifest given (--critical)")
        return None
    critical = load_critical_set(params.paths.critical)
    if not critical:
        raise UsageError(f"Critical manifest {params.paths.critical} lists no files")
    return critical


def load_existing_baseline(params: ScanShearParameters, root: Path) -> Baseline | None:
    path = baseline_path(params, root)
    if params.paths.baseline and not path.is_file():
        raise UsageError(f"Baseline not found: {path}")
    return load_baseline(path) if path.is_file() else None


def emit(args: argparse.Namespace, params: ScanShearParameters, data: Any, text: str) -> None:
    """Print ``text``, or ``data`` as JSON with a bare ``--json``.

    With ``--json PATH`` (or ``paths.json_out``) the JSON document is written
    to PATH and ``text`` is still printed.
    """
    if params.paths.json_out:
        Path(params.paths.json_out).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    if getattr(args, "json", None) == JSON_STDOUT:
        sys.stdout.write(json.dumps(data, indent=2) + "\n")
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_scan(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    policy = params.scan.policy
    critical = load_critical(params, required=policy == ScanPolicy.BOOT)
    baseline = load_existing_baseline(params, root)
    matcher = load_matcher(params)
    with StateStore(state_dir(params, root), params.state) as store:
        plan = build_plan(
            root,
            policy,
            store,
            matcher.version,
            critical,
            params.scan.skip_types,
            baseline=baseline,
            exclude=excluded_paths(params, root),
        )
        report = execute_plan(
            plan,
            matcher,
            store,
            params.budget,
            workers=params.scan.workers,
            quick=params.scan.quick_mode,
            chunk_size=params.scan.chunk_size,
        )
    emit(args, params, report.as_dict(), report.format_text(getattr(args, "verbose", 0) > 0))
    return report.exit_code


def cmd_baseline_create(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    critical = load_critical(params, required=True)
    matcher = load_matcher(params)
    result = create_baseline(
        critical,
        matcher,
        matcher.version,
        root=root,
        budget=params.budget,
        algorithm=params.state.digest_algorithm,
    )
    target = baseline_path(params, root)
    target.parent.mkdir(parents=True, exist_ok=True)
    save_baseline(result.baseline, target)

    data = {
        "baseline": str(target),
        "sigdb_version": matcher.version,
        "files": sorted(result.baseline.entries),
        "excluded": {path: str(v) for path, v in sorted(result.excluded.items())},
    }
    lines = [f"Baseline of {len(result.baseline)} files written to {target}"]
    lines += [f"  excluded {path}: {v}" for path, v in sorted(result.excluded.items())]
    emit(args, params, data, "\n".join(lines) + "\n")
    if result.infected:
        return EXIT_INFECTED
    return EXIT_UNSCANNABLE if result.partial else EXIT_CLEAN


def cmd_archive_run(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    run = archive_nru(
        root,
        timedelta(days=params.archive.nru_threshold_days),
        exclude=excluded_paths(params, root),
        algorithm=params.state.digest_algorithm,
        fsync=params.state.fsync,
    )
    data = {
        "archived": [str(e.original_path) for e in run.archived],
        "failed": {str(path): reason for path, reason in run.failed},
    }
    lines = [f"Archived {len(run.archived)} files under {root}"]
    lines += [f"  failed {path}: {reason}" for path, reason in run.failed]
    emit(args, params, data, "\n".join(lines) + "\n")
    return EXIT_UNSCANNABLE if run.failed else EXIT_CLEAN


def cmd_archive_restore(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    path = Path(args.path).absolute()
    container = path if path.name.endswith(SUFFIX) else container_path_for(path)
    if not container.is_file():
        raise UsageError(f"No archived container at {container}")
    matcher = load_matcher(params)
    try:
        entry = read_entry(container)
    except ContainerFormatError as e:
        log.warning("Cannot read %s: %s", container, e)
        emit(
            args,
            params,
            {"container": str(container), "verdict": "Unscannable(corrupt-container)"},
            f"Unscannable(corrupt-container)  {container}\n",
        )
        return EXIT_UNSCANNABLE

    with StateStore(state_dir(params, root), params.state) as store:
        result = restore_and_scan(
            entry,
            matcher,
            matcher.version,
            store=store,
            budget=params.budget,
            quarantine_dir=quarantine_dir(params, root),
            algorithm=params.state.digest_algorithm,
            quick=params.scan.quick_mode,
        )
    data = {
        "container": str(entry.container_path),
        "verdict": str(result.verdict),
        "restored_path": str(result.restored_path) if result.restored_path else None,
        "quarantine_path": str(result.quarantine_path) if result.quarantine_path else None,
    }
    if result.restored_path:
        text = f"{result.verdict}  restored {result.restored_path}\n"
    elif result.quarantine_path:
        text = f"{result.verdict}  quarantined as {result.quarantine_path}\n"
    else:
        text = f"{result.verdict}  left archived at {entry.container_path}\n"
    emit(args, params, data, text)
    if result.verdict.is_infected:
        return EXIT_INFECTED
    return EXIT_CLEAN if result.verdict.is_clean else EXIT_UNSCANNABLE


def cmd_archive_list(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    entries = list_entries(
        root,
        algorithm=params.state.digest_algorithm,
        exclude=excluded_paths(params, root),
    )
    data = [
        {
            "original_path": str(e.original_path),
            "container_path": str(e.container_path),
            "digest": e.original_digest,
            "mtime": e.original_mtime,
            "length": e.length,
        }
        for e in entries
    ]
    text = "".join(f"{e.length:>12}  {e.original_path}\n" for e in entries)
    emit(args, params, data, text)
    return EXIT_CLEAN


def cmd_bench(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    matcher = load_matcher(params)
    critical = load_critical(params)
    baseline = load_existing_baseline(params, root) if critical else None
    report = policy_comparison(root, matcher, params, critical=critical, baseline=baseline)
    data: dict[str, Any] = report.as_dict()
    text = report.format_table()
    if args.scaling:
        scaling = signature_scaling(repeat=params.bench.repeat)
        data["scaling"] = {
            "sizes": list(scaling.sizes),
            "automaton_seconds": list(scaling.automaton_seconds),
            "naive_seconds": list(scaling.naive_seconds),
            "automaton_exponent": scaling.automaton_exponent,
            "naive_exponent": scaling.naive_exponent,
        }
        text += "\n" + scaling.format_table()
    if args.plot:
        plot_report(report, args.plot)
    emit(args, params, data, text)
    return EXIT_CLEAN


def cmd_state_show(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    with StateStore(state_dir(params, root), params.state) as store:
        records = store.records()
    data = [record.as_dict() for record in records]
    text = "".join(
        f"{str(r.verdict):<24} v{r.sigdb_version:<6} {r.digest[:16]}  {r.path}\n" for r in records
    )
    emit(args, params, data, text)
    return EXIT_CLEAN


def cmd_state_purge(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    prefix = str(Path(args.prefix).resolve()) if args.prefix else None
    with StateStore(state_dir(params, root), params.state) as store:
        removed = store.purge(prefix)
    emit(args, params, {"removed": removed}, f"Removed {removed} records\n")
    return EXIT_CLEAN


def cmd_state_compact(args: argparse.Namespace, params: ScanShearParameters) -> int:
    root = scan_root(params)
    with StateStore(state_dir(params, root), params.state) as store:
        store.compact()
        count = len(store)
    emit(args, params, {"records": count}, f"Compacted {count} records\n")
    return EXIT_CLEAN


def cmd_sigdb_check(args: argparse.Namespace, params: ScanShearParameters) -> int:
    db = load_sigdb_file(args.file)
    families = {name: len(ids) for name, ids in sorted(family_index(db).items())}
    data = {"version": db.version, "signatures": len(db), "families": families}
    lines = [f"version {db.version}: {len(db)} signatures"]
    lines += [f"  {name}: {count}" for name, count in families.items()]
    emit(args, params, data, "\n".join(lines) + "\n")
    return EXIT_CLEAN


# ----------------------------------------------------------------------
# Entry points
# ----------------------------------------------------------------------


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def run(argv: Sequence[str] | None = None, environ: dict[str, str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and return its exit code.

    Args:
        argv (Sequence[str], optional): Arguments without the program name.
            Defaults to ``sys.argv[1:]``.
        environ (dict[str, str], optional): Environment for ``SCANSHEAR_``
            overrides. Defaults to ``os.environ``.

    Returns:
        int: Exit code
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(getattr(args, "verbose", 0))
    try:
        params = load_parameters(args, os.environ if environ is None else environ)
        return args.func(args, params)
    except (UsageError, KeyError, ValueError, OSError) as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        sys.stderr.write(f"scanshear: error: {message}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
